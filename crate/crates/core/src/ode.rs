//! Adaptive Dormand–Prince 5(4) integration with a continuous extension and
//! event location on the dense interpolant.
//!
//! Every accepted step is scanned for sign changes of the event observables
//! (at the step end and a few interior points); a bracketed root is refined
//! by bisection on the interpolant. Integration stops at the first terminal
//! event. Timers are hit exactly by shortening the last step.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("maximum step count {0} exceeded")]
    MaxSteps(usize),
    #[error("non-finite value in right-hand side at t = {0}")]
    NonFinite(f64),
    #[error("right-hand side failed at t = {t}: {msg}")]
    Rhs { t: f64, msg: String },
    #[error("invalid tolerances rtol = {rtol}, atol = {atol}")]
    Tolerance { rtol: f64, atol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step length.
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
    /// Width of the final bracket around an event time.
    pub event_tol: f64,
    /// Interior points per step checked for sign changes.
    pub event_substeps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            max_steps: 2_000_000,
            event_tol: 1e-8,
            event_substeps: 4,
        }
    }
}

impl OdeOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    UpwardCrossing,
    DownwardCrossing,
    /// Observable reaches zero from either side.
    TargetHit,
    /// Fires exactly at the given time.
    Timer,
}

impl EventKind {
    /// Ordering among events located at the same time.
    fn priority(self) -> u8 {
        match self {
            EventKind::Timer => 0,
            EventKind::TargetHit => 1,
            EventKind::UpwardCrossing | EventKind::DownwardCrossing => 2,
        }
    }

    fn crosses(self, a: f64, b: f64) -> bool {
        match self {
            EventKind::UpwardCrossing => a < 0.0 && b >= 0.0,
            EventKind::DownwardCrossing => a > 0.0 && b <= 0.0,
            EventKind::TargetHit => (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0),
            EventKind::Timer => false,
        }
    }
}

type Observable<'a> = Box<dyn Fn(f64, &[f64]) -> f64 + 'a>;

/// A scalar condition watched along the trajectory.
pub struct EventSpec<'a> {
    pub label: String,
    pub kind: EventKind,
    /// Terminal events stop the integration; others are only logged.
    pub terminal: bool,
    observable: Option<Observable<'a>>,
    at: f64,
}

impl<'a> EventSpec<'a> {
    fn crossing(
        kind: EventKind,
        label: impl Into<String>,
        f: impl Fn(f64, &[f64]) -> f64 + 'a,
    ) -> Self {
        Self {
            label: label.into(),
            kind,
            terminal: true,
            observable: Some(Box::new(f)),
            at: f64::NAN,
        }
    }

    pub fn upward(label: impl Into<String>, f: impl Fn(f64, &[f64]) -> f64 + 'a) -> Self {
        Self::crossing(EventKind::UpwardCrossing, label, f)
    }

    pub fn downward(label: impl Into<String>, f: impl Fn(f64, &[f64]) -> f64 + 'a) -> Self {
        Self::crossing(EventKind::DownwardCrossing, label, f)
    }

    pub fn target_hit(label: impl Into<String>, f: impl Fn(f64, &[f64]) -> f64 + 'a) -> Self {
        Self::crossing(EventKind::TargetHit, label, f)
    }

    pub fn timer(label: impl Into<String>, at: f64) -> Self {
        Self {
            label: label.into(),
            kind: EventKind::Timer,
            terminal: true,
            observable: None,
            at,
        }
    }

    /// Log occurrences without stopping.
    pub fn observe_only(mut self) -> Self {
        self.terminal = false;
        self
    }

    pub fn value(&self, t: f64, y: &[f64]) -> f64 {
        match &self.observable {
            Some(f) => f(t, y),
            None => t - self.at,
        }
    }
}

/// An event occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct Fired {
    /// Index into the event list passed to [`integrate`].
    pub index: usize,
    pub label: String,
    pub kind: EventKind,
    pub t: f64,
}

/// One accepted step's continuous extension.
#[derive(Debug, Clone)]
struct DenseStep {
    t0: f64,
    h: f64,
    /// Five coefficient blocks of length `dim`.
    coeffs: Vec<f64>,
}

/// Piecewise-polynomial representation of a solution.
#[derive(Debug, Clone)]
pub struct DenseOutput {
    dim: usize,
    t_start: f64,
    t_last: f64,
    y_start: Vec<f64>,
    steps: Vec<DenseStep>,
}

impl DenseOutput {
    fn new(t0: f64, y0: &[f64]) -> Self {
        Self {
            dim: y0.len(),
            t_start: t0,
            t_last: t0,
            y_start: y0.to_vec(),
            steps: Vec::new(),
        }
    }

    /// Output that holds `y` at the single instant `t`.
    pub fn constant(t: f64, y: &[f64]) -> Self {
        Self::new(t, y)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn span(&self) -> (f64, f64) {
        (self.t_start, self.t_last)
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Step boundaries inside the span, including both ends.
    pub fn knots(&self) -> Vec<f64> {
        let mut k = vec![self.t_start];
        for s in &self.steps {
            let end = (s.t0 + s.h).min(self.t_last);
            if end > *k.last().unwrap() {
                k.push(end);
            }
        }
        if self.t_last > *k.last().unwrap() {
            k.push(self.t_last);
        }
        k
    }

    fn locate(&self, t: f64) -> Option<&DenseStep> {
        if self.steps.is_empty() {
            return None;
        }
        let j = self.steps.partition_point(|s| s.t0 <= t);
        Some(&self.steps[j.saturating_sub(1)])
    }

    /// Interpolated state at `t`; `t` is clamped to the span.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let t = t.clamp(self.t_start, self.t_last);
        match self.locate(t) {
            None => out.copy_from_slice(&self.y_start),
            Some(step) => step.eval(t, self.dim, out),
        }
    }

    pub fn eval_vec(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval(t, &mut out);
        out
    }

    /// Single interpolated component.
    pub fn component(&self, t: f64, idx: usize) -> f64 {
        let t = t.clamp(self.t_start, self.t_last);
        match self.locate(t) {
            None => self.y_start[idx],
            Some(step) => step.component(t, self.dim, idx),
        }
    }

    /// Appends another piece that starts where this one ends.
    pub fn append(&mut self, other: DenseOutput) {
        debug_assert_eq!(self.dim, other.dim);
        if other.steps.is_empty() {
            return;
        }
        self.steps.extend(other.steps);
        self.t_last = other.t_last;
    }
}

impl DenseStep {
    fn theta(&self, t: f64) -> f64 {
        if self.h == 0.0 {
            0.0
        } else {
            (t - self.t0) / self.h
        }
    }

    #[inline]
    fn component(&self, t: f64, dim: usize, i: usize) -> f64 {
        let th = self.theta(t);
        let th1 = 1.0 - th;
        let c = &self.coeffs;
        c[i] + th
            * (c[dim + i] + th1 * (c[2 * dim + i] + th * (c[3 * dim + i] + th1 * c[4 * dim + i])))
    }

    fn eval(&self, t: f64, dim: usize, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.component(t, dim, i);
        }
    }
}

/// Why an integration call returned.
#[derive(Debug, Clone, PartialEq)]
pub enum Stop {
    /// `t_end` reached without a terminal event.
    End,
    Event(Fired),
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub dense: DenseOutput,
    pub t: f64,
    pub y: Vec<f64>,
    pub stop: Stop,
    /// Non-terminal events, in time order.
    pub logged: Vec<Fired>,
    pub accepted: usize,
    pub rejected: usize,
}

// Dormand–Prince 5(4) tableau with Hairer's dense output coefficients.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y1: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y1: vec![0.0; n],
        }
    }
}

fn call<F, E>(rhs: &mut F, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    E: std::fmt::Display,
{
    rhs(t, y, dy).map_err(|e| OdeError::Rhs {
        t,
        msg: e.to_string(),
    })
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], o: &OdeOptions) -> f64 {
    let n = err.len() as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sk = o.atol + o.rtol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

/// Hairer's starting step heuristic.
fn initial_step<F, E>(
    rhs: &mut F,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    o: &OdeOptions,
    h_cap: f64,
) -> Result<f64, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    E: std::fmt::Display,
{
    let n = y0.len() as f64;
    let sk = |y: f64| o.atol + o.rtol * y.abs();
    let d0 = (y0.iter().map(|y| (y / sk(*y)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f0
        .iter()
        .zip(y0)
        .map(|(f, y)| (f / sk(*y)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let mut h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h = h.min(h_cap);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    call(rhs, t0 + h, &y1, &mut f1)?;
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(y0)
        .map(|((a, b), y)| ((a - b) / sk(*y)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h).min(h1).min(h_cap))
}

/// Integrates `y' = rhs(t, y)` from `t0` towards `t_end`, stopping at the
/// earliest terminal event.
pub fn integrate<F, E>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    events: &[EventSpec<'_>],
    opts: &OdeOptions,
) -> Result<Solution, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    E: std::fmt::Display,
{
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(OdeError::Tolerance {
            rtol: opts.rtol,
            atol: opts.atol,
        });
    }
    let n = y0.len();
    let mut dense = DenseOutput::new(t0, y0);
    let mut logged = Vec::new();

    // earliest timer caps the integration span
    let mut t_stop = t_end;
    let mut timer: Option<usize> = None;
    for (idx, ev) in events.iter().enumerate() {
        if ev.kind == EventKind::Timer && ev.terminal {
            let better =
                ev.at < t_stop || (ev.at == t_stop && timer.is_none_or(|j| events[j].at > ev.at));
            if better {
                t_stop = ev.at;
                timer = Some(idx);
            }
        }
    }
    let stop_at_t_stop = |t: f64| -> Stop {
        match timer {
            Some(idx) => Stop::Event(Fired {
                index: idx,
                label: events[idx].label.clone(),
                kind: EventKind::Timer,
                t,
            }),
            None => Stop::End,
        }
    };
    if t_stop <= t0 {
        return Ok(Solution {
            dense,
            t: t0,
            y: y0.to_vec(),
            stop: stop_at_t_stop(t0),
            logged,
            accepted: 0,
            rejected: 0,
        });
    }

    let crossing: Vec<usize> = events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind != EventKind::Timer)
        .map(|(i, _)| i)
        .collect();
    let mut g_prev: Vec<f64> = crossing.iter().map(|&j| events[j].value(t0, y0)).collect();

    let mut ws = Workspace::new(n);
    let mut y = y0.to_vec();
    let mut t = t0;
    call(&mut rhs, t, &y, &mut ws.k[0])?;
    if ws.k[0].iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite(t));
    }
    let span = t_stop - t0;
    let h_cap = opts.h_max.min(span);
    let mut h = initial_step(&mut rhs, t, &y, &ws.k[0].clone(), opts, h_cap)?;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut last_rejected = false;
    let mut ytmp_eval = vec![0.0; n];

    loop {
        if accepted + rejected >= opts.max_steps {
            return Err(OdeError::MaxSteps(opts.max_steps));
        }
        let mut last = false;
        if t + h >= t_stop || (t_stop - (t + h)) < 1e-12 * t_stop.abs().max(1.0) {
            h = t_stop - t;
            last = true;
        }
        if h < opts.h_min * t.abs().max(1.0) && !last {
            return Err(OdeError::StepUnderflow { t, h });
        }

        // stages
        let Workspace { k, tmp, y1 } = &mut ws;
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k[0][i];
        }
        call(&mut rhs, t + C2 * h, tmp, &mut k[1])?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
        }
        call(&mut rhs, t + C3 * h, tmp, &mut k[2])?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
        }
        call(&mut rhs, t + C4 * h, tmp, &mut k[3])?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
        }
        call(&mut rhs, t + C5 * h, tmp, &mut k[4])?;
        for i in 0..n {
            tmp[i] = y[i]
                + h * (A61 * k[0][i]
                    + A62 * k[1][i]
                    + A63 * k[2][i]
                    + A64 * k[3][i]
                    + A65 * k[4][i]);
        }
        call(&mut rhs, t + h, tmp, &mut k[5])?;
        for i in 0..n {
            y1[i] = y[i]
                + h * (A71 * k[0][i]
                    + A73 * k[2][i]
                    + A74 * k[3][i]
                    + A75 * k[4][i]
                    + A76 * k[5][i]);
        }
        call(&mut rhs, t + h, y1, &mut k[6])?;
        for i in 0..n {
            tmp[i] = h
                * (E1 * k[0][i]
                    + E3 * k[2][i]
                    + E4 * k[3][i]
                    + E5 * k[4][i]
                    + E6 * k[5][i]
                    + E7 * k[6][i]);
        }
        let mut err = error_norm(tmp, &y, y1, opts);
        if !err.is_finite() || y1.iter().any(|v| !v.is_finite()) {
            err = f64::INFINITY;
        }

        if err > 1.0 {
            rejected += 1;
            last_rejected = true;
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).max(0.2)
            } else {
                0.1
            };
            h *= fac;
            if h < opts.h_min * t.abs().max(1.0) {
                if err.is_finite() {
                    return Err(OdeError::StepUnderflow { t, h });
                }
                return Err(OdeError::NonFinite(t));
            }
            continue;
        }

        // accepted: build continuous extension
        let mut coeffs = vec![0.0; 5 * n];
        for i in 0..n {
            let ydiff = y1[i] - y[i];
            let bspl = h * k[0][i] - ydiff;
            coeffs[i] = y[i];
            coeffs[n + i] = ydiff;
            coeffs[2 * n + i] = bspl;
            coeffs[3 * n + i] = ydiff - h * k[6][i] - bspl;
            coeffs[4 * n + i] = h
                * (D1 * k[0][i]
                    + D3 * k[2][i]
                    + D4 * k[3][i]
                    + D5 * k[4][i]
                    + D6 * k[5][i]
                    + D7 * k[6][i]);
        }
        let t_new = if last { t_stop } else { t + h };
        let step = DenseStep { t0: t, h, coeffs };

        // event scan
        let mut term: Option<Fired> = None;
        let mut step_logged: Vec<Fired> = Vec::new();
        let nsub = opts.event_substeps.max(1);
        for (slot, &j) in crossing.iter().enumerate() {
            let ev = &events[j];
            let mut ga = g_prev[slot];
            let mut ta = t;
            for s in 1..=nsub {
                let tb = if s == nsub {
                    t_new
                } else {
                    t + h * s as f64 / nsub as f64
                };
                let gb = if s == nsub {
                    ev.value(tb, y1)
                } else {
                    step.eval(tb, n, &mut ytmp_eval);
                    ev.value(tb, &ytmp_eval)
                };
                if ev.kind.crosses(ga, gb) {
                    let root = bisect(ev, &step, n, ta, tb, ga, opts.event_tol, &mut ytmp_eval);
                    let fired = Fired {
                        index: j,
                        label: ev.label.clone(),
                        kind: ev.kind,
                        t: root,
                    };
                    if ev.terminal {
                        let replace = match &term {
                            None => true,
                            Some(cur) => {
                                root < cur.t - opts.event_tol
                                    || (root <= cur.t + opts.event_tol
                                        && ev.kind.priority() < cur.kind.priority())
                            }
                        };
                        if replace {
                            term = Some(fired);
                        }
                        break;
                    }
                    step_logged.push(fired);
                }
                ga = gb;
                ta = tb;
            }
            g_prev[slot] = ga;
        }

        if last {
            if let (Some(idx), Some(cur)) = (timer, &term) {
                if cur.t >= t_stop - opts.event_tol {
                    term = Some(Fired {
                        index: idx,
                        label: events[idx].label.clone(),
                        kind: EventKind::Timer,
                        t: t_stop,
                    });
                }
            }
        }

        accepted += 1;
        let was_rejected = std::mem::replace(&mut last_rejected, false);
        if let Some(fired) = term {
            let te = fired.t;
            let mut y_e = vec![0.0; n];
            step.eval(te, n, &mut y_e);
            dense.steps.push(step);
            dense.t_last = te;
            step_logged.retain(|f| f.t <= te);
            step_logged.sort_by(|a, b| a.t.total_cmp(&b.t));
            logged.extend(step_logged);
            return Ok(Solution {
                dense,
                t: te,
                y: y_e,
                stop: Stop::Event(fired),
                logged,
                accepted,
                rejected,
            });
        }
        step_logged.sort_by(|a, b| a.t.total_cmp(&b.t));
        logged.extend(step_logged);

        dense.steps.push(step);
        dense.t_last = t_new;
        t = t_new;
        std::mem::swap(&mut y, &mut ws.y1);
        // FSAL
        let (first, rest) = ws.k.split_at_mut(1);
        first[0].copy_from_slice(&rest[5]);

        if last {
            return Ok(Solution {
                dense,
                t,
                y,
                stop: stop_at_t_stop(t),
                logged,
                accepted,
                rejected,
            });
        }

        let fac = if err == 0.0 {
            10.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 10.0)
        };
        let fac = if was_rejected { fac.min(1.0) } else { fac };
        h = (h * fac).min(h_cap);
    }
}

/// Shrinks `[ta, tb]` around the sign change and returns the right end, where
/// the observable has already crossed.
#[allow(clippy::too_many_arguments)]
fn bisect(
    ev: &EventSpec<'_>,
    step: &DenseStep,
    n: usize,
    mut ta: f64,
    mut tb: f64,
    mut ga: f64,
    tol: f64,
    buf: &mut [f64],
) -> f64 {
    while tb - ta > tol {
        let tm = 0.5 * (ta + tb);
        if tm <= ta || tm >= tb {
            break;
        }
        step.eval(tm, n, buf);
        let gm = ev.value(tm, buf);
        if ev.kind.crosses(ga, gm) {
            tb = tm;
        } else {
            ta = tm;
            ga = gm;
        }
    }
    tb
}

/// Classic fixed-step fourth-order Runge–Kutta, used as a reference.
pub fn rk4_fixed<F>(mut rhs: F, t0: f64, y0: &[f64], h: f64, steps: usize) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        rhs(t, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        rhs(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        rhs(t + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn decay(_t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), Infallible> {
        dy[0] = -y[0];
        Ok(())
    }

    #[test]
    fn exponential_decay_matches_analytic() {
        let o = OdeOptions::with_tolerances(1e-10, 1e-12);
        let sol = integrate(decay, 0.0, &[1.0], 5.0, &[], &o).unwrap();
        assert_eq!(sol.stop, Stop::End);
        assert_eq!(sol.t, 5.0);
        assert!((sol.y[0] - (-5.0f64).exp()).abs() < 1e-10 * 10.0);
        // dense output between steps
        for &t in &[0.3, 1.7, 4.2] {
            let v = sol.dense.component(t, 0);
            assert!((v - (-t).exp()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn linear_crossing_located() {
        let ev = [EventSpec::upward("x=2.5", |_, y| y[0] - 2.5)];
        let o = OdeOptions::default();
        let sol = integrate(
            |_, _, dy: &mut [f64]| -> Result<(), Infallible> {
                dy[0] = 1.0;
                Ok(())
            },
            0.0,
            &[0.0],
            10.0,
            &ev,
            &o,
        )
        .unwrap();
        match sol.stop {
            Stop::Event(f) => assert!((f.t - 2.5).abs() <= 1e-8, "{}", f.t),
            Stop::End => panic!("missed"),
        }
        assert_eq!(sol.dense.span().1, sol.t);
    }

    #[test]
    fn timer_lands_exactly() {
        let ev = [
            EventSpec::timer("late", 4.0),
            EventSpec::timer("early", 1.25),
        ];
        let sol = integrate(decay, 0.0, &[1.0], 10.0, &ev, &OdeOptions::default()).unwrap();
        match sol.stop {
            Stop::Event(f) => {
                assert_eq!(f.index, 1);
                assert_eq!(f.t, 1.25);
            }
            Stop::End => panic!(),
        }
        assert_eq!(sol.t, 1.25);
    }

    #[test]
    fn timer_beats_simultaneous_crossing() {
        let ev = [
            EventSpec::upward("cross", |t, _| t - 2.0),
            EventSpec::timer("timer", 2.0),
        ];
        let sol = integrate(decay, 0.0, &[1.0], 10.0, &ev, &OdeOptions::default()).unwrap();
        match sol.stop {
            Stop::Event(f) => assert_eq!(f.label, "timer"),
            Stop::End => panic!(),
        }
    }

    #[test]
    fn tangency_does_not_fire() {
        // x(t) = (t-1)^2 touches zero at t=1 without changing sign
        let ev = [EventSpec::target_hit("touch", |t, _| (t - 1.0) * (t - 1.0))];
        let sol = integrate(decay, 0.0, &[1.0], 3.0, &ev, &OdeOptions::default()).unwrap();
        assert_eq!(sol.stop, Stop::End);
    }

    #[test]
    fn sinusoid_crossings_all_found() {
        // y = (sin t, cos t); sin t crosses zero at k pi, 15 times in (0, 15 pi + 1)
        let ev = [EventSpec::target_hit("zero", |_, y| y[0]).observe_only()];
        let o = OdeOptions {
            h_max: 1.0,
            ..OdeOptions::with_tolerances(1e-9, 1e-12)
        };
        let t_end = 15.0 * std::f64::consts::PI + 1.0;
        let sol = integrate(
            |_, y: &[f64], dy: &mut [f64]| -> Result<(), Infallible> {
                dy[0] = y[1];
                dy[1] = -y[0];
                Ok(())
            },
            0.0,
            &[0.0, 1.0],
            t_end,
            &ev,
            &o,
        )
        .unwrap();
        assert_eq!(sol.logged.len(), 15);
        for (k, f) in sol.logged.iter().enumerate() {
            let exact = (k + 1) as f64 * std::f64::consts::PI;
            assert!((f.t - exact).abs() < 1e-7, "{} vs {exact}", f.t);
            // bracketing consistency on the interpolant
            let a = sol.dense.component(f.t - 1e-6, 0);
            let b = sol.dense.component(f.t + 1e-6, 0);
            assert!(a * b < 0.0);
        }
    }

    #[test]
    fn nan_rhs_is_an_error() {
        let r = integrate(
            |_, _, dy: &mut [f64]| -> Result<(), Infallible> {
                dy[0] = f64::NAN;
                Ok(())
            },
            0.0,
            &[1.0],
            1.0,
            &[],
            &OdeOptions::default(),
        );
        assert!(matches!(r, Err(OdeError::NonFinite(_))));
    }

    #[test]
    fn step_budget_is_enforced() {
        let o = OdeOptions {
            max_steps: 5,
            h_max: 0.01,
            ..OdeOptions::default()
        };
        let r = integrate(decay, 0.0, &[1.0], 1.0, &[], &o);
        assert_eq!(r.unwrap_err(), OdeError::MaxSteps(5));
    }

    #[test]
    fn rk4_reference_is_fourth_order() {
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
        let e1 = (rk4_fixed(f, 0.0, &[1.0], 0.1, 10)[0] - (-1.0f64).exp()).abs();
        let e2 = (rk4_fixed(f, 0.0, &[1.0], 0.05, 20)[0] - (-1.0f64).exp()).abs();
        let order = (e1 / e2).log2();
        assert!((order - 4.0).abs() < 0.2, "{order}");
    }
}
