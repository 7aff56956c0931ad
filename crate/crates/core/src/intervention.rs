//! Social-distancing policies that drive the link rates phase by phase.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::model::{ModelError, RateSchedule, Rates};
use crate::ode::{integrate, EventSpec, OdeError, OdeOptions, Stop};
use crate::system::EpidemicModel;
use crate::trajectory::{EventRecord, Termination, Trajectory};

/// Default safeguard on the simulated horizon (days).
pub const DEFAULT_T_MAX: f64 = 3650.0;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    None,
    Simple,
    PrevalenceDependent,
}

/// Intervention parameters. Phase lengths are in days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionPolicy {
    pub scheme: Scheme,
    /// Prevalence threshold as a fraction of `N`.
    #[serde(default)]
    pub q: f64,
    /// Severity: target mean degree is `p <k>_0`.
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default = "one")]
    pub l_i: f64,
    #[serde(default)]
    pub l_h: f64,
    #[serde(default = "one")]
    pub l_r: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for InterventionPolicy {
    fn default() -> Self {
        Self::none()
    }
}

impl InterventionPolicy {
    pub fn none() -> Self {
        Self {
            scheme: Scheme::None,
            q: 0.0,
            p: 1.0,
            l_i: 1.0,
            l_h: 0.0,
            l_r: 1.0,
        }
    }

    pub fn simple(q: f64, p: f64, l_i: f64, l_h: f64, l_r: f64) -> Self {
        Self {
            scheme: Scheme::Simple,
            q,
            p,
            l_i,
            l_h,
            l_r,
        }
    }

    pub fn prevalence_dependent(q: f64, p: f64, l_i: f64, l_r: f64) -> Self {
        Self {
            scheme: Scheme::PrevalenceDependent,
            q,
            p,
            l_i,
            l_h: 0.0,
            l_r,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.scheme == Scheme::None {
            return Ok(());
        }
        let bad = |m: String| Err(RunError::Policy(m));
        if !(0.0..1.0).contains(&self.q) {
            return bad(format!("q = {} outside [0, 1)", self.q));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("p = {} outside (0, 1]", self.p));
        }
        if !(self.l_i > 0.0 && self.l_r > 0.0 && self.l_h >= 0.0) {
            return bad(format!(
                "phase lengths must satisfy L_I, L_R > 0 and L_H >= 0, got ({}, {}, {})",
                self.l_i, self.l_h, self.l_r
            ));
        }
        Ok(())
    }

    pub fn omega_star(&self) -> Result<f64, RunError> {
        deletion_rate(self.p, self.l_i)
    }

    pub fn alpha_star(&self, k0: f64, n_nodes: usize) -> Result<f64, RunError> {
        activation_rate(self.p, self.l_r, k0, n_nodes)
    }
}

/// Deletion rate taking `<k>` from `k0` to `p k0` in `l_i` days.
pub fn deletion_rate(p: f64, l_i: f64) -> Result<f64, RunError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(RunError::Policy(format!("severity p = {p} outside (0, 1]")));
    }
    if !(l_i > 0.0) {
        return Err(RunError::Policy(format!("L_I = {l_i} must be positive")));
    }
    Ok(-p.ln() / l_i)
}

/// Activation rate taking `<k>` from `p k0` back to `k0` in `l_r` days.
pub fn activation_rate(p: f64, l_r: f64, k0: f64, n_nodes: usize) -> Result<f64, RunError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(RunError::Policy(format!("severity p = {p} outside (0, 1]")));
    }
    if !(l_r > 0.0) {
        return Err(RunError::Policy(format!("L_R = {l_r} must be positive")));
    }
    let m = n_nodes as f64 - 1.0;
    if !(k0 > 0.0 && k0 < m) {
        return Err(RunError::Policy(format!(
            "mean degree {k0} must lie in (0, N - 1 = {m})"
        )));
    }
    Ok(-((m - k0) / (m - p * k0)).ln() / l_r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Free,
    Intervention,
    Holding,
    Relaxation,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Free => "free",
            Phase::Intervention => "intervention",
            Phase::Holding => "holding",
            Phase::Relaxation => "relaxation",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: Phase,
    pub t_start: f64,
    pub t_end: f64,
    pub alpha: f64,
    pub omega: f64,
}

/// Contiguous phases of one run, starting at `t = 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseLog {
    pub records: Vec<PhaseRecord>,
}

impl PhaseLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PhaseRecord> {
        self.records.iter()
    }

    /// Phase in force at `t` (the later phase at a boundary).
    pub fn phase_at(&self, t: f64) -> Option<&PhaseRecord> {
        let j = self.records.partition_point(|r| r.t_start <= t);
        self.records.get(j.checked_sub(1)?)
    }

    pub fn schedule(&self) -> RateSchedule {
        let pieces: Vec<(f64, Rates)> = self
            .records
            .iter()
            .map(|r| (r.t_start, Rates::new(r.alpha, r.omega)))
            .collect();
        if pieces.is_empty() {
            RateSchedule::constant(Rates::STATIC)
        } else {
            RateSchedule::from_pieces(&pieces)
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    fn open(&mut self, phase: Phase, t: f64, rates: Rates) {
        if let Some(last) = self.records.last_mut() {
            last.t_end = t;
            if last.t_end == last.t_start {
                self.records.pop();
            }
        }
        match self.records.last_mut() {
            // identical neighbours merge, which keeps the log minimal when a
            // zero-length phase was dropped in between
            Some(prev)
                if prev.phase == phase
                    && prev.alpha == rates.alpha
                    && prev.omega == rates.omega =>
            {
                prev.t_end = t
            }
            _ => self.records.push(PhaseRecord {
                phase,
                t_start: t,
                t_end: t,
                alpha: rates.alpha,
                omega: rates.omega,
            }),
        }
    }

    fn close(&mut self, t: f64) {
        if let Some(last) = self.records.last_mut() {
            last.t_end = t;
        }
    }
}

/// Integration and termination settings for a policy run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub ode: OdeOptions,
    pub t_max: f64,
    /// The epidemic ends once `[E] + [I]` drops below this many persons.
    pub end_threshold: f64,
    /// Rates in force during free phases.
    pub background: Rates,
}

impl RunOptions {
    /// Default tolerances for a population of `n` nodes.
    pub fn for_population(n: usize) -> Self {
        Self {
            ode: OdeOptions::with_tolerances(1e-8, 1e-10 * n as f64),
            t_max: DEFAULT_T_MAX,
            end_threshold: 1.0,
            background: Rates::STATIC,
        }
    }
}

/// What the next phase waits for.
enum Exit {
    Timer(f64),
    /// `<k>` reaches the given value.
    DegreeTarget(f64),
    /// Prevalence rises through the threshold.
    Trigger,
    /// Prevalence drops below the threshold.
    BelowThreshold,
    /// `<k>` target or a new trigger, whichever comes first.
    DegreeOrTrigger(f64),
    Never,
}

const LABEL_END: &str = "epidemic-end";
const LABEL_TIMER: &str = "phase-timer";
const LABEL_TARGET: &str = "degree-target";
const LABEL_TRIGGER: &str = "threshold-up";
const LABEL_BELOW: &str = "threshold-down";

/// Runs `model` from `y0` under `policy` until the epidemic ends or
/// `opts.t_max` is reached.
pub fn run_policy<M: EpidemicModel + ?Sized>(
    model: &M,
    y0: &[f64],
    policy: &InterventionPolicy,
    opts: &RunOptions,
) -> Result<Trajectory, RunError> {
    policy.validate()?;
    let epi = *model.epi();
    let n = epi.n_nodes;
    let qn = policy.q * epi.n();
    let (ie, ii, ir) = (
        model.exposed_index(),
        model.infectious_index(),
        model.recovered_index(),
    );
    let active = policy.scheme != Scheme::None;

    let mut schedule = RateSchedule::constant(opts.background);
    let k0 = model.mean_degree(0.0, y0, &schedule);
    let (omega_star, alpha_star) = if active {
        (policy.omega_star()?, policy.alpha_star(k0, n)?)
    } else {
        (0.0, 0.0)
    };
    let rates_of = |phase: Phase| match phase {
        Phase::Free => opts.background,
        Phase::Intervention => Rates::new(0.0, omega_star),
        Phase::Holding => Rates::STATIC,
        Phase::Relaxation => Rates::new(alpha_star, 0.0),
    };

    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut log = PhaseLog::default();
    let mut events: Vec<EventRecord> = Vec::new();
    let mut dense: Option<crate::ode::DenseOutput> = None;
    let mut triggered = false;
    let mut triggers_open = active;
    let mut phase = Phase::Free;
    let termination;

    loop {
        let rates = rates_of(phase);
        schedule.push(t, rates);
        log.open(phase, t, rates);

        if y[ie] + y[ii] < opts.end_threshold {
            termination = Termination::Extinct;
            events.push(EventRecord::new(t, LABEL_END));
            break;
        }

        let exit = match (policy.scheme, phase) {
            (_, Phase::Free) if triggers_open => Exit::Trigger,
            (_, Phase::Free) => Exit::Never,
            (Scheme::Simple, Phase::Intervention) => Exit::Timer(t + policy.l_i),
            (Scheme::Simple, Phase::Holding) => Exit::Timer(t + policy.l_h),
            (Scheme::Simple, Phase::Relaxation) => Exit::Timer(t + policy.l_r),
            (_, Phase::Intervention) => Exit::DegreeTarget(policy.p * k0),
            (_, Phase::Holding) => Exit::BelowThreshold,
            (_, Phase::Relaxation) => Exit::DegreeOrTrigger(k0),
        };

        // conditions already met at phase start
        let k_now = model.mean_degree(t, &y, &schedule);
        let immediate = match exit {
            Exit::Trigger => y[ii] >= qn && t == 0.0,
            Exit::Timer(at) => at <= t,
            Exit::DegreeTarget(target) => k_now <= target,
            Exit::BelowThreshold => y[ii] < qn,
            Exit::DegreeOrTrigger(target) => k_now >= target,
            Exit::Never => false,
        };
        if immediate {
            let label = match exit {
                Exit::Trigger => LABEL_TRIGGER,
                Exit::Timer(_) => LABEL_TIMER,
                Exit::BelowThreshold => LABEL_BELOW,
                _ => LABEL_TARGET,
            };
            events.push(EventRecord::new(t, label));
            phase = next_phase(
                policy.scheme,
                phase,
                label,
                &mut triggered,
                &mut triggers_open,
            );
            continue;
        }

        let sched = &schedule;
        let mut specs: Vec<EventSpec<'_>> = vec![EventSpec::downward(LABEL_END, |_, s: &[f64]| {
            s[ie] + s[ii] - opts.end_threshold
        })];
        match exit {
            Exit::Timer(at) => specs.push(EventSpec::timer(LABEL_TIMER, at)),
            Exit::DegreeTarget(target) => specs
                .push(EventSpec::target_hit(LABEL_TARGET, move |tt, s: &[f64]| {
                    model.mean_degree(tt, s, sched) - target
                })),
            Exit::Trigger => specs.push(EventSpec::upward(LABEL_TRIGGER, move |_, s: &[f64]| {
                s[ii] - qn
            })),
            Exit::BelowThreshold => specs
                .push(EventSpec::downward(LABEL_BELOW, move |_, s: &[f64]| {
                    s[ii] - qn
                })),
            Exit::DegreeOrTrigger(target) => {
                specs.push(EventSpec::target_hit(LABEL_TARGET, move |tt, s: &[f64]| {
                    model.mean_degree(tt, s, sched) - target
                }));
                specs.push(EventSpec::upward(LABEL_TRIGGER, move |_, s: &[f64]| {
                    s[ii] - qn
                }));
            }
            Exit::Never => {}
        }
        if active {
            let watching_up = specs.iter().any(|e| e.label == LABEL_TRIGGER);
            let watching_down = specs.iter().any(|e| e.label == LABEL_BELOW);
            if !watching_up {
                specs.push(
                    EventSpec::upward(LABEL_TRIGGER, move |_, s: &[f64]| s[ii] - qn).observe_only(),
                );
            }
            if !watching_down {
                specs.push(
                    EventSpec::downward(LABEL_BELOW, move |_, s: &[f64]| s[ii] - qn).observe_only(),
                );
            }
        }

        let sol = integrate(
            |tt, s: &[f64], ds: &mut [f64]| model.rhs(tt, s, sched, ds),
            t,
            &y,
            opts.t_max,
            &specs,
            &opts.ode,
        )?;
        for f in &sol.logged {
            events.push(EventRecord::new(f.t, &f.label));
        }
        match &mut dense {
            None => dense = Some(sol.dense),
            Some(d) => d.append(sol.dense),
        }
        t = sol.t;
        y = sol.y;
        match sol.stop {
            Stop::End => {
                termination = Termination::TimeLimit;
                break;
            }
            Stop::Event(f) => {
                events.push(EventRecord::new(f.t, &f.label));
                if f.label == LABEL_END {
                    termination = Termination::Extinct;
                    break;
                }
                phase = next_phase(
                    policy.scheme,
                    phase,
                    &f.label,
                    &mut triggered,
                    &mut triggers_open,
                );
            }
        }
    }
    log.close(t);

    let dense = dense.unwrap_or_else(|| crate::ode::DenseOutput::constant(0.0, y0));
    Ok(Trajectory {
        dense,
        schedule,
        phases: log,
        events,
        termination,
        triggered,
        threshold: qn,
        n_nodes: n,
        gamma: epi.gamma,
        exposed_index: ie,
        infectious_index: ii,
        recovered_index: ir,
    })
}

fn next_phase(
    scheme: Scheme,
    phase: Phase,
    label: &str,
    triggered: &mut bool,
    triggers_open: &mut bool,
) -> Phase {
    match (phase, label) {
        (Phase::Free, LABEL_TRIGGER) => {
            *triggered = true;
            if scheme == Scheme::Simple {
                *triggers_open = false;
            }
            Phase::Intervention
        }
        (Phase::Intervention, _) => Phase::Holding,
        (Phase::Holding, _) => Phase::Relaxation,
        (Phase::Relaxation, LABEL_TRIGGER) => Phase::Intervention,
        (Phase::Relaxation, _) => Phase::Free,
        (Phase::Free, _) => Phase::Free,
    }
}

/// Baseline run: background rates throughout, no intervention.
pub fn run_none<M: EpidemicModel + ?Sized>(
    model: &M,
    y0: &[f64],
    opts: &RunOptions,
) -> Result<Trajectory, RunError> {
    run_policy(model, y0, &InterventionPolicy::none(), opts)
}

pub fn run_simple<M: EpidemicModel + ?Sized>(
    model: &M,
    y0: &[f64],
    policy: &InterventionPolicy,
    opts: &RunOptions,
) -> Result<Trajectory, RunError> {
    if policy.scheme != Scheme::Simple {
        return Err(RunError::Policy("expected the simple scheme".into()));
    }
    run_policy(model, y0, policy, opts)
}

pub fn run_prevalence_dependent<M: EpidemicModel + ?Sized>(
    model: &M,
    y0: &[f64],
    policy: &InterventionPolicy,
    opts: &RunOptions,
) -> Result<Trajectory, RunError> {
    if policy.scheme != Scheme::PrevalenceDependent {
        return Err(RunError::Policy(
            "expected the prevalence-dependent scheme".into(),
        ));
    }
    run_policy(model, y0, policy, opts)
}
