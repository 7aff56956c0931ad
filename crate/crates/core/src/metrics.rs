//! Outcome measures of a run relative to its no-intervention baseline.

use serde::{Deserialize, Serialize};

use crate::trajectory::Trajectory;

/// Sampling step (days) for shape classification.
pub const CLASSIFY_DT: f64 = 0.1;
/// Minimum peak prominence, as a fraction of `N`.
pub const PROMINENCE_FLOOR: f64 = 1e-6;
/// Minimum second-difference magnitude, as a fraction of `N`.
pub const CURVATURE_FLOOR: f64 = 1e-9;

const ROOT_TOL: f64 = 1e-11;
const QUAD_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("baseline final size must be positive, got {0}")]
    ZeroBaseline(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    UniformSpike,
    NonuniformSpike,
    MultipleSpikes,
    NoSpike,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::UniformSpike => "uniform-spike",
            Classification::NonuniformSpike => "nonuniform-spike",
            Classification::MultipleSpikes => "multiple-spikes",
            Classification::NoSpike => "no-spike",
        }
    }

    pub fn from_counts(n_maxima: usize, n_inflections: usize) -> Self {
        match n_maxima {
            0 => Classification::NoSpike,
            1 if n_inflections > 2 => Classification::NonuniformSpike,
            1 => Classification::UniformSpike,
            _ => Classification::MultipleSpikes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub classification: Classification,
    pub n_maxima: usize,
    pub n_inflections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub r_inf_baseline: f64,
    pub r_inf_intervention: f64,
    pub rcfs: f64,
    /// Person-days above the threshold.
    pub ciat: f64,
    /// Mean excess prevalence over the above-threshold time.
    pub aiat: Option<f64>,
    /// The same average computed from recovered increments.
    pub aiat_from_recovered: Option<f64>,
    pub intervals: Vec<(f64, f64)>,
    pub classification: Classification,
    pub n_maxima: usize,
    pub n_inflections: usize,
}

/// Relative change in final size.
pub fn rcfs(r_inf_intervention: f64, r_inf_baseline: f64) -> Result<f64, MetricError> {
    if !(r_inf_baseline > 0.0) {
        return Err(MetricError::ZeroBaseline(r_inf_baseline));
    }
    Ok((r_inf_intervention - r_inf_baseline) / r_inf_baseline)
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, level: f64) -> f64 {
    let above_a = f(a) > level;
    while b - a > ROOT_TOL * (1.0 + b.abs()) {
        let m = 0.5 * (a + b);
        if (f(m) > level) == above_a {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Maximal intervals where `f > level`, scanning `f` between consecutive
/// `knots` at `substeps` interior points and refining sign changes.
pub fn intervals_above(
    f: impl Fn(f64) -> f64,
    knots: &[f64],
    level: f64,
    substeps: usize,
) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let Some(&t0) = knots.first() else {
        return out;
    };
    let t_end = *knots.last().unwrap();
    let mut open = (f(t0) > level).then_some(t0);
    let mut prev_t = t0;
    let mut prev_above = open.is_some();
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        for j in 1..=substeps {
            let t = a + (b - a) * j as f64 / substeps as f64;
            let above = f(t) > level;
            if above != prev_above {
                let root = bisect(&f, prev_t, t, level);
                if above {
                    open = Some(root);
                } else if let Some(s) = open.take() {
                    out.push((s, root));
                }
                prev_above = above;
            }
            prev_t = t;
        }
    }
    if let Some(s) = open {
        out.push((s, t_end));
    }
    out
}

pub fn threshold_intervals(traj: &Trajectory, qn: f64) -> Vec<(f64, f64)> {
    intervals_above(|t| traj.prevalence(t), &traj.dense.knots(), qn, 8)
}

fn gauss5(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [
        0.0,
        0.538_469_310_105_683_1,
        -0.538_469_310_105_683_1,
        0.906_179_845_938_664,
        -0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * X.iter().zip(W).map(|(x, w)| w * f(c + h * x)).sum::<f64>()
}

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (l, r) = (gauss5(f, a, m), gauss5(f, m, b));
    if depth == 0 || (l + r - whole).abs() <= tol {
        return l + r;
    }
    adaptive(f, a, m, l, 0.5 * tol, depth - 1) + adaptive(f, m, b, r, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss-Legendre quadrature of `f` over `[a, b]`, split at any
/// `breaks` inside the interval.
pub fn integrate_between(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    pts.push(b);
    pts.windows(2)
        .map(|w| {
            let whole = gauss5(&f, w[0], w[1]);
            let tol = QUAD_TOL * whole.abs().max(1e-300) + 1e-14;
            adaptive(&f, w[0], w[1], whole, tol, 40)
        })
        .sum()
}

/// Cumulative and average infections above `level` over `intervals`.
/// Returns `(ciat, aiat)`; `aiat` is `None` without intervals.
pub fn excess_integrals(
    f: impl Fn(f64) -> f64,
    intervals: &[(f64, f64)],
    breaks: &[f64],
    level: f64,
) -> (f64, Option<f64>) {
    if intervals.is_empty() {
        return (0.0, None);
    }
    let ciat: f64 = intervals
        .iter()
        .map(|&(a, b)| integrate_between(|t| f(t) - level, a, b, breaks))
        .sum();
    let span: f64 = intervals.iter().map(|&(a, b)| b - a).sum();
    let aiat = (span > 0.0).then(|| ciat / span);
    (ciat.max(0.0), aiat)
}

/// `(ciat, aiat, aiat from recovered increments)`.
pub fn ciat_aiat(
    traj: &Trajectory,
    intervals: &[(f64, f64)],
    qn: f64,
) -> (f64, Option<f64>, Option<f64>) {
    let knots = traj.dense.knots();
    let (ciat, aiat) = excess_integrals(|t| traj.prevalence(t), intervals, &knots, qn);
    let span: f64 = intervals.iter().map(|&(a, b)| b - a).sum();
    let via_r = (span > 0.0).then(|| {
        let infected: f64 = intervals
            .iter()
            .map(|&(a, b)| (traj.recovered(b) - traj.recovered(a)) / traj.gamma)
            .sum();
        (infected - qn * span) / span
    });
    (ciat, aiat, via_r)
}

/// Strict local maxima of `y` whose prominence exceeds `floor`.
pub fn count_prominent_maxima(y: &[f64], floor: f64) -> usize {
    let n = y.len();
    let mut count = 0;
    let mut j = 1;
    while j + 1 < n {
        if y[j] > y[j - 1] {
            // walk a plateau
            let mut k = j;
            while k + 1 < n && y[k + 1] == y[j] {
                k += 1;
            }
            if k + 1 < n && y[k + 1] < y[j] {
                let peak = y[j];
                let mut left_min = peak;
                let mut i = j;
                while i > 0 && y[i - 1] <= peak {
                    i -= 1;
                    left_min = left_min.min(y[i]);
                }
                let mut right_min = peak;
                let mut r = k;
                while r + 1 < n && y[r + 1] <= peak {
                    r += 1;
                    right_min = right_min.min(y[r]);
                }
                if peak - left_min.max(right_min) > floor {
                    count += 1;
                }
            }
            j = k + 1;
        } else {
            j += 1;
        }
    }
    count
}

/// Sign changes of the second difference, ignoring entries whose
/// magnitude does not exceed `floor`.
pub fn count_inflections(y: &[f64], floor: f64) -> usize {
    let mut count = 0;
    let mut last_sign = 0.0_f64;
    for w in y.windows(3) {
        let d2 = w[2] - 2.0 * w[1] + w[0];
        if d2.abs() <= floor {
            continue;
        }
        let s = d2.signum();
        if last_sign != 0.0 && s != last_sign {
            count += 1;
        }
        last_sign = s;
    }
    count
}

/// Shape of a sampled prevalence curve for a population of `n` nodes.
pub fn classify_samples(y: &[f64], n: f64) -> Shape {
    let n_maxima = count_prominent_maxima(y, PROMINENCE_FLOOR * n);
    // Inflections count once at least one person is infectious and the
    // curve has first turned convex; a concave start is the seeded
    // compartments relaxing towards the growth mode.
    let floor = CURVATURE_FLOOR * n;
    let from = y.iter().position(|&v| v > 1.0).unwrap_or(y.len());
    let convex = (from..y.len().saturating_sub(2))
        .find(|&j| y[j + 2] - 2.0 * y[j + 1] + y[j] > floor)
        .unwrap_or(y.len());
    let n_inflections = count_inflections(&y[convex..], floor);
    Shape {
        classification: Classification::from_counts(n_maxima, n_inflections),
        n_maxima,
        n_inflections,
    }
}

pub fn classify_with_step(traj: &Trajectory, dt: f64) -> Shape {
    let y: Vec<f64> = traj.grid(dt).iter().map(|&t| traj.prevalence(t)).collect();
    classify_samples(&y, traj.n_nodes as f64)
}

pub fn classify(traj: &Trajectory) -> Shape {
    classify_with_step(traj, CLASSIFY_DT)
}

/// All metrics of `traj` against a baseline final size.
pub fn evaluate(traj: &Trajectory, r_inf_baseline: f64) -> Result<MetricReport, MetricError> {
    let r_inf = traj.final_size();
    let qn = traj.threshold;
    let intervals = threshold_intervals(traj, qn);
    let (ciat, aiat, aiat_r) = ciat_aiat(traj, &intervals, qn);
    let shape = classify(traj);
    Ok(MetricReport {
        r_inf_baseline,
        r_inf_intervention: r_inf,
        rcfs: rcfs(r_inf, r_inf_baseline)?,
        ciat,
        aiat,
        aiat_from_recovered: aiat_r,
        intervals,
        classification: shape.classification,
        n_maxima: shape.n_maxima,
        n_inflections: shape.n_inflections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pulse(t: f64) -> f64 {
        (100.0 - 10.0 * (t - 10.0).abs()).max(0.0)
    }

    #[test]
    fn rcfs_examples() {
        assert_eq!(rcfs(100.0, 100.0).unwrap(), 0.0);
        assert_relative_eq!(rcfs(20.0, 100.0).unwrap(), -0.8);
        assert_relative_eq!(rcfs(110.0, 100.0).unwrap(), 0.1, epsilon = 1e-15);
        assert!(rcfs(1.0, 0.0).is_err());
    }

    #[test]
    fn triangular_pulse() {
        let knots: Vec<f64> = (0..=20).map(f64::from).collect();
        let iv = intervals_above(pulse, &knots, 50.0, 4);
        assert_eq!(iv.len(), 1);
        assert_relative_eq!(iv[0].0, 5.0, epsilon = 1e-9);
        assert_relative_eq!(iv[0].1, 15.0, epsilon = 1e-9);
        let (ciat, aiat) = excess_integrals(pulse, &iv, &knots, 50.0);
        assert_relative_eq!(ciat, 250.0, max_relative = 1e-9);
        assert_relative_eq!(aiat.unwrap(), 25.0, max_relative = 1e-9);
    }

    #[test]
    fn below_threshold_is_empty() {
        let knots = [0.0, 10.0, 20.0];
        let iv = intervals_above(pulse, &knots, 500.0, 8);
        assert!(iv.is_empty());
        assert_eq!(excess_integrals(pulse, &iv, &knots, 500.0), (0.0, None));
    }

    #[test]
    fn open_intervals_close_at_the_ends() {
        let f = |t: f64| 10.0 - t;
        let iv = intervals_above(f, &[0.0, 4.0, 8.0], 5.0, 4);
        assert_eq!(iv.len(), 1);
        assert_eq!(iv[0].0, 0.0);
        assert_relative_eq!(iv[0].1, 5.0, epsilon = 1e-9);
        let g = |t: f64| t;
        let iv = intervals_above(g, &[0.0, 4.0, 8.0], 5.0, 4);
        assert_eq!(iv[0].1, 8.0);
    }

    #[test]
    fn shape_counts() {
        let grid: Vec<f64> = (0..=2000).map(|j| j as f64 * 0.05).collect();
        let bell: Vec<f64> = grid
            .iter()
            .map(|t| 1000.0 * (-(t - 50.0).powi(2) / 50.0).exp())
            .collect();
        let s = classify_samples(&bell, 1e4);
        assert_eq!((s.n_maxima, s.n_inflections), (1, 2));
        assert_eq!(s.classification, Classification::UniformSpike);

        let two: Vec<f64> = grid
            .iter()
            .map(|t| {
                1000.0 * (-(t - 30.0).powi(2) / 20.0).exp()
                    + 800.0 * (-(t - 70.0).powi(2) / 20.0).exp()
            })
            .collect();
        assert_eq!(
            classify_samples(&two, 1e4).classification,
            Classification::MultipleSpikes
        );

        let shoulder: Vec<f64> = grid
            .iter()
            .map(|t| {
                1000.0 * (-(t - 40.0).powi(2) / 50.0).exp()
                    + 150.0 * (-(t - 52.0).powi(2) / 20.0).exp()
            })
            .collect();
        let s = classify_samples(&shoulder, 1e4);
        assert_eq!(s.n_maxima, 1, "{s:?}");
        assert_eq!(s.classification, Classification::NonuniformSpike);

        let decay: Vec<f64> = grid.iter().map(|t| 20.0 * (-t / 10.0).exp()).collect();
        assert_eq!(
            classify_samples(&decay, 1e4).classification,
            Classification::NoSpike
        );
    }

    #[test]
    fn concave_seeding_transient_is_skipped() {
        // saturating start, then a single bell
        let grid: Vec<f64> = (0..=2000).map(|j| j as f64 * 0.05).collect();
        let y: Vec<f64> = grid
            .iter()
            .map(|t| 10.0 - 5.0 * (-t).exp() + 1000.0 * (-(t - 50.0).powi(2) / 50.0).exp())
            .collect();
        let s = classify_samples(&y, 1e4);
        assert_eq!((s.n_maxima, s.n_inflections), (1, 2), "{s:?}");
    }

    #[test]
    fn ripple_below_prominence_floor_is_ignored() {
        let mut y: Vec<f64> = (0..100).map(|j| j as f64).collect();
        y.extend((0..100).map(|j| 99.0 - j as f64));
        y[50] += 1e-9;
        assert_eq!(count_prominent_maxima(&y, 1e-6), 1);
    }

    #[test]
    fn plateau_peak_counts_once() {
        let y = [0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 0.0];
        assert_eq!(count_prominent_maxima(&y, 0.5), 1);
    }
}
