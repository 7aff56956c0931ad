//! Time-dependent degree-distribution generating function under RLAD.
//!
//! Each of the `N-1` potential links of a node is an independent two-state
//! chain (absent/present). Over an interval with constant rates the chain is
//! summarized by a [`LinkKernel`], and
//!
//! `g(x,t) = B(x)^(N-1) g0(A(x)/B(x))`, `A = 1 - P11 + P11 x`, `B = 1 - P01 + P01 x`,
//!
//! which for constant rates is the method-of-characteristics solution of
//! the generating-function PDE. Kernels compose across phases, so piecewise
//! schedules need no re-expansion of `g0`.

use thiserror::Error;

use crate::model::{RateSchedule, Rates};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PgfError {
    #[error("argument x = {0} outside [0, 1]")]
    Domain(f64),
    #[error("invalid degree distribution: {0}")]
    Distribution(String),
    #[error("generating function degenerate at x = {0}")]
    Degenerate(f64),
}

/// Transition probabilities of a single potential link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkKernel {
    /// P(present at end | present at start).
    pub stay: f64,
    /// P(present at end | absent at start).
    pub appear: f64,
}

impl LinkKernel {
    pub const IDENTITY: LinkKernel = LinkKernel {
        stay: 1.0,
        appear: 0.0,
    };

    /// Kernel of `dt` days at constant rates.
    pub fn for_rates(rates: Rates, dt: f64) -> Self {
        let lam = rates.alpha + rates.omega;
        if lam == 0.0 || dt <= 0.0 {
            return Self::IDENTITY;
        }
        let decay = (-lam * dt).exp();
        // 1 - decay without cancellation
        let grown = -(-lam * dt).exp_m1();
        Self {
            stay: (rates.alpha + rates.omega * decay) / lam,
            appear: rates.alpha * grown / lam,
        }
    }

    /// Kernel of `self` followed by `next`.
    pub fn then(self, next: LinkKernel) -> Self {
        Self {
            stay: self.stay * next.stay + (1.0 - self.stay) * next.appear,
            appear: self.appear * next.stay + (1.0 - self.appear) * next.appear,
        }
    }

    /// Kernel accumulated by a schedule from its start up to time `t`.
    pub fn from_schedule(schedule: &RateSchedule, t: f64) -> Self {
        let pieces: Vec<(f64, Rates)> = schedule.pieces().collect();
        let mut k = Self::IDENTITY;
        for (j, &(start, rates)) in pieces.iter().enumerate() {
            if t <= start {
                break;
            }
            let end = pieces.get(j + 1).map_or(t, |p| p.0.min(t));
            k = k.then(Self::for_rates(rates, end - start));
        }
        k
    }
}

/// Value and first two x-derivatives of a generating function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgfValue {
    pub g: f64,
    pub gx: f64,
    pub gxx: f64,
}

/// Degree distribution `p_k`, `k = 0..N-1`, of an `N`-node network.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreePgf {
    /// Coefficients with trailing zeros trimmed.
    coeffs: Vec<f64>,
    n_nodes: usize,
}

impl DegreePgf {
    pub fn new(coeffs: &[f64], n_nodes: usize) -> Result<Self, PgfError> {
        if n_nodes < 2 {
            return Err(PgfError::Distribution(format!("n_nodes = {n_nodes}")));
        }
        if coeffs.len() > n_nodes {
            return Err(PgfError::Distribution(format!(
                "{} coefficients for {n_nodes} nodes",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|&c| !(c >= 0.0)) {
            return Err(PgfError::Distribution("negative coefficient".into()));
        }
        let total: f64 = coeffs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(PgfError::Distribution(format!(
                "coefficients sum to {total}"
            )));
        }
        let last = coeffs.iter().rposition(|&c| c > 0.0).unwrap_or(0);
        Ok(Self {
            coeffs: coeffs[..=last].to_vec(),
            n_nodes,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `g0(u)`, `g0'(u)`, `g0''(u)` by Horner's scheme.
    pub fn eval_initial(&self, u: f64) -> PgfValue {
        let mut g = 0.0;
        let mut gx = 0.0;
        let mut gxx = 0.0;
        for &c in self.coeffs.iter().rev() {
            gxx = gxx * u + 2.0 * gx;
            gx = gx * u + g;
            g = g * u + c;
        }
        PgfValue { g, gx, gxx }
    }

    /// `g(x, t)` and its x-derivatives for the network evolved by `kernel`.
    pub fn eval(&self, kernel: LinkKernel, x: f64) -> Result<PgfValue, PgfError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(PgfError::Domain(x));
        }
        if kernel == LinkKernel::IDENTITY {
            return Ok(self.eval_initial(x));
        }
        let LinkKernel { stay, appear } = kernel;
        let a = 1.0 - stay + stay * x;
        let b = 1.0 - appear + appear * x;
        if !(b > 0.0) {
            return Err(PgfError::Degenerate(x));
        }
        let m = (self.n_nodes - 1) as f64;
        // Moebius argument and its derivatives
        let u = a / b;
        let du = (stay - appear) / (b * b);
        let ddu = -2.0 * (stay - appear) * appear / (b * b * b);
        // power factor B^m
        let h = b.powf(m);
        let dh = m * appear * b.powf(m - 1.0);
        let ddh = if m >= 2.0 {
            m * (m - 1.0) * appear * appear * b.powf(m - 2.0)
        } else {
            0.0
        };
        let g0 = self.eval_initial(u);
        let gg = g0.g;
        let gg1 = g0.gx * du;
        let gg2 = g0.gxx * du * du + g0.gx * ddu;
        Ok(PgfValue {
            g: gg * h,
            gx: gg1 * h + gg * dh,
            gxx: gg2 * h + 2.0 * gg1 * dh + gg * ddh,
        })
    }

    /// Mean degree `g_x(1, t)`.
    pub fn mean_degree(&self, kernel: LinkKernel) -> f64 {
        self.eval(kernel, 1.0).map(|v| v.gx).unwrap_or(f64::NAN)
    }
}

/// Initial distribution plus constant RLAD rates.
#[derive(Debug, Clone, PartialEq)]
pub struct PgfSpec {
    pub g0: DegreePgf,
    pub alpha: f64,
    pub omega: f64,
}

impl PgfSpec {
    pub fn n_nodes(&self) -> usize {
        self.g0.n_nodes
    }
}

/// Closed-form `g(x, t)` with analytic `g_x`, `g_xx`.
pub fn pgf_eval(spec: &PgfSpec, x: f64, t: f64) -> Result<PgfValue, PgfError> {
    let rates = Rates::new(spec.alpha, spec.omega);
    spec.g0.eval(LinkKernel::for_rates(rates, t), x)
}

/// Literal characteristic solution
/// `g0((w + a x + w(x-1)E)/(w + a x - a(x-1)E)) ((w + a x - a(x-1)E)/(a+w))^(N-1)`,
/// `E = exp(-(a+w)t)`; value only.
pub fn pgf_characteristic(spec: &PgfSpec, x: f64, t: f64) -> f64 {
    let (a, w) = (spec.alpha, spec.omega);
    if a + w == 0.0 {
        return spec.g0.eval_initial(x).g;
    }
    let e = (-(a + w) * t).exp();
    let num = w + a * x + w * (x - 1.0) * e;
    let den = w + a * x - a * (x - 1.0) * e;
    spec.g0.eval_initial(num / den).g * (den / (a + w)).powi(spec.n_nodes() as i32 - 1)
}
