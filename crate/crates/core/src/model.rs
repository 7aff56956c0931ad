//! Pairwise SEIR dynamics on a heterogeneous clustered network with random
//! link activation/deletion (RLAD).
//!
//! The state tracks expected node counts, expected pair counts and the three
//! network descriptors `<k>`, `<k^2-k>` and `phi`. Triples are closed under
//! the assumption that degree and epidemic state are independent.
//!
//! Pair convention: `[AA]` counts ordered pairs (each edge twice) and `[AB]`
//! with `A != B` counts each `A-B` edge once, so that
//! `N<k> = [SS] + [EE] + [II] + [RR] + 2([SE] + [SI] + ...)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Denominator floor used by the regularized closure.
pub const CLOSURE_EPS: f64 = 1e-12;

/// Number of components in the pairwise state vector.
pub const PAIRWISE_DIM: usize = 13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid epidemiological parameters: {0}")]
    InvalidParams(String),
    #[error("invalid network moments: {0}")]
    InvalidMoments(String),
    #[error("closure denominator {name} vanished ({value:e}); use the regularized closure")]
    DivisionGuard { name: &'static str, value: f64 },
    #[error("no real root: R0 = {r0} exceeds the truncated series maximum {max}")]
    NoRealRoot { r0: f64, max: f64 },
    #[error("transmissibility root {0} lies outside (0, 1)")]
    RootOutOfRange(f64),
    #[error("shape mismatch: expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite derivative at t = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Pgf(#[from] crate::pgf::PgfError),
}

/// Epidemiological rates and population size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpiParams {
    /// Per-contact transmission rate (1/day).
    pub beta: f64,
    /// Exposed to infectious rate (1/day).
    pub eta: f64,
    /// Recovery rate (1/day).
    pub gamma: f64,
    /// Population size N.
    pub n_nodes: usize,
}

impl EpiParams {
    pub fn new(beta: f64, eta: f64, gamma: f64, n_nodes: usize) -> Result<Self, ModelError> {
        let p = Self {
            beta,
            eta,
            gamma,
            n_nodes,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(ModelError::InvalidParams(format!("beta = {}", self.beta)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(ModelError::InvalidParams(format!("eta = {}", self.eta)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(ModelError::InvalidParams(format!("gamma = {}", self.gamma)));
        }
        if self.n_nodes < 2 {
            return Err(ModelError::InvalidParams(format!(
                "n_nodes = {}",
                self.n_nodes
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> f64 {
        self.n_nodes as f64
    }
}

/// Degree moments and clustering of a contact network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkMoments {
    /// Mean degree `<k>`.
    pub k_mean: f64,
    /// Second factorial moment `<k^2 - k>`.
    pub k2k: f64,
    /// Global clustering coefficient (3 x triangles / connected triples).
    pub phi: f64,
}

impl NetworkMoments {
    pub fn new(k_mean: f64, k2k: f64, phi: f64) -> Result<Self, ModelError> {
        let m = Self { k_mean, k2k, phi };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.k_mean >= 0.0 && self.k2k >= 0.0 && (0.0..=1.0).contains(&self.phi)) {
            return Err(ModelError::InvalidMoments(format!("{self:?}")));
        }
        Ok(())
    }

    /// Number of connected triples `L = N<k^2-k>/2`.
    pub fn connected_triples(&self, n_nodes: usize) -> f64 {
        n_nodes as f64 * self.k2k / 2.0
    }

    /// Expected triangle count `<T> = phi L / 3`.
    pub fn triangles(&self, n_nodes: usize) -> f64 {
        self.phi * self.connected_triples(n_nodes) / 3.0
    }
}

/// Link activation and deletion rates in force over one phase.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rates {
    /// Activation rate per absent link (1/day).
    pub alpha: f64,
    /// Deletion rate per present link (1/day).
    pub omega: f64,
}

impl Rates {
    pub const STATIC: Rates = Rates {
        alpha: 0.0,
        omega: 0.0,
    };

    pub fn new(alpha: f64, omega: f64) -> Self {
        Self { alpha, omega }
    }

    pub fn is_static(&self) -> bool {
        self.alpha == 0.0 && self.omega == 0.0
    }
}

/// Piecewise-constant activation/deletion rates.
///
/// Piece `j` holds on `[starts[j], starts[j+1])`; the last piece holds
/// forever and the first also covers any time before its start.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSchedule {
    starts: Vec<f64>,
    rates: Vec<Rates>,
}

impl RateSchedule {
    /// Constant rates from `t = 0`.
    pub fn constant(rates: Rates) -> Self {
        Self {
            starts: vec![0.0],
            rates: vec![rates],
        }
    }

    /// Builds a schedule from `(start time, rates)` pieces.
    ///
    /// Panics if the start times are not strictly increasing or a rate is
    /// negative.
    pub fn from_pieces(pieces: &[(f64, Rates)]) -> Self {
        assert!(!pieces.is_empty(), "schedule needs at least one piece");
        let mut s = Self {
            starts: vec![pieces[0].0],
            rates: vec![pieces[0].1],
        };
        assert!(
            pieces[0].1.alpha >= 0.0 && pieces[0].1.omega >= 0.0,
            "negative rate"
        );
        for &(t, r) in &pieces[1..] {
            s.push(t, r);
        }
        s
    }

    /// Starts a new piece at `t`. A piece starting at the same time as the
    /// current last one replaces it.
    pub fn push(&mut self, t: f64, rates: Rates) {
        assert!(rates.alpha >= 0.0 && rates.omega >= 0.0, "negative rate");
        let last = *self.starts.last().expect("non-empty schedule");
        assert!(t >= last, "schedule breakpoints must increase");
        if t == last {
            *self.rates.last_mut().unwrap() = rates;
        } else {
            self.starts.push(t);
            self.rates.push(rates);
        }
    }

    pub fn at(&self, t: f64) -> Rates {
        let j = self.starts.partition_point(|&b| b <= t);
        self.rates[j.saturating_sub(1)]
    }

    pub fn start(&self) -> f64 {
        self.starts[0]
    }

    /// `(start, rates)` of every piece, in time order.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, Rates)> + '_ {
        self.starts.iter().copied().zip(self.rates.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

/// Expected node, pair and network quantities of the pairwise model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PairwiseState {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
    pub ss: f64,
    pub se: f64,
    pub si: f64,
    pub ee: f64,
    pub ei: f64,
    pub ii: f64,
    pub k_mean: f64,
    pub k2k: f64,
    pub phi: f64,
}

impl PairwiseState {
    pub const S: usize = 0;
    pub const E: usize = 1;
    pub const I: usize = 2;
    pub const R: usize = 3;
    pub const K_MEAN: usize = 10;

    /// Initial state with the seeded compartments placed uniformly at random
    /// over the nodes, so that the expected pair counts are proportional to
    /// products of node counts. `[AB] = <k> [A][B]/(N-1)` sums to `N<k>`.
    pub fn seeded(
        n_nodes: usize,
        exposed: f64,
        infectious: f64,
        recovered: f64,
        moments: NetworkMoments,
    ) -> Self {
        let n = n_nodes as f64;
        let s = n - exposed - infectious - recovered;
        let c = moments.k_mean / (n - 1.0);
        Self {
            s,
            e: exposed,
            i: infectious,
            r: recovered,
            ss: c * s * (s - 1.0).max(0.0),
            se: c * s * exposed,
            si: c * s * infectious,
            ee: c * exposed * (exposed - 1.0).max(0.0),
            ei: c * exposed * infectious,
            ii: c * infectious * (infectious - 1.0).max(0.0),
            k_mean: moments.k_mean,
            k2k: moments.k2k,
            phi: moments.phi,
        }
    }

    pub fn moments(&self) -> NetworkMoments {
        NetworkMoments {
            k_mean: self.k_mean,
            k2k: self.k2k,
            phi: self.phi,
        }
    }

    pub fn to_array(&self) -> [f64; PAIRWISE_DIM] {
        [
            self.s,
            self.e,
            self.i,
            self.r,
            self.ss,
            self.se,
            self.si,
            self.ee,
            self.ei,
            self.ii,
            self.k_mean,
            self.k2k,
            self.phi,
        ]
    }

    pub fn from_slice(y: &[f64]) -> Self {
        assert_eq!(y.len(), PAIRWISE_DIM, "pairwise state has 13 components");
        Self {
            s: y[0],
            e: y[1],
            i: y[2],
            r: y[3],
            ss: y[4],
            se: y[5],
            si: y[6],
            ee: y[7],
            ei: y[8],
            ii: y[9],
            k_mean: y[10],
            k2k: y[11],
            phi: y[12],
        }
    }

    pub fn total_nodes(&self) -> f64 {
        self.s + self.e + self.i + self.r
    }
}

/// Closed triple counts `[SSI]`, `[ESI]`, `[ISI]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triples {
    pub ssi: f64,
    pub esi: f64,
    pub isi: f64,
}

/// How the closure treats state-variable denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosureMode {
    /// Vanishing denominators are an error.
    Strict,
    /// Each denominator `d` is replaced by `max(d, CLOSURE_EPS)`.
    Regularized,
}

fn guard(name: &'static str, d: f64, mode: ClosureMode) -> Result<f64, ModelError> {
    match mode {
        ClosureMode::Regularized => Ok(d.max(CLOSURE_EPS)),
        ClosureMode::Strict if d > 0.0 => Ok(d),
        ClosureMode::Strict => Err(ModelError::DivisionGuard { name, value: d }),
    }
}

/// Triple closure with degree/state independence:
///
/// `[ASI] = <k^2-k>/<k>^2 * [AS][SI]/[S] * (1 - phi + phi N/<k> [AI]/([A][I]))`.
pub fn closure_triples(
    state: &PairwiseState,
    epi: &EpiParams,
    mode: ClosureMode,
) -> Result<Triples, ModelError> {
    if state.si == 0.0 {
        return Ok(Triples {
            ssi: 0.0,
            esi: 0.0,
            isi: 0.0,
        });
    }
    let s = guard("[S]", state.s, mode)?;
    let k = guard("<k>", state.k_mean, mode)?;
    let phi = state.phi;
    let hetero = state.k2k / (k * k);
    let base = hetero * state.si / s;

    let (ssi_corr, esi_corr, isi_corr) = if phi > 0.0 {
        let e = guard("[E]", state.e, mode)?;
        let i = guard("[I]", state.i, mode)?;
        let scale = epi.n() / k;
        (
            scale * state.si / (s * i),
            scale * state.ei / (e * i),
            scale * state.ii / (i * i),
        )
    } else {
        (0.0, 0.0, 0.0)
    };
    let clustered = |corr: f64| 1.0 - phi + phi * corr;

    Ok(Triples {
        ssi: base * state.ss * clustered(ssi_corr),
        esi: base * state.se * clustered(esi_corr),
        isi: base * state.si * clustered(isi_corr),
    })
}

/// Derivatives of `<k>`, `<k^2-k>` and `phi` under RLAD.
pub fn moment_rhs(moments: &NetworkMoments, n_nodes: usize, rates: Rates) -> [f64; 3] {
    let n = n_nodes as f64;
    let Rates { alpha, omega } = rates;
    let dk = alpha * (n - 1.0) - (alpha + omega) * moments.k_mean;
    let dk2k = 2.0 * alpha * (n - 2.0) * moments.k_mean - 2.0 * (alpha + omega) * moments.k2k;
    let dphi = if alpha == 0.0 {
        -omega * moments.phi
    } else {
        let ratio = moments.k_mean / moments.k2k.max(CLOSURE_EPS);
        3.0 * alpha - (alpha + omega + 2.0 * alpha * (n - 2.0) * ratio) * moments.phi
    };
    [dk, dk2k, dphi]
}

/// Right-hand side of the adaptive pairwise SEIR system.
///
/// The static epidemic terms and the RLAD terms are summed separately, so
/// with `alpha = omega = 0` the result is bitwise the static model. `[R]` is
/// integrated through `d[R]/dt = gamma [I]`; the node-count derivatives sum
/// to zero. The `[EI]` activation term uses `alpha [E][I]`.
pub fn pairwise_rhs(
    _t: f64,
    state: &PairwiseState,
    epi: &EpiParams,
    rates: Rates,
) -> Result<PairwiseState, ModelError> {
    let tr = closure_triples(state, epi, ClosureMode::Regularized)?;
    let EpiParams {
        beta, eta, gamma, ..
    } = *epi;
    let x = state;

    let mut d = PairwiseState {
        s: -beta * x.si,
        e: beta * x.si - eta * x.e,
        i: eta * x.e - gamma * x.i,
        r: gamma * x.i,
        ss: -2.0 * beta * tr.ssi,
        se: beta * tr.ssi - beta * tr.esi - eta * x.se,
        si: eta * x.se - beta * x.si - beta * tr.isi - gamma * x.si,
        ee: 2.0 * beta * tr.esi - 2.0 * eta * x.ee,
        ei: beta * tr.isi + beta * x.si + eta * x.ee - (gamma + eta) * x.ei,
        ii: 2.0 * eta * x.ei - 2.0 * gamma * x.ii,
        k_mean: 0.0,
        k2k: 0.0,
        phi: 0.0,
    };

    if !rates.is_static() {
        let Rates { alpha, omega } = rates;
        let lam = alpha + omega;
        d.ss += alpha * x.s * (x.s - 1.0) - lam * x.ss;
        d.se += alpha * x.s * x.e - lam * x.se;
        d.si += alpha * x.s * x.i - lam * x.si;
        d.ee += alpha * x.e * (x.e - 1.0) - lam * x.ee;
        d.ei += alpha * x.e * x.i - lam * x.ei;
        d.ii += alpha * x.i * (x.i - 1.0) - lam * x.ii;
        let [dk, dk2k, dphi] = moment_rhs(&x.moments(), epi.n_nodes, rates);
        d.k_mean = dk;
        d.k2k = dk2k;
        d.phi = dphi;
    }

    if d.to_array().iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite(_t));
    }
    Ok(d)
}

/// Transmission rate that reproduces `r0` under the two-term series
/// `R0 = a x - phi a x^2`, `a = <k^2-k>/<k>`, `x = beta/(beta+gamma)`.
///
/// The smaller root is taken, which is continuous with the `phi = 0` case.
pub fn beta_from_r0(r0: f64, moments: &NetworkMoments, gamma: f64) -> Result<f64, ModelError> {
    if r0 == 0.0 {
        return Ok(0.0);
    }
    if !(r0 > 0.0) {
        return Err(ModelError::InvalidParams(format!("r0 = {r0}")));
    }
    if !(moments.k_mean > 0.0 && moments.k2k > moments.k_mean) {
        return Err(ModelError::InvalidMoments(format!(
            "need k2k > k_mean > 0, got {moments:?}"
        )));
    }
    let a = moments.k2k / moments.k_mean;
    let phi = moments.phi;
    let disc = a * a - 4.0 * phi * a * r0;
    if disc < 0.0 {
        return Err(ModelError::NoRealRoot {
            r0,
            max: a / (4.0 * phi),
        });
    }
    // 2c / (b + sqrt(b^2 - 4ac)) avoids cancellation when phi is small
    let x = 2.0 * r0 / (a + disc.sqrt());
    if !(x > 0.0 && x < 1.0) {
        return Err(ModelError::RootOutOfRange(x));
    }
    Ok(gamma * x / (1.0 - x))
}

/// Two-term truncated reproduction number for a given `beta`.
pub fn r0_truncated(beta: f64, moments: &NetworkMoments, gamma: f64) -> f64 {
    let a = moments.k2k / moments.k_mean;
    let x = beta / (beta + gamma);
    a * x - moments.phi * a * x * x
}

/// Kolmogorov forward equations for the degree distribution under RLAD.
///
/// `p_vec[k]` is the fraction of nodes with degree `k`, `k = 0..N-1`.
pub fn kolmogorov_rhs(
    p_vec: &[f64],
    alpha: f64,
    omega: f64,
    n_nodes: usize,
) -> Result<Vec<f64>, ModelError> {
    if p_vec.len() != n_nodes {
        return Err(ModelError::Shape {
            expected: n_nodes,
            got: p_vec.len(),
        });
    }
    let n = n_nodes as f64;
    let mut dp = vec![0.0; n_nodes];
    for (k, slot) in dp.iter_mut().enumerate() {
        let kf = k as f64;
        let gain_up = if k > 0 {
            alpha * (n - kf) * p_vec[k - 1]
        } else {
            0.0
        };
        let gain_down = if k + 1 < n_nodes {
            omega * (kf + 1.0) * p_vec[k + 1]
        } else {
            0.0
        };
        let loss = (alpha * (n - 1.0 - kf) + omega * kf) * p_vec[k];
        *slot = gain_up - loss + gain_down;
    }
    Ok(dp)
}
