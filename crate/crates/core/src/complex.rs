//! Adaptive pairwise SEIR with the heterogeneous clustered closure.
//!
//! Susceptibles are tracked through `theta`, the probability that a link
//! has never carried transmission, with `[S_k] = S0 p_k(t) theta^k` and so
//! `[S] = S0 g(theta, t)`. `S0` is the initially susceptible pool; with no
//! seeded nodes it equals `N`. Auxiliary sums `Y = sum_k k[E_k]` and
//! `Z = sum_k k[I_k]` feed the clustering correction of the closure.

use serde::{Deserialize, Serialize};

use crate::model::{EpiParams, ModelError, PairwiseState, RateSchedule, Rates, CLOSURE_EPS};
use crate::pgf::{pgf_eval, DegreePgf, LinkKernel, PgfSpec, PgfValue};
use crate::system::EpidemicModel;

pub const COMPLEX_DIM: usize = 13;

/// State of the complex-closure model. `[S]` is derived from `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexState {
    pub e: f64,
    pub i: f64,
    pub r: f64,
    pub ss: f64,
    pub se: f64,
    pub si: f64,
    pub ee: f64,
    pub ei: f64,
    pub ii: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
    pub phi: f64,
}

impl ComplexState {
    pub const E: usize = 0;
    pub const I: usize = 1;
    pub const R: usize = 2;
    pub const THETA: usize = 11;

    pub fn to_array(&self) -> [f64; COMPLEX_DIM] {
        [
            self.e, self.i, self.r, self.ss, self.se, self.si, self.ee, self.ei, self.ii, self.y,
            self.z, self.theta, self.phi,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), COMPLEX_DIM, "complex state has 13 components");
        Self {
            e: v[0],
            i: v[1],
            r: v[2],
            ss: v[3],
            se: v[4],
            si: v[5],
            ee: v[6],
            ei: v[7],
            ii: v[8],
            y: v[9],
            z: v[10],
            theta: v[11],
            phi: v[12],
        }
    }
}

/// Generating-function values needed by one derivative evaluation.
#[derive(Debug, Clone, Copy)]
struct NetworkView {
    at_theta: PgfValue,
    at_one: PgfValue,
}

fn derivative(
    st: &ComplexState,
    epi: &EpiParams,
    rates: Rates,
    pool: f64,
    net: NetworkView,
) -> Result<ComplexState, ModelError> {
    let EpiParams {
        beta, eta, gamma, ..
    } = *epi;
    let n = epi.n();
    let Rates { alpha, omega } = rates;
    let lam = alpha + omega;
    let theta = st.theta.clamp(0.0, 1.0);
    let gt = net.at_theta;
    if !(gt.gx >= CLOSURE_EPS) {
        return Err(ModelError::DivisionGuard {
            name: "g_x(theta, t)",
            value: gt.gx,
        });
    }
    let s = pool * gt.g;
    let k_now = net.at_one.gx;
    let phi = st.phi;

    let (ssi, esi, isi) = if st.si == 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        let hetero = gt.gxx / (pool * gt.gx * gt.gx);
        let sum_k_s = (pool * theta * gt.gx).max(CLOSURE_EPS);
        let y = st.y.max(CLOSURE_EPS);
        let z = st.z.max(CLOSURE_EPS);
        let (c_ssi, c_esi, c_isi) = if phi > 0.0 {
            let scale = phi * n * k_now;
            (
                scale * st.si / (sum_k_s * z),
                scale * st.ei / (y * z),
                scale * st.ii / (z * z),
            )
        } else {
            (0.0, 0.0, 0.0)
        };
        (
            st.ss * st.si * hetero * (1.0 - phi + c_ssi),
            st.se * st.si * hetero * (1.0 - phi + c_esi),
            st.si * st.si * hetero * (1.0 - phi + c_isi),
        )
    };

    let x = st;
    let mut d = ComplexState {
        e: beta * x.si - eta * x.e,
        i: eta * x.e - gamma * x.i,
        r: gamma * x.i,
        ss: -2.0 * beta * ssi + alpha * s * (s - 1.0) - lam * x.ss,
        se: beta * ssi - beta * esi - eta * x.se + alpha * s * x.e - lam * x.se,
        si: eta * x.se - beta * x.si - beta * isi - gamma * x.si + alpha * s * x.i - lam * x.si,
        ee: 2.0 * beta * esi - 2.0 * eta * x.ee + alpha * x.e * (x.e - 1.0) - lam * x.ee,
        ei: beta * isi + beta * x.si + eta * x.ee - (gamma + eta) * x.ei + alpha * x.e * x.i
            - lam * x.ei,
        ii: 2.0 * eta * x.ei - 2.0 * gamma * x.ii + alpha * x.i * (x.i - 1.0) - lam * x.ii,
        y: beta * theta * gt.gxx / gt.gx * x.si - (eta + lam) * x.y + alpha * (n - 1.0) * x.e,
        z: eta * x.y - (gamma + lam) * x.z + alpha * (n - 1.0) * x.i,
        theta: -beta * x.si / (pool * gt.gx)
            - (1.0 - theta) * (alpha * theta + omega - alpha * (n - 1.0) * gt.g / gt.gx),
        phi: 0.0,
    };
    d.phi = if alpha == 0.0 {
        -omega * phi
    } else {
        let g1 = net.at_one;
        3.0 * alpha - (lam + 2.0 * alpha * (n - 2.0) * g1.gx / g1.gxx.max(CLOSURE_EPS)) * phi
    };
    if d.to_array().iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite(f64::NAN));
    }
    Ok(d)
}

/// Derivative of the complex-closure system at time `t` for constant rates
/// from `t = 0` (the network is `spec` evolved for `t` days).
pub fn complex_rhs(
    t: f64,
    state: &ComplexState,
    epi: &EpiParams,
    spec: &PgfSpec,
    susceptible_pool: f64,
) -> Result<ComplexState, ModelError> {
    let net = NetworkView {
        at_theta: pgf_eval(spec, state.theta.clamp(0.0, 1.0), t)?,
        at_one: pgf_eval(spec, 1.0, t)?,
    };
    derivative(
        state,
        epi,
        Rates::new(spec.alpha, spec.omega),
        susceptible_pool,
        net,
    )
}

/// Complex-closure model on a network with initial degree distribution `g0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexClosureModel {
    pub epi: EpiParams,
    pub g0: DegreePgf,
    /// Initially susceptible nodes `S0`.
    pub susceptible_pool: f64,
}

impl ComplexClosureModel {
    pub fn new(epi: EpiParams, g0: DegreePgf, susceptible_pool: f64) -> Self {
        Self {
            epi,
            g0,
            susceptible_pool,
        }
    }

    /// Seeds `exposed` and `infectious` nodes uniformly at random with
    /// `theta(0) = 1`.
    pub fn initial_state(
        &self,
        exposed: f64,
        infectious: f64,
        recovered: f64,
        phi: f64,
    ) -> Vec<f64> {
        let n = self.epi.n();
        let k0 = self.g0.eval_initial(1.0).gx;
        let s = n - exposed - infectious - recovered;
        let c = k0 / (n - 1.0);
        ComplexState {
            e: exposed,
            i: infectious,
            r: recovered,
            ss: c * s * (s - 1.0).max(0.0),
            se: c * s * exposed,
            si: c * s * infectious,
            ee: c * exposed * (exposed - 1.0).max(0.0),
            ei: c * exposed * infectious,
            ii: c * infectious * (infectious - 1.0).max(0.0),
            y: k0 * exposed,
            z: k0 * infectious,
            theta: 1.0,
            phi,
        }
        .to_array()
        .to_vec()
    }

    fn view(&self, kernel: LinkKernel, theta: f64) -> Result<NetworkView, ModelError> {
        Ok(NetworkView {
            at_theta: self.g0.eval(kernel, theta.clamp(0.0, 1.0))?,
            at_one: self.g0.eval(kernel, 1.0)?,
        })
    }

    pub fn susceptibles(&self, kernel: LinkKernel, theta: f64) -> f64 {
        self.g0
            .eval(kernel, theta.clamp(0.0, 1.0))
            .map(|v| self.susceptible_pool * v.g)
            .unwrap_or(f64::NAN)
    }
}

impl EpidemicModel for ComplexClosureModel {
    fn dim(&self) -> usize {
        COMPLEX_DIM
    }

    fn epi(&self) -> &EpiParams {
        &self.epi
    }

    fn rhs(
        &self,
        t: f64,
        y: &[f64],
        schedule: &RateSchedule,
        dy: &mut [f64],
    ) -> Result<(), ModelError> {
        let st = ComplexState::from_slice(y);
        let kernel = LinkKernel::from_schedule(schedule, t);
        let net = self.view(kernel, st.theta)?;
        let d = derivative(&st, &self.epi, schedule.at(t), self.susceptible_pool, net).map_err(
            |e| match e {
                ModelError::NonFinite(_) => ModelError::NonFinite(t),
                other => other,
            },
        )?;
        dy.copy_from_slice(&d.to_array());
        Ok(())
    }

    fn observe(&self, t: f64, y: &[f64], schedule: &RateSchedule) -> PairwiseState {
        let st = ComplexState::from_slice(y);
        let kernel = LinkKernel::from_schedule(schedule, t);
        let one = self.g0.eval(kernel, 1.0).expect("x = 1 is in range");
        PairwiseState {
            s: self.susceptibles(kernel, st.theta),
            e: st.e,
            i: st.i,
            r: st.r,
            ss: st.ss,
            se: st.se,
            si: st.si,
            ee: st.ee,
            ei: st.ei,
            ii: st.ii,
            k_mean: one.gx,
            k2k: one.gxx,
            phi: st.phi,
        }
    }

    fn mean_degree(&self, t: f64, _y: &[f64], schedule: &RateSchedule) -> f64 {
        self.g0.mean_degree(LinkKernel::from_schedule(schedule, t))
    }

    fn exposed_index(&self) -> usize {
        ComplexState::E
    }

    fn infectious_index(&self) -> usize {
        ComplexState::I
    }

    fn recovered_index(&self) -> usize {
        ComplexState::R
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn g0(n: usize) -> DegreePgf {
        let mut c = vec![0.0; n];
        let w = [0.0, 0.05, 0.15, 0.25, 0.2, 0.15, 0.1, 0.06, 0.04];
        c[..w.len()].copy_from_slice(&w);
        DegreePgf::new(&c, n).unwrap()
    }

    fn sample_state() -> ComplexState {
        ComplexState {
            e: 12.0,
            i: 9.0,
            r: 4.0,
            ss: 600.0,
            se: 30.0,
            si: 25.0,
            ee: 3.0,
            ei: 4.0,
            ii: 5.0,
            y: 50.0,
            z: 41.0,
            theta: 0.93,
            phi: 0.3,
        }
    }

    #[test]
    fn static_fully_susceptible_has_no_theta_drift() {
        let n = 60;
        let epi = EpiParams::new(0.0, 0.2, 0.1, n).unwrap();
        let spec = PgfSpec {
            g0: g0(n),
            alpha: 0.0,
            omega: 0.0,
        };
        let mut st = sample_state();
        st.theta = 1.0;
        let d = complex_rhs(0.0, &st, &epi, &spec, n as f64).unwrap();
        assert_eq!(d.theta, 0.0);
        let m = ComplexClosureModel::new(epi, g0(n), n as f64);
        assert_eq!(m.susceptibles(LinkKernel::IDENTITY, 1.0), n as f64);
    }

    /// Static heterogeneous clustered SEIR written out with explicit degree
    /// sums `[S_k] = S0 p_k theta^k`.
    fn static_oracle(st: &ComplexState, epi: &EpiParams, p: &[f64], pool: f64) -> ComplexState {
        let (beta, eta, gamma, n) = (epi.beta, epi.eta, epi.gamma, epi.n());
        let th = st.theta;
        let mut s = 0.0;
        let mut sum_k = 0.0;
        let mut sum_kk = 0.0;
        let mut k_mean = 0.0;
        let mut gp = 0.0;
        let mut gpp = 0.0;
        for (k, &pk) in p.iter().enumerate() {
            let kf = k as f64;
            let sk = pool * pk * th.powi(k as i32);
            s += sk;
            sum_k += kf * sk;
            sum_kk += kf * (kf - 1.0) * sk;
            k_mean += kf * pk;
            if k >= 1 {
                gp += kf * pk * th.powi(k as i32 - 1);
            }
            if k >= 2 {
                gpp += kf * (kf - 1.0) * pk * th.powi(k as i32 - 2);
            }
        }
        let _ = s;
        let ratio = sum_kk / (sum_k * sum_k);
        let phi = st.phi;
        let corr = |ai: f64, sum_a: f64| 1.0 - phi + phi * n * k_mean * ai / (sum_a * st.z);
        let ssi = st.ss * st.si * ratio * corr(st.si, sum_k);
        let esi = st.se * st.si * ratio * corr(st.ei, st.y);
        let isi = st.si * st.si * ratio * corr(st.ii, st.z);
        ComplexState {
            e: beta * st.si - eta * st.e,
            i: eta * st.e - gamma * st.i,
            r: gamma * st.i,
            ss: -2.0 * beta * ssi,
            se: beta * ssi - beta * esi - eta * st.se,
            si: eta * st.se - beta * st.si - beta * isi - gamma * st.si,
            ee: 2.0 * beta * esi - 2.0 * eta * st.ee,
            ei: beta * isi + beta * st.si + eta * st.ee - (gamma + eta) * st.ei,
            ii: 2.0 * eta * st.ei - 2.0 * gamma * st.ii,
            y: beta * th * gpp / gp * st.si - eta * st.y,
            z: eta * st.y - gamma * st.z,
            theta: -beta * st.si / (pool * gp),
            phi: 0.0,
        }
    }

    #[test]
    fn static_limit_matches_explicit_degree_sums() {
        let n = 60;
        let epi = EpiParams::new(0.07, 0.2, 0.1, n).unwrap();
        let pgf = g0(n);
        let spec = PgfSpec {
            g0: pgf.clone(),
            alpha: 0.0,
            omega: 0.0,
        };
        let pool = 35.0;
        let st = sample_state();
        let d = complex_rhs(0.0, &st, &epi, &spec, pool).unwrap();
        let o = static_oracle(&st, &epi, pgf.coeffs(), pool);
        for (a, b) in d.to_array().iter().zip(o.to_array()) {
            assert_relative_eq!(*a, b, max_relative = 1e-11, epsilon = 1e-14);
        }
    }

    #[test]
    fn derived_susceptibles_are_conserved() {
        // d/dt (S0 g(theta,t)) = -beta [SI]
        let n = 80;
        let epi = EpiParams::new(0.05, 0.2, 0.1, n).unwrap();
        let spec = PgfSpec {
            g0: g0(n),
            alpha: 2e-3,
            omega: 5e-3,
        };
        let pool = 60.0;
        let st = sample_state();
        let t = 7.0;
        let d = complex_rhs(t, &st, &epi, &spec, pool).unwrap();
        let h = 1e-6;
        let s_at = |dt: f64| pool * pgf_eval(&spec, st.theta + dt * d.theta, t + dt).unwrap().g;
        let ds = (s_at(h) - s_at(-h)) / (2.0 * h);
        assert_relative_eq!(ds, -epi.beta * st.si, max_relative = 1e-6);
    }

    #[test]
    fn theta_decreases_on_static_network() {
        let n = 60;
        let epi = EpiParams::new(0.05, 0.2, 0.1, n).unwrap();
        let spec = PgfSpec {
            g0: g0(n),
            alpha: 0.0,
            omega: 0.0,
        };
        let d = complex_rhs(0.0, &sample_state(), &epi, &spec, 50.0).unwrap();
        assert!(d.theta < 0.0);
    }

    #[test]
    fn exhausted_edges_trip_the_guard() {
        let n = 60;
        let epi = EpiParams::new(0.05, 0.2, 0.1, n).unwrap();
        // no degree-one nodes, so g'(0) = 0
        let mut c = vec![0.0; n];
        c[2] = 0.5;
        c[4] = 0.5;
        let spec = PgfSpec {
            g0: DegreePgf::new(&c, n).unwrap(),
            alpha: 0.0,
            omega: 0.0,
        };
        let mut st = sample_state();
        st.theta = 0.0;
        assert!(matches!(
            complex_rhs(0.0, &st, &epi, &spec, 50.0),
            Err(ModelError::DivisionGuard { .. })
        ));
    }
}
