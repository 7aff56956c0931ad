//! Continuous solution of one policy run and its CSV export.

use std::io::Write;

use serde::Serialize;

use crate::intervention::PhaseLog;
use crate::model::RateSchedule;
use crate::ode::DenseOutput;
use crate::system::EpidemicModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// `[E] + [I]` dropped below the end threshold.
    Extinct,
    /// The time limit was reached first; the final size is not converged.
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub t: f64,
    pub label: String,
}

impl EventRecord {
    pub fn new(t: f64, label: &str) -> Self {
        Self {
            t,
            label: label.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dense: DenseOutput,
    pub schedule: RateSchedule,
    pub phases: PhaseLog,
    /// Located events in time order.
    pub events: Vec<EventRecord>,
    pub termination: Termination,
    /// Whether the prevalence threshold ever triggered an intervention.
    pub triggered: bool,
    /// Prevalence threshold `qN` in persons (0 without a policy).
    pub threshold: f64,
    pub n_nodes: usize,
    pub gamma: f64,
    pub exposed_index: usize,
    pub infectious_index: usize,
    pub recovered_index: usize,
}

#[derive(Serialize)]
struct Row<'a> {
    t: f64,
    #[serde(rename = "S")]
    s: f64,
    #[serde(rename = "E")]
    e: f64,
    #[serde(rename = "I")]
    i: f64,
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "SS")]
    ss: f64,
    #[serde(rename = "SE")]
    se: f64,
    #[serde(rename = "SI")]
    si: f64,
    #[serde(rename = "EE")]
    ee: f64,
    #[serde(rename = "EI")]
    ei: f64,
    #[serde(rename = "II")]
    ii: f64,
    k_mean: f64,
    k2k: f64,
    phi: f64,
    alpha: f64,
    omega: f64,
    phase: &'a str,
}

impl Trajectory {
    pub fn span(&self) -> (f64, f64) {
        self.dense.span()
    }

    pub fn end_time(&self) -> f64 {
        self.span().1
    }

    pub fn state(&self, t: f64) -> Vec<f64> {
        self.dense.eval_vec(t)
    }

    pub fn prevalence(&self, t: f64) -> f64 {
        self.dense.component(t, self.infectious_index)
    }

    pub fn exposed(&self, t: f64) -> f64 {
        self.dense.component(t, self.exposed_index)
    }

    pub fn recovered(&self, t: f64) -> f64 {
        self.dense.component(t, self.recovered_index)
    }

    /// `[R]` at termination.
    pub fn final_size(&self) -> f64 {
        self.recovered(self.end_time())
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Extinct
    }

    /// Uniform grid of spacing `dt` over the span, with the end point.
    pub fn grid(&self, dt: f64) -> Vec<f64> {
        let (t0, t1) = self.span();
        let n = ((t1 - t0) / dt).floor() as usize;
        let mut g: Vec<f64> = (0..=n).map(|j| t0 + j as f64 * dt).collect();
        if g.last().is_none_or(|&t| t < t1) {
            g.push(t1);
        }
        g
    }

    /// Grid of spacing `dt` plus every phase boundary.
    pub fn sample_times(&self, dt: f64) -> Vec<f64> {
        let mut g = self.grid(dt);
        g.extend(self.phases.iter().map(|r| r.t_start));
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }

    /// Writes the observed channels of `model` at `times`.
    pub fn write_csv<W: Write>(
        &self,
        model: &dyn EpidemicModel,
        times: &[f64],
        w: W,
    ) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for &t in times {
            let y = self.state(t);
            let o = model.observe(t, &y, &self.schedule);
            let rates = self.schedule.at(t);
            let phase = self.phases.phase_at(t).map_or("free", |r| r.phase.as_str());
            out.serialize(Row {
                t,
                s: o.s,
                e: o.e,
                i: o.i,
                r: o.r,
                ss: o.ss,
                se: o.se,
                si: o.si,
                ee: o.ee,
                ei: o.ei,
                ii: o.ii,
                k_mean: o.k_mean,
                k2k: o.k2k,
                phi: o.phi,
                alpha: rates.alpha,
                omega: rates.omega,
                phase,
            })?;
        }
        out.flush()?;
        Ok(())
    }

    /// Largest deviation of `S + E + I + R` from `N` over `times`.
    pub fn conservation_error(&self, model: &dyn EpidemicModel, times: &[f64]) -> f64 {
        let n = self.n_nodes as f64;
        times
            .iter()
            .map(|&t| {
                let o = model.observe(t, &self.state(t), &self.schedule);
                (o.total_nodes() - n).abs()
            })
            .fold(0.0, f64::max)
    }
}
