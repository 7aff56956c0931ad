//! Common interface of the ODE models driven by the intervention runners.

use crate::model::{
    pairwise_rhs, EpiParams, ModelError, NetworkMoments, PairwiseState, RateSchedule, PAIRWISE_DIM,
};

/// An epidemic ODE system on an RLAD network.
///
/// Network rates reach the model through the schedule built so far; within
/// one integration segment the last piece is in force.
pub trait EpidemicModel: Sync {
    fn dim(&self) -> usize;

    fn epi(&self) -> &EpiParams;

    fn rhs(
        &self,
        t: f64,
        y: &[f64],
        schedule: &RateSchedule,
        dy: &mut [f64],
    ) -> Result<(), ModelError>;

    /// Node, pair and network quantities at `(t, y)`.
    fn observe(&self, t: f64, y: &[f64], schedule: &RateSchedule) -> PairwiseState;

    /// Mean degree `<k>(t)`.
    fn mean_degree(&self, t: f64, y: &[f64], schedule: &RateSchedule) -> f64 {
        self.observe(t, y, schedule).k_mean
    }

    fn exposed_index(&self) -> usize;
    fn infectious_index(&self) -> usize;
    fn recovered_index(&self) -> usize;
}

/// Pairwise model with the simplified (degree/state independent) closure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpleClosureModel {
    pub epi: EpiParams,
}

impl SimpleClosureModel {
    pub fn new(epi: EpiParams) -> Self {
        Self { epi }
    }

    pub fn initial_state(
        &self,
        exposed: f64,
        infectious: f64,
        recovered: f64,
        moments: NetworkMoments,
    ) -> Vec<f64> {
        PairwiseState::seeded(self.epi.n_nodes, exposed, infectious, recovered, moments)
            .to_array()
            .to_vec()
    }
}

impl EpidemicModel for SimpleClosureModel {
    fn dim(&self) -> usize {
        PAIRWISE_DIM
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
        let st = PairwiseState::from_slice(y);
        let d = pairwise_rhs(t, &st, &self.epi, schedule.at(t))?;
        dy.copy_from_slice(&d.to_array());
        Ok(())
    }

    fn observe(&self, _t: f64, y: &[f64], _schedule: &RateSchedule) -> PairwiseState {
        PairwiseState::from_slice(y)
    }

    fn mean_degree(&self, _t: f64, y: &[f64], _schedule: &RateSchedule) -> f64 {
        y[PairwiseState::K_MEAN]
    }

    fn exposed_index(&self) -> usize {
        PairwiseState::E
    }

    fn infectious_index(&self) -> usize {
        PairwiseState::I
    }

    fn recovered_index(&self) -> usize {
        PairwiseState::R
    }
}
