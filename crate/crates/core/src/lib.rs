//! Pairwise SEIR epidemics on adaptive heterogeneous clustered networks.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod complex;
pub mod intervention;
pub mod metrics;
pub mod model;
pub mod network;
pub mod ode;
pub mod pgf;
pub mod scenario;
pub mod stochastic;
pub mod sweep;
pub mod system;
pub mod trajectory;
pub mod validate;
