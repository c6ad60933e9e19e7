//! Scenario generation, latency modelling and joint optimisation of split
//! layer, device association and resource allocation for hierarchical split
//! federated learning over a UAV and LEO-satellite network.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod constellation;
pub mod convergence_bound;
pub mod dnn_profile;
pub mod error;
pub mod experiments;
pub mod latency;
pub mod optimizer;
pub mod scenario;

pub use baselines::{solve_baseline, BaselineKind};
pub use channel::{A2GChannelParams, RateTable, SatLinkParams};
pub use constellation::{AccessSchedule, ConstellationConfig, GroundTarget, RoundPlan};
pub use convergence_bound::{compute_pn, loss_bound, BoundParams};
pub use dnn_profile::{CutCosts, DnnProfile};
pub use error::{Error, Result};
pub use latency::LatencyBreakdown;
pub use optimizer::{
    brute_force_oracle, solve_joint, Allocation, Association, Problem, SatLink, Solution,
    SolveOptions,
};
pub use scenario::{generate_scenario, Scenario, ScenarioConfig};
