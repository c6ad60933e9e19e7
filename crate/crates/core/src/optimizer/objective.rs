use super::{
    solve_bandwidth, solve_compute, Allocation, Association, Problem, ProxyConstants, Solution,
};
use crate::dnn_profile::CutCosts;
use crate::error::Result;
use crate::latency::{stage_latencies, LatencyBreakdown};
use crate::scenario::{heterogeneity_of, Scenario};

/// Bisection tolerance on the common finish time (s).
pub(crate) const FINISH_TOL: f64 = 1e-9;

/// Loss proxy `P`, summed over UAVs that serve at least one device:
/// `ℓZ² + (L−ℓ)Z²/n_k + ℓσ² + (L−ℓ)σ²/n_k + (1/n_k)·Σ_c q_{k,c}`.
pub fn loss_proxy(
    scenario: &Scenario,
    assoc: &Association,
    split: usize,
    n_layers: usize,
    proxy: &ProxyConstants,
) -> f64 {
    let spread = proxy.z * proxy.z + proxy.sigma * proxy.sigma;
    let head = split as f64;
    let tail = n_layers.saturating_sub(split) as f64;
    let het = heterogeneity_of(assoc, scenario);
    assoc
        .loads(scenario.n_uavs())
        .into_iter()
        .zip(het.totals)
        .filter(|(n_k, _)| *n_k > 0)
        .map(|(n_k, q)| {
            let n_k = n_k as f64;
            head * spread + tail * spread / n_k + q / n_k
        })
        .sum()
}

/// `(I, P, breakdown)` for an explicit allocation, with
/// `I = (1−θ)·T + θ·P`.
pub fn objective(
    problem: &Problem,
    assoc: &Association,
    alloc: &Allocation,
    split: usize,
    cut: &CutCosts,
) -> Result<(f64, f64, LatencyBreakdown)> {
    let breakdown = stage_latencies(
        &problem.scenario,
        assoc,
        alloc,
        cut,
        &problem.rates,
        &problem.sat,
    )?;
    let p = loss_proxy(
        &problem.scenario,
        assoc,
        split,
        problem.n_layers(),
        &problem.proxy,
    );
    let i = (1.0 - problem.theta) * breakdown.total + problem.theta * p;
    Ok((i, p, breakdown))
}

/// Evaluate an association at a split layer under the optimal bandwidth and
/// compute splits.
pub fn evaluate(problem: &Problem, assoc: &Association, split: usize) -> Result<Solution> {
    let cut = problem.profile.cut(split)?;
    evaluate_cut(problem, assoc, split, &cut)
}

pub(crate) fn evaluate_cut(
    problem: &Problem,
    assoc: &Association,
    split: usize,
    cut: &CutCosts,
) -> Result<Solution> {
    let bw = solve_bandwidth(problem, assoc, cut, FINISH_TOL)?;
    let alloc = Allocation {
        share: bw.share,
        uav_bandwidth: bw.uav_bandwidth,
        compute: solve_compute(problem, assoc, cut),
    };
    let (objective, loss_proxy, breakdown) = objective(problem, assoc, &alloc, split, cut)?;
    Ok(Solution {
        split_layer: split,
        assoc: assoc.clone(),
        alloc,
        breakdown,
        loss_proxy,
        objective,
        objective_history: Vec::new(),
    })
}
