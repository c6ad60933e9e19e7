use super::{Association, Problem};
use crate::dnn_profile::CutCosts;

/// Split `capacity` in proportion to `loads`, which equalises every task's
/// completion time `load/share` at `Σ loads / capacity`. All-zero loads get
/// zero shares.
pub fn kkt_shares(loads: &[f64], capacity: f64) -> Vec<f64> {
    let total: f64 = loads.iter().sum();
    if total == 0.0 {
        return vec![0.0; loads.len()];
    }
    loads.iter().map(|l| l * capacity / total).collect()
}

/// Per-device compute share `f_{n,k}` on its UAV.
pub fn solve_compute(problem: &Problem, assoc: &Association, cut: &CutCosts) -> Vec<f64> {
    let n_uavs = problem.scenario.n_uavs();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_uavs];
    for (n, &k) in assoc.assignment().iter().enumerate() {
        members[k].push(n);
    }
    let mut shares = vec![0.0; assoc.assignment().len()];
    for (k, devs) in members.iter().enumerate() {
        let loads: Vec<f64> = devs.iter().map(|_| cut.server_flops).collect();
        for (&n, f) in devs
            .iter()
            .zip(kkt_shares(&loads, problem.scenario.uavs[k].compute))
        {
            shares[n] = f;
        }
    }
    shares
}
