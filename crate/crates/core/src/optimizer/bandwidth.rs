use serde::{Deserialize, Serialize};

use super::{Association, Problem};
use crate::dnn_profile::CutCosts;
use crate::error::{Error, Result};

/// Relative residual the bisection drives `Σ demand − B^U` below.
const RESIDUAL: f64 = 1e-13;
const MAX_ITERS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthAllocation {
    /// Common finish time of every device's compute + upload (s).
    pub t_d: f64,
    /// Per-device fraction of its UAV's bandwidth.
    pub share: Vec<f64>,
    /// Per-UAV bandwidth (Hz).
    pub uav_bandwidth: Vec<f64>,
}

/// Root of `Σ_n w_n / (t − c_n) = budget` on `t > max c_n`, where `c_n` is a
/// local compute time and `w_n = M/R_n` the bandwidth·seconds device `n`
/// needs. The returned point satisfies `Σ ≤ budget` (feasible side).
pub(crate) fn common_finish_time(terms: &[(f64, f64)], budget: f64, tol: f64) -> f64 {
    let floor = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = terms.iter().map(|t| t.1).sum();
    if total == 0.0 {
        return floor;
    }
    let excess = |t: f64| terms.iter().map(|&(c, w)| w / (t - c)).sum::<f64>() - budget;
    let mut lo = floor;
    // at floor + total/budget every term is at most w·budget/total
    let mut hi = floor + total / budget;
    while excess(hi) > 0.0 {
        hi = floor + 2.0 * (hi - floor);
    }
    for _ in 0..MAX_ITERS {
        if hi - lo <= tol && excess(hi).abs() <= RESIDUAL * budget {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Bandwidth split that minimises the slowest device's compute + upload
/// time: every device finishes at the same `t_d`, and the bandwidth demanded
/// at that instant exhausts the budget.
pub fn solve_bandwidth(
    problem: &Problem,
    assoc: &Association,
    cut: &CutCosts,
    tol: f64,
) -> Result<BandwidthAllocation> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!(
            "bisection tolerance must be positive, got {tol}"
        )));
    }
    let n_uavs = problem.scenario.n_uavs();
    let n_devices = assoc.assignment().len();
    if n_devices == 0 {
        return Ok(BandwidthAllocation {
            t_d: 0.0,
            share: Vec::new(),
            uav_bandwidth: vec![0.0; n_uavs],
        });
    }
    let mut terms = Vec::with_capacity(n_devices);
    for (n, &k) in assoc.assignment().iter().enumerate() {
        let w = problem.upload_weight(n, k, cut);
        if !w.is_finite() {
            return Err(Error::Infeasible(format!(
                "device {n} has zero spectral efficiency towards UAV {k}"
            )));
        }
        terms.push((problem.local_time(n, cut), w));
    }
    let t_d = common_finish_time(&terms, problem.total_bandwidth, tol);

    let demand: Vec<f64> = terms
        .iter()
        .map(|&(c, w)| if w == 0.0 { 0.0 } else { w / (t_d - c) })
        .collect();
    let mut uav_bandwidth = vec![0.0; n_uavs];
    for (&k, d) in assoc.assignment().iter().zip(&demand) {
        uav_bandwidth[k] += d;
    }
    let share = assoc
        .assignment()
        .iter()
        .zip(&demand)
        .map(|(&k, d)| if *d == 0.0 { 0.0 } else { d / uav_bandwidth[k] })
        .collect();
    Ok(BandwidthAllocation {
        t_d,
        share,
        uav_bandwidth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::fixture;

    #[test]
    fn single_device_closed_form() {
        // t = c + w/B
        let t = common_finish_time(&[(0.5, 2.0)], 4.0, 1e-15);
        assert!((t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_devices_split_evenly() {
        let p = fixture::problem(
            &[0.0],
            &[(0.0, vec![1.0]), (10.0, vec![1.0])],
            &[vec![2.0], vec![2.0]],
        );
        let cut = p.profile.cut(1).unwrap();
        let bw = solve_bandwidth(&p, &Association::new(vec![0, 0]), &cut, 1e-12).unwrap();
        assert!((bw.share[0] - 0.5).abs() < 1e-9);
        assert!((bw.uav_bandwidth[0] - p.total_bandwidth).abs() < 1e-6);
        let c = cut.device_flops / 1e9;
        let expected = c + 2.0 * cut.feature_bits / (2.0 * p.total_bandwidth);
        assert!((bw.t_d - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn budget_is_exhausted_across_uavs() {
        let p = fixture::two_cells();
        let cut = p.profile.cut(2).unwrap();
        let bw = solve_bandwidth(&p, &Association::new(vec![0, 0, 1, 1]), &cut, 1e-12).unwrap();
        let total: f64 = bw.uav_bandwidth.iter().sum();
        assert!((total - p.total_bandwidth).abs() < 1e-9 * p.total_bandwidth);
        let on_first = bw.share[0] + bw.share[1];
        assert!((on_first - 1.0).abs() < 1e-9);
    }

    #[test]
    fn no_features_means_no_bandwidth_needed() {
        let p = fixture::two_cells();
        let cut = p.profile.cut(3).unwrap();
        let bw = solve_bandwidth(&p, &Association::new(vec![0, 0, 1, 1]), &cut, 1e-12);
        // the last layer still uploads its activations
        assert!(bw.unwrap().t_d > cut.device_flops / 1e9);
        let none = common_finish_time(&[(0.5, 0.0), (0.7, 0.0)], 1.0, 1e-12);
        assert_eq!(none, 0.7);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let p = fixture::two_cells();
        let cut = p.profile.cut(1).unwrap();
        let err = solve_bandwidth(&p, &Association::new(vec![0, 0, 1, 1]), &cut, 0.0).unwrap_err();
        assert!(matches!(err, Error::Parameter(_)));
    }
}
