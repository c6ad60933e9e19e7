//! The four comparison strategies, scored with the same objective as the
//! joint solver.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{
    evaluate, objective, solve_joint, Allocation, Association, Problem, Solution, SolveOptions,
};
use crate::scenario::seeded_rng;

const BASELINE_STREAM: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    /// Random association, optimal allocation, best split.
    Ra,
    /// Max-SNR association, equal allocation, best split.
    Era,
    /// No split: the whole model trains on the device.
    Hfl,
    /// Association by label-distribution balance only, optimal allocation,
    /// best split.
    Dda,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [Self::Ra, Self::Era, Self::Hfl, Self::Dda];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ra => "ra",
            Self::Era => "era",
            Self::Hfl => "hfl",
            Self::Dda => "dda",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ra" => Ok(Self::Ra),
            "era" => Ok(Self::Era),
            "hfl" => Ok(Self::Hfl),
            "dda" => Ok(Self::Dda),
            other => Err(Error::Config(format!("unknown baseline `{other}`"))),
        }
    }
}

fn random_association(problem: &Problem, seed: u64) -> Association {
    let mut rng = seeded_rng(seed, BASELINE_STREAM);
    Association::new(
        problem
            .scenario
            .candidates
            .iter()
            .map(|ks| ks[rng.random_range(0..ks.len())])
            .collect(),
    )
}

/// Per-device strongest link; lowest UAV id on ties.
pub fn max_snr_association(problem: &Problem) -> Association {
    Association::new(
        problem
            .scenario
            .candidates
            .iter()
            .enumerate()
            .map(|(n, ks)| {
                let mut best = ks[0];
                for &k in &ks[1..] {
                    if problem.rates.get(n, k) > problem.rates.get(n, best) {
                        best = k;
                    }
                }
                best
            })
            .collect(),
    )
}

/// Greedy label balancing: devices in seeded random order each join the
/// candidate UAV whose `Σ_c |Σ_n (p^n − p)|` grows least.
pub fn distribution_association(problem: &Problem, seed: u64) -> Association {
    let s = &problem.scenario;
    let mut order: Vec<usize> = (0..s.n_devices()).collect();
    order.shuffle(&mut seeded_rng(seed, BASELINE_STREAM));
    let mut sums = vec![vec![0.0; s.n_classes()]; s.n_uavs()];
    let mut assignment = vec![0; s.n_devices()];
    for n in order {
        let dev: Vec<f64> = s.deviation(n).collect();
        let mut pick: Option<(usize, f64)> = None;
        for &k in &s.candidates[n] {
            let delta: f64 = sums[k]
                .iter()
                .zip(&dev)
                .map(|(a, d)| (a + d).abs() - a.abs())
                .sum();
            if pick.is_none_or(|(_, b)| delta < b) {
                pick = Some((k, delta));
            }
        }
        let (k, _) = pick.expect("candidate sets are nonempty");
        sums[k].iter_mut().zip(&dev).for_each(|(a, d)| *a += d);
        assignment[n] = k;
    }
    Association::new(assignment)
}

/// Equal split: `l = 1/n_k`, `B_k = B^U/K`, `f = f_k/n_k`.
pub fn equal_allocation(problem: &Problem, assoc: &Association) -> Allocation {
    let n_uavs = problem.scenario.n_uavs();
    let loads = assoc.loads(n_uavs);
    let share = assoc
        .assignment()
        .iter()
        .map(|&k| 1.0 / loads[k] as f64)
        .collect();
    let compute = assoc
        .assignment()
        .iter()
        .map(|&k| problem.scenario.uavs[k].compute / loads[k] as f64)
        .collect();
    Allocation {
        share,
        uav_bandwidth: vec![problem.total_bandwidth / n_uavs as f64; n_uavs],
        compute,
    }
}

fn best_split<F>(layers: impl Iterator<Item = usize>, mut eval: F) -> Result<Solution>
where
    F: FnMut(usize) -> Result<Solution>,
{
    let mut best: Option<Solution> = None;
    let mut history = Vec::new();
    let mut last_err = None;
    for split in layers {
        match eval(split) {
            Ok(sol) => {
                if best.as_ref().is_none_or(|b| sol.better_than(b)) {
                    best = Some(sol);
                }
            }
            Err(e @ Error::Infeasible(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
        history.push(best.as_ref().map_or(f64::INFINITY, |b| b.objective));
    }
    match best {
        Some(mut sol) => {
            sol.objective_history = history;
            Ok(sol)
        }
        None => {
            Err(last_err.unwrap_or_else(|| Error::Infeasible("no split layer is feasible".into())))
        }
    }
}

/// `options` only matters for HFL, which runs the joint solver pinned to
/// the last layer.
pub fn solve_baseline(
    kind: BaselineKind,
    problem: &Problem,
    seed: u64,
    options: &SolveOptions,
) -> Result<Solution> {
    let n_layers = problem.n_layers();
    match kind {
        BaselineKind::Ra => {
            let assoc = random_association(problem, seed);
            best_split(1..=n_layers, |l| evaluate(problem, &assoc, l))
        }
        BaselineKind::Dda => {
            let assoc = distribution_association(problem, seed);
            best_split(1..=n_layers, |l| evaluate(problem, &assoc, l))
        }
        BaselineKind::Era => {
            let assoc = max_snr_association(problem);
            let alloc = equal_allocation(problem, &assoc);
            best_split(1..=n_layers, |l| {
                let cut = problem.profile.cut(l)?;
                let (objective, loss_proxy, breakdown) =
                    objective(problem, &assoc, &alloc, l, &cut)?;
                Ok(Solution {
                    split_layer: l,
                    assoc: assoc.clone(),
                    alloc: alloc.clone(),
                    breakdown,
                    loss_proxy,
                    objective,
                    objective_history: Vec::new(),
                })
            })
        }
        BaselineKind::Hfl => {
            let pinned = SolveOptions {
                fixed_split: Some(n_layers),
                ..options.clone()
            };
            solve_joint(problem, &pinned)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::fixture;
    use crate::scenario::heterogeneity_of;

    #[test]
    fn equal_split_on_one_uav() {
        let p = fixture::problem(
            &[0.0],
            &[(0.0, vec![1.0]), (10.0, vec![1.0])],
            &[vec![2.0], vec![1.0]],
        );
        let a = Association::new(vec![0, 0]);
        let alloc = equal_allocation(&p, &a);
        assert_eq!(alloc.share, vec![0.5, 0.5]);
        assert_eq!(alloc.uav_bandwidth, vec![p.total_bandwidth]);
        assert_eq!(alloc.compute, vec![5e9, 5e9]);
    }

    #[test]
    fn empty_uavs_still_get_their_bandwidth() {
        let p = fixture::problem(&[0.0, 100.0], &[(0.0, vec![1.0])], &[vec![2.0, 0.0]]);
        let alloc = equal_allocation(&p, &Association::new(vec![0]));
        assert_eq!(alloc.uav_bandwidth, vec![0.5e6, 0.5e6]);
    }

    #[test]
    fn strongest_link_wins() {
        let p = fixture::two_cells();
        assert_eq!(max_snr_association(&p).assignment(), &[0, 0, 1, 1]);
    }

    #[test]
    fn greedy_balancing_mixes_labels() {
        let p = fixture::two_cells();
        let total =
            |a: &Association| -> f64 { heterogeneity_of(a, &p.scenario).totals.iter().sum() };
        let snr = total(&max_snr_association(&p));
        for seed in 0..8 {
            assert!(total(&distribution_association(&p, seed)) < snr);
        }
    }

    #[test]
    fn hfl_trains_locally() {
        let p = fixture::two_cells();
        let s = solve_baseline(BaselineKind::Hfl, &p, 0, &SolveOptions::default()).unwrap();
        assert_eq!(s.split_layer, 3);
        assert_eq!(s.breakdown.t_u, 0.0);
    }

    #[test]
    fn baselines_are_seeded() {
        let p = fixture::two_cells();
        for kind in BaselineKind::ALL {
            let a = solve_baseline(kind, &p, 9, &SolveOptions::default()).unwrap();
            let b = solve_baseline(kind, &p, 9, &SolveOptions::default()).unwrap();
            assert_eq!(a, b, "{kind}");
            a.assoc.validate(&p.scenario).unwrap();
        }
    }

    #[test]
    fn names_roundtrip() {
        for kind in BaselineKind::ALL {
            assert_eq!(kind.name().parse::<BaselineKind>().unwrap(), kind);
        }
        assert!(matches!(
            "greedy".parse::<BaselineKind>(),
            Err(Error::Config(_))
        ));
    }
}
