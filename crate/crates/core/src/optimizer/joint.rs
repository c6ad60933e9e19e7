use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::association::{dual_ascent, evaluate_cached, CutData, EvalCache};
use super::{Association, DualConfig, Problem, Solution};
use crate::error::{Error, Result};

/// Latency-target grid. Unset fields are derived from the instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Number of steps each auto-derived range is divided into.
    pub steps: usize,
    pub t_d_range: Option<[f64; 2]>,
    pub t_u_range: Option<[f64; 2]>,
    /// Step on `t_d` (s).
    pub delta: Option<f64>,
    /// Step on `t_u` (s).
    pub epsilon: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            t_d_range: None,
            t_u_range: None,
            delta: None,
            epsilon: None,
        }
    }
}

/// Resolved grid for one split layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRanges {
    pub t_d: [f64; 2],
    pub t_u: [f64; 2],
    pub delta: f64,
    pub epsilon: f64,
}

impl SweepRanges {
    /// `max(⌈range_d/δ⌉, ⌈range_u/ε⌉)`.
    pub fn iterations(&self) -> usize {
        let d = ((self.t_d[1] - self.t_d[0]) / self.delta).ceil();
        let u = ((self.t_u[1] - self.t_u[0]) / self.epsilon).ceil();
        d.max(u).max(0.0) as usize
    }

    /// Grid point `i`, both targets walking down from their maxima.
    pub fn point(&self, i: usize) -> (f64, f64) {
        let i = i as f64;
        (
            (self.t_d[1] - i * self.delta).max(self.t_d[0]),
            (self.t_u[1] - i * self.epsilon).max(self.t_u[0]),
        )
    }

    pub(crate) fn resolve(problem: &Problem, data: &CutData, sweep: &SweepConfig) -> Result<Self> {
        let s = &problem.scenario;
        let steps = sweep.steps.max(1) as f64;
        let t_d = match sweep.t_d_range {
            Some(r) => r,
            None => {
                let floor = data.local.iter().copied().fold(0.0, f64::max);
                let fastest = data.local.iter().copied().fold(f64::INFINITY, f64::min);
                let (mut best, mut worst) = (0.0, 0.0);
                for (n, ks) in s.candidates.iter().enumerate() {
                    let ws = ks.iter().map(|&k| data.weight[n][k]);
                    best += ws.clone().fold(f64::INFINITY, f64::min);
                    worst += ws.fold(0.0, f64::max);
                }
                let b = problem.total_bandwidth;
                let above = floor * (1.0 + 1e-9) + 1e-12;
                let lo = (fastest + best / b).max(above);
                [lo, (floor + worst / b).max(lo)]
            }
        };
        let server = data.cut.server_flops;
        let t_u = match sweep.t_u_range {
            Some(r) => r,
            None if server == 0.0 => [1.0, 1.0],
            None => {
                let caps: Vec<f64> = s.uavs.iter().map(|u| u.compute).collect();
                let max_cap = caps.iter().copied().fold(0.0, f64::max);
                let lo = (server / max_cap)
                    .max(s.n_devices() as f64 * server / caps.iter().sum::<f64>());
                let mut reach = vec![0usize; s.n_uavs()];
                s.candidates.iter().flatten().for_each(|&k| reach[k] += 1);
                let hi = reach
                    .iter()
                    .zip(&caps)
                    .map(|(&r, &f)| r as f64 * server / f)
                    .fold(0.0, f64::max);
                [lo, hi.max(lo)]
            }
        };
        let step = |range: [f64; 2]| {
            let width = range[1] - range[0];
            if width > 0.0 {
                width / steps
            } else {
                1.0
            }
        };
        let ranges = Self {
            t_d,
            t_u,
            delta: sweep.delta.unwrap_or_else(|| step(t_d)),
            epsilon: sweep.epsilon.unwrap_or_else(|| step(t_u)),
        };
        ranges.validate()?;
        Ok(ranges)
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.epsilon > 0.0) {
            return Err(Error::Parameter(format!(
                "sweep steps must be positive, got delta={} epsilon={}",
                self.delta, self.epsilon
            )));
        }
        for (name, r) in [("t_d", self.t_d), ("t_u", self.t_u)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] && r[1] > 0.0) {
                return Err(Error::Parameter(format!(
                    "{name} range [{}, {}] is empty",
                    r[0], r[1]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub sweep: SweepConfig,
    pub dual: DualConfig,
    /// Search only this split layer.
    pub fixed_split: Option<usize>,
    /// Polish the best sweep associations with single-device moves.
    pub refine: bool,
    pub parallel: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            sweep: SweepConfig::default(),
            dual: DualConfig::default(),
            fixed_split: None,
            refine: true,
            parallel: true,
        }
    }
}

struct LayerOutcome {
    best: Option<Solution>,
    points: usize,
    feasible_points: usize,
}

/// Distinct sweep associations used as local-search starting points.
const REFINE_STARTS: usize = 4;

/// First-improvement descent over single-device reassignments.
fn refine(problem: &Problem, data: &CutData, start: Solution, cache: &mut EvalCache) -> Solution {
    let mut best = start;
    loop {
        let mut improved = false;
        for (n, ks) in problem.scenario.candidates.iter().enumerate() {
            for &k in ks {
                if best.assoc.uav_of(n) == k {
                    continue;
                }
                let mut a = best.assoc.assignment().to_vec();
                a[n] = k;
                if let Some(sol) = evaluate_cached(problem, data, &Association::new(a), cache) {
                    if sol.better_than(&best) {
                        best = sol;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            return best;
        }
    }
}

fn search_layer(problem: &Problem, split: usize, options: &SolveOptions) -> Result<LayerOutcome> {
    let data = CutData::new(problem, split)?;
    let ranges = SweepRanges::resolve(problem, &data, &options.sweep)?;
    let mut cache = EvalCache::new();
    let mut best: Option<Solution> = None;
    let points = ranges.iterations() + 1;
    let mut feasible_points = 0;
    for i in 0..points {
        let (t_d, t_u) = ranges.point(i);
        if let Some(out) = dual_ascent(problem, &data, t_d, t_u, &options.dual, &mut cache) {
            feasible_points += 1;
            if best.as_ref().is_none_or(|b| out.solution.better_than(b)) {
                best = Some(out.solution);
            }
        }
    }
    if options.refine {
        let mut starts: Vec<Solution> = cache.values().flatten().cloned().collect();
        starts.sort_by(|a, b| {
            a.objective
                .total_cmp(&b.objective)
                .then_with(|| a.assoc.assignment().cmp(b.assoc.assignment()))
        });
        for start in starts.into_iter().take(REFINE_STARTS) {
            let sol = refine(problem, &data, start, &mut cache);
            if best.as_ref().is_none_or(|b| sol.better_than(b)) {
                best = Some(sol);
            }
        }
    }
    Ok(LayerOutcome {
        best,
        points,
        feasible_points,
    })
}

/// Search every split layer (or the fixed one) and return the best
/// solution. Serial and parallel runs return identical results.
pub fn solve_joint(problem: &Problem, options: &SolveOptions) -> Result<Solution> {
    let n_layers = problem.n_layers();
    let layers: Vec<usize> = match options.fixed_split {
        Some(l) if l == 0 || l > n_layers => {
            return Err(Error::Parameter(format!(
                "split layer {l} outside 1..={n_layers}"
            )))
        }
        Some(l) => vec![l],
        None => (1..=n_layers).collect(),
    };
    let outcomes: Vec<LayerOutcome> = if options.parallel {
        layers
            .par_iter()
            .map(|&l| search_layer(problem, l, options))
            .collect::<Result<_>>()?
    } else {
        layers
            .iter()
            .map(|&l| search_layer(problem, l, options))
            .collect::<Result<_>>()?
    };

    let mut best: Option<Solution> = None;
    let mut history = Vec::with_capacity(outcomes.len());
    for o in &outcomes {
        if let Some(sol) = &o.best {
            if best.as_ref().is_none_or(|b| sol.better_than(b)) {
                best = Some(sol.clone());
            }
        }
        history.push(best.as_ref().map_or(f64::INFINITY, |b| b.objective));
    }
    match best {
        Some(mut sol) => {
            sol.objective_history = history;
            Ok(sol)
        }
        None => {
            let diag: Vec<String> = layers
                .iter()
                .zip(&outcomes)
                .map(|(l, o)| {
                    format!(
                        "split {l}: {}/{} grid points feasible",
                        o.feasible_points, o.points
                    )
                })
                .collect();
            Err(Error::Infeasible(format!(
                "no feasible association at any split layer ({})",
                diag.join("; ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{brute_force_oracle, fixture};

    #[test]
    fn diagonal_walk() {
        let r = SweepRanges {
            t_d: [1.0, 3.0],
            t_u: [0.5, 1.0],
            delta: 0.5,
            epsilon: 0.25,
        };
        assert_eq!(r.iterations(), 4);
        assert_eq!(r.point(0), (3.0, 1.0));
        assert_eq!(r.point(1), (2.5, 0.75));
        assert_eq!(r.point(3), (1.5, 0.5));
        assert_eq!(r.point(4), (1.0, 0.5));
    }

    #[test]
    fn explicit_ranges_are_validated() {
        let p = fixture::two_cells();
        let mut options = SolveOptions::default();
        options.sweep.t_d_range = Some([2.0, 1.0]);
        assert!(matches!(
            solve_joint(&p, &options),
            Err(Error::Parameter(_))
        ));
        options.sweep.t_d_range = None;
        options.sweep.delta = Some(0.0);
        assert!(matches!(
            solve_joint(&p, &options),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn fixed_split_out_of_range() {
        let p = fixture::two_cells();
        let options = SolveOptions {
            fixed_split: Some(4),
            ..SolveOptions::default()
        };
        assert!(matches!(
            solve_joint(&p, &options),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn matches_oracle_on_a_small_instance() {
        let p = fixture::two_cells();
        let joint = solve_joint(&p, &SolveOptions::default()).unwrap();
        let oracle = brute_force_oracle(&p).unwrap();
        assert!(joint.objective <= oracle.objective * (1.0 + 1e-12));
        assert_eq!(joint.objective_history.len(), 3);
        assert!(joint.objective_history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*joint.objective_history.last().unwrap(), joint.objective);
    }

    #[test]
    fn fixed_split_is_respected() {
        let p = fixture::two_cells();
        let options = SolveOptions {
            fixed_split: Some(2),
            ..SolveOptions::default()
        };
        let sol = solve_joint(&p, &options).unwrap();
        assert_eq!(sol.split_layer, 2);
        assert_eq!(sol.objective_history.len(), 1);
    }

    #[test]
    fn unreachable_targets_report_per_split() {
        let p = fixture::two_cells();
        let mut options = SolveOptions::default();
        options.sweep.t_d_range = Some([1e-9, 2e-9]);
        options.refine = false;
        match solve_joint(&p, &options).unwrap_err() {
            Error::Infeasible(msg) => assert!(msg.contains("split 3: 0/")),
            e => panic!("unexpected {e}"),
        }
    }
}
