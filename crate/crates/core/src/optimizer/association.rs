use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::objective::evaluate_cut;
use super::{Association, Multipliers, Problem, Solution};
use crate::dnn_profile::CutCosts;
use crate::error::Result;

/// Projected-subgradient schedule for the association dual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualConfig {
    pub max_iters: usize,
    /// Stop once the assignment has not changed for this many iterations.
    pub stall_iters: usize,
    /// Step size at iteration t is `step0 / sqrt(t)`.
    pub step0: f64,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            max_iters: 60,
            stall_iters: 8,
            step0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationOutcome {
    /// Best assignment that met both latency targets, evaluated under the
    /// optimal allocation.
    pub solution: Solution,
    pub multipliers: Multipliers,
    pub iterations: usize,
}

/// Quantities of one split layer shared by every dual iteration.
pub(crate) struct CutData {
    pub split: usize,
    pub cut: CutCosts,
    /// `C_n^ℓ / f_n`.
    pub local: Vec<f64>,
    /// `M^ℓ / R_{n,k}`, row-major over all UAVs.
    pub weight: Vec<Vec<f64>>,
    /// `p^n(c) − p(c)`.
    pub deviation: Vec<Vec<f64>>,
}

impl CutData {
    pub fn new(problem: &Problem, split: usize) -> Result<Self> {
        let cut = problem.profile.cut(split)?;
        let s = &problem.scenario;
        let local = (0..s.n_devices())
            .map(|n| problem.local_time(n, &cut))
            .collect();
        let weight = (0..s.n_devices())
            .map(|n| {
                (0..s.n_uavs())
                    .map(|k| {
                        if s.candidates[n].contains(&k) {
                            problem.upload_weight(n, k, &cut)
                        } else {
                            f64::INFINITY
                        }
                    })
                    .collect()
            })
            .collect();
        let deviation = (0..s.n_devices())
            .map(|n| s.deviation(n).collect())
            .collect();
        Ok(Self {
            split,
            cut,
            local,
            weight,
            deviation,
        })
    }
}

pub(crate) type EvalCache = HashMap<Association, Option<Solution>>;

pub(crate) fn evaluate_cached(
    problem: &Problem,
    data: &CutData,
    assoc: &Association,
    cache: &mut EvalCache,
) -> Option<Solution> {
    if let Some(hit) = cache.get(assoc) {
        return hit.clone();
    }
    let sol = evaluate_cut(problem, assoc, data.split, &data.cut).ok();
    cache.insert(assoc.clone(), sol.clone());
    sol
}

fn cost(
    problem: &Problem,
    data: &CutData,
    n: usize,
    k: usize,
    m: &Multipliers,
    t_d: f64,
    t_u: f64,
) -> f64 {
    let slack = t_d - data.local[n];
    if !(slack > 0.0) {
        return f64::INFINITY;
    }
    let mut c = m.psi * data.weight[n][k] / slack / problem.total_bandwidth;
    if data.cut.server_flops > 0.0 {
        c += m.nu[k] * data.cut.server_flops / t_u / problem.scenario.uavs[k].compute;
    }
    c + m.lambda[k]
        .iter()
        .zip(&m.mu[k])
        .zip(&data.deviation[n])
        .map(|((l, u), d)| (l - u) * d)
        .sum::<f64>()
}

/// Lagrangian price of putting device `n` on UAV `k` at latency targets
/// `(t_d, t_u)`: normalised bandwidth demand priced by ψ, normalised compute
/// demand priced by ν_k, and the label deviation priced by λ_k − μ_k.
/// Infinite when the device cannot finish its local compute by `t_d`.
pub fn association_cost(
    problem: &Problem,
    device: usize,
    uav: usize,
    multipliers: &Multipliers,
    t_d: f64,
    t_u: f64,
    split: usize,
) -> Result<f64> {
    let data = CutData::new(problem, split)?;
    Ok(cost(problem, &data, device, uav, multipliers, t_d, t_u))
}

/// Dual ascent on the relaxed association problem at fixed latency targets.
/// Returns `None` when no assignment meeting both targets was found.
pub fn solve_association(
    problem: &Problem,
    split: usize,
    t_d: f64,
    t_u: f64,
    dual: &DualConfig,
) -> Result<Option<AssociationOutcome>> {
    let data = CutData::new(problem, split)?;
    Ok(dual_ascent(
        problem,
        &data,
        t_d,
        t_u,
        dual,
        &mut EvalCache::new(),
    ))
}

pub(crate) fn dual_ascent(
    problem: &Problem,
    data: &CutData,
    t_d: f64,
    t_u: f64,
    dual: &DualConfig,
    cache: &mut EvalCache,
) -> Option<AssociationOutcome> {
    let s = &problem.scenario;
    let (n_uavs, n_classes) = (s.n_uavs(), s.n_classes());
    let budget = problem.total_bandwidth;
    let server = data.cut.server_flops;
    let mut m = Multipliers::zeros(n_uavs, n_classes);
    let mut best: Option<Solution> = None;
    let mut previous: Option<Vec<usize>> = None;
    let mut stalled = 0;
    let mut iterations = 0;

    for t in 1..=dual.max_iters.max(1) {
        iterations = t;
        let mut assignment = Vec::with_capacity(s.n_devices());
        for (n, ks) in s.candidates.iter().enumerate() {
            let mut pick: Option<(usize, f64)> = None;
            for &k in ks {
                let c = cost(problem, data, n, k, &m, t_d, t_u);
                if c.is_finite() && pick.is_none_or(|(_, b)| c < b) {
                    pick = Some((k, c));
                }
            }
            // the device cannot meet t_d anywhere
            let (k, _) = pick?;
            assignment.push(k);
        }

        let loads = {
            let mut l = vec![0usize; n_uavs];
            assignment.iter().for_each(|&k| l[k] += 1);
            l
        };
        let demand: f64 = assignment
            .iter()
            .enumerate()
            .map(|(n, &k)| {
                let w = data.weight[n][k];
                if w == 0.0 {
                    0.0
                } else {
                    w / (t_d - data.local[n])
                }
            })
            .sum();
        let compute_ok = server == 0.0
            || loads
                .iter()
                .zip(&s.uavs)
                .all(|(&n_k, u)| n_k as f64 * server / t_u <= u.compute * (1.0 + 1e-12));
        if demand <= budget * (1.0 + 1e-12) && compute_ok {
            let assoc = Association::new(assignment.clone());
            if let Some(sol) = evaluate_cached(problem, data, &assoc, cache) {
                if best.as_ref().is_none_or(|b| sol.better_than(b)) {
                    best = Some(sol);
                }
            }
        }

        if previous.as_ref() == Some(&assignment) {
            stalled += 1;
            if stalled >= dual.stall_iters {
                break;
            }
        } else {
            stalled = 0;
        }

        let step = dual.step0 / (t as f64).sqrt();
        m.psi = (m.psi + step * (demand / budget - 1.0)).max(0.0);
        if server > 0.0 {
            for (k, nu) in m.nu.iter_mut().enumerate() {
                let usage = loads[k] as f64 * server / t_u / s.uavs[k].compute;
                *nu = (*nu + step * (usage - 1.0)).max(0.0);
            }
        }
        let mut aggregate = vec![vec![0.0; n_classes]; n_uavs];
        for (n, &k) in assignment.iter().enumerate() {
            for (a, d) in aggregate[k].iter_mut().zip(&data.deviation[n]) {
                *a += d;
            }
        }
        for k in 0..n_uavs {
            let n_k = loads[k].max(1) as f64;
            let weight = problem.theta / n_k;
            for (c, &d) in aggregate[k].iter().enumerate() {
                // q minimises the relaxed objective over [0, n_k]
                let q = if m.lambda[k][c] + m.mu[k][c] < weight {
                    0.0
                } else {
                    n_k
                };
                m.lambda[k][c] = (m.lambda[k][c] + step * weight * (d - q)).max(0.0);
                m.mu[k][c] = (m.mu[k][c] + step * weight * (-d - q)).max(0.0);
            }
        }
        previous = Some(assignment);
    }

    best.map(|solution| AssociationOutcome {
        solution,
        multipliers: m,
        iterations,
    })
}
