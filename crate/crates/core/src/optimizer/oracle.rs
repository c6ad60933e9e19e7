use super::objective::evaluate_cut;
use super::{Association, Problem, Solution};
use crate::error::{Error, Result};

/// Largest `Π_n |K_n| · L` the oracle will enumerate.
pub const ORACLE_LIMIT: f64 = 1e6;

/// Exhaustive search over every association and split layer, each evaluated
/// under the optimal bandwidth and compute splits.
pub fn brute_force_oracle(problem: &Problem) -> Result<Solution> {
    let s = &problem.scenario;
    let n_layers = problem.n_layers();
    let combinations = s
        .candidates
        .iter()
        .map(|ks| ks.len() as f64)
        .product::<f64>()
        * n_layers as f64;
    if combinations > ORACLE_LIMIT {
        return Err(Error::InstanceTooLarge {
            combinations,
            limit: ORACLE_LIMIT,
        });
    }
    let mut best: Option<Solution> = None;
    let mut history = Vec::with_capacity(n_layers);
    for split in 1..=n_layers {
        let cut = problem.profile.cut(split)?;
        // mixed-radix counter over candidate indices, first device fastest
        let mut digits = vec![0usize; s.n_devices()];
        loop {
            let assoc = Association::new(
                digits
                    .iter()
                    .zip(&s.candidates)
                    .map(|(&d, ks)| ks[d])
                    .collect(),
            );
            if let Ok(sol) = evaluate_cut(problem, &assoc, split, &cut) {
                if best.as_ref().is_none_or(|b| sol.better_than(b)) {
                    best = Some(sol);
                }
            }
            let mut i = 0;
            while i < digits.len() {
                digits[i] += 1;
                if digits[i] < s.candidates[i].len() {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
            if i == digits.len() {
                break;
            }
        }
        history.push(best.as_ref().map_or(f64::INFINITY, |b| b.objective));
    }
    let mut sol = best.ok_or_else(|| Error::Infeasible("no association is feasible".into()))?;
    sol.objective_history = history;
    Ok(sol)
}
