//! Upper bound on the expected training-loss gap after `t` local
//! iterations, and the per-device constant `P_n` that drives it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::Association;
use crate::scenario::LabelDistributions;

/// Which distribution weights the per-class Lipschitz constants inside the
/// geometric series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzWeighting {
    /// `Σ_c p^n(c)·φ_c`, the device's own distribution.
    #[default]
    Device,
    /// `Σ_c p(c)·φ_c`, the global distribution.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundParams {
    /// Strong-convexity constant μ.
    pub mu: f64,
    /// Smoothness constant β.
    pub beta: f64,
    /// Gradient-norm bound Z.
    pub z: f64,
    /// Gradient-variance bound σ.
    pub sigma: f64,
    pub n_layers: usize,
    pub split_layer: usize,
    /// Local iterations per round, E.
    pub local_iterations: usize,
    /// Aggregation rounds, m.
    pub rounds: usize,
    /// `A_{mE−i−1}` for `i = 0, 1, …`. Empty means `[1; E]`.
    pub a_series: Vec<f64>,
    /// Per-class Lipschitz constants φ_c. Empty means all ones.
    pub phi: Vec<f64>,
    /// Heterogeneity constant Γ.
    pub gamma_het: f64,
    /// Initial squared distance to the optimum, Δ1.
    pub delta1: f64,
    pub weighting: LipschitzWeighting,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            beta: 4.0,
            z: 1.0,
            sigma: 1.0,
            n_layers: 8,
            split_layer: 1,
            local_iterations: 5,
            rounds: 1,
            a_series: Vec::new(),
            phi: Vec::new(),
            gamma_het: 0.1,
            delta1: 1.0,
            weighting: LipschitzWeighting::Device,
        }
    }
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if !(self.mu > 0.0) {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.beta >= self.mu) {
            return bad(format!(
                "beta ({}) must be at least mu ({})",
                self.beta, self.mu
            ));
        }
        for (name, v) in [
            ("z", self.z),
            ("sigma", self.sigma),
            ("gamma_het", self.gamma_het),
            ("delta1", self.delta1),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.split_layer == 0 || self.split_layer > self.n_layers {
            return bad(format!(
                "split layer {} outside 1..={}",
                self.split_layer, self.n_layers
            ));
        }
        if self.local_iterations == 0 || self.rounds == 0 {
            return bad("local_iterations and rounds must be at least 1".into());
        }
        Ok(())
    }

    /// `mE`.
    pub fn horizon(&self) -> usize {
        self.rounds * self.local_iterations
    }

    /// ρ = β/μ.
    pub fn rho(&self) -> f64 {
        self.beta / self.mu
    }

    /// γ = max(8ρ, mE) − 1.
    pub fn gamma(&self) -> f64 {
        (8.0 * self.rho()).max(self.horizon() as f64) - 1.0
    }

    /// Step size `4/(μ(γ+t))` the bound assumes at iteration `t`.
    pub fn step_size(&self, t: f64) -> f64 {
        4.0 / (self.mu * (self.gamma() + t))
    }

    fn a_series(&self) -> Vec<f64> {
        if self.a_series.is_empty() {
            vec![1.0; self.local_iterations]
        } else {
            self.a_series.clone()
        }
    }

    fn phi(&self, class: usize) -> f64 {
        self.phi.get(class).copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnReport {
    /// `(device, P_n)` for each device on the UAV, in device order.
    pub per_device: Vec<(usize, f64)>,
    /// Mean of the per-device values; the constant for the whole UAV.
    pub uav_value: f64,
    /// Set when `α·Σ_c p(c)φ_c ≥ 1` for some device, so the series ratio
    /// is nonpositive.
    pub series_warning: bool,
}

/// `P_n` for every device served by `uav`.
pub fn compute_pn(
    params: &BoundParams,
    uav: usize,
    assoc: &Association,
    distributions: &LabelDistributions,
    alpha: f64,
) -> Result<PnReport> {
    params.validate()?;
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!(
            "learning rate must be positive, got {alpha}"
        )));
    }
    let members: Vec<usize> = (0..assoc.assignment().len())
        .filter(|&n| assoc.is_associated(n, uav))
        .collect();
    if members.is_empty() {
        return Err(Error::Parameter(format!("UAV {uav} serves no device")));
    }
    let n_k = members.len() as f64;
    let l = params.n_layers as f64;
    let split = params.split_layer as f64;
    let (z2, s2) = (params.z * params.z, params.sigma * params.sigma);
    let drift = (params.horizon() as f64 - 1.0).powi(2);
    let base = 2.0 * drift * l * z2
        + 4.0 * params.beta * params.gamma_het
        + split * z2
        + (l - split) * z2 / n_k
        + split * s2
        + (l - split) * s2 / n_k;
    let a = params.a_series();
    let mut warning = false;
    let per_device = members
        .iter()
        .map(|&n| {
            let pn = &distributions.per_device[n];
            let weights = match params.weighting {
                LipschitzWeighting::Device => pn,
                LipschitzWeighting::Global => &distributions.global,
            };
            let lip: f64 = weights
                .iter()
                .enumerate()
                .map(|(c, w)| w * params.phi(c))
                .sum();
            if alpha * lip >= 1.0 {
                warning = true;
            }
            let ratio = 1.0 - alpha * lip;
            let series: f64 = a
                .iter()
                .enumerate()
                .map(|(i, ai)| ai * ratio.powi(i as i32))
                .sum();
            let spread: f64 = pn
                .iter()
                .zip(&distributions.global)
                .map(|(x, g)| (x - g).powi(2))
                .sum();
            (n, base + 0.5 * params.mu * series * series * spread)
        })
        .collect::<Vec<_>>();
    let uav_value = per_device.iter().map(|(_, v)| v).sum::<f64>() / n_k;
    Ok(PnReport {
        per_device,
        uav_value,
        series_warning: warning,
    })
}

/// `ρ/(γ+t)·[8·P_n/μ + (μ/2)(γ+1)·Δ1]`.
pub fn loss_bound(params: &BoundParams, pn: f64, t: f64) -> Result<f64> {
    params.validate()?;
    if !(t >= 1.0) {
        return Err(Error::Parameter(format!(
            "iteration must be at least 1, got {t}"
        )));
    }
    let gamma = params.gamma();
    let mu = params.mu;
    Ok(params.rho() / (gamma + t) * (8.0 * pn / mu + 0.5 * mu * (gamma + 1.0) * params.delta1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dists(rows: Vec<Vec<f64>>) -> LabelDistributions {
        let c = rows[0].len();
        let global = (0..c)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
            .collect();
        LabelDistributions {
            per_device: rows,
            global,
        }
    }

    #[test]
    fn all_terms_vanish() {
        let p = BoundParams {
            z: 0.0,
            sigma: 0.0,
            gamma_het: 0.0,
            a_series: vec![0.0; 5],
            ..Default::default()
        };
        let d = dists(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let r = compute_pn(&p, 0, &Association::new(vec![0, 0]), &d, 0.1).unwrap();
        assert_eq!(r.uav_value, 0.0);
    }

    #[test]
    fn iid_drops_heterogeneity() {
        let p = BoundParams::default();
        let d = dists(vec![vec![0.5, 0.5]; 2]);
        let r = compute_pn(&p, 0, &Association::new(vec![0, 0]), &d, 0.1).unwrap();
        // 2·16·8 + 4·4·0.1 + 1 + 7/2 + 1 + 7/2
        assert!((r.uav_value - (256.0 + 1.6 + 9.0)).abs() < 1e-12);
    }

    #[test]
    fn split_difference() {
        let d = dists(vec![vec![0.5, 0.5]; 4]);
        let a = Association::new(vec![0; 4]);
        let at = |split| {
            let p = BoundParams {
                split_layer: split,
                z: 1.5,
                sigma: 0.5,
                ..Default::default()
            };
            compute_pn(&p, 0, &a, &d, 0.1).unwrap().uav_value
        };
        let expected = 6.0 * 0.75 * (2.25 + 0.25);
        assert!((at(7) - at(1) - expected).abs() < 1e-12);
    }

    #[test]
    fn worked_bound() {
        // ρ = 2, γ = 15; bracket = 8·P/μ + (μ/2)·16·Δ1 = 10
        let p = BoundParams {
            mu: 1.0,
            beta: 2.0,
            local_iterations: 8,
            rounds: 1,
            delta1: 0.25,
            ..Default::default()
        };
        assert_eq!(p.gamma(), 15.0);
        let b = loss_bound(&p, 1.0, 8.0).unwrap();
        assert!((b - 20.0 / 23.0).abs() < 1e-15);
        assert!((b - 0.8696).abs() < 1e-4);
    }

    #[test]
    fn zero_constants_give_zero_bound() {
        let p = BoundParams {
            delta1: 0.0,
            ..Default::default()
        };
        assert_eq!(loss_bound(&p, 0.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn large_step_raises_warning() {
        let p = BoundParams::default();
        let d = dists(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let r = compute_pn(&p, 0, &Association::new(vec![0, 0]), &d, 1.5).unwrap();
        assert!(r.series_warning);
        assert!(r.uav_value.is_finite());
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = dists(vec![vec![1.0]]);
        let a = Association::new(vec![0]);
        assert!(compute_pn(&BoundParams::default(), 1, &a, &d, 0.1).is_err());
        let bad = BoundParams {
            beta: 0.5,
            ..Default::default()
        };
        assert!(loss_bound(&bad, 1.0, 1.0).is_err());
        assert!(loss_bound(&BoundParams::default(), 1.0, 0.5).is_err());
    }
}
