use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::LatencyBreakdown;
use crate::scenario::Scenario;

/// Device-to-UAV association: `assignment()[n]` is the UAV serving device `n`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Association(Vec<usize>);

impl Association {
    pub fn new(assignment: Vec<usize>) -> Self {
        Self(assignment)
    }

    pub fn assignment(&self) -> &[usize] {
        &self.0
    }

    pub fn uav_of(&self, device: usize) -> usize {
        self.0[device]
    }

    pub fn is_associated(&self, device: usize, uav: usize) -> bool {
        self.0[device] == uav
    }

    /// `n_k`, the number of devices on each UAV.
    pub fn loads(&self, n_uavs: usize) -> Vec<usize> {
        let mut loads = vec![0; n_uavs];
        for &k in &self.0 {
            loads[k] += 1;
        }
        loads
    }

    /// Binary `a_{n,k}` matrix.
    pub fn matrix(&self, n_uavs: usize) -> Vec<Vec<u8>> {
        self.0
            .iter()
            .map(|&k| (0..n_uavs).map(|j| u8::from(j == k)).collect())
            .collect()
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        if self.0.len() != scenario.n_devices() {
            return Err(Error::Parameter(format!(
                "association covers {} devices, scenario has {}",
                self.0.len(),
                scenario.n_devices()
            )));
        }
        for (n, &k) in self.0.iter().enumerate() {
            if !scenario.candidates[n].contains(&k) {
                return Err(Error::Parameter(format!(
                    "device {n} associated with UAV {k} outside its candidate set"
                )));
            }
        }
        Ok(())
    }
}

/// Resource allocation. Shares are stored per device and apply to the UAV
/// the device is associated with; every other `(n, k)` entry is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Bandwidth fraction `l_{n,k}` of the device's UAV.
    pub share: Vec<f64>,
    /// Uplink bandwidth `B_k` per UAV (Hz).
    pub uav_bandwidth: Vec<f64>,
    /// Compute `f_{n,k}` granted to the device by its UAV (FLOP/s).
    pub compute: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    /// Bandwidth budget price.
    pub psi: f64,
    /// Per-UAV compute budget price.
    pub nu: Vec<f64>,
    /// `[k][c]` prices of the upper and lower deviation bounds.
    pub lambda: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
}

impl Multipliers {
    pub fn zeros(n_uavs: usize, n_classes: usize) -> Self {
        Self {
            psi: 0.0,
            nu: vec![0.0; n_uavs],
            lambda: vec![vec![0.0; n_classes]; n_uavs],
            mu: vec![vec![0.0; n_classes]; n_uavs],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub split_layer: usize,
    pub assoc: Association,
    pub alloc: Allocation,
    pub breakdown: LatencyBreakdown,
    /// Loss proxy `P`.
    pub loss_proxy: f64,
    /// `(1−θ)·T + θ·P`.
    pub objective: f64,
    /// Best objective found so far after each split layer was searched.
    pub objective_history: Vec<f64>,
}

impl Solution {
    /// Strict improvement order: lower objective, then lower split layer,
    /// then lexicographically smaller association.
    pub fn better_than(&self, other: &Solution) -> bool {
        self.objective
            .total_cmp(&other.objective)
            .then(self.split_layer.cmp(&other.split_layer))
            .then_with(|| self.assoc.cmp(&other.assoc))
            .is_lt()
    }

    pub fn to_report(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }
}
