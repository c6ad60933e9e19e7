//! Joint split-layer, device-association and resource-allocation solver.
//!
//! Given an association, bandwidth is split so that every device finishes
//! its compute + upload at the same instant (bisection on the common finish
//! time), and each UAV's compute is split in proportion to server-side load.
//! Associations come from a projected-subgradient dual ascent on a
//! Lagrangian relaxation of the bandwidth, compute and label-deviation
//! constraints, run over a descending grid of target latencies for each
//! candidate split layer.

mod association;
mod bandwidth;
mod compute;
mod joint;
mod objective;
mod oracle;
mod types;

pub use association::{association_cost, solve_association, AssociationOutcome, DualConfig};
pub use bandwidth::{solve_bandwidth, BandwidthAllocation};
pub use compute::{kkt_shares, solve_compute};
pub use joint::{solve_joint, SolveOptions, SweepConfig, SweepRanges};
pub use objective::{evaluate, loss_proxy, objective};
pub use oracle::{brute_force_oracle, ORACLE_LIMIT};
pub use types::{Allocation, Association, Multipliers, Solution};

use serde::{Deserialize, Serialize};

use crate::channel::{self, A2GChannelParams, RateTable, SatLinkParams};
use crate::dnn_profile::{CutCosts, DnnProfile};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Gradient-norm and gradient-variance bounds entering the loss proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyConstants {
    pub z: f64,
    pub sigma: f64,
}

impl Default for ProxyConstants {
    fn default() -> Self {
        Self { z: 1.0, sigma: 1.0 }
    }
}

/// Satellite-side terms that do not depend on the decision variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatLink {
    /// `log2(1 + p_k·H_{k,s}/N_0)` per UAV.
    pub spectral_efficiency: Vec<f64>,
    /// Handover time charged to the round (s).
    pub handover_s: f64,
}

impl SatLink {
    /// Link from per-UAV slant ranges and rain attenuation draws.
    pub fn from_geometry(
        scenario: &Scenario,
        distances: &[f64],
        rain_db: &[f64],
        params: &SatLinkParams,
        noise_w: f64,
    ) -> Self {
        let spectral_efficiency = scenario
            .uavs
            .iter()
            .zip(distances.iter().zip(rain_db))
            .map(|(uav, (&d, &rain))| {
                let gain = channel::sat_channel_gain_with_rain(d, params, rain);
                channel::sat_spectral_efficiency(uav.tx_power_dbm, gain, noise_w)
            })
            .collect();
        Self {
            spectral_efficiency,
            handover_s: 0.0,
        }
    }
}

/// Everything the solvers need about one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub scenario: Scenario,
    pub profile: DnnProfile,
    pub rates: RateTable,
    pub sat: SatLink,
    /// Total uplink bandwidth `B^U` (Hz).
    pub total_bandwidth: f64,
    /// Weight of the loss proxy against latency.
    pub theta: f64,
    pub proxy: ProxyConstants,
}

impl Problem {
    pub fn new(
        scenario: Scenario,
        profile: DnnProfile,
        channel: &A2GChannelParams,
        sat: SatLink,
        total_bandwidth: f64,
        theta: f64,
        proxy: ProxyConstants,
    ) -> Result<Self> {
        let rates = RateTable::build(&scenario, channel);
        Self::with_rates(scenario, profile, rates, sat, total_bandwidth, theta, proxy)
    }

    pub fn with_rates(
        scenario: Scenario,
        profile: DnnProfile,
        rates: RateTable,
        sat: SatLink,
        total_bandwidth: f64,
        theta: f64,
        proxy: ProxyConstants,
    ) -> Result<Self> {
        if !(total_bandwidth.is_finite() && total_bandwidth > 0.0) {
            return Err(Error::Parameter(format!(
                "total bandwidth must be positive, got {total_bandwidth}"
            )));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Parameter(format!(
                "theta must lie in [0, 1], got {theta}"
            )));
        }
        if sat.spectral_efficiency.len() != scenario.n_uavs() {
            return Err(Error::Parameter(format!(
                "satellite link has {} UAV entries, scenario has {}",
                sat.spectral_efficiency.len(),
                scenario.n_uavs()
            )));
        }
        Ok(Self {
            scenario,
            profile,
            rates,
            sat,
            total_bandwidth,
            theta,
            proxy,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.profile.n_layers()
    }

    /// Local compute time `C_n^ℓ / f_n`.
    pub(crate) fn local_time(&self, device: usize, cut: &CutCosts) -> f64 {
        cut.device_flops / self.scenario.devices[device].compute
    }

    /// `M^ℓ / R_{n,k}`: bandwidth·seconds the device needs on UAV `k`.
    pub(crate) fn upload_weight(&self, device: usize, uav: usize, cut: &CutCosts) -> f64 {
        if cut.feature_bits == 0.0 {
            0.0
        } else {
            cut.feature_bits / self.rates.get(device, uav)
        }
    }
}
