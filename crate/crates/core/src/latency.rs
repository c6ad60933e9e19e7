//! Per-stage latency composition for one training round.

use serde::{Deserialize, Serialize};

use crate::channel::RateTable;
use crate::dnn_profile::CutCosts;
use crate::error::{Error, Result};
use crate::optimizer::{Allocation, Association, SatLink};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    /// Slowest device compute + feature upload (s).
    pub t_d: f64,
    /// Slowest server-side compute on any UAV (s).
    pub t_u: f64,
    /// Bottleneck UAV-to-satellite sub-model upload (s).
    pub t_s: f64,
    /// Satellite handover time `N_sw·τ_s` (s).
    pub handover: f64,
    /// `t_d + t_u + t_s + handover`.
    pub total: f64,
    /// Per-device compute + upload time.
    pub device_times: Vec<f64>,
    /// Per-device server-side compute time on its UAV.
    pub server_times: Vec<f64>,
    /// Per-UAV satellite upload time (zero for idle UAVs).
    pub uplink_times: Vec<f64>,
}

impl LatencyBreakdown {
    pub const CSV_HEADER: &'static str = "t_d,t_u,t_s,handover,total";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.t_d, self.t_u, self.t_s, self.handover, self.total
        )
    }

    /// Replace the handover term and re-total.
    pub fn with_handover(mut self, handover: f64) -> Self {
        self.handover = handover;
        self.total = self.t_d + self.t_u + self.t_s + handover;
        self
    }
}

fn ratio(load: f64, rate: f64) -> Option<f64> {
    if load == 0.0 {
        Some(0.0)
    } else if rate > 0.0 {
        Some(load / rate)
    } else {
        None
    }
}

/// Compose `t_d`, `t_u`, `t_s` and the total for a given association and
/// allocation. Devices on one UAV are served in parallel on their compute
/// shares.
pub fn stage_latencies(
    scenario: &Scenario,
    assoc: &Association,
    alloc: &Allocation,
    cut: &CutCosts,
    rates: &RateTable,
    sat: &SatLink,
) -> Result<LatencyBreakdown> {
    let mut device_times = Vec::with_capacity(scenario.n_devices());
    let mut server_times = Vec::with_capacity(scenario.n_devices());
    for (n, &k) in assoc.assignment().iter().enumerate() {
        let rate = alloc.share[n] * alloc.uav_bandwidth[k] * rates.get(n, k);
        let upload = ratio(cut.feature_bits, rate).ok_or_else(|| {
            Error::Infeasible(format!("device {n} on UAV {k} has zero uplink rate"))
        })?;
        device_times.push(cut.device_flops / scenario.devices[n].compute + upload);
        let server = ratio(cut.server_flops, alloc.compute[n]).ok_or_else(|| {
            Error::Infeasible(format!("device {n} on UAV {k} has no compute share"))
        })?;
        server_times.push(server);
    }
    let loads = assoc.loads(scenario.n_uavs());
    let mut uplink_times = vec![0.0; scenario.n_uavs()];
    for (k, slot) in uplink_times.iter_mut().enumerate() {
        if loads[k] == 0 {
            continue;
        }
        let rate = alloc.uav_bandwidth[k] * sat.spectral_efficiency[k];
        *slot = ratio(cut.model_bits, rate)
            .ok_or_else(|| Error::Infeasible(format!("UAV {k} has zero satellite uplink rate")))?;
    }
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let (t_d, t_u, t_s) = (max(&device_times), max(&server_times), max(&uplink_times));
    Ok(LatencyBreakdown {
        t_d,
        t_u,
        t_s,
        handover: sat.handover_s,
        total: t_d + t_u + t_s + sat.handover_s,
        device_times,
        server_times,
        uplink_times,
    })
}
