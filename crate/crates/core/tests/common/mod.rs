//! Shared helpers for the integration tests: random small instances and a
//! constraint checker that recomputes every latency term from the raw
//! inputs instead of calling the library.

#![allow(dead_code, clippy::needless_range_loop)]

use hsfl_core::channel::RateTable;
use hsfl_core::dnn_profile::{DnnProfile, LayerEntry};
use hsfl_core::optimizer::{Problem, ProxyConstants, SatLink, Solution};
use hsfl_core::scenario::{Area, DeviceSpec, Scenario, UavSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random label distribution over `c` classes with a few empty classes.
fn distribution(rng: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..c)
        .map(|_| {
            if rng.random_bool(0.4) {
                0.0
            } else {
                rng.random_range(0.1..1.0)
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        let mut one = vec![0.0; c];
        one[rng.random_range(0..c)] = 1.0;
        return one;
    }
    raw.iter().map(|v| v / total).collect()
}

pub fn random_profile(rng: &mut ChaCha8Rng, n_layers: usize) -> DnnProfile {
    let layers = (1..=n_layers)
        .map(|index| LayerEntry {
            index,
            flops_fwd_bwd: rng.random_range(1e6..5e7),
            activation_bits: rng.random_range(1e3..1e5),
            param_bits: rng.random_range(1e4..5e6),
        })
        .collect();
    DnnProfile::new(layers, rng.random_range(4..16), rng.random_range(1..4)).unwrap()
}

/// A covered random scenario: devices sit in a 1 km square, UAVs above it
/// with coverage radii large enough that candidate sets vary in size.
pub fn random_scenario(
    rng: &mut ChaCha8Rng,
    n_devices: usize,
    n_uavs: usize,
    n_classes: usize,
) -> Scenario {
    loop {
        let uavs: Vec<UavSpec> = (0..n_uavs)
            .map(|id| UavSpec {
                id,
                position: [
                    rng.random_range(0.0..1000.0),
                    rng.random_range(0.0..1000.0),
                    300.0,
                ],
                compute: rng.random_range(5e9..5e10),
                tx_power_dbm: 30.0,
                coverage_radius: rng.random_range(500.0..1200.0),
            })
            .collect();
        let devices: Vec<DeviceSpec> = (0..n_devices)
            .map(|id| DeviceSpec {
                id,
                position: [rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)],
                compute: rng.random_range(5e8..3e9),
                tx_power_dbm: 28.0,
                label_distribution: distribution(rng, n_classes),
            })
            .collect();
        if let Ok(s) = Scenario::from_parts(
            devices,
            uavs,
            Area {
                width: 1000.0,
                height: 1000.0,
            },
            0,
        ) {
            return s;
        }
    }
}

/// Random spectral efficiencies on candidate links, zero elsewhere.
pub fn random_rates(rng: &mut ChaCha8Rng, scenario: &Scenario) -> RateTable {
    let rows: Vec<Vec<f64>> = (0..scenario.n_devices())
        .map(|n| {
            (0..scenario.n_uavs())
                .map(|k| {
                    if scenario.candidates[n].contains(&k) {
                        rng.random_range(0.2..12.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    RateTable::from_rows(&rows)
}

pub fn random_problem(seed: u64, n_devices: usize, n_uavs: usize, n_layers: usize) -> Problem {
    let mut r = rng(seed);
    let scenario = random_scenario(&mut r, n_devices, n_uavs, 4);
    let rates = random_rates(&mut r, &scenario);
    let profile = random_profile(&mut r, n_layers);
    let sat = SatLink {
        spectral_efficiency: (0..n_uavs).map(|_| r.random_range(0.5..8.0)).collect(),
        handover_s: 0.0,
    };
    let bandwidth = r.random_range(1e6..2e7);
    let theta = r.random_range(0.0..1.0);
    let proxy = ProxyConstants {
        z: r.random_range(0.0..2.0),
        sigma: r.random_range(0.0..2.0),
    };
    Problem::with_rates(scenario, profile, rates, sat, bandwidth, theta, proxy).unwrap()
}

/// Terms of the objective recomputed from first principles.
#[derive(Debug)]
pub struct Recomputed {
    pub t_d: f64,
    pub t_u: f64,
    pub t_s: f64,
    pub p: f64,
    pub objective: f64,
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// Check constraints and recompute the objective. Returns a description of
/// the first violation.
pub fn check_solution(problem: &Problem, sol: &Solution) -> Result<Recomputed, String> {
    let s = &problem.scenario;
    let n_dev = s.n_devices();
    let n_uav = s.n_uavs();
    let l = problem.profile.layers.len();
    let split = sol.split_layer;
    if split < 1 || split > l {
        return Err(format!("split {split} outside 1..={l}"));
    }
    let a = sol.assoc.assignment();
    if a.len() != n_dev {
        return Err("association length".into());
    }
    for (n, &k) in a.iter().enumerate() {
        if !s.candidates[n].contains(&k) {
            return Err(format!("device {n} on non-candidate UAV {k}"));
        }
    }
    let alloc = &sol.alloc;
    let tol = 1e-9;
    let bw_sum: f64 = alloc.uav_bandwidth.iter().sum();
    if alloc.uav_bandwidth.iter().any(|&b| b < 0.0)
        || bw_sum > problem.total_bandwidth * (1.0 + tol)
    {
        return Err(format!(
            "bandwidth {bw_sum} exceeds {}",
            problem.total_bandwidth
        ));
    }
    let mut share_sum = vec![0.0; n_uav];
    let mut cpu_sum = vec![0.0; n_uav];
    for (n, &k) in a.iter().enumerate() {
        if !(0.0..=1.0 + tol).contains(&alloc.share[n]) || alloc.compute[n] < 0.0 {
            return Err(format!("device {n} share/compute out of range"));
        }
        share_sum[k] += alloc.share[n];
        cpu_sum[k] += alloc.compute[n];
    }
    for k in 0..n_uav {
        if share_sum[k] > 1.0 + 1e-9 {
            return Err(format!("UAV {k} shares sum to {}", share_sum[k]));
        }
        if cpu_sum[k] > s.uavs[k].compute * (1.0 + 1e-9) {
            return Err(format!("UAV {k} compute oversubscribed"));
        }
    }

    // raw per-layer sums, no library cut helper
    let prof = &problem.profile;
    let samples = (prof.batch_size * prof.local_iterations) as f64;
    let head: f64 = prof.layers[..split]
        .iter()
        .map(|x| x.flops_fwd_bwd)
        .sum::<f64>()
        * samples;
    let tail: f64 = prof.layers[split..]
        .iter()
        .map(|x| x.flops_fwd_bwd)
        .sum::<f64>()
        * samples;
    let uploads = match prof.feature_upload {
        hsfl_core::dnn_profile::FeatureUpload::PerIteration => prof.local_iterations as f64,
        hsfl_core::dnn_profile::FeatureUpload::Once => 1.0,
    };
    let feature = prof.gradient_multiplier
        * uploads
        * prof.batch_size as f64
        * prof.layers[split - 1].activation_bits;
    let model: f64 = prof.layers[split..].iter().map(|x| x.param_bits).sum();

    let mut t_d: f64 = 0.0;
    let mut t_u: f64 = 0.0;
    let mut loads = vec![0usize; n_uav];
    for (n, &k) in a.iter().enumerate() {
        loads[k] += 1;
        let rate = alloc.share[n] * alloc.uav_bandwidth[k] * problem.rates.get(n, k);
        let up = if feature == 0.0 { 0.0 } else { feature / rate };
        t_d = t_d.max(head / s.devices[n].compute + up);
        let srv = if tail == 0.0 {
            0.0
        } else {
            tail / alloc.compute[n]
        };
        t_u = t_u.max(srv);
    }
    let mut t_s: f64 = 0.0;
    for k in 0..n_uav {
        if loads[k] > 0 && model > 0.0 {
            t_s = t_s.max(model / (alloc.uav_bandwidth[k] * problem.sat.spectral_efficiency[k]));
        }
    }
    let total = t_d + t_u + t_s + sol.breakdown.handover;
    if !t_d.is_finite() || !t_u.is_finite() || !t_s.is_finite() {
        return Err("infinite latency".into());
    }

    let (z2, s2) = (problem.proxy.z.powi(2), problem.proxy.sigma.powi(2));
    let mut p = 0.0;
    for k in 0..n_uav {
        if loads[k] == 0 {
            continue;
        }
        let nk = loads[k] as f64;
        let mut q = 0.0;
        for c in 0..s.n_classes() {
            let d: f64 = a
                .iter()
                .enumerate()
                .filter(|(_, &kk)| kk == k)
                .map(|(n, _)| s.devices[n].label_distribution[c] - s.global_distribution[c])
                .sum();
            q += d.abs();
        }
        let (lf, sf) = (l as f64, split as f64);
        p += sf * z2 + (lf - sf) * z2 / nk + sf * s2 + (lf - sf) * s2 / nk + q / nk;
    }
    let objective = (1.0 - problem.theta) * total + problem.theta * p;

    let b = &sol.breakdown;
    for (name, mine, theirs) in [
        ("t_d", t_d, b.t_d),
        ("t_u", t_u, b.t_u),
        ("t_s", t_s, b.t_s),
        ("total", total, b.total),
        ("P", p, sol.loss_proxy),
        ("I", objective, sol.objective),
    ] {
        if !rel_close(mine, theirs, 1e-9) && (mine - theirs).abs() > 1e-12 {
            return Err(format!("{name}: recomputed {mine}, reported {theirs}"));
        }
    }
    Ok(Recomputed {
        t_d,
        t_u,
        t_s,
        p,
        objective,
    })
}
