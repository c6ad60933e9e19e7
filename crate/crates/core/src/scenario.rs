//! Seeded generation of the ground/air topology: device and UAV placement,
//! compute capabilities, candidate association sets and non-IID label
//! distributions.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`), seeded with a 64-bit
//! seed and split into independent streams per quantity, so a scenario is a
//! pure function of `(config, seed)` on every platform.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::Association;

const STREAM_POSITIONS: u64 = 1;
const STREAM_COMPUTE: u64 = 2;
const STREAM_LABELS: u64 = 3;

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LabelScheme {
    /// Each device holds a uniform mix of a random subset of classes.
    #[default]
    Shard,
    /// Each device draws its class mix from a symmetric Dirichlet.
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_uavs: usize,
    pub n_devices: usize,
    /// Target area width (m).
    pub area_width: f64,
    /// Target area height (m).
    pub area_height: f64,
    /// UAV coverage radius, measured horizontally (m).
    pub coverage_radius: f64,
    /// UAV altitude (m).
    pub altitude: f64,
    /// Device compute capability is drawn uniformly from this range (FLOP/s).
    pub device_compute_min: f64,
    pub device_compute_max: f64,
    /// Device transmit power (dBm).
    pub device_tx_power_dbm: f64,
    /// Per-UAV compute capability (FLOP/s).
    pub uav_compute: f64,
    /// UAV transmit power towards the satellite (dBm).
    pub uav_tx_power_dbm: f64,
    pub n_classes: usize,
    pub classes_per_device: usize,
    pub label_scheme: LabelScheme,
    pub dirichlet_concentration: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_uavs: 4,
            n_devices: 50,
            area_width: 4000.0,
            area_height: 4000.0,
            coverage_radius: 1500.0,
            altitude: 500.0,
            device_compute_min: 1.0e9,
            device_compute_max: 3.0e9,
            device_tx_power_dbm: 28.0,
            uav_compute: 5.0e10,
            uav_tx_power_dbm: 30.0,
            n_classes: 10,
            classes_per_device: 4,
            label_scheme: LabelScheme::Shard,
            dirichlet_concentration: 0.5,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("area_width", self.area_width),
            ("area_height", self.area_height),
            ("coverage_radius", self.coverage_radius),
            ("altitude", self.altitude),
            ("device_compute_min", self.device_compute_min),
            ("uav_compute", self.uav_compute),
            ("dirichlet_concentration", self.dirichlet_concentration),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.n_uavs == 0 || self.n_devices == 0 {
            return Err(Error::Parameter(
                "n_uavs and n_devices must be at least 1".into(),
            ));
        }
        if !(self.device_compute_max >= self.device_compute_min) {
            return Err(Error::Parameter(
                "device_compute_max must be >= device_compute_min".into(),
            ));
        }
        if self.n_classes == 0
            || self.classes_per_device == 0
            || self.classes_per_device > self.n_classes
        {
            return Err(Error::Parameter(format!(
                "classes_per_device must lie in 1..={}, got {}",
                self.n_classes, self.classes_per_device
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub id: usize,
    /// Ground position (m) inside the target area.
    pub position: [f64; 2],
    /// FLOP/s.
    pub compute: f64,
    pub tx_power_dbm: f64,
    pub label_distribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavSpec {
    pub id: usize,
    /// Position (m); the third coordinate is altitude.
    pub position: [f64; 3],
    /// FLOP/s.
    pub compute: f64,
    pub tx_power_dbm: f64,
    pub coverage_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub devices: Vec<DeviceSpec>,
    pub uavs: Vec<UavSpec>,
    /// `candidates[n]` lists the UAV indices device `n` may associate with,
    /// in increasing order.
    pub candidates: Vec<Vec<usize>>,
    pub global_distribution: Vec<f64>,
    pub area: Area,
    pub seed: u64,
}

pub fn horizontal_distance(device: &DeviceSpec, uav: &UavSpec) -> f64 {
    let dx = device.position[0] - uav.position[0];
    let dy = device.position[1] - uav.position[1];
    dx.hypot(dy)
}

impl Scenario {
    /// Assemble a scenario from explicit devices and UAVs, deriving the
    /// candidate sets and the global label distribution.
    pub fn from_parts(
        devices: Vec<DeviceSpec>,
        uavs: Vec<UavSpec>,
        area: Area,
        seed: u64,
    ) -> Result<Self> {
        if devices.is_empty() || uavs.is_empty() {
            return Err(Error::Parameter(
                "scenario needs at least one device and one UAV".into(),
            ));
        }
        let n_classes = devices[0].label_distribution.len();
        for d in &devices {
            if d.label_distribution.len() != n_classes {
                return Err(Error::Parameter(format!(
                    "device {} has {} classes, expected {n_classes}",
                    d.id,
                    d.label_distribution.len()
                )));
            }
            if !(d.compute > 0.0) {
                return Err(Error::Parameter(format!(
                    "device {} compute must be positive",
                    d.id
                )));
            }
        }
        for u in &uavs {
            if !(u.compute > 0.0) || !(u.coverage_radius > 0.0) {
                return Err(Error::Parameter(format!(
                    "UAV {} needs positive compute and coverage radius",
                    u.id
                )));
            }
        }
        let mut candidates = Vec::with_capacity(devices.len());
        for (n, d) in devices.iter().enumerate() {
            let ks: Vec<usize> = uavs
                .iter()
                .enumerate()
                .filter(|(_, u)| horizontal_distance(d, u) <= u.coverage_radius)
                .map(|(k, _)| k)
                .collect();
            if ks.is_empty() {
                let radius = uavs.iter().map(|u| u.coverage_radius).fold(0.0, f64::max);
                return Err(Error::EmptyCandidateSet { device: n, radius });
            }
            candidates.push(ks);
        }
        let global_distribution = mean_distribution(
            devices.iter().map(|d| d.label_distribution.as_slice()),
            n_classes,
        );
        Ok(Self {
            devices,
            uavs,
            candidates,
            global_distribution,
            area,
            seed,
        })
    }

    pub fn n_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn n_uavs(&self) -> usize {
        self.uavs.len()
    }

    pub fn n_classes(&self) -> usize {
        self.global_distribution.len()
    }

    /// Per-class deviation `p^n(c) - p(c)` of one device.
    pub fn deviation(&self, device: usize) -> impl Iterator<Item = f64> + '_ {
        self.devices[device]
            .label_distribution
            .iter()
            .zip(&self.global_distribution)
            .map(|(pn, p)| pn - p)
    }

    /// Replace every device's distribution by `p + scale·(p^n − p)`, keeping
    /// the global distribution. Used for heterogeneity sensitivity studies.
    pub fn with_scaled_deviation(&self, scale: f64) -> Scenario {
        let mut out = self.clone();
        for d in &mut out.devices {
            for (pn, p) in d
                .label_distribution
                .iter_mut()
                .zip(&self.global_distribution)
            {
                *pn = p + scale * (*pn - p);
            }
        }
        out
    }

    pub fn label_distributions(&self) -> LabelDistributions {
        LabelDistributions {
            per_device: self
                .devices
                .iter()
                .map(|d| d.label_distribution.clone())
                .collect(),
            global: self.global_distribution.clone(),
        }
    }

    pub fn to_snapshot(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            source_name: "scenario snapshot".into(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

fn mean_distribution<'a>(rows: impl Iterator<Item = &'a [f64]>, n_classes: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n_classes];
    let mut count = 0usize;
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
        count += 1;
    }
    let count = count.max(1) as f64;
    acc.iter_mut().for_each(|a| *a /= count);
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistributions {
    pub per_device: Vec<Vec<f64>>,
    pub global: Vec<f64>,
}

/// Draw per-device label distributions. Device data sizes are equal, so the
/// global distribution is the plain mean of the per-device ones.
pub fn assign_label_distributions(
    n_devices: usize,
    n_classes: usize,
    classes_per_device: usize,
    scheme: LabelScheme,
    concentration: f64,
    seed: u64,
) -> Result<LabelDistributions> {
    if n_classes == 0 || classes_per_device == 0 || classes_per_device > n_classes {
        return Err(Error::Parameter(format!(
            "classes_per_device must lie in 1..={n_classes}, got {classes_per_device}"
        )));
    }
    let mut rng = seeded_rng(seed, STREAM_LABELS);
    let per_device: Vec<Vec<f64>> = match scheme {
        LabelScheme::Shard => {
            let mass = 1.0 / classes_per_device as f64;
            (0..n_devices)
                .map(|_| {
                    let mut p = vec![0.0; n_classes];
                    for c in index::sample(&mut rng, n_classes, classes_per_device) {
                        p[c] = mass;
                    }
                    p
                })
                .collect()
        }
        LabelScheme::Dirichlet => {
            let gamma = Gamma::new(concentration, 1.0).map_err(|e| {
                Error::Parameter(format!("dirichlet concentration {concentration}: {e}"))
            })?;
            (0..n_devices)
                .map(|_| {
                    let mut p: Vec<f64> = (0..n_classes).map(|_| gamma.sample(&mut rng)).collect();
                    let total: f64 = p.iter().sum();
                    if total > 0.0 {
                        p.iter_mut().for_each(|v| *v /= total);
                    } else {
                        // every draw underflowed; fall back to a single class
                        let c = rng.random_range(0..n_classes);
                        p.iter_mut().for_each(|v| *v = 0.0);
                        p[c] = 1.0;
                    }
                    p
                })
                .collect()
        }
    };
    let global = mean_distribution(per_device.iter().map(Vec::as_slice), n_classes);
    Ok(LabelDistributions { per_device, global })
}

/// Generate a scenario: UAVs hover over the centres of a near-square grid of
/// cells covering the area, devices are uniform over the area.
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let k = config.n_uavs;
    let cols = (k as f64).sqrt().ceil() as usize;
    let rows = k.div_ceil(cols);
    let cell_w = config.area_width / cols as f64;
    let cell_h = config.area_height / rows as f64;
    let uavs: Vec<UavSpec> = (0..k)
        .map(|i| UavSpec {
            id: i,
            position: [
                ((i % cols) as f64 + 0.5) * cell_w,
                ((i / cols) as f64 + 0.5) * cell_h,
                config.altitude,
            ],
            compute: config.uav_compute,
            tx_power_dbm: config.uav_tx_power_dbm,
            coverage_radius: config.coverage_radius,
        })
        .collect();

    let labels = assign_label_distributions(
        config.n_devices,
        config.n_classes,
        config.classes_per_device,
        config.label_scheme,
        config.dirichlet_concentration,
        seed,
    )?;
    let mut pos_rng = seeded_rng(seed, STREAM_POSITIONS);
    let mut cpu_rng = seeded_rng(seed, STREAM_COMPUTE);
    let devices: Vec<DeviceSpec> = labels
        .per_device
        .into_iter()
        .enumerate()
        .map(|(n, label_distribution)| {
            let x = pos_rng.random_range(0.0..=config.area_width);
            let y = pos_rng.random_range(0.0..=config.area_height);
            let compute = if config.device_compute_max > config.device_compute_min {
                cpu_rng.random_range(config.device_compute_min..config.device_compute_max)
            } else {
                config.device_compute_min
            };
            DeviceSpec {
                id: n,
                position: [x, y],
                compute,
                tx_power_dbm: config.device_tx_power_dbm,
                label_distribution,
            }
        })
        .collect();

    Scenario::from_parts(
        devices,
        uavs,
        Area {
            width: config.area_width,
            height: config.area_height,
        },
        seed,
    )
}

/// Per-UAV, per-class aggregate deviation magnitude of an association.
#[derive(Debug, Clone, PartialEq)]
pub struct Heterogeneity {
    /// `q[k][c] = |Σ_{n on k} (p^n(c) − p(c))|`.
    pub q: Vec<Vec<f64>>,
    /// `Σ_c q[k][c]` per UAV.
    pub totals: Vec<f64>,
}

pub fn heterogeneity_of(assoc: &Association, scenario: &Scenario) -> Heterogeneity {
    let c = scenario.n_classes();
    let mut sums = vec![vec![0.0; c]; scenario.n_uavs()];
    for (n, &k) in assoc.assignment().iter().enumerate() {
        for (acc, dev) in sums[k].iter_mut().zip(scenario.deviation(n)) {
            *acc += dev;
        }
    }
    let q: Vec<Vec<f64>> = sums
        .into_iter()
        .map(|row| row.into_iter().map(f64::abs).collect())
        .collect();
    let totals = q.iter().map(|row| row.iter().sum()).collect();
    Heterogeneity { q, totals }
}
