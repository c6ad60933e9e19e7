//! Walker-star LEO constellation on circular two-body orbits over a
//! spherical rotating Earth, with ground-target visibility and per-round
//! satellite selection.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Earth gravitational parameter (m³/s²).
pub const EARTH_MU: f64 = 3.986_004_418e14;
/// Sidereal rotation rate (rad/s).
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_0e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstellationConfig {
    pub planes: usize,
    pub sats_per_plane: usize,
    /// Walker phasing factor F.
    pub phasing: usize,
    pub altitude_m: f64,
    pub inclination_deg: f64,
    pub min_elevation_deg: f64,
    pub earth_radius_m: f64,
    /// Time to migrate the model between satellites (s).
    pub switching_time_s: f64,
}

impl Default for ConstellationConfig {
    fn default() -> Self {
        Self {
            planes: 10,
            sats_per_plane: 8,
            phasing: 1,
            altitude_m: 800e3,
            inclination_deg: 85.0,
            min_elevation_deg: 15.0,
            earth_radius_m: 6_371e3,
            switching_time_s: 0.5,
        }
    }
}

impl ConstellationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total() == 0 {
            return Err(Error::Parameter(
                "constellation needs at least one satellite".into(),
            ));
        }
        if !(self.altitude_m > 0.0 && self.earth_radius_m > 0.0) {
            return Err(Error::Parameter(
                "altitude and earth radius must be positive".into(),
            ));
        }
        if !(self.min_elevation_deg > 0.0 && self.min_elevation_deg < 90.0) {
            return Err(Error::Parameter(format!(
                "min_elevation_deg must be in (0, 90), got {}",
                self.min_elevation_deg
            )));
        }
        if !(self.switching_time_s >= 0.0) {
            return Err(Error::Parameter(
                "switching_time_s must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.planes * self.sats_per_plane
    }

    pub fn orbit_radius(&self) -> f64 {
        self.earth_radius_m + self.altitude_m
    }

    /// Mean motion (rad/s).
    pub fn mean_motion(&self) -> f64 {
        (EARTH_MU / self.orbit_radius().powi(3)).sqrt()
    }

    pub fn orbital_period(&self) -> f64 {
        2.0 * PI / self.mean_motion()
    }

    /// Earth-fixed position of satellite `id` (plane-major numbering) at `t`.
    pub fn satellite_position(&self, id: usize, t: f64) -> [f64; 3] {
        let plane = id / self.sats_per_plane;
        let slot = id % self.sats_per_plane;
        let r = self.orbit_radius();
        let inc = self.inclination_deg.to_radians();
        // star pattern: ascending nodes spread over half a revolution
        let raan = PI * plane as f64 / self.planes as f64;
        let u = 2.0 * PI * slot as f64 / self.sats_per_plane as f64
            + 2.0 * PI * (self.phasing * plane) as f64 / self.total() as f64
            + self.mean_motion() * t;
        let (su, cu) = u.sin_cos();
        let (so, co) = raan.sin_cos();
        let (si, ci) = inc.sin_cos();
        let x = r * (co * cu - so * su * ci);
        let y = r * (so * cu + co * su * ci);
        let z = r * su * si;
        let (sr, cr) = (EARTH_ROTATION_RATE * t).sin_cos();
        [cr * x + sr * y, -sr * x + cr * y, z]
    }
}

pub fn propagate(config: &ConstellationConfig, t: f64) -> Vec<[f64; 3]> {
    (0..config.total())
        .map(|id| config.satellite_position(id, t))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundTarget {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
}

impl Default for GroundTarget {
    fn default() -> Self {
        Self {
            latitude_deg: 40.0,
            longitude_deg: -86.0,
        }
    }
}

impl GroundTarget {
    pub fn validate(&self) -> Result<()> {
        if self.latitude_deg.abs() > 90.0 || self.longitude_deg.abs() > 180.0 {
            return Err(Error::Parameter(format!(
                "target ({}, {}) outside valid latitude/longitude",
                self.latitude_deg, self.longitude_deg
            )));
        }
        Ok(())
    }

    pub fn ecef(&self, earth_radius: f64) -> [f64; 3] {
        let (slat, clat) = self.latitude_deg.to_radians().sin_cos();
        let (slon, clon) = self.longitude_deg.to_radians().sin_cos();
        [
            earth_radius * clat * clon,
            earth_radius * clat * slon,
            earth_radius * slat,
        ]
    }

    /// Earth-fixed position of a point given by a local east/north/up offset
    /// (m) from the target.
    pub fn local_to_ecef(&self, earth_radius: f64, enu: [f64; 3]) -> [f64; 3] {
        let (slat, clat) = self.latitude_deg.to_radians().sin_cos();
        let (slon, clon) = self.longitude_deg.to_radians().sin_cos();
        let east = [-slon, clon, 0.0];
        let north = [-slat * clon, -slat * slon, clat];
        let up = [clat * clon, clat * slon, slat];
        let origin = self.ecef(earth_radius);
        std::array::from_fn(|i| origin[i] + enu[0] * east[i] + enu[1] * north[i] + enu[2] * up[i])
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm(sub(a, b))
}

/// Elevation (degrees) of `sat` seen from the ground point `ground`, both
/// Earth-fixed. The local vertical is the geocentric radial direction.
pub fn elevation_from_ecef(sat: [f64; 3], ground: [f64; 3]) -> f64 {
    let los = sub(sat, ground);
    let range = norm(los);
    let g = norm(ground);
    if range == 0.0 || g == 0.0 {
        return 90.0;
    }
    (dot(los, ground) / (range * g))
        .clamp(-1.0, 1.0)
        .asin()
        .to_degrees()
}

pub fn elevation_deg(sat: [f64; 3], target: &GroundTarget, earth_radius: f64) -> f64 {
    elevation_from_ecef(sat, target.ecef(earth_radius))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessInterval {
    pub sat: usize,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessSchedule {
    /// Sorted by start time, then satellite id.
    pub intervals: Vec<AccessInterval>,
    pub horizon: f64,
}

impl AccessSchedule {
    /// Interval of `sat` containing `t`, if any.
    pub fn interval_at(&self, sat: usize, t: f64) -> Option<&AccessInterval> {
        self.intervals
            .iter()
            .find(|iv| iv.sat == sat && iv.start <= t && t <= iv.end)
    }

    pub fn is_visible(&self, sat: usize, t: f64) -> bool {
        self.interval_at(sat, t).is_some()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sat_id,start_s,end_s\n");
        for iv in &self.intervals {
            out.push_str(&format!("{},{},{}\n", iv.sat, iv.start, iv.end));
        }
        out
    }
}

const BOUNDARY_TOL: f64 = 0.05;

/// Bisect the visibility boundary in `[lo, hi]`, where visibility at `lo`
/// differs from visibility at `hi`. Returns the endpoint on the visible side.
fn refine_boundary(visible: impl Fn(f64) -> bool, mut lo: f64, mut hi: f64) -> f64 {
    let lo_visible = visible(lo);
    while hi - lo > BOUNDARY_TOL {
        let mid = 0.5 * (lo + hi);
        if visible(mid) == lo_visible {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo_visible {
        lo
    } else {
        hi
    }
}

/// Golden-section search for the maximum of a unimodal function on `[a, b]`.
fn maximize(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-3 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Maximal time intervals during which each satellite is at or above the
/// elevation mask, from sampling every `step` seconds with boundaries
/// bisected to within 0.1 s. Passes that peak between two samples are
/// recovered by a golden-section search around sampled local maxima.
pub fn access_intervals(
    config: &ConstellationConfig,
    target: &GroundTarget,
    horizon: f64,
    step: f64,
) -> Result<AccessSchedule> {
    if !(step > 0.0) || !(horizon > 0.0) {
        return Err(Error::Parameter("horizon and step must be positive".into()));
    }
    let ground = target.ecef(config.earth_radius_m);
    let mask = config.min_elevation_deg;
    let n_steps = (horizon / step).ceil() as usize;
    let times: Vec<f64> = (0..=n_steps)
        .map(|i| (i as f64 * step).min(horizon))
        .collect();

    let mut intervals = Vec::new();
    for sat in 0..config.total() {
        let elev = |t: f64| elevation_from_ecef(config.satellite_position(sat, t), ground);
        let visible = |t: f64| elev(t) >= mask;
        let samples: Vec<f64> = times.iter().map(|&t| elev(t)).collect();
        let vis: Vec<bool> = samples.iter().map(|&e| e >= mask).collect();

        let mut open: Option<f64> = vis[0].then_some(0.0);
        for i in 1..times.len() {
            match (vis[i - 1], vis[i]) {
                (false, true) => open = Some(refine_boundary(visible, times[i - 1], times[i])),
                (true, false) => {
                    let end = refine_boundary(visible, times[i - 1], times[i]);
                    let start = open.take().expect("run opened before closing");
                    if end > start {
                        intervals.push(AccessInterval { sat, start, end });
                    }
                }
                (false, false) => {
                    // a short pass may peak between samples i-1 and i+1
                    let Some(&next) = samples.get(i + 1) else {
                        continue;
                    };
                    if samples[i] >= samples[i - 1] && samples[i] >= next && !vis[i + 1] {
                        let (peak_t, peak) = maximize(elev, times[i - 1], times[i + 1]);
                        if peak >= mask {
                            let start = refine_boundary(visible, times[i - 1], peak_t);
                            let end = refine_boundary(visible, peak_t, times[i + 1]);
                            if end > start {
                                intervals.push(AccessInterval { sat, start, end });
                            }
                        }
                    }
                }
                (true, true) => {}
            }
        }
        if let Some(start) = open {
            if horizon > start {
                intervals.push(AccessInterval {
                    sat,
                    start,
                    end: horizon,
                });
            }
        }
    }
    intervals.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.sat.cmp(&b.sat)));
    Ok(AccessSchedule { intervals, horizon })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    /// Serving satellite of each round.
    pub satellites: Vec<usize>,
    /// Start time of each round (s).
    pub start_times: Vec<f64>,
    /// Number of model migrations between satellites.
    pub handovers: usize,
    /// `handovers · τ_s` (s).
    pub handover_latency: f64,
}

/// Pick a serving satellite for each of `rounds` back-to-back rounds of
/// length `round_latency`, starting at t = 0.
///
/// The current satellite is kept while its remaining service time covers a
/// whole round; otherwise the model migrates to the visible satellite with
/// the longest remaining service time (lowest id on ties) and a handover is
/// counted. The initial pick is not a handover.
pub fn schedule_rounds(
    schedule: &AccessSchedule,
    round_latency: f64,
    rounds: usize,
    switching_time: f64,
) -> Result<RoundPlan> {
    plan_rounds(schedule, 0.0, round_latency, rounds, switching_time, false)
}

/// [`schedule_rounds`] starting at `start`. With `wait`, a round that finds
/// no satellite able to serve it is postponed until one rises instead of
/// failing; it fails only when the schedule's horizon runs out.
pub fn plan_rounds(
    schedule: &AccessSchedule,
    start: f64,
    round_latency: f64,
    rounds: usize,
    switching_time: f64,
    wait: bool,
) -> Result<RoundPlan> {
    if !(round_latency > 0.0) {
        return Err(Error::Parameter(format!(
            "round latency must be positive, got {round_latency}"
        )));
    }
    let mut satellites = Vec::with_capacity(rounds);
    let mut start_times = Vec::with_capacity(rounds);
    let mut current: Option<usize> = None;
    let mut handovers = 0;
    let mut t = start;
    for round in 0..rounds {
        if let Some(sat) = current {
            if schedule
                .interval_at(sat, t)
                .is_some_and(|iv| iv.end - t >= round_latency)
            {
                satellites.push(sat);
                start_times.push(t);
                t += round_latency;
                continue;
            }
        }
        let gap = Error::CoverageGap {
            round,
            needed: round_latency,
        };
        let pick = match longest_service(schedule, t, round_latency) {
            Some(p) => p,
            None if wait => {
                // earliest instant some pass still has a full round left
                let resume = schedule
                    .intervals
                    .iter()
                    .filter(|iv| iv.end - iv.start.max(t) >= round_latency)
                    .map(|iv| iv.start.max(t))
                    .min_by(f64::total_cmp)
                    .ok_or(gap)?;
                t = resume;
                longest_service(schedule, t, round_latency)
                    .expect("a pass covers the resumed round")
            }
            None => return Err(gap),
        };
        if current.is_some() {
            handovers += 1;
        }
        current = Some(pick);
        satellites.push(pick);
        start_times.push(t);
        t += round_latency;
    }
    Ok(RoundPlan {
        satellites,
        start_times,
        handovers,
        handover_latency: handovers as f64 * switching_time,
    })
}

/// Visible satellite at `t` with the most service left, if that is at
/// least `needed`; lowest id on ties.
fn longest_service(schedule: &AccessSchedule, t: f64, needed: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for iv in schedule
        .intervals
        .iter()
        .filter(|iv| iv.start <= t && t <= iv.end)
    {
        let rem = iv.end - t;
        if rem < needed {
            continue;
        }
        best = match best {
            Some((id, r)) if r > rem || (r == rem && id < iv.sat) => Some((id, r)),
            _ => Some((iv.sat, rem)),
        };
    }
    best.map(|b| b.0)
}

/// Satellite with the highest elevation above the mask at time `t`
/// (lowest id on ties), and its elevation.
pub fn best_visible(
    config: &ConstellationConfig,
    target: &GroundTarget,
    t: f64,
) -> Option<(usize, f64)> {
    let ground = target.ecef(config.earth_radius_m);
    let mut best: Option<(usize, f64)> = None;
    for (id, pos) in propagate(config, t).into_iter().enumerate() {
        let e = elevation_from_ecef(pos, ground);
        if e >= config.min_elevation_deg && best.is_none_or(|(_, b)| e > b) {
            best = Some((id, e));
        }
    }
    best
}
