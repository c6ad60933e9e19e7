//! Air-to-ground and UAV-to-satellite link models.

use rand::Rng;
use rand_distr::{Distribution, Weibull};
use serde::{Deserialize, Serialize};

use crate::scenario::{horizontal_distance, DeviceSpec, Scenario, UavSpec};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Excess-loss air-to-ground model parameters.
///
/// The defaults for the exponent, excess loss, offsets and attenuation are
/// typical magnitudes for this model family, not measured values; treat them
/// as free parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A2GChannelParams {
    /// Terrestrial path-loss exponent (unitless).
    pub path_loss_exponent: f64,
    /// Excess path loss slope (dB per degree of elevation above the offset).
    pub excess_loss_db: f64,
    /// Excess loss offset (dB).
    pub excess_offset_db: f64,
    /// Elevation angle offset (degrees).
    pub angle_offset_deg: f64,
    /// Angle attenuation factor (degrees).
    pub angle_attenuation_deg: f64,
    /// Noise power spectral density (dBm/Hz).
    pub noise_psd_dbm_hz: f64,
    /// Bandwidth over which the receiver noise is integrated (Hz). Fixed so
    /// that spectral efficiency does not depend on the bandwidth shares.
    pub noise_reference_bandwidth_hz: f64,
}

impl Default for A2GChannelParams {
    fn default() -> Self {
        Self {
            path_loss_exponent: 2.0,
            excess_loss_db: 20.0,
            excess_offset_db: 30.0,
            angle_offset_deg: 15.0,
            angle_attenuation_deg: 10.0,
            noise_psd_dbm_hz: -174.0,
            noise_reference_bandwidth_hz: 1.0e6,
        }
    }
}

impl A2GChannelParams {
    /// Noise power N_0 in watts.
    pub fn noise_power_w(&self) -> f64 {
        dbm_to_watts(self.noise_psd_dbm_hz) * self.noise_reference_bandwidth_hz
    }
}

/// Elevation angle (degrees) from a ground point to an aerial one.
pub fn elevation_angle_deg(horizontal: f64, altitude: f64) -> f64 {
    altitude.atan2(horizontal).to_degrees()
}

/// `10φ·log10(s) + η(ω−ω0)·exp((ω0−ω)/γ) + k0`, with `s` clamped to 1 m.
pub fn a2g_path_loss_db(horizontal: f64, elevation_deg: f64, params: &A2GChannelParams) -> f64 {
    let s = horizontal.max(1.0);
    let excess = elevation_deg - params.angle_offset_deg;
    10.0 * params.path_loss_exponent * s.log10()
        + params.excess_loss_db * excess * (-excess / params.angle_attenuation_deg).exp()
        + params.excess_offset_db
}

pub fn path_loss_db(device: &DeviceSpec, uav: &UavSpec, params: &A2GChannelParams) -> f64 {
    let s = horizontal_distance(device, uav);
    let omega = elevation_angle_deg(s, uav.position[2]);
    a2g_path_loss_db(s, omega, params)
}

/// `log2(1 + p·10^(−PL/10) / N_0)`.
pub fn spectral_efficiency_from_loss(tx_power_dbm: f64, path_loss_db: f64, noise_w: f64) -> f64 {
    let snr = dbm_to_watts(tx_power_dbm) * db_to_linear(-path_loss_db) / noise_w;
    snr.ln_1p() / std::f64::consts::LN_2
}

pub fn spectral_efficiency(device: &DeviceSpec, uav: &UavSpec, params: &A2GChannelParams) -> f64 {
    spectral_efficiency_from_loss(
        device.tx_power_dbm,
        path_loss_db(device, uav, params),
        params.noise_power_w(),
    )
}

/// Device uplink rate `a·l·B_k·R` (bit/s).
pub fn uplink_rate(
    associated: bool,
    share: f64,
    uav_bandwidth: f64,
    spectral_efficiency: f64,
) -> f64 {
    if associated {
        share * uav_bandwidth * spectral_efficiency
    } else {
        0.0
    }
}

/// Spectral efficiency of every device towards every UAV it may associate
/// with; entries for non-candidates are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    n_uavs: usize,
    values: Vec<f64>,
}

impl RateTable {
    pub fn build(scenario: &Scenario, params: &A2GChannelParams) -> Self {
        let k = scenario.n_uavs();
        let mut values = vec![0.0; scenario.n_devices() * k];
        for (n, ks) in scenario.candidates.iter().enumerate() {
            for &j in ks {
                values[n * k + j] =
                    spectral_efficiency(&scenario.devices[n], &scenario.uavs[j], params);
            }
        }
        Self { n_uavs: k, values }
    }

    /// Table from explicit values, row-major `[device][uav]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_uavs = rows.first().map_or(0, Vec::len);
        Self {
            n_uavs,
            values: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn get(&self, device: usize, uav: usize) -> f64 {
        self.values[device * self.n_uavs + uav]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SatLinkParams {
    pub uav_antenna_gain_dbi: f64,
    pub sat_antenna_gain_dbi: f64,
    pub carrier_wavelength_m: f64,
    pub weibull_shape: f64,
    /// Weibull scale of the rain attenuation (dB).
    pub weibull_scale_db: f64,
    /// When set, rain attenuation is this constant instead of a draw.
    pub rain_override_db: Option<f64>,
}

impl Default for SatLinkParams {
    fn default() -> Self {
        Self {
            uav_antenna_gain_dbi: 10.0,
            sat_antenna_gain_dbi: 30.0,
            // 2 GHz carrier
            carrier_wavelength_m: 299_792_458.0 / 2.0e9,
            weibull_shape: 1.5,
            weibull_scale_db: 3.0,
            rain_override_db: None,
        }
    }
}

/// Rain attenuation (dB): the override if present, else a Weibull draw.
pub fn rain_fade_db<R: Rng + ?Sized>(params: &SatLinkParams, rng: &mut R) -> f64 {
    match params.rain_override_db {
        Some(db) => db,
        None if params.weibull_scale_db == 0.0 => 0.0,
        None => Weibull::new(params.weibull_scale_db, params.weibull_shape)
            .expect("weibull parameters validated positive")
            .sample(rng),
    }
}

/// `G_UAV·G_sat·(λ/4πs)²·10^(−F_rain/10)` for a given rain attenuation.
pub fn sat_channel_gain_with_rain(distance: f64, params: &SatLinkParams, rain_db: f64) -> f64 {
    let free_space = params.carrier_wavelength_m / (4.0 * std::f64::consts::PI * distance);
    db_to_linear(params.uav_antenna_gain_dbi)
        * db_to_linear(params.sat_antenna_gain_dbi)
        * free_space
        * free_space
        * db_to_linear(-rain_db)
}

pub fn sat_channel_gain<R: Rng + ?Sized>(
    distance: f64,
    params: &SatLinkParams,
    rng: &mut R,
) -> f64 {
    sat_channel_gain_with_rain(distance, params, rain_fade_db(params, rng))
}

/// UAV-to-satellite spectral efficiency `log2(1 + p_k·H/N_0)`.
pub fn sat_spectral_efficiency(tx_power_dbm: f64, gain: f64, noise_w: f64) -> f64 {
    (dbm_to_watts(tx_power_dbm) * gain / noise_w).ln_1p() / std::f64::consts::LN_2
}

/// `B_k·log2(1 + p_k·H/N_0)` (bit/s).
pub fn sat_rate(uav: &UavSpec, bandwidth: f64, gain: f64, noise_w: f64) -> f64 {
    bandwidth * sat_spectral_efficiency(uav.tx_power_dbm, gain, noise_w)
}
