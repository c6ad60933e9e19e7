use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineKind;
use crate::channel::{A2GChannelParams, SatLinkParams};
use crate::constellation::{ConstellationConfig, GroundTarget};
use crate::convergence_bound::BoundParams;
use crate::dnn_profile::FeatureUpload;
use crate::error::{Error, Result};
use crate::optimizer::{DualConfig, ProxyConstants, SweepConfig};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Total uplink bandwidth `B^U` (Hz).
    pub total_bandwidth: f64,
    pub theta: f64,
    pub z: f64,
    pub sigma: f64,
    /// Restrict the proposed method to one split layer.
    pub split_layer: Option<usize>,
    pub refine: bool,
    pub sweep: SweepConfig,
    pub dual: DualConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let proxy = ProxyConstants::default();
        Self {
            total_bandwidth: 50e6,
            theta: 0.5,
            z: proxy.z,
            sigma: proxy.sigma,
            split_layer: None,
            refine: true,
            sweep: SweepConfig::default(),
            dual: DualConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    /// Profile file; the bundled AlexNet-on-CIFAR table when unset.
    pub path: Option<PathBuf>,
    pub batch_size: Option<usize>,
    pub local_iterations: Option<usize>,
    pub feature_upload: FeatureUpload,
    pub gradient_multiplier: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Proposed,
    Ra,
    Era,
    Hfl,
    Dda,
}

impl Method {
    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            Self::Proposed => None,
            Self::Ra => Some(BaselineKind::Ra),
            Self::Era => Some(BaselineKind::Era),
            Self::Hfl => Some(BaselineKind::Hfl),
            Self::Dda => Some(BaselineKind::Dda),
        }
    }
}

impl From<BaselineKind> for Method {
    fn from(kind: BaselineKind) -> Self {
        match kind {
            BaselineKind::Ra => Self::Ra,
            BaselineKind::Era => Self::Era,
            BaselineKind::Hfl => Self::Hfl,
            BaselineKind::Dda => Self::Dda,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.baseline() {
            None => f.write_str("proposed"),
            Some(kind) => kind.fmt(f),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("proposed") {
            Ok(Self::Proposed)
        } else {
            s.parse::<BaselineKind>().map(Self::from)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    TotalBandwidth,
    UavCompute,
    Theta,
    SplitLayerFixed,
    DeviceCount,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            Self::TotalBandwidth => "total_bandwidth",
            Self::UavCompute => "uav_compute",
            Self::Theta => "theta",
            Self::SplitLayerFixed => "split_layer_fixed",
            Self::DeviceCount => "device_count",
        }
    }

    fn is_integer(self) -> bool {
        matches!(self, Self::SplitLayerFixed | Self::DeviceCount)
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Self::TotalBandwidth,
            Self::UavCompute,
            Self::Theta,
            Self::SplitLayerFixed,
            Self::DeviceCount,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown sweep parameter `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl SweepSpec {
    /// Parse `name=v1,v2,…`.
    pub fn parse(text: &str) -> Result<Self> {
        let (name, list) = text.split_once('=').ok_or_else(|| {
            Error::Config(format!("sweep `{text}` is not of the form name=v1,v2,..."))
        })?;
        let parameter = name.trim().parse()?;
        let values = list
            .split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!("sweep value `{}` is not a number", v.trim()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = Self { parameter, values };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let name = self.parameter.name();
        if self.values.is_empty() {
            return Err(Error::Config(format!("sweep over {name} has no values")));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "sweep over {name} has a non-finite value"
            )));
        }
        if self.parameter.is_integer() && self.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
            return Err(Error::Config(format!(
                "sweep over {name} needs positive integers"
            )));
        }
        let up = self.values.windows(2).all(|w| w[0] < w[1]);
        let down = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(up || down) {
            return Err(Error::Config(format!(
                "sweep values over {name} must be strictly monotone"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub methods: Vec<Method>,
    pub sweep: Option<SweepSpec>,
    /// Training rounds the handover schedule covers.
    pub rounds: usize,
    /// Horizon (s) and sampling step (s) of the satellite access schedule.
    pub access_horizon_s: f64,
    pub access_step_s: f64,
    /// When training starts (s); the first satellite rise when unset.
    pub start_time_s: Option<f64>,
    /// Postpone a round across a coverage gap instead of failing.
    pub wait_for_coverage: bool,
    /// Worker threads for sweep points; all cores when unset.
    pub workers: Option<usize>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("results"),
            methods: vec![Method::Proposed],
            sweep: None,
            rounds: 20,
            access_horizon_s: 86_400.0,
            access_step_s: 10.0,
            start_time_s: None,
            wait_for_coverage: true,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub channel: A2GChannelParams,
    pub sat: SatLinkParams,
    pub constellation: ConstellationConfig,
    pub target: GroundTarget,
    pub optimizer: OptimizerConfig,
    pub bound: BoundParams,
    pub profile: ProfileConfig,
    pub experiment: ExperimentSection,
}

/// 1-based line of a byte offset.
pub(super) fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, source_name: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let config_err = |e: Error| match e {
            Error::Parameter(m) => Error::Config(m),
            other => other,
        };
        self.scenario.validate().map_err(config_err)?;
        self.constellation.validate().map_err(config_err)?;
        self.target.validate().map_err(config_err)?;
        let sat = &self.sat;
        if !(sat.weibull_shape > 0.0
            && sat.weibull_scale_db >= 0.0
            && sat.carrier_wavelength_m > 0.0)
        {
            return Err(Error::Config(
                "sat.weibull_shape and sat.carrier_wavelength_m must be positive, sat.weibull_scale_db >= 0".into(),
            ));
        }
        let o = &self.optimizer;
        if !(o.total_bandwidth.is_finite() && o.total_bandwidth > 0.0) {
            return Err(Error::Config(format!(
                "optimizer.total_bandwidth must be positive, got {}",
                o.total_bandwidth
            )));
        }
        if !(0.0..=1.0).contains(&o.theta) {
            return Err(Error::Config(format!(
                "optimizer.theta must lie in [0, 1], got {}",
                o.theta
            )));
        }
        if !(o.z >= 0.0 && o.sigma >= 0.0) {
            return Err(Error::Config(
                "optimizer.z and optimizer.sigma must be >= 0".into(),
            ));
        }
        let e = &self.experiment;
        if e.methods.is_empty() {
            return Err(Error::Config("experiment.methods is empty".into()));
        }
        if e.seed > i64::MAX as u64 {
            return Err(Error::Config(format!(
                "experiment.seed must be at most {}",
                i64::MAX
            )));
        }
        if e.rounds == 0 {
            return Err(Error::Config("experiment.rounds must be at least 1".into()));
        }
        if !(e.access_step_s > 0.0 && e.access_horizon_s > 0.0) {
            return Err(Error::Config(
                "access horizon and step must be positive".into(),
            ));
        }
        if e.start_time_s
            .is_some_and(|t| !(t >= 0.0 && t < e.access_horizon_s))
        {
            return Err(Error::Config(
                "experiment.start_time_s must lie inside the access horizon".into(),
            ));
        }
        if e.workers == Some(0) {
            return Err(Error::Config(
                "experiment.workers must be at least 1".into(),
            ));
        }
        if let Some(s) = &e.sweep {
            s.validate()?;
        }
        Ok(())
    }

    /// Apply `HSFL_OUTPUT_DIR` and `HSFL_WORKERS` from `lookup`.
    pub fn apply_env_overrides(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(dir) = lookup("HSFL_OUTPUT_DIR") {
            self.experiment.output_dir = PathBuf::from(dir);
        }
        if let Some(w) = lookup("HSFL_WORKERS") {
            let n: usize = w.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
                Error::Config(format!("HSFL_WORKERS=`{w}` is not a positive integer"))
            })?;
            self.experiment.workers = Some(n);
        }
        Ok(())
    }

    /// The config with one sweep value applied.
    pub fn at_point(&self, parameter: SweepParameter, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match parameter {
            SweepParameter::TotalBandwidth => c.optimizer.total_bandwidth = value,
            SweepParameter::UavCompute => c.scenario.uav_compute = value,
            SweepParameter::Theta => c.optimizer.theta = value,
            SweepParameter::SplitLayerFixed => c.optimizer.split_layer = Some(value as usize),
            SweepParameter::DeviceCount => c.scenario.n_devices = value as usize,
        }
        c.experiment.sweep = None;
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(
            ExperimentConfig::from_toml("", "x").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let text = "[scenario]\nn_uavs = 3\nbogus = 1\n";
        match ExperimentConfig::from_toml(text, "cfg").unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("bogus"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn toml_roundtrip() {
        let mut c = ExperimentConfig::default();
        c.experiment.sweep = Some(SweepSpec::parse("total_bandwidth=1e7,2e7").unwrap());
        c.experiment.methods = vec![Method::Proposed, Method::Hfl];
        c.sat.rain_override_db = Some(1.25);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap(), "x").unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn sweep_validation() {
        assert!(SweepSpec::parse("theta=0.1,0.5,0.9").is_ok());
        assert!(SweepSpec::parse("theta=0.1,0.1").is_err());
        assert!(SweepSpec::parse("theta=0.1,0.5,0.3").is_err());
        assert!(SweepSpec::parse("device_count=10,12.5").is_err());
        assert!(SweepSpec::parse("altitude=1").is_err());
        assert!(SweepSpec::parse("theta").is_err());
    }

    #[test]
    fn env_overrides() {
        let mut c = ExperimentConfig::default();
        c.apply_env_overrides(|k| match k {
            "HSFL_OUTPUT_DIR" => Some("/tmp/x".into()),
            "HSFL_WORKERS" => Some("3".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.experiment.output_dir, PathBuf::from("/tmp/x"));
        assert_eq!(c.experiment.workers, Some(3));
        assert!(c.apply_env_overrides(|_| Some("0".into())).is_err());
    }

    #[test]
    fn method_names() {
        for m in [
            Method::Proposed,
            Method::Ra,
            Method::Era,
            Method::Hfl,
            Method::Dda,
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
    }
}
