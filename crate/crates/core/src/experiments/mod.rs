//! Configuration, single runs and parameter sweeps, replay from a run
//! manifest, and the bound and oracle reports.
//!
//! A run writes three files into the output directory: `results.csv` (one
//! row per method and sweep value, deterministic), `timings.csv` (wall
//! times, which vary between runs) and `manifest.toml` (the resolved config,
//! enough to replay the run).

mod config;

pub use config::{
    ExperimentConfig, ExperimentSection, Method, OptimizerConfig, ProfileConfig, SweepParameter,
    SweepSpec,
};

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{max_snr_association, solve_baseline};
use crate::channel::rain_fade_db;
use crate::constellation::{
    access_intervals, best_visible, distance, plan_rounds, AccessSchedule, RoundPlan,
};
use crate::convergence_bound::{compute_pn, loss_bound, BoundParams};
use crate::dnn_profile::DnnProfile;
use crate::error::{Error, Result};
use crate::optimizer::{
    brute_force_oracle, solve_joint, Problem, ProxyConstants, SatLink, Solution, SolveOptions,
};
use crate::scenario::{generate_scenario, seeded_rng, Scenario};

/// Bumped whenever the manifest layout or the meaning of a config field
/// changes.
pub const SCHEMA_VERSION: u32 = 1;

const STREAM_RAIN: u64 = 5;

pub const RESULTS_FILE: &str = "results.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

pub fn load_profile(config: &ProfileConfig) -> Result<DnnProfile> {
    let mut profile = match &config.path {
        Some(path) => DnnProfile::load(path)?,
        None => DnnProfile::alexnet_cifar(),
    };
    if let Some(b) = config.batch_size {
        profile.batch_size = b;
    }
    if let Some(e) = config.local_iterations {
        profile.local_iterations = e;
    }
    if let Some(m) = config.gradient_multiplier {
        profile.gradient_multiplier = m;
    }
    profile.feature_upload = config.feature_upload;
    if profile.batch_size == 0
        || profile.local_iterations == 0
        || !(profile.gradient_multiplier > 0.0)
    {
        return Err(Error::Config(
            "profile batch_size, local_iterations and gradient_multiplier must be positive".into(),
        ));
    }
    Ok(profile)
}

/// When the first round starts: the configured time, else the first
/// satellite rise.
pub fn start_time(config: &ExperimentConfig, schedule: &AccessSchedule) -> Result<f64> {
    match config.experiment.start_time_s {
        Some(t) => Ok(t),
        None => schedule
            .intervals
            .first()
            .map(|iv| iv.start)
            .ok_or_else(|| Error::Infeasible("no satellite ever covers the target".into())),
    }
}

/// UAV-to-satellite link towards the highest satellite at time `t`. UAV
/// positions are placed in the target's local frame with the area centred
/// on the target.
pub fn sat_link(config: &ExperimentConfig, scenario: &Scenario, t: f64) -> Result<SatLink> {
    let c = &config.constellation;
    let (sat, _) = best_visible(c, &config.target, t).ok_or_else(|| {
        Error::Infeasible(format!(
            "no satellite above the elevation mask at t = {t} s"
        ))
    })?;
    let sat_pos = c.satellite_position(sat, t);
    let (w, h) = (scenario.area.width, scenario.area.height);
    let distances: Vec<f64> = scenario
        .uavs
        .iter()
        .map(|u| {
            let enu = [
                u.position[0] - w / 2.0,
                u.position[1] - h / 2.0,
                u.position[2],
            ];
            distance(config.target.local_to_ecef(c.earth_radius_m, enu), sat_pos)
        })
        .collect();
    let mut rng = seeded_rng(config.experiment.seed, STREAM_RAIN);
    let rain: Vec<f64> = scenario
        .uavs
        .iter()
        .map(|_| rain_fade_db(&config.sat, &mut rng))
        .collect();
    Ok(SatLink::from_geometry(
        scenario,
        &distances,
        &rain,
        &config.sat,
        config.channel.noise_power_w(),
    ))
}

pub fn build_problem(config: &ExperimentConfig) -> Result<Problem> {
    build_problem_with(config, &access_schedule(config)?)
}

pub fn build_problem_with(config: &ExperimentConfig, schedule: &AccessSchedule) -> Result<Problem> {
    let scenario = generate_scenario(&config.scenario, config.experiment.seed)?;
    let profile = load_profile(&config.profile)?;
    let sat = sat_link(config, &scenario, start_time(config, schedule)?)?;
    let o = &config.optimizer;
    Problem::new(
        scenario,
        profile,
        &config.channel,
        sat,
        o.total_bandwidth,
        o.theta,
        ProxyConstants {
            z: o.z,
            sigma: o.sigma,
        },
    )
}

pub fn access_schedule(config: &ExperimentConfig) -> Result<AccessSchedule> {
    let e = &config.experiment;
    access_intervals(
        &config.constellation,
        &config.target,
        e.access_horizon_s,
        e.access_step_s,
    )
}

pub fn solve_options(config: &ExperimentConfig) -> SolveOptions {
    let o = &config.optimizer;
    SolveOptions {
        sweep: o.sweep.clone(),
        dual: o.dual.clone(),
        fixed_split: o.split_layer,
        refine: o.refine,
        parallel: true,
    }
}

pub fn solve_method(
    problem: &Problem,
    method: Method,
    config: &ExperimentConfig,
) -> Result<Solution> {
    let options = solve_options(config);
    match method.baseline() {
        None => solve_joint(problem, &options),
        Some(kind) => solve_baseline(kind, problem, config.experiment.seed, &options),
    }
}

/// Charge the handovers the solution's round length forces over the
/// configured rounds and re-score it.
pub fn apply_handover(
    problem: &Problem,
    mut solution: Solution,
    schedule: &AccessSchedule,
    config: &ExperimentConfig,
) -> Result<(Solution, RoundPlan)> {
    let base = solution.breakdown.total - solution.breakdown.handover;
    let e = &config.experiment;
    let plan = plan_rounds(
        schedule,
        start_time(config, schedule)?,
        base,
        e.rounds,
        config.constellation.switching_time_s,
        e.wait_for_coverage,
    )?;
    solution.breakdown = solution.breakdown.with_handover(plan.handover_latency);
    solution.objective =
        (1.0 - problem.theta) * solution.breakdown.total + problem.theta * solution.loss_proxy;
    Ok((solution, plan))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub parameter: Option<SweepParameter>,
    pub value: Option<f64>,
    pub split_layer: usize,
    pub objective: f64,
    pub loss_proxy: f64,
    pub t_d: f64,
    pub t_u: f64,
    pub t_s: f64,
    pub handover: f64,
    pub total: f64,
    pub handovers: usize,
    pub wall_time_s: f64,
}

pub const RESULTS_HEADER: [&str; 12] = [
    "method",
    "parameter",
    "value",
    "split_layer",
    "objective",
    "loss_proxy",
    "t_d",
    "t_u",
    "t_s",
    "handover",
    "total",
    "handovers",
];

impl ResultRow {
    fn key(&self) -> [String; 3] {
        [
            self.method.to_string(),
            self.parameter
                .map_or("none", SweepParameter::name)
                .to_string(),
            self.value.map_or(String::new(), |v| v.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
}

fn csv_string(header: &[&str], records: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| Error::Serialize(e.to_string());
    w.write_record(header).map_err(ser)?;
    for r in records {
        w.write_record(&r).map_err(ser)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Serialize(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialize(e.to_string()))
}

impl RunOutput {
    pub fn results_csv(&self) -> Result<String> {
        csv_string(
            &RESULTS_HEADER,
            self.rows.iter().map(|r| {
                let mut rec = r.key().to_vec();
                rec.push(r.split_layer.to_string());
                rec.extend(
                    [
                        r.objective,
                        r.loss_proxy,
                        r.t_d,
                        r.t_u,
                        r.t_s,
                        r.handover,
                        r.total,
                    ]
                    .iter()
                    .map(f64::to_string),
                );
                rec.push(r.handovers.to_string());
                rec
            }),
        )
    }

    pub fn timings_csv(&self) -> Result<String> {
        csv_string(
            &["method", "parameter", "value", "wall_time_s"],
            self.rows.iter().map(|r| {
                let mut rec = r.key().to_vec();
                rec.push(r.wall_time_s.to_string());
                rec
            }),
        )
    }
}

fn with_context(e: Error, context: &str) -> Error {
    match e {
        Error::Parameter(m) | Error::Config(m) => Error::Config(format!("{context}: {m}")),
        Error::Infeasible(m) => Error::Infeasible(format!("{context}: {m}")),
        e @ (Error::CoverageGap { .. } | Error::EmptyCandidateSet { .. }) => {
            Error::Infeasible(format!("{context}: {e}"))
        }
        other => other,
    }
}

fn run_point(
    config: &ExperimentConfig,
    method: Method,
    point: Option<(SweepParameter, f64)>,
    schedule: &AccessSchedule,
) -> Result<ResultRow> {
    let context = match point {
        Some((p, v)) => format!("{method} at {}={v}", p.name()),
        None => method.to_string(),
    };
    let start = Instant::now();
    let resolved = match point {
        Some((p, v)) => config.at_point(p, v),
        None => Ok(config.clone()),
    };
    let solved = resolved.and_then(|c| {
        let problem = build_problem_with(&c, schedule)?;
        let solution = solve_method(&problem, method, &c)?;
        apply_handover(&problem, solution, schedule, &c)
    });
    let (s, plan) = solved.map_err(|e| with_context(e, &context))?;
    let b = &s.breakdown;
    Ok(ResultRow {
        method,
        parameter: point.map(|p| p.0),
        value: point.map(|p| p.1),
        split_layer: s.split_layer,
        objective: s.objective,
        loss_proxy: s.loss_proxy,
        t_d: b.t_d,
        t_u: b.t_u,
        t_s: b.t_s,
        handover: b.handover,
        total: b.total,
        handovers: plan.handovers,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Solve every (sweep value, method) pair. Rows come back in sweep order,
/// methods in config order within each value, whatever the worker count.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let schedule = access_schedule(config)?;
    let e = &config.experiment;
    let points: Vec<Option<(SweepParameter, f64)>> = match &e.sweep {
        Some(s) => s.values.iter().map(|&v| Some((s.parameter, v))).collect(),
        None => vec![None],
    };
    let jobs: Vec<(Method, Option<(SweepParameter, f64)>)> = points
        .iter()
        .flat_map(|&p| e.methods.iter().map(move |&m| (m, p)))
        .collect();
    let exec = || {
        jobs.par_iter()
            .map(|&(m, p)| run_point(config, m, p, &schedule))
            .collect::<Result<Vec<_>>>()
    };
    let rows = match e.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|err| Error::Config(format!("cannot start {n} workers: {err}")))?
            .install(exec)?,
        None => exec()?,
    };
    Ok(RunOutput { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    /// Name and version of the program that wrote the manifest.
    pub generator: String,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            generator: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            config: config.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    /// Parse and check the schema version before looking at the config.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let parse_err = |e: toml::de::Error| Error::Parse {
            source_name: source_name.to_string(),
            line: e.span().map_or(0, |s| config::line_of(text, s.start)),
            message: e.message().to_string(),
        };
        let table: toml::Table = toml::from_str(text).map_err(parse_err)?;
        let version = table
            .get("schema_version")
            .and_then(toml::Value::as_integer)
            .and_then(|v| u32::try_from(v).ok());
        match version {
            None => {
                return Err(Error::Incompatible(format!(
                    "{source_name} has no valid schema_version"
                )))
            }
            Some(v) if v > SCHEMA_VERSION => return Err(Error::Incompatible(format!(
                "{source_name} uses schema version {v}, newer than the supported {SCHEMA_VERSION}"
            ))),
            Some(v) if v < SCHEMA_VERSION => return Err(Error::Incompatible(format!(
                "{source_name} uses schema version {v}, older than the supported {SCHEMA_VERSION}"
            ))),
            Some(_) => {}
        }
        let manifest: Self = toml::from_str(text).map_err(parse_err)?;
        manifest.config.validate()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Run and write `results.csv`, `timings.csv` and `manifest.toml` into the
/// configured output directory. Returns that directory.
pub fn run_to_dir(config: &ExperimentConfig) -> Result<(PathBuf, RunOutput)> {
    let output = run(config)?;
    let dir = config.experiment.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_file(&dir.join(RESULTS_FILE), &output.results_csv()?)?;
    write_file(&dir.join(TIMINGS_FILE), &output.timings_csv()?)?;
    write_file(
        &dir.join(MANIFEST_FILE),
        &RunManifest::new(config).to_toml()?,
    )?;
    Ok((dir, output))
}

/// Re-run the experiment a manifest describes, optionally into another
/// directory.
pub fn replay(manifest: &Path, output_dir: Option<&Path>) -> Result<(PathBuf, RunOutput)> {
    let mut config = RunManifest::load(manifest)?.config;
    if let Some(dir) = output_dir {
        config.experiment.output_dir = dir.to_path_buf();
    }
    run_to_dir(&config)
}

/// Bound parameters with the layer count and local iterations taken from
/// the profile.
pub fn resolved_bound_params(config: &ExperimentConfig, profile: &DnnProfile) -> BoundParams {
    BoundParams {
        n_layers: profile.n_layers(),
        local_iterations: profile.local_iterations,
        split_layer: config.bound.split_layer.min(profile.n_layers()),
        ..config.bound.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurves {
    /// `split_layer,uav,n_k,pn,bound` for every split layer.
    pub by_split: String,
    /// `scale,uav,n_k,pn,bound` with every deviation scaled.
    pub by_heterogeneity: String,
}

pub const HETEROGENEITY_SCALES: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Loss-bound curves over the max-SNR association of the configured
/// scenario, evaluated at the end of the configured rounds.
pub fn bound_curves(config: &ExperimentConfig) -> Result<BoundCurves> {
    let problem = build_problem(config)?;
    let params = resolved_bound_params(config, &problem.profile);
    params.validate()?;
    let assoc = max_snr_association(&problem);
    let loads = assoc.loads(problem.scenario.n_uavs());
    let t = params.horizon() as f64;
    let alpha = params.step_size(t);
    let header = |first: &'static str| [first, "uav", "n_k", "pn", "bound"];

    let mut split_rows = Vec::new();
    let dists = problem.scenario.label_distributions();
    for split in 1..=params.n_layers {
        let p = BoundParams {
            split_layer: split,
            ..params.clone()
        };
        for (k, &n_k) in loads.iter().enumerate().filter(|(_, n)| **n > 0) {
            let pn = compute_pn(&p, k, &assoc, &dists, alpha)?.uav_value;
            let b = loss_bound(&p, pn, t)?;
            split_rows.push(vec![
                split.to_string(),
                k.to_string(),
                n_k.to_string(),
                pn.to_string(),
                b.to_string(),
            ]);
        }
    }
    let mut het_rows = Vec::new();
    for scale in HETEROGENEITY_SCALES {
        let dists = problem
            .scenario
            .with_scaled_deviation(scale)
            .label_distributions();
        for (k, &n_k) in loads.iter().enumerate().filter(|(_, n)| **n > 0) {
            let pn = compute_pn(&params, k, &assoc, &dists, alpha)?.uav_value;
            let b = loss_bound(&params, pn, t)?;
            het_rows.push(vec![
                scale.to_string(),
                k.to_string(),
                n_k.to_string(),
                pn.to_string(),
                b.to_string(),
            ]);
        }
    }
    Ok(BoundCurves {
        by_split: csv_string(&header("split_layer"), split_rows.into_iter())?,
        by_heterogeneity: csv_string(&header("scale"), het_rows.into_iter())?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub oracle: Solution,
    pub proposed: Solution,
    /// `(I_proposed − I_oracle) / I_oracle`.
    pub relative_gap: f64,
}

/// Exhaustive optimum next to the joint solver on the configured (small)
/// instance. Handover time is left out of both.
pub fn oracle_report(config: &ExperimentConfig) -> Result<OracleReport> {
    let problem = build_problem(config)?;
    let oracle = brute_force_oracle(&problem)?;
    let proposed = solve_joint(
        &problem,
        &SolveOptions {
            fixed_split: None,
            ..solve_options(config)
        },
    )?;
    let relative_gap =
        (proposed.objective - oracle.objective) / oracle.objective.abs().max(f64::MIN_POSITIVE);
    Ok(OracleReport {
        oracle,
        proposed,
        relative_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_roundtrip() {
        let mut config = ExperimentConfig::default();
        config.experiment.seed = 42;
        let text = RunManifest::new(&config).to_toml().unwrap();
        let back = RunManifest::parse(&text, "m").unwrap();
        assert_eq!(back.config, config);
        assert_eq!(back.schema_version, SCHEMA_VERSION);
    }

    #[test]
    fn manifest_versions_are_checked_first() {
        let text = RunManifest::new(&ExperimentConfig::default())
            .to_toml()
            .unwrap();
        let newer = text.replace("schema_version = 1", "schema_version = 2");
        let err = RunManifest::parse(&newer, "m").unwrap_err();
        assert!(matches!(&err, Error::Incompatible(m) if m.contains("newer")));
        let missing = text.replace("schema_version = 1\n", "");
        assert!(matches!(
            RunManifest::parse(&missing, "m"),
            Err(Error::Incompatible(_))
        ));
        // a bad config under a future version still reports the version
        let future = "schema_version = 9\n[config]\nnot_a_field = 1\n";
        assert!(matches!(
            RunManifest::parse(future, "m"),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let row = ResultRow {
            method: Method::Era,
            parameter: Some(SweepParameter::Theta),
            value: Some(0.25),
            split_layer: 3,
            objective: 1.5,
            loss_proxy: 2.0,
            t_d: 0.5,
            t_u: 0.25,
            t_s: 0.125,
            handover: 0.5,
            total: 1.375,
            handovers: 1,
            wall_time_s: 0.01,
        };
        let out = RunOutput { rows: vec![row] };
        let csv = out.results_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), RESULTS_HEADER.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "era,theta,0.25,3,1.5,2,0.5,0.25,0.125,0.5,1.375,1"
        );
        assert_eq!(
            out.timings_csv().unwrap().lines().nth(1).unwrap(),
            "era,theta,0.25,0.01"
        );
    }

    #[test]
    fn errors_gain_context() {
        let e = with_context(
            Error::CoverageGap {
                round: 3,
                needed: 1.0,
            },
            "proposed",
        );
        assert!(matches!(&e, Error::Infeasible(m) if m.starts_with("proposed: ")));
        assert_eq!(e.exit_code(), 3);
        let e = with_context(Error::Parameter("x".into()), "ra");
        assert_eq!(e.exit_code(), 2);
    }
}
