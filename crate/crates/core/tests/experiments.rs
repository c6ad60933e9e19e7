use std::path::{Path, PathBuf};

use hsfl_core::experiments::{
    self, ExperimentConfig, Method, RunManifest, SweepSpec, MANIFEST_FILE, RESULTS_FILE,
};
use hsfl_core::Error;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn small_config(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.scenario.n_devices = 8;
    c.experiment.seed = 11;
    c.experiment.rounds = 5;
    c.experiment.methods = vec![Method::Proposed, Method::Era, Method::Dda];
    c.experiment.sweep = Some(SweepSpec::parse("total_bandwidth=2e7,4e7").unwrap());
    c.experiment.output_dir = dir.to_path_buf();
    c
}

#[test]
fn reference_run_replays_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = experiments::replay(&fixture("small_manifest.toml"), Some(dir.path())).unwrap();
    let got = std::fs::read_to_string(out.join(RESULTS_FILE)).unwrap();
    let want = std::fs::read_to_string(fixture("small_results.csv")).unwrap();
    assert_eq!(got, want);
}

#[test]
fn replay_rewrites_an_equivalent_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (first, _) = experiments::run_to_dir(&small_config(&dir.path().join("a"))).unwrap();
    let (second, _) =
        experiments::replay(&first.join(MANIFEST_FILE), Some(&dir.path().join("b"))).unwrap();
    let a = RunManifest::load(&first.join(MANIFEST_FILE)).unwrap();
    let b = RunManifest::load(&second.join(MANIFEST_FILE)).unwrap();
    assert_eq!(a.config.experiment.seed, b.config.experiment.seed);
    assert_eq!(a.config.scenario, b.config.scenario);
}

#[test]
fn newer_manifest_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("small_manifest.toml"))
        .unwrap()
        .replace("schema_version = 1", "schema_version = 2");
    let path = dir.path().join(MANIFEST_FILE);
    std::fs::write(&path, text).unwrap();
    let err = experiments::replay(&path, Some(dir.path())).unwrap_err();
    assert!(matches!(err, Error::Incompatible(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert!(!dir.path().join(RESULTS_FILE).exists());
}

#[test]
fn a_different_seed_changes_the_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path());
    let a = experiments::run(&c).unwrap().results_csv().unwrap();
    c.experiment.seed += 1;
    let b = experiments::run(&c).unwrap().results_csv().unwrap();
    assert_ne!(a, b);
}

#[test]
fn csv_rows_are_internally_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path());
    c.experiment.sweep = Some(SweepSpec::parse("theta=0.2,0.9").unwrap());
    let csv = experiments::run(&c).unwrap().results_csv().unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let f = |name: &str| rec[col(name)].parse::<f64>().unwrap();
        let theta = f("value");
        let total = f("t_d") + f("t_u") + f("t_s") + f("handover");
        assert!((total - f("total")).abs() <= 1e-12 * total);
        let handover = f("handovers") * c.constellation.switching_time_s;
        assert!((handover - f("handover")).abs() <= 1e-12);
        let objective = (1.0 - theta) * f("total") + theta * f("loss_proxy");
        assert!((objective - f("objective")).abs() <= 1e-12 * objective);
        rows += 1;
    }
    assert_eq!(rows, 6);
}

#[test]
fn method_order_does_not_change_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path());
    let forward = experiments::run(&c).unwrap();
    c.experiment.methods.reverse();
    c.experiment.workers = Some(2);
    let reversed = experiments::run(&c).unwrap();
    for row in &forward.rows {
        let twin = reversed
            .rows
            .iter()
            .find(|r| r.method == row.method && r.value == row.value)
            .unwrap();
        assert_eq!(twin.objective.to_bits(), row.objective.to_bits());
        assert_eq!(twin.split_layer, row.split_layer);
        assert_eq!(twin.handovers, row.handovers);
    }
}

#[test]
fn environment_overrides() {
    let mut c = ExperimentConfig::default();
    c.apply_env_overrides(|k| match k {
        "HSFL_OUTPUT_DIR" => Some("elsewhere".into()),
        "HSFL_WORKERS" => Some("3".into()),
        _ => None,
    })
    .unwrap();
    assert_eq!(c.experiment.output_dir, PathBuf::from("elsewhere"));
    assert_eq!(c.experiment.workers, Some(3));
    let err = c.apply_env_overrides(|k| (k == "HSFL_WORKERS").then(|| "zero".into()));
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn infeasible_points_name_the_method() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path());
    c.scenario.coverage_radius = 1.0;
    let err = experiments::run(&c).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn bound_curves_have_every_row() {
    let c = ExperimentConfig::default();
    let curves = experiments::bound_curves(&c).unwrap();
    // one row per serving UAV at every split and every scale
    let uavs: std::collections::BTreeSet<&str> = curves
        .by_split
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert!(!uavs.is_empty());
    assert_eq!(curves.by_split.lines().count(), 1 + 8 * uavs.len());
    assert_eq!(
        curves.by_heterogeneity.lines().count(),
        1 + experiments::HETEROGENEITY_SCALES.len() * uavs.len()
    );
}

#[test]
fn oracle_report_on_a_tiny_instance() {
    let mut c = ExperimentConfig::default();
    c.scenario.n_devices = 4;
    let report = experiments::oracle_report(&c).unwrap();
    assert!(report.oracle.objective <= report.proposed.objective * (1.0 + 1e-12));
    assert!(report.relative_gap >= -1e-12);
}
