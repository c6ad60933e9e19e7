use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hsfl_core::experiments::{self, ExperimentConfig, Method, RunOutput, SweepSpec};
use hsfl_core::{BaselineKind, Error};

#[derive(Parser)]
#[command(
    name = "hsfl",
    version,
    about = "Split-layer, association and resource-allocation solver for hierarchical split federated learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured instance or sweep and write results.csv.
    Run(RunArgs),
    /// Re-run an experiment from its manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write loss-bound curves over split layer and heterogeneity.
    Bound(ConfigArgs),
    /// Compare the solver with exhaustive search on a small instance.
    Oracle(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Ra,
    Era,
    Hfl,
    Dda,
    All,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Also run these baselines; repeatable.
    #[arg(long, value_enum)]
    baseline: Vec<BaselineArg>,
    /// Sweep one parameter, e.g. `total_bandwidth=1e7,2e7,3e7`.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, Error> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.apply_env_overrides(|k| std::env::var(k).ok())?;
    if let Some(out) = &args.out {
        config.experiment.output_dir = out.clone();
    }
    Ok(config)
}

fn print_rows(dir: &Path, output: &RunOutput) {
    println!(
        "{:<9} {:>14} {:>3} {:>14} {:>12}",
        "method", "value", "l", "objective", "T[s]"
    );
    for r in &output.rows {
        let value = r.value.map_or("-".to_string(), |v| v.to_string());
        println!(
            "{:<9} {:>14} {:>3} {:>14.6} {:>12.6}",
            r.method.to_string(),
            value,
            r.split_layer,
            r.objective,
            r.total
        );
    }
    println!("wrote {}", dir.display());
}

fn run(args: RunArgs) -> Result<(), Error> {
    let mut config = load_config(&args.common)?;
    if let Some(seed) = args.seed {
        config.experiment.seed = seed;
    }
    if let Some(sweep) = &args.sweep {
        config.experiment.sweep = Some(SweepSpec::parse(sweep)?);
    }
    for b in args.baseline {
        let kinds: &[BaselineKind] = match b {
            BaselineArg::Ra => &[BaselineKind::Ra],
            BaselineArg::Era => &[BaselineKind::Era],
            BaselineArg::Hfl => &[BaselineKind::Hfl],
            BaselineArg::Dda => &[BaselineKind::Dda],
            BaselineArg::All => &BaselineKind::ALL,
        };
        for &k in kinds {
            let m = Method::from(k);
            if !config.experiment.methods.contains(&m) {
                config.experiment.methods.push(m);
            }
        }
    }
    config.validate()?;
    let (dir, output) = experiments::run_to_dir(&config)?;
    print_rows(&dir, &output);
    Ok(())
}

fn write(path: PathBuf, contents: &str) -> Result<(), Error> {
    std::fs::write(&path, contents).map_err(|e| Error::Io { path, source: e })
}

fn bound(args: ConfigArgs) -> Result<(), Error> {
    let config = load_config(&args)?;
    let curves = experiments::bound_curves(&config)?;
    let dir = &config.experiment.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    write(dir.join("bound_vs_split.csv"), &curves.by_split)?;
    write(
        dir.join("bound_vs_heterogeneity.csv"),
        &curves.by_heterogeneity,
    )?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn oracle(args: ConfigArgs) -> Result<(), Error> {
    let config = load_config(&args)?;
    let report = experiments::oracle_report(&config)?;
    let dir = &config.experiment.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let json =
        serde_json::to_string_pretty(&report).map_err(|e| Error::Serialize(e.to_string()))?;
    write(dir.join("oracle.json"), &json)?;
    println!(
        "oracle    l={} objective={}",
        report.oracle.split_layer, report.oracle.objective
    );
    println!(
        "proposed  l={} objective={}",
        report.proposed.split_layer, report.proposed.objective
    );
    println!("relative gap {:.6}", report.relative_gap);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Replay { manifest, out } => {
            let out = out.or_else(|| std::env::var_os("HSFL_OUTPUT_DIR").map(PathBuf::from));
            experiments::replay(&manifest, out.as_deref())
                .map(|(dir, output)| print_rows(&dir, &output))
        }
        Command::Bound(args) => bound(args),
        Command::Oracle(args) => oracle(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
