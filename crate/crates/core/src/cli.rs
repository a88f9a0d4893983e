//! Command-line front end: config resolution, artifact writing, exit codes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{run_experiment, Check, ExperimentName, Outcome, Resolution};
use crate::rng::RNG_ALGORITHM;
use crate::sdelt::SpecFile;

pub const SCHEMA_VERSION: u32 = 1;
pub const DT_EXPONENT_RANGE: (u32, u32) = (8, 24);

pub const EXIT_PASS: i32 = 0;
pub const EXIT_THRESHOLD: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentName,
    pub resolution: Resolution,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SpecFile>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentName, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            experiment,
            resolution: experiment.default_resolution(),
            seed: 1,
            spec: None,
            output_dir: output_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.resolution;
        let (lo, hi) = DT_EXPONENT_RANGE;
        if r.dt_exponent < lo || r.dt_exponent > hi {
            return Err(Error::Config(format!("dt_exponent {} outside [{lo}, {hi}]", r.dt_exponent)));
        }
        if r.n_paths == 0 {
            return Err(Error::Config("n_paths must be >= 1".into()));
        }
        if r.level_spacing_exponent == 0 || r.level_spacing_exponent > r.dt_exponent {
            return Err(Error::Config(format!(
                "level_spacing_exponent {} outside [1, dt_exponent]",
                r.level_spacing_exponent
            )));
        }
        if self.spec.is_some() && !self.experiment.takes_spec() {
            return Err(Error::Config(format!("experiment {} does not take a spec", self.experiment)));
        }
        if let Some(s) = &self.spec {
            s.to_spec()?;
        }
        Ok(())
    }
}

/// Partial config as read from a file; any field may come from flags instead.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    experiment: Option<ExperimentName>,
    resolution: Option<PartialResolution>,
    seed: Option<u64>,
    spec: Option<SpecFile>,
    output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialResolution {
    dt_exponent: Option<u32>,
    level_spacing_exponent: Option<u32>,
    n_paths: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub library_version: String,
    pub rng: String,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResultFile<'a> {
    pub schema_version: u32,
    pub experiment: ExperimentName,
    pub passed: bool,
    pub summary: &'a std::collections::BTreeMap<String, f64>,
    pub thresholds: &'a [Check],
}

#[derive(Debug, Parser)]
#[command(name = "lts", version, about = "Local time and SDE-with-local-time experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[arg(long, value_enum)]
    pub experiment: Option<ExperimentName>,
    /// JSON config (or a previous run's manifest.json).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long = "dt-exp")]
    pub dt_exp: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print every registered experiment.
    #[command(alias = "list")]
    ListExperiments,
}

pub fn list_experiments() -> String {
    let mut s = String::new();
    for e in ExperimentName::ALL {
        let (what, anchor) = e.describe();
        s.push_str(&format!("{:<24} {what} [{anchor}]\n", e.as_str()));
    }
    s
}

fn read_config_file(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    // a manifest carries the resolved config under "config"
    let v = match v.get("config") {
        Some(c) if v.get("schema_version").is_some() => c.clone(),
        _ => v,
    };
    serde_json::from_value(v).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Merges config file and flags (flags win) into a validated config.
pub fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let file = match &cli.config {
        Some(p) => read_config_file(p)?,
        None => ConfigFile::default(),
    };
    let experiment = cli
        .experiment
        .or(file.experiment)
        .ok_or_else(|| Error::Config("no experiment given (--experiment or config)".into()))?;
    let mut cfg = ExperimentConfig::new(experiment, cli.out.clone().or(file.output_dir).unwrap_or_else(|| PathBuf::from("out")));
    if let Some(r) = file.resolution {
        if let Some(v) = r.dt_exponent {
            cfg.resolution.dt_exponent = v;
        }
        if let Some(v) = r.level_spacing_exponent {
            cfg.resolution.level_spacing_exponent = v;
        }
        if let Some(v) = r.n_paths {
            cfg.resolution.n_paths = v;
        }
    }
    if let Some(v) = cli.dt_exp {
        cfg.resolution.dt_exponent = v;
    }
    if let Some(v) = cli.paths {
        cfg.resolution.n_paths = v;
    }
    cfg.seed = cli.seed.or(file.seed).unwrap_or(1);
    cfg.spec = file.spec;
    cfg.validate()?;
    Ok(cfg)
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Contract(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

/// Runs a validated config and writes `result.json`, `table.csv` and
/// `manifest.json` into its output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let out = run_experiment(cfg.experiment, &cfg.resolution, cfg.seed, cfg.spec.as_ref())?;
    write_artifacts(cfg, &out)?;
    Ok(out)
}

pub fn write_artifacts(cfg: &ExperimentConfig, out: &Outcome) -> Result<()> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let result = ResultFile {
        schema_version: SCHEMA_VERSION,
        experiment: cfg.experiment,
        passed: out.passed(),
        summary: &out.summary,
        thresholds: &out.checks,
    };
    fs::write(dir.join("result.json"), to_json(&result)?)?;
    out.table.write_csv(BufWriter::new(fs::File::create(dir.join("table.csv"))?))?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        rng: RNG_ALGORITHM.to_string(),
        config: cfg.clone(),
    };
    fs::write(dir.join("manifest.json"), to_json(&manifest)?)?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    // non-finite statistics serialise as null
    serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))
}

/// Full command-line behaviour; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    if let Some(Command::ListExperiments) = cli.command {
        let _ = write!(std::io::stdout(), "{}", list_experiments());
        return EXIT_PASS;
    }
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    match run(&cfg) {
        Ok(out) => {
            for c in &out.checks {
                let mark = if c.pass { "pass" } else { "FAIL" };
                let _ = writeln!(std::io::stdout(), "{mark:<5} {} = {:.6e} (limit {:.6e})", c.name, c.value, c.limit);
            }
            if out.passed() {
                EXIT_PASS
            } else {
                EXIT_THRESHOLD
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
