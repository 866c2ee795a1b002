//! Experiment driver behind the `fedpart` binary.
//!
//! Every subcommand returns a [`CliError`] whose [`CliError::exit_code`] is
//! 1 for configuration problems and 2 for runtime failures.

pub mod config;
mod gradcheck;

use std::path::{Path, PathBuf};

use fedpart_core::data::write_csv as write_dataset_csv;
use fedpart_core::federation::{run_experiment_with, threads_from_env, RunOptions};
use fedpart_core::metrics::{rounds_to_target, write_csv, ExperimentResult};
use fedpart_core::Strategy;
use serde_json::{json, Map, Value};
use thiserror::Error;

pub use config::ExperimentConfig;
pub use gradcheck::{cmd_gradcheck, parse_layers, parse_shape, GradcheckArgs, GradcheckOutcome, PARAM_CAP};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed_init: Option<u64>,
    pub seed_selection: Option<u64>,
    pub seed_train: Option<u64>,
    pub seed_data: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let s = &mut cfg.seeds;
        s.init = self.seed_init.unwrap_or(s.init);
        s.selection = self.seed_selection.unwrap_or(s.selection);
        s.train = self.seed_train.unwrap_or(s.train);
        s.data = self.seed_data.unwrap_or(s.data);
        if let Some(out) = &self.out {
            cfg.output.csv = Some(out.clone());
        }
    }
}

/// Loads a config file and applies overrides. Returns the config and the
/// directory relative config paths resolve against.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    overrides.apply(&mut cfg);
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

/// Builds data, shards and model from `cfg` and runs one experiment.
pub fn run_config(cfg: &ExperimentConfig, base_dir: &Path, options: RunOptions) -> Result<ExperimentResult, CliError> {
    let (dataset, tags) = cfg.build_dataset(base_dir)?;
    let spec = cfg.model_spec(&dataset)?;
    let shards = cfg.build_shards(&dataset, tags.as_deref())?;
    run_experiment_with(&cfg.federation_config(), &spec, shards, options).map_err(|e| CliError::Runtime(e.to_string()))
}

fn csv_path(cfg: &ExperimentConfig, base_dir: &Path, overridden: bool) -> Result<PathBuf, CliError> {
    let path = cfg.output.csv.clone().ok_or_else(|| CliError::Config {
        key: "output.csv".into(),
        message: "an output CSV path is required (config or --out)".into(),
    })?;
    // Paths given on the command line are relative to the working directory.
    Ok(if overridden || path.is_absolute() { path } else { base_dir.join(path) })
}

fn write_result(result: &ExperimentResult, path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    write_csv(result, path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// `{final_accuracy, rounds_to_target (when a target is set), total_MB}`.
pub fn summary(result: &ExperimentResult) -> Value {
    let mut m = Map::new();
    m.insert("final_accuracy".into(), json!(result.final_accuracy()));
    if let Some(target) = result.config.target_accuracy {
        m.insert("rounds_to_target".into(), json!(rounds_to_target(&result.logs, target)));
    }
    m.insert("total_MB".into(), json!(result.total_mb()));
    Value::Object(m)
}

fn options() -> RunOptions {
    RunOptions {
        threads: threads_from_env(),
        record_trace: false,
    }
}

/// Runs the configured experiment, writes its CSV and returns the summary.
pub fn cmd_run(config_path: &Path, overrides: &Overrides) -> Result<Value, CliError> {
    let (cfg, base) = load_config(config_path, overrides)?;
    let out = csv_path(&cfg, &base, overrides.out.is_some())?;
    let result = run_config(&cfg, &base, options())?;
    write_result(&result, &out)?;
    log::info!("wrote {}", out.display());
    Ok(summary(&result))
}

/// `runs/exp.csv` + `HDAFL` -> `runs/exp_HDAFL.csv`.
pub fn strategy_csv_path(base: &Path, strategy: Strategy) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = base.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    base.with_file_name(format!("{stem}_{}.{ext}", strategy.name()))
}

/// Path of the comparison JSON written next to the per-strategy CSVs.
pub fn comparison_json_path(base: &Path) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    base.with_file_name(format!("{stem}_compare.json"))
}

/// Runs every strategy on the same shards and seeds. With one strategy this
/// is `cmd_run` with the strategy replaced.
pub fn cmd_compare(config_path: &Path, strategies: &[Strategy], overrides: &Overrides) -> Result<Value, CliError> {
    let (mut cfg, base) = load_config(config_path, overrides)?;
    let mut unique: Vec<Strategy> = Vec::new();
    for &s in strategies {
        if !unique.contains(&s) {
            unique.push(s);
        }
    }
    if unique.is_empty() {
        return Err(CliError::Config {
            key: "strategies".into(),
            message: "at least one strategy is required".into(),
        });
    }
    let out = csv_path(&cfg, &base, overrides.out.is_some())?;
    if let [only] = unique[..] {
        cfg.federation.strategy = only;
        let result = run_config(&cfg, &base, options())?;
        write_result(&result, &out)?;
        return Ok(summary(&result));
    }

    let (dataset, tags) = cfg.build_dataset(&base)?;
    let spec = cfg.model_spec(&dataset)?;
    let shards = cfg.build_shards(&dataset, tags.as_deref())?;
    let mut table = Map::new();
    for &strategy in &unique {
        let mut fed = cfg.federation_config();
        fed.strategy = strategy;
        let result = run_experiment_with(&fed, &spec, shards.clone(), options())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        write_result(&result, &strategy_csv_path(&out, strategy))?;
        table.insert(strategy.name().into(), summary(&result));
    }
    let value = Value::Object(table);
    let json_path = comparison_json_path(&out);
    std::fs::write(&json_path, format!("{value}\n")).map_err(|e| CliError::Runtime(format!("{}: {e}", json_path.display())))?;
    Ok(value)
}

/// Writes the configured dataset in the external CSV format and returns the
/// number of rows.
pub fn cmd_gen_data(config_path: &Path, out: &Path, overrides: &Overrides) -> Result<usize, CliError> {
    let (cfg, base) = load_config(config_path, overrides)?;
    let (dataset, _) = cfg.build_dataset(&base)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    write_dataset_csv(&dataset, out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    Ok(dataset.len())
}
