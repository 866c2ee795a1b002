//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "model": { "layers": [ {"kind": "dense", "in_dim": 16, "out_dim": 32},
//!                          {"kind": "relu"},
//!                          {"kind": "dense", "in_dim": 32, "out_dim": 20} ],
//!              "specific_from": 2 },
//!   "data": { "source": {"kind": "blobs", "num_classes": 20, "per_class": 100,
//!                        "dim": 16, "spread": 1.0},
//!             "partition": {"policy": "noniid", "alpha": 0.5},
//!             "test_frac": 0.2 },
//!   "federation": { "K": 20, "C": 10, "T": 50, "E": 1, "lr": 0.1,
//!                   "batch_size": 32, "strategy": "HDAFL" },
//!   "seeds": { "init": 0, "selection": 1, "train": 2, "data": 3 },
//!   "output": { "csv": "runs/hdafl.csv" }
//! }
//! ```
//!
//! Unknown keys are rejected everywhere. The model's input shape and class
//! count come from the data.

use std::path::{Path, PathBuf};

use fedpart_core::data::{
    gen_blobs, gen_conflicting_modes, load_csv, partition, train_test_split, ClientShard, Dataset,
    PartitionPlan, PartitionPolicy,
};
use fedpart_core::federation::FederationConfig;
use fedpart_core::nn::{LayerSpec, ModelSpec, NnError};
use fedpart_core::seed::mix_seed;
use fedpart_core::Strategy;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub data: DataSection,
    pub federation: FederationSection,
    #[serde(default)]
    pub seeds: SeedSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub layers: Vec<LayerSpec>,
    pub specific_from: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: SourceSection,
    pub partition: PartitionSection,
    #[serde(default = "default_test_frac")]
    pub test_frac: f64,
}

fn default_test_frac() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Blobs,
    ConflictingModes,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub kind: SourceKind,
    pub num_classes: Option<usize>,
    pub per_class: Option<usize>,
    pub dim: Option<usize>,
    pub spread: Option<f64>,
    pub num_modes: Option<usize>,
    #[serde(default)]
    pub label_conflict: bool,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Iid,
    Noniid,
    Disjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub policy: PolicyKind,
    pub alpha: Option<f64>,
    pub classes_per_client: Option<usize>,
}

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationSection {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "C")]
    pub c: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "E")]
    pub e: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub strategy: Strategy,
    pub target_accuracy: Option<f64>,
    #[serde(default)]
    pub early_stop: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSection {
    #[serde(default)]
    pub init: u64,
    #[serde(default)]
    pub selection: u64,
    #[serde(default)]
    pub train: u64,
    #[serde(default)]
    pub data: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub csv: Option<PathBuf>,
}

fn cfg_err(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config {
            key: json_error_key(&e.to_string()),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err("<file>", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks everything that can be checked without generating data.
    pub fn validate(&self) -> Result<(), CliError> {
        let f = &self.federation;
        if f.k == 0 {
            return Err(cfg_err("federation.K", "K must be at least 1"));
        }
        if f.c == 0 || f.c > f.k {
            return Err(cfg_err("federation.C", format!("C must satisfy 1 <= C <= K (C = {}, K = {})", f.c, f.k)));
        }
        if f.t == 0 {
            return Err(cfg_err("federation.T", "T must be at least 1"));
        }
        if !(f.lr > 0.0 && f.lr.is_finite()) {
            return Err(cfg_err("federation.lr", "lr must be positive"));
        }
        if f.batch_size == 0 {
            return Err(cfg_err("federation.batch_size", "batch_size must be at least 1"));
        }
        if let Some(t) = f.target_accuracy {
            if !(0.0..=1.0).contains(&t) {
                return Err(cfg_err("federation.target_accuracy", "must lie in [0, 1]"));
            }
        } else if f.early_stop {
            return Err(cfg_err("federation.early_stop", "early_stop needs target_accuracy"));
        }
        let d = &self.data;
        if !(d.test_frac > 0.0 && d.test_frac < 1.0) {
            return Err(cfg_err("data.test_frac", "test_frac must lie in (0, 1)"));
        }
        self.validate_source()?;
        match d.partition.policy {
            PolicyKind::Noniid => {
                if let Some(a) = d.partition.alpha {
                    if !(a > 0.0 && a.is_finite()) {
                        return Err(cfg_err("data.partition.alpha", "alpha must be positive"));
                    }
                }
            }
            PolicyKind::Disjoint => match d.partition.classes_per_client {
                None => return Err(cfg_err("data.partition.classes_per_client", "required for disjoint")),
                Some(0) => return Err(cfg_err("data.partition.classes_per_client", "must be positive")),
                Some(_) => {}
            },
            PolicyKind::Iid => {}
        }
        if d.partition.policy != PolicyKind::Noniid && d.partition.alpha.is_some() {
            return Err(cfg_err("data.partition.alpha", "only valid for the noniid policy"));
        }
        if d.partition.policy != PolicyKind::Disjoint && d.partition.classes_per_client.is_some() {
            return Err(cfg_err(
                "data.partition.classes_per_client",
                "only valid for the disjoint policy",
            ));
        }
        if self.model.layers.is_empty() {
            return Err(cfg_err("model.layers", "at least one layer is required"));
        }
        if self.model.specific_from > self.model.layers.len() {
            return Err(cfg_err("model.specific_from", "must not exceed the number of layers"));
        }
        Ok(())
    }

    fn validate_source(&self) -> Result<(), CliError> {
        let s = &self.data.source;
        let require = |v: Option<usize>, key: &str, min: usize| -> Result<(), CliError> {
            match v {
                None => Err(cfg_err(key, "required for this source kind")),
                Some(x) if x < min => Err(cfg_err(key, format!("must be at least {min}"))),
                Some(_) => Ok(()),
            }
        };
        match s.kind {
            SourceKind::Blobs | SourceKind::ConflictingModes => {
                require(s.num_classes, "data.source.num_classes", 2)?;
                require(s.per_class, "data.source.per_class", 1)?;
                require(s.dim, "data.source.dim", 1)?;
                match s.spread {
                    None => return Err(cfg_err("data.source.spread", "required for this source kind")),
                    Some(x) if !(x >= 0.0 && x.is_finite()) => {
                        return Err(cfg_err("data.source.spread", "spread must be >= 0"))
                    }
                    Some(_) => {}
                }
                if s.kind == SourceKind::ConflictingModes {
                    require(s.num_modes, "data.source.num_modes", 2)?;
                    if s.label_conflict && s.num_modes > s.num_classes {
                        return Err(cfg_err("data.source.num_modes", "label conflict needs num_modes <= num_classes"));
                    }
                } else if s.num_modes.is_some() || s.label_conflict {
                    return Err(cfg_err("data.source.num_modes", "only valid for conflicting_modes"));
                }
                if s.path.is_some() {
                    return Err(cfg_err("data.source.path", "only valid for the csv source"));
                }
            }
            SourceKind::Csv => {
                if s.path.is_none() {
                    return Err(cfg_err("data.source.path", "required for the csv source"));
                }
                for (v, key) in [
                    (s.per_class, "data.source.per_class"),
                    (s.dim, "data.source.dim"),
                    (s.num_modes, "data.source.num_modes"),
                ] {
                    if v.is_some() {
                        return Err(cfg_err(key, "not valid for the csv source"));
                    }
                }
                if s.spread.is_some() {
                    return Err(cfg_err("data.source.spread", "not valid for the csv source"));
                }
            }
        }
        Ok(())
    }

    /// The configured dataset plus mode tags when the source has modes.
    /// Relative CSV paths resolve against `base_dir`.
    pub fn build_dataset(&self, base_dir: &Path) -> Result<(Dataset, Option<Vec<usize>>), CliError> {
        let s = &self.data.source;
        let seed = self.seeds.data;
        let runtime = |e: fedpart_core::data::DataError| CliError::Runtime(e.to_string());
        match s.kind {
            SourceKind::Blobs => Ok((
                gen_blobs(
                    s.num_classes.unwrap(),
                    s.per_class.unwrap(),
                    s.dim.unwrap(),
                    s.spread.unwrap(),
                    seed,
                )
                .map_err(runtime)?,
                None,
            )),
            SourceKind::ConflictingModes => {
                let out = gen_conflicting_modes(
                    s.num_classes.unwrap(),
                    s.per_class.unwrap(),
                    s.dim.unwrap(),
                    s.spread.unwrap(),
                    s.num_modes.unwrap(),
                    s.label_conflict,
                    seed,
                )
                .map_err(runtime)?;
                Ok((out.dataset, Some(out.mode_tags)))
            }
            SourceKind::Csv => {
                let path = s.path.as_ref().unwrap();
                let path = if path.is_relative() { base_dir.join(path) } else { path.clone() };
                let ds = load_csv(&path, s.num_classes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
                Ok((ds, None))
            }
        }
    }

    pub fn partition_plan(&self) -> PartitionPlan {
        let p = &self.data.partition;
        let policy = match p.policy {
            PolicyKind::Iid => PartitionPolicy::Iid,
            PolicyKind::Noniid => PartitionPolicy::NonIidDirichlet {
                alpha: p.alpha.unwrap_or(DEFAULT_ALPHA),
            },
            PolicyKind::Disjoint => PartitionPolicy::Disjoint {
                classes_per_client: p.classes_per_client.unwrap(),
            },
        };
        PartitionPlan {
            policy,
            clients: self.federation.k,
            seed: mix_seed(self.seeds.data, &[1]),
        }
    }

    /// Partitions and splits the dataset into `K` client shards.
    pub fn build_shards(&self, dataset: &Dataset, mode_tags: Option<&[usize]>) -> Result<Vec<ClientShard>, CliError> {
        let plan = self.partition_plan();
        plan.validate(dataset.num_classes()).map_err(|e| match e {
            fedpart_core::data::DataError::TooManyClients { .. } => cfg_err("federation.K", e.to_string()),
            other => cfg_err("data.partition", other.to_string()),
        })?;
        let shards = partition(dataset, &plan, mode_tags).map_err(|e| CliError::Runtime(e.to_string()))?;
        shards
            .iter()
            .map(|s| {
                train_test_split(s, self.data.test_frac, mix_seed(self.seeds.data, &[2, s.client_id as u64]))
                    .map_err(|e| CliError::Runtime(e.to_string()))
            })
            .collect()
    }

    pub fn model_spec(&self, dataset: &Dataset) -> Result<ModelSpec, CliError> {
        ModelSpec::new(
            dataset.sample_shape().to_vec(),
            self.model.layers.clone(),
            self.model.specific_from,
            dataset.num_classes(),
        )
        .map_err(|e| {
            let key = match e {
                NnError::BadBoundary => "model.specific_from",
                _ => "model.layers",
            };
            cfg_err(key, e.to_string())
        })
    }

    pub fn federation_config(&self) -> FederationConfig {
        let f = &self.federation;
        FederationConfig {
            clients: f.k,
            per_round: f.c,
            rounds: f.t,
            local_epochs: f.e,
            lr: f.lr,
            batch_size: f.batch_size,
            strategy: f.strategy,
            seed_selection: self.seeds.selection,
            seed_init: self.seeds.init,
            seed_train: self.seeds.train,
            target_accuracy: f.target_accuracy,
            early_stop: f.early_stop,
        }
    }
}

/// Best-effort key extraction from a serde_json message such as
/// "unknown field `foo`, expected ..." or "missing field `C`".
fn json_error_key(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<json>".into())
}
