//! Server/client round protocol.
//!
//! Each round the server samples `C` of `K` clients, broadcasts its copy of
//! the shared slice, lets every selected client train all of its parameters
//! for `E` local epochs, and replaces the shared slice by the sample-count
//! weighted mean of what the clients send back. The [`Strategy`] decides
//! which slice of the parameter vector is shared; the rest never leaves the
//! client.

mod aggregate;
mod checkpoint;
mod client;
mod trace;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{aggregate, aggregation_weights};
pub use checkpoint::{load_checkpoint, Checkpoint};
pub use client::{client_init, client_update, ClientState, ClientUpdateResult};
pub use trace::{Message, MessageKind, MessageTrace};

use crate::data::{ClientShard, DataError};
use crate::metrics::{self, ExperimentResult, MetricsError, RoundLog};
use crate::nn::{init_params, ModelSpec, NnError, ParamSet};
use crate::seed::rng_from;

#[derive(Debug, Error)]
pub enum FedError {
    #[error("C must satisfy 1 <= C <= K (C = {per_round}, K = {clients})")]
    BadC { per_round: usize, clients: usize },
    #[error("invalid federation config: {0}")]
    InvalidConfig(String),
    #[error("parameter layout does not match the model spec")]
    LayoutMismatch,
    #[error("no client updates to aggregate")]
    EmptyUpdateSet,
    #[error("update slice lengths differ: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("participating clients hold zero samples in total")]
    ZeroSamples,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = FedError> = std::result::Result<T, E>;

/// Which part of the parameter vector travels between clients and server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Whole vector.
    #[serde(rename = "FED_AVG")]
    FedAvg,
    /// Generic slice only; the classification head stays on the client.
    #[serde(rename = "HDAFL")]
    Hdafl,
    /// Specific slice only; the feature extractor stays on the client.
    #[serde(rename = "LG_COMPLEMENT")]
    LgComplement,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::FedAvg, Strategy::Hdafl, Strategy::LgComplement];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::FedAvg => "FED_AVG",
            Strategy::Hdafl => "HDAFL",
            Strategy::LgComplement => "LG_COMPLEMENT",
        }
    }

    pub fn shared_range(self, params: &ParamSet) -> Range<usize> {
        match self {
            Strategy::FedAvg => 0..params.len(),
            Strategy::Hdafl => params.generic_range(),
            Strategy::LgComplement => params.specific_range(),
        }
    }

    pub fn shared_len(self, spec: &ModelSpec) -> usize {
        match self {
            Strategy::FedAvg => spec.param_count(),
            Strategy::Hdafl => spec.generic_param_count(),
            Strategy::LgComplement => spec.specific_param_count(),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy {s:?} (expected FED_AVG, HDAFL or LG_COMPLEMENT)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    /// Total clients.
    #[serde(rename = "K")]
    pub clients: usize,
    /// Clients sampled per round.
    #[serde(rename = "C")]
    pub per_round: usize,
    /// Maximum rounds.
    #[serde(rename = "T")]
    pub rounds: usize,
    /// Local epochs per round.
    #[serde(rename = "E")]
    pub local_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub strategy: Strategy,
    pub seed_selection: u64,
    pub seed_init: u64,
    pub seed_train: u64,
    /// Accuracy used by `early_stop`.
    pub target_accuracy: Option<f64>,
    pub early_stop: bool,
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_round == 0 || self.per_round > self.clients {
            return Err(FedError::BadC {
                per_round: self.per_round,
                clients: self.clients,
            });
        }
        if self.rounds == 0 {
            return Err(FedError::InvalidConfig("T must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(FedError::InvalidConfig("lr must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(FedError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.early_stop && self.target_accuracy.is_none() {
            return Err(FedError::InvalidConfig("early_stop needs target_accuracy".into()));
        }
        Ok(())
    }
}

/// Server-side state: the round counter and the server's copy of the shared
/// slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub round: usize,
    pub shared: Vec<f64>,
    pub seed_selection: u64,
}

/// Uniform sample of `C` distinct clients for round `t`, in ascending order.
/// Depends only on `(seed_selection, t, K, C)`, so every strategy sees the
/// same sequence of client sets.
pub fn select_clients(t: usize, cfg: &FederationConfig) -> Result<Vec<usize>> {
    if cfg.per_round == 0 || cfg.per_round > cfg.clients {
        return Err(FedError::BadC {
            per_round: cfg.per_round,
            clients: cfg.clients,
        });
    }
    let mut rng = rng_from(cfg.seed_selection, &[t as u64]);
    let mut picked = rand::seq::index::sample(&mut rng, cfg.clients, cfg.per_round).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Execution knobs that never change results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads for client updates; `None` uses rayon's global pool.
    pub threads: Option<usize>,
    /// Record every transmitted payload.
    pub record_trace: bool,
}

/// Reads `FEDPART_THREADS`; unset or unparsable means "default".
pub fn threads_from_env() -> Option<usize> {
    std::env::var("FEDPART_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n| n > 0)
}

/// A running federation: server, all clients and optional message trace.
pub struct Federation {
    spec: ModelSpec,
    cfg: FederationConfig,
    server: ServerState,
    clients: Vec<ClientState>,
    trace: Option<MessageTrace>,
    cumulative_bytes: u64,
    pool: Option<rayon::ThreadPool>,
}

impl Federation {
    /// Initializes `wb_0 ++ wl_0` from `seed_init` and copies it to every
    /// client. `shards[k]` must belong to client `k`.
    pub fn new(cfg: FederationConfig, spec: ModelSpec, shards: Vec<ClientShard>, options: RunOptions) -> Result<Self> {
        cfg.validate()?;
        if shards.len() != cfg.clients {
            return Err(FedError::InvalidConfig(format!(
                "expected {} shards, got {}",
                cfg.clients,
                shards.len()
            )));
        }
        if let Some((k, _)) = shards.iter().enumerate().find(|(k, s)| s.client_id != *k) {
            return Err(FedError::InvalidConfig(format!("shard {k} has a mismatched client_id")));
        }
        let init = init_params(&spec, cfg.seed_init)?;
        let shared = init.values()[cfg.strategy.shared_range(&init)].to_vec();
        let mut trace = options.record_trace.then(MessageTrace::default);
        let clients = shards
            .into_iter()
            .map(|shard| {
                if let Some(trace) = trace.as_mut() {
                    trace.record(0, MessageKind::Init, shard.client_id, init.values());
                }
                client_init(shard, &shared, &init, cfg.strategy)
            })
            .collect::<Result<Vec<_>>>()?;
        let pool = options
            .threads
            .map(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build())
            .transpose()
            .map_err(|e| FedError::InvalidConfig(format!("thread pool: {e}")))?;
        Ok(Self {
            server: ServerState {
                round: 0,
                shared,
                seed_selection: cfg.seed_selection,
            },
            spec,
            cfg,
            clients,
            trace,
            cumulative_bytes: 0,
            pool,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn config(&self) -> &FederationConfig {
        &self.cfg
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn trace(&self) -> Option<&MessageTrace> {
        self.trace.as_ref()
    }

    /// Parameters client `k` would predict with right now: the server's
    /// shared slice combined with the client's private slice.
    pub fn effective_params(&self, k: usize) -> Result<ParamSet> {
        let client = &self.clients[k];
        let range = self.cfg.strategy.shared_range(&client.params);
        Ok(client.params.with_slice(range, &self.server.shared)?)
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }

    /// One round: select, broadcast, local updates, aggregate, evaluate.
    pub fn run_round(&mut self) -> Result<RoundLog> {
        let t = self.server.round + 1;
        let selected = select_clients(t, &self.cfg)?;
        let broadcast = self.server.shared.clone();
        if let Some(trace) = self.trace.as_mut() {
            for &k in &selected {
                trace.record(t, MessageKind::Broadcast, k, &broadcast);
            }
        }

        let (spec, cfg) = (&self.spec, &self.cfg);
        let (clients, pool) = (&mut self.clients, &self.pool);
        let selected_ref = &selected;
        let mut work = move || {
            clients
                .par_iter_mut()
                .filter(|c| selected_ref.binary_search(&c.client_id).is_ok())
                .map(|c| client_update(c, &broadcast, spec, cfg, t))
                .collect::<Result<Vec<_>>>()
        };
        let mut updates = match pool {
            Some(pool) => pool.install(work),
            None => work(),
        }?;
        updates.sort_by_key(|u| u.client_id);

        if let Some(trace) = self.trace.as_mut() {
            for u in &updates {
                trace.record(t, MessageKind::Upload, u.client_id, &u.shared_slice);
            }
        }

        self.server.shared = aggregate(&updates)?;
        self.server.round = t;

        let eval = self.install(|| {
            metrics::eval_all_clients(&self.clients, &self.server.shared, self.cfg.strategy, &self.spec)
        })?;
        let (uplink_bytes, downlink_bytes) =
            metrics::comm_cost_round(self.cfg.strategy, &self.spec, self.cfg.per_round);
        self.cumulative_bytes += uplink_bytes + downlink_bytes;
        Ok(RoundLog {
            round: t,
            mean_client_accuracy: eval.0,
            mean_client_loss: eval.1,
            uplink_bytes,
            downlink_bytes,
            cumulative_bytes: self.cumulative_bytes,
            selected,
        })
    }

    /// Runs up to `T` rounds, stopping early only when `early_stop` is set
    /// and the target accuracy is reached.
    pub fn run(&mut self) -> Result<ExperimentResult> {
        let started = Instant::now();
        let mut logs = Vec::with_capacity(self.cfg.rounds);
        while self.server.round < self.cfg.rounds {
            let log = self.run_round()?;
            let hit = self
                .cfg
                .target_accuracy
                .is_some_and(|target| log.mean_client_accuracy >= target);
            log::debug!(
                "round {} acc {:.4} loss {:.4}",
                log.round,
                log.mean_client_accuracy,
                log.mean_client_loss
            );
            logs.push(log);
            if self.cfg.early_stop && hit {
                break;
            }
        }
        Ok(ExperimentResult {
            config: self.cfg.clone(),
            spec: self.spec.clone(),
            logs,
            wall_seconds: started.elapsed().as_secs_f64(),
        })
    }

    /// Writes `checkpoint.bin` and `checkpoint.json` into `dir`.
    pub fn save_checkpoint(&self, dir: impl AsRef<std::path::Path>) -> Result<()> {
        checkpoint::save(self, dir.as_ref())
    }
}

/// Builds a federation with default options and runs it to completion.
pub fn run_experiment(cfg: &FederationConfig, spec: &ModelSpec, shards: Vec<ClientShard>) -> Result<ExperimentResult> {
    run_experiment_with(cfg, spec, shards, RunOptions::default())
}

pub fn run_experiment_with(
    cfg: &FederationConfig,
    spec: &ModelSpec,
    shards: Vec<ClientShard>,
    options: RunOptions,
) -> Result<ExperimentResult> {
    Federation::new(cfg.clone(), spec.clone(), shards, options)?.run()
}
