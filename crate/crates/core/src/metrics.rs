//! Client evaluation, payload byte accounting and per-round CSV export.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::federation::{ClientState, FederationConfig, Strategy};
use crate::nn::{evaluate, ModelSpec, NnError};

/// Bytes per parameter on the wire (32-bit floats).
pub const BYTES_PER_PARAM: u64 = 4;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("client {0} has an empty test set")]
    EmptyTestSet(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {what}")]
    Parse { line: usize, what: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    /// 1-based round index.
    pub round: usize,
    pub mean_client_accuracy: f64,
    pub mean_client_loss: f64,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub cumulative_bytes: u64,
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: FederationConfig,
    pub spec: ModelSpec,
    pub logs: Vec<RoundLog>,
    /// Not covered by the determinism contract.
    pub wall_seconds: f64,
}

impl ExperimentResult {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.logs.last().map(|l| l.mean_client_accuracy)
    }

    pub fn total_bytes(&self) -> u64 {
        self.logs.last().map_or(0, |l| l.cumulative_bytes)
    }

    /// Decimal megabytes.
    pub fn total_mb(&self) -> f64 {
        self.total_bytes() as f64 / 1e6
    }
}

/// Unweighted mean of per-client test accuracy and loss. Client `k` is
/// evaluated on its own test split with the server's shared slice spliced
/// into its parameters.
pub fn eval_all_clients(
    clients: &[ClientState],
    server_shared: &[f64],
    strategy: Strategy,
    spec: &ModelSpec,
) -> Result<(f64, f64), MetricsError> {
    let per_client = clients
        .par_iter()
        .map(|c| {
            if c.shard.test.is_empty() {
                return Err(MetricsError::EmptyTestSet(c.client_id));
            }
            let range = strategy.shared_range(&c.params);
            let params = c.params.with_slice(range, server_shared)?;
            Ok(evaluate(spec, &params, &c.shard.test)?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = per_client.len() as f64;
    let acc = per_client.iter().map(|e| e.accuracy).sum::<f64>() / n;
    let loss = per_client.iter().map(|e| e.mean_loss).sum::<f64>() / n;
    Ok((acc, loss))
}

/// `(uplink, downlink)` payload bytes for one round with `per_round`
/// selected clients.
pub fn comm_cost_round(strategy: Strategy, spec: &ModelSpec, per_round: usize) -> (u64, u64) {
    let bytes = per_round as u64 * strategy.shared_len(spec) as u64 * BYTES_PER_PARAM;
    (bytes, bytes)
}

/// First round whose mean accuracy reaches `target`.
pub fn rounds_to_target(logs: &[RoundLog], target: f64) -> Option<usize> {
    logs.iter()
        .find(|l| l.mean_client_accuracy >= target)
        .map(|l| l.round)
}

pub const CSV_HEADER: &str = "round,accuracy,loss,uplink_bytes,downlink_bytes,cumulative_bytes,selected";

/// `%.6g`-style formatting: six significant digits, trailing zeros dropped.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn to_csv_string(result: &ExperimentResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for l in &result.logs {
        let selected = l
            .selected
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            l.round,
            fmt_sig6(l.mean_client_accuracy),
            fmt_sig6(l.mean_client_loss),
            l.uplink_bytes,
            l.downlink_bytes,
            l.cumulative_bytes,
            selected
        );
    }
    out
}

pub fn write_csv(result: &ExperimentResult, path: impl AsRef<Path>) -> Result<(), MetricsError> {
    std::fs::write(path, to_csv_string(result))?;
    Ok(())
}

/// Reads a per-round CSV produced by [`to_csv_string`]. Floats come back
/// with the six significant digits they were written with.
pub fn parse_rounds(text: &str) -> Result<Vec<RoundLog>, MetricsError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        _ => {
            return Err(MetricsError::Parse {
                line: 1,
                what: "missing header".into(),
            })
        }
    }
    lines
        .map(|(idx, line)| {
            let bad = |what: &str| MetricsError::Parse {
                line: idx + 1,
                what: what.into(),
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            let int = |s: &str, what: &str| s.parse::<u64>().map_err(|_| bad(what));
            let float = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
            let selected = if f[6].is_empty() {
                Vec::new()
            } else {
                f[6].split(';')
                    .map(|k| k.parse::<usize>().map_err(|_| bad("selected")))
                    .collect::<Result<_, _>>()?
            };
            Ok(RoundLog {
                round: int(f[0], "round")? as usize,
                mean_client_accuracy: float(f[1], "accuracy")?,
                mean_client_loss: float(f[2], "loss")?,
                uplink_bytes: int(f[3], "uplink_bytes")?,
                downlink_bytes: int(f[4], "downlink_bytes")?,
                cumulative_bytes: int(f[5], "cumulative_bytes")?,
                selected,
            })
        })
        .collect()
}
