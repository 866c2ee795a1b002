use rand::seq::SliceRandom;

use super::{FedError, FederationConfig, Result, Strategy};
use crate::data::ClientShard;
use crate::nn::{loss_and_grad, sgd_step, ModelSpec, ParamSet, SegmentMask};
use crate::seed::rng_from;

/// A client: its shard and its full parameter vector. The slice outside the
/// strategy's shared range is private and persists across rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub client_id: usize,
    pub shard: ClientShard,
    pub params: ParamSet,
}

impl ClientState {
    pub fn n_k(&self) -> usize {
        self.shard.n_k()
    }
}

/// What a client sends back after local training.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdateResult {
    pub client_id: usize,
    pub shared_slice: Vec<f64>,
    pub n_k: usize,
    /// Mean mini-batch loss over the local epochs; 0 when no step ran.
    pub train_loss: f64,
}

/// Round-0 setup: the client adopts the server's initial shared slice and
/// the initial private slice, so every client starts bit-identical.
pub fn client_init(shard: ClientShard, shared_0: &[f64], full_init: &ParamSet, strategy: Strategy) -> Result<ClientState> {
    let range = strategy.shared_range(full_init);
    if range.len() != shared_0.len() {
        return Err(FedError::LayoutMismatch);
    }
    Ok(ClientState {
        client_id: shard.client_id,
        params: full_init.with_slice(range, shared_0)?,
        shard,
    })
}

/// Overwrites the shared slice with `shared_in`, then runs `E` epochs of
/// mini-batch SGD on every parameter. Batch order for epoch `e` of round `t`
/// is drawn from `(seed_train, client_id, t, e)`.
pub fn client_update(
    client: &mut ClientState,
    shared_in: &[f64],
    spec: &ModelSpec,
    cfg: &FederationConfig,
    t: usize,
) -> Result<ClientUpdateResult> {
    if !client.params.layout_matches(spec) {
        return Err(FedError::LayoutMismatch);
    }
    let range = cfg.strategy.shared_range(&client.params);
    if range.len() != shared_in.len() {
        return Err(FedError::LayoutMismatch);
    }
    let mut params = client.params.with_slice(range.clone(), shared_in)?;
    let train = &client.shard.train;
    let mut losses = Vec::new();
    for e in 0..cfg.local_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = rng_from(cfg.seed_train, &[client.client_id as u64, t as u64, e as u64]);
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, grads) = loss_and_grad(spec, &params, &train.batch(chunk))?;
            params = sgd_step(&params, &grads, cfg.lr, SegmentMask::All)?;
            losses.push(loss);
        }
    }
    let train_loss = if losses.is_empty() {
        0.0
    } else {
        crate::nn::compensated_sum(losses.iter().copied()) / losses.len() as f64
    };
    client.params = params;
    Ok(ClientUpdateResult {
        client_id: client.client_id,
        shared_slice: client.params.values()[range].to_vec(),
        n_k: client.n_k(),
        train_loss,
    })
}
