use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{ClientShard, DataError, Dataset, Result};
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionPolicy {
    /// Global shuffle, equal contiguous chunks.
    Iid,
    /// Per-class Dirichlet(alpha) label skew.
    #[serde(rename = "noniid")]
    NonIidDirichlet { alpha: f64 },
    /// Whole classes dealt to clients; no class on two clients.
    Disjoint { classes_per_client: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub policy: PartitionPolicy,
    pub clients: usize,
    pub seed: u64,
}

impl PartitionPlan {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.clients == 0 {
            return Err(DataError::InvalidArgument("client count must be positive".into()));
        }
        match self.policy {
            PartitionPolicy::Iid => Ok(()),
            PartitionPolicy::NonIidDirichlet { alpha } => {
                if alpha > 0.0 && alpha.is_finite() {
                    Ok(())
                } else {
                    Err(DataError::InvalidArgument("alpha must be positive".into()))
                }
            }
            PartitionPolicy::Disjoint { classes_per_client } => {
                if classes_per_client == 0 {
                    Err(DataError::InvalidArgument(
                        "classes_per_client must be positive".into(),
                    ))
                } else if self.clients * classes_per_client > num_classes {
                    Err(DataError::TooManyClients {
                        clients: self.clients,
                        per_client: classes_per_client,
                        num_classes,
                    })
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Splits `dataset` into `plan.clients` shards. Every returned shard holds its
/// samples in `train` with an empty `test`; see [`train_test_split`].
///
/// `mode_tags`, when given, refines the Dirichlet strata from classes to
/// `(class, mode)` pairs so modes of one class spread differently across
/// clients. The other policies ignore it.
///
/// Under `Disjoint`, classes left over after dealing `classes_per_client` to
/// every client are dealt round-robin, so the shards still cover the dataset.
pub fn partition(dataset: &Dataset, plan: &PartitionPlan, mode_tags: Option<&[usize]>) -> Result<Vec<ClientShard>> {
    plan.validate(dataset.num_classes())?;
    if let Some(tags) = mode_tags {
        if tags.len() != dataset.len() {
            return Err(DataError::InvalidArgument(
                "mode_tags length differs from dataset length".into(),
            ));
        }
    }
    let k = plan.clients;
    let mut rng = rng_from(plan.seed, &[]);
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); k];

    match plan.policy {
        PartitionPolicy::Iid => {
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            order.shuffle(&mut rng);
            let base = order.len() / k;
            let extra = order.len() % k;
            let mut start = 0;
            for (client, slot) in assignment.iter_mut().enumerate() {
                let size = base + usize::from(client < extra);
                slot.extend_from_slice(&order[start..start + size]);
                start += size;
            }
        }
        PartitionPolicy::NonIidDirichlet { alpha } => {
            let gamma = Gamma::new(alpha, 1.0)
                .map_err(|e| DataError::InvalidArgument(format!("alpha: {e}")))?;
            let mut strata: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
            for (i, &label) in dataset.labels().iter().enumerate() {
                let mode = mode_tags.map_or(0, |t| t[i]);
                strata.entry((label, mode)).or_default().push(i);
            }
            for members in strata.values_mut() {
                members.shuffle(&mut rng);
                let mut props: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
                let total: f64 = props.iter().sum();
                if total > 0.0 {
                    props.iter_mut().for_each(|p| *p /= total);
                } else {
                    // every draw underflowed; give the stratum to one client
                    let pick = rand::Rng::random_range(&mut rng, 0..k);
                    props.iter_mut().enumerate().for_each(|(i, p)| *p = f64::from(u8::from(i == pick)));
                }
                let n = members.len();
                let mut cum = 0.0;
                let mut start = 0;
                for (client, p) in props.iter().enumerate() {
                    cum += p;
                    let end = if client + 1 == k {
                        n
                    } else {
                        ((cum * n as f64).round() as usize).clamp(start, n)
                    };
                    assignment[client].extend_from_slice(&members[start..end]);
                    start = end;
                }
            }
        }
        PartitionPolicy::Disjoint { classes_per_client } => {
            let mut classes: Vec<usize> = (0..dataset.num_classes()).collect();
            classes.shuffle(&mut rng);
            let mut owner = vec![0usize; dataset.num_classes()];
            for (pos, &class) in classes.iter().enumerate() {
                owner[class] = if pos < k * classes_per_client {
                    pos / classes_per_client
                } else {
                    (pos - k * classes_per_client) % k
                };
            }
            for (i, &label) in dataset.labels().iter().enumerate() {
                assignment[owner[label]].push(i);
            }
        }
    }

    assignment
        .into_iter()
        .enumerate()
        .map(|(client_id, mut indices)| {
            if indices.is_empty() {
                return Err(DataError::EmptyShard(client_id));
            }
            indices.sort_unstable();
            Ok(ClientShard {
                client_id,
                train: dataset.subset(&indices),
                test: dataset.subset(&[]),
            })
        })
        .collect()
}

/// Seeded stratified split of a shard's samples (train and test pooled).
/// Classes with fewer than two samples stay entirely in train.
pub fn train_test_split(shard: &ClientShard, test_frac: f64, seed: u64) -> Result<ClientShard> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(DataError::InvalidArgument("test_frac must lie in (0, 1)".into()));
    }
    let pool = shard.train.concat(&shard.test)?;
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &label) in pool.labels().iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }
    if !by_class.values().any(|v| v.len() >= 2) {
        return Err(DataError::EmptyShard(shard.client_id));
    }
    let mut rng = rng_from(seed, &[]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for members in by_class.values_mut() {
        if members.len() < 2 {
            train.extend_from_slice(members);
            continue;
        }
        members.shuffle(&mut rng);
        let n_test = ((members.len() as f64 * test_frac).round() as usize).clamp(1, members.len() - 1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(ClientShard {
        client_id: shard.client_id,
        train: pool.subset(&train),
        test: pool.subset(&test),
    })
}
