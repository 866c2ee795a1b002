use serde::{Deserialize, Serialize};

use super::{DataError, Result};
use crate::nn::{Batch, NnError, Tensor};

/// Labelled samples. `features` is `[n, ..dims]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.shape().len() < 2 || features.rows() != labels.len() {
            return Err(NnError::LengthMismatch {
                expected: features.rows(),
                got: labels.len(),
            }
            .into());
        }
        if num_classes == 0 {
            return Err(DataError::InvalidArgument("num_classes must be positive".into()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(NnError::BadLabel { label, num_classes }.into());
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Per-sample feature shape.
    pub fn sample_shape(&self) -> &[usize] {
        &self.features.shape()[1..]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Labels present at least once.
    pub fn label_support(&self) -> Vec<usize> {
        self.class_counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            inputs: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.sample_shape() != other.sample_shape() || self.num_classes != other.num_classes {
            return Err(DataError::InvalidArgument(
                "datasets differ in sample shape or class count".into(),
            ));
        }
        let mut data = self.features.data().to_vec();
        data.extend_from_slice(other.features.data());
        let mut shape = self.features.shape().to_vec();
        shape[0] = self.len() + other.len();
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Dataset {
            features: Tensor::new(shape, data)?,
            labels,
            num_classes: self.num_classes,
        })
    }
}

/// One client's local data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientShard {
    pub client_id: usize,
    pub train: Dataset,
    pub test: Dataset,
}

impl ClientShard {
    /// Number of local training samples.
    pub fn n_k(&self) -> usize {
        self.train.len()
    }
}
