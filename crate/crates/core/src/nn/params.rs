use std::ops::Range;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{validate_spec, ModelSpec, NnError, Result};
use crate::seed::rng_from;

/// One layer's slice of the flat parameter vector. Parameter-free layers get
/// an empty segment at the current offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Flat parameter vector split at `boundary` into a generic prefix and a
/// specific suffix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    values: Vec<f64>,
    segments: Vec<Segment>,
    boundary: usize,
}

/// Which part of a [`ParamSet`] an operation touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SegmentMask {
    #[default]
    All,
    Generic,
    Specific,
}

impl SegmentMask {
    pub fn range(self, params: &ParamSet) -> Range<usize> {
        match self {
            SegmentMask::All => 0..params.len(),
            SegmentMask::Generic => params.generic_range(),
            SegmentMask::Specific => params.specific_range(),
        }
    }
}

/// One partial derivative per parameter, same layout as [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl ParamSet {
    pub fn zeros(spec: &ModelSpec) -> Self {
        let mut segments = Vec::with_capacity(spec.layers.len());
        let mut offset = 0;
        let mut boundary = None;
        for (i, layer) in spec.layers.iter().enumerate() {
            if i == spec.specific_from {
                boundary = Some(offset);
            }
            let len = layer.param_count();
            segments.push(Segment { offset, len });
            offset += len;
        }
        Self {
            values: vec![0.0; offset],
            segments,
            boundary: boundary.unwrap_or(offset),
        }
    }

    /// Builds a parameter set with the layout of `spec` from raw values.
    pub fn from_values(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        let mut params = Self::zeros(spec);
        if values.len() != params.values.len() {
            return Err(NnError::LengthMismatch {
                expected: params.values.len(),
                got: values.len(),
            });
        }
        params.values = values;
        Ok(params)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn boundary(&self) -> usize {
        self.boundary
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn generic_range(&self) -> Range<usize> {
        0..self.boundary
    }

    pub fn specific_range(&self) -> Range<usize> {
        self.boundary..self.values.len()
    }

    pub fn generic(&self) -> &[f64] {
        &self.values[self.generic_range()]
    }

    pub fn specific(&self) -> &[f64] {
        &self.values[self.specific_range()]
    }

    pub fn layer(&self, index: usize) -> &[f64] {
        &self.values[self.segments[index].range()]
    }

    /// Copy of `self` with `range` overwritten by `slice`.
    pub fn with_slice(&self, range: Range<usize>, slice: &[f64]) -> Result<Self> {
        if range.end > self.values.len() || range.len() != slice.len() {
            return Err(NnError::LengthMismatch {
                expected: range.len(),
                got: slice.len(),
            });
        }
        let mut out = self.clone();
        out.values[range].copy_from_slice(slice);
        Ok(out)
    }

    pub(crate) fn layout_matches(&self, spec: &ModelSpec) -> bool {
        let expected = Self::zeros(spec);
        expected.segments == self.segments && expected.boundary == self.boundary
    }
}

/// Gaussian weights scaled by `1/sqrt(fan_in)`, zero biases.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParamSet> {
    validate_spec(spec)?;
    let mut params = ParamSet::zeros(spec);
    let mut rng = rng_from(seed, &[]);
    for (layer, seg) in spec.layers.iter().zip(params.segments.clone()) {
        let n_weights = layer.weight_count();
        if n_weights == 0 {
            continue;
        }
        let scale = 1.0 / (layer.fan_in() as f64).sqrt();
        for w in &mut params.values[seg.offset..seg.offset + n_weights] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = z * scale;
        }
    }
    Ok(params)
}

/// `params[i] - lr * grads[i]` for every `i` selected by `mask`.
pub fn sgd_step(
    params: &ParamSet,
    grads: &Gradients,
    lr: f64,
    mask: SegmentMask,
) -> Result<ParamSet> {
    if grads.len() != params.len() {
        return Err(NnError::LengthMismatch {
            expected: params.len(),
            got: grads.len(),
        });
    }
    let mut out = params.clone();
    let range = mask.range(params);
    for (p, g) in out.values[range.clone()].iter_mut().zip(&grads.0[range]) {
        *p -= lr * g;
    }
    Ok(out)
}
