use serde::{Deserialize, Serialize};

use super::NnError;

type Result<T, E = NnError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawLayer")]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Relu,
    /// Stride 1, valid padding. Accepts `[channels, len]` inputs, or a bare
    /// `[len]` when `in_channels == 1`.
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel_len: usize,
    },
    Flatten,
}

/// Wire form of a layer; rejects fields the layer kind does not take.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    kind: String,
    in_dim: Option<usize>,
    out_dim: Option<usize>,
    in_channels: Option<usize>,
    out_channels: Option<usize>,
    kernel_len: Option<usize>,
}

impl TryFrom<RawLayer> for LayerSpec {
    type Error = String;

    fn try_from(raw: RawLayer) -> Result<Self, String> {
        let dense_fields = [raw.in_dim, raw.out_dim];
        let conv_fields = [raw.in_channels, raw.out_channels, raw.kernel_len];
        let need = |v: Option<usize>, name: &str| v.ok_or_else(|| format!("layer `{}` needs `{name}`", raw.kind));
        let none = |fields: &[Option<usize>]| fields.iter().all(Option::is_none);
        match raw.kind.as_str() {
            "dense" if none(&conv_fields) => Ok(LayerSpec::Dense {
                in_dim: need(raw.in_dim, "in_dim")?,
                out_dim: need(raw.out_dim, "out_dim")?,
            }),
            "conv1d" if none(&dense_fields) => Ok(LayerSpec::Conv1d {
                in_channels: need(raw.in_channels, "in_channels")?,
                out_channels: need(raw.out_channels, "out_channels")?,
                kernel_len: need(raw.kernel_len, "kernel_len")?,
            }),
            "relu" if none(&dense_fields) && none(&conv_fields) => Ok(LayerSpec::Relu),
            "flatten" if none(&dense_fields) && none(&conv_fields) => Ok(LayerSpec::Flatten),
            "dense" | "conv1d" | "relu" | "flatten" => {
                Err(format!("layer `{}` given a field it does not take", raw.kind))
            }
            other => Err(format!("unknown layer kind `{other}`")),
        }
    }
}

impl LayerSpec {
    /// Number of weights plus biases.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { in_dim, out_dim } => in_dim * out_dim + out_dim,
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
            } => in_channels * out_channels * kernel_len + out_channels,
            LayerSpec::Relu | LayerSpec::Flatten => 0,
        }
    }

    /// Length of the weight block; biases follow it.
    pub fn weight_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { in_dim, out_dim } => in_dim * out_dim,
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
            } => in_channels * out_channels * kernel_len,
            LayerSpec::Relu | LayerSpec::Flatten => 0,
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { in_dim, .. } => in_dim,
            LayerSpec::Conv1d {
                in_channels,
                kernel_len,
                ..
            } => in_channels * kernel_len,
            LayerSpec::Relu | LayerSpec::Flatten => 0,
        }
    }

    pub fn is_parameterized(&self) -> bool {
        self.param_count() > 0
    }

    /// Output shape for a given per-sample input shape, or `None` when the
    /// dimensions do not chain.
    pub fn output_shape(&self, input: &[usize]) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Dense { in_dim, out_dim } => {
                (in_dim >= 1 && out_dim >= 1 && input == [in_dim]).then(|| vec![out_dim])
            }
            LayerSpec::Relu => Some(input.to_vec()),
            LayerSpec::Flatten => Some(vec![input.iter().product()]),
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
            } => {
                if in_channels == 0 || out_channels == 0 || kernel_len == 0 {
                    return None;
                }
                let len = match *input {
                    [c, len] if c == in_channels => len,
                    [len] if in_channels == 1 => len,
                    _ => return None,
                };
                (len >= kernel_len).then(|| vec![out_channels, len - kernel_len + 1])
            }
        }
    }
}

/// Ordered layer stack with the generic/specific split point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Per-sample input shape (without the batch axis).
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    /// Index of the first layer whose parameters are client-specific.
    pub specific_from: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn new(
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec>,
        specific_from: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let spec = Self {
            input_shape,
            layers,
            specific_from,
            num_classes,
        };
        validate_spec(&spec)?;
        Ok(spec)
    }

    /// Per-sample shapes entering each layer, followed by the output shape.
    pub fn activation_shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(NnError::BadInputShape);
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        shapes.push(self.input_shape.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().unwrap())
                .ok_or(NnError::DimensionMismatch(i))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn generic_param_count(&self) -> usize {
        self.layers[..self.specific_from.min(self.layers.len())]
            .iter()
            .map(LayerSpec::param_count)
            .sum()
    }

    pub fn specific_param_count(&self) -> usize {
        self.param_count() - self.generic_param_count()
    }
}

pub fn validate_spec(spec: &ModelSpec) -> Result<()> {
    if spec.specific_from > spec.layers.len() {
        return Err(NnError::BadBoundary);
    }
    spec.activation_shapes()?;
    match spec.layers.last() {
        Some(LayerSpec::Dense { out_dim, .. }) if *out_dim == spec.num_classes => {}
        _ => return Err(NnError::BadHead),
    }
    if !spec.layers[..spec.specific_from]
        .iter()
        .any(LayerSpec::is_parameterized)
    {
        log::warn!("no parameterized layer below specific_from: the generic slice is empty");
    }
    Ok(())
}
