use super::{compensated_sum, Gradients, LayerSpec, ModelSpec, NnError, ParamSet, Result, Tensor};
use crate::data::Dataset;

/// Mini-batch of samples with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Tensor, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(NnError::LengthMismatch {
                expected: inputs.rows(),
                got: labels.len(),
            });
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Inputs seen by every layer during a forward pass, in layer order.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Tensor>,
}

fn check_params(spec: &ModelSpec, params: &ParamSet) -> Result<()> {
    if !params.layout_matches(spec) {
        return Err(NnError::LengthMismatch {
            expected: spec.param_count(),
            got: params.len(),
        });
    }
    Ok(())
}

fn with_batch(batch: usize, shape: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(shape.len() + 1);
    out.push(batch);
    out.extend_from_slice(shape);
    out
}

/// Runs the layer stack on `inputs` (`[b, ..input_shape]`).
pub fn forward(spec: &ModelSpec, params: &ParamSet, inputs: &Tensor) -> Result<(Tensor, ForwardCache)> {
    let shapes = spec.activation_shapes()?;
    check_params(spec, params)?;
    let b = inputs.rows();
    let expected = with_batch(b, &shapes[0]);
    if b == 0 || inputs.shape() != expected.as_slice() {
        return Err(NnError::ShapeMismatch {
            expected,
            got: inputs.shape().to_vec(),
        });
    }

    let mut cache = Vec::with_capacity(spec.layers.len());
    let mut x = inputs.clone();
    for (i, layer) in spec.layers.iter().enumerate() {
        let w = params.layer(i);
        let out_shape = with_batch(b, &shapes[i + 1]);
        let y = match *layer {
            LayerSpec::Dense { in_dim, out_dim } => dense_forward(&x, w, b, in_dim, out_dim),
            LayerSpec::Relu => x.data().iter().map(|&v| v.max(0.0)).collect(),
            LayerSpec::Flatten => x.data().to_vec(),
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
            } => {
                let len = shapes[i].last().copied().unwrap();
                conv_forward(x.data(), w, b, in_channels, out_channels, kernel_len, len)
            }
        };
        cache.push(x);
        x = Tensor::new(out_shape, y)?;
    }
    Ok((x, ForwardCache { inputs: cache }))
}

fn dense_forward(x: &Tensor, w: &[f64], b: usize, in_dim: usize, out_dim: usize) -> Vec<f64> {
    let (weights, bias) = w.split_at(in_dim * out_dim);
    let mut y = vec![0.0; b * out_dim];
    for s in 0..b {
        let xs = x.row(s);
        for o in 0..out_dim {
            let row = &weights[o * in_dim..(o + 1) * in_dim];
            y[s * out_dim + o] = bias[o] + row.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    y
}

fn conv_forward(
    x: &[f64],
    w: &[f64],
    b: usize,
    ic: usize,
    oc: usize,
    k: usize,
    len: usize,
) -> Vec<f64> {
    let (kernels, bias) = w.split_at(ic * oc * k);
    let out_len = len - k + 1;
    let mut y = vec![0.0; b * oc * out_len];
    for s in 0..b {
        let xs = &x[s * ic * len..(s + 1) * ic * len];
        for o in 0..oc {
            let ys = &mut y[(s * oc + o) * out_len..(s * oc + o + 1) * out_len];
            ys.fill(bias[o]);
            for c in 0..ic {
                let kern = &kernels[(o * ic + c) * k..(o * ic + c + 1) * k];
                let xc = &xs[c * len..(c + 1) * len];
                for (t, yv) in ys.iter_mut().enumerate() {
                    *yv += kern.iter().zip(&xc[t..t + k]).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }
    y
}

/// Backpropagates `dlogits` through the cached forward pass.
fn backward(spec: &ModelSpec, params: &ParamSet, cache: &ForwardCache, dlogits: Vec<f64>) -> Gradients {
    let mut grads = vec![0.0; params.len()];
    let mut dy = dlogits;
    for (i, layer) in spec.layers.iter().enumerate().rev() {
        let x = &cache.inputs[i];
        let b = x.rows();
        let seg = params.segments()[i];
        let w = params.layer(i);
        let g = &mut grads[seg.range()];
        dy = match *layer {
            LayerSpec::Relu => x
                .data()
                .iter()
                .zip(&dy)
                .map(|(&xv, &d)| if xv > 0.0 { d } else { 0.0 })
                .collect(),
            LayerSpec::Flatten => dy,
            LayerSpec::Dense { in_dim, out_dim } => {
                let (weights, _) = w.split_at(in_dim * out_dim);
                let (gw, gb) = g.split_at_mut(in_dim * out_dim);
                let mut dx = vec![0.0; b * in_dim];
                for s in 0..b {
                    let xs = x.row(s);
                    let dys = &dy[s * out_dim..(s + 1) * out_dim];
                    let dxs = &mut dx[s * in_dim..(s + 1) * in_dim];
                    for (o, &d) in dys.iter().enumerate() {
                        gb[o] += d;
                        let gw_row = &mut gw[o * in_dim..(o + 1) * in_dim];
                        let w_row = &weights[o * in_dim..(o + 1) * in_dim];
                        for j in 0..in_dim {
                            gw_row[j] += d * xs[j];
                            dxs[j] += d * w_row[j];
                        }
                    }
                }
                dx
            }
            LayerSpec::Conv1d {
                in_channels: ic,
                out_channels: oc,
                kernel_len: k,
            } => {
                let len = x.shape().last().copied().unwrap();
                let out_len = len - k + 1;
                let (kernels, _) = w.split_at(ic * oc * k);
                let (gw, gb) = g.split_at_mut(ic * oc * k);
                let mut dx = vec![0.0; b * ic * len];
                for s in 0..b {
                    let xs = x.row(s);
                    let dxs = &mut dx[s * ic * len..(s + 1) * ic * len];
                    for o in 0..oc {
                        let dys = &dy[(s * oc + o) * out_len..(s * oc + o + 1) * out_len];
                        gb[o] += dys.iter().sum::<f64>();
                        for c in 0..ic {
                            let base = (o * ic + c) * k;
                            let xc = &xs[c * len..(c + 1) * len];
                            let dxc = &mut dxs[c * len..(c + 1) * len];
                            for j in 0..k {
                                let kw = kernels[base + j];
                                let mut acc = 0.0;
                                for (t, &d) in dys.iter().enumerate() {
                                    acc += d * xc[t + j];
                                    dxc[t + j] += d * kw;
                                }
                                gw[base + j] += acc;
                            }
                        }
                    }
                }
                dx
            }
        };
    }
    Gradients(grads)
}

/// Per-row `(loss, softmax)` with max-subtraction.
fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    (loss, exps.into_iter().map(|e| e / sum).collect())
}

fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= num_classes) {
        Some(&label) => Err(NnError::BadLabel { label, num_classes }),
        None => Ok(()),
    }
}

/// Mean softmax cross-entropy over the batch and its gradient.
pub fn loss_and_grad(spec: &ModelSpec, params: &ParamSet, batch: &Batch) -> Result<(f64, Gradients)> {
    check_labels(&batch.labels, spec.num_classes)?;
    let (logits, cache) = forward(spec, params, &batch.inputs)?;
    let b = batch.len();
    let c = spec.num_classes;
    let mut losses = Vec::with_capacity(b);
    let mut dlogits = Vec::with_capacity(b * c);
    for (s, &label) in batch.labels.iter().enumerate() {
        let (loss, mut probs) = softmax_xent(logits.row(s), label);
        probs[label] -= 1.0;
        dlogits.extend(probs.into_iter().map(|p| p / b as f64));
        losses.push(loss);
    }
    let loss = compensated_sum(losses) / b as f64;
    Ok((loss, backward(spec, params, &cache, dlogits)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
}

const EVAL_CHUNK: usize = 512;

/// Accuracy (argmax, ties to the lowest class index) and mean loss.
pub fn evaluate(spec: &ModelSpec, params: &ParamSet, dataset: &Dataset) -> Result<Evaluation> {
    let n = dataset.len();
    if n == 0 {
        return Err(NnError::EmptyDataset);
    }
    check_labels(dataset.labels(), spec.num_classes)?;
    let mut correct = 0usize;
    let mut losses = Vec::with_capacity(n);
    let indices: Vec<usize> = (0..n).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let inputs = dataset.features().select_rows(chunk);
        let (logits, _) = forward(spec, params, &inputs)?;
        for (s, &i) in chunk.iter().enumerate() {
            let row = logits.row(s);
            let label = dataset.labels()[i];
            if argmax(row) == label {
                correct += 1;
            }
            losses.push(softmax_xent(row, label).0);
        }
    }
    Ok(Evaluation {
        accuracy: correct as f64 / n as f64,
        mean_loss: compensated_sum(losses) / n as f64,
    })
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
