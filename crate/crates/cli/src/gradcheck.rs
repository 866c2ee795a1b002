//! `gradcheck` subcommand: finite-difference check of a compact layer list
//! such as `dense:4:8,relu,dense:8:3` or `conv1d:1:2:3,relu,flatten,dense:4:2`.

use fedpart_core::nn::{
    compare_gradients, init_params, loss_and_grad, Batch, GradCheckReport, LayerSpec, ModelSpec, ParamSet, Tensor,
};
use fedpart_core::seed::rng_from;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::CliError;

/// Largest model the checker accepts; each parameter costs two loss
/// evaluations.
pub const PARAM_CAP: usize = 5000;
pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradcheckArgs {
    pub layers: String,
    /// Per-sample input shape, e.g. `4` or `2x10`.
    pub input: String,
    pub seed: u64,
    pub batch_size: usize,
    /// Test hook: add an error to this analytic gradient component.
    pub corrupt_index: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckOutcome {
    pub params: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub passed: bool,
}

fn bad(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.into(),
        message: message.into(),
    }
}

pub fn parse_layers(text: &str) -> Result<Vec<LayerSpec>, CliError> {
    text.split(',')
        .map(|tok| {
            let parts: Vec<&str> = tok.trim().split(':').collect();
            let nums = parts[1..]
                .iter()
                .map(|p| p.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad("layers", format!("bad number in {tok:?}")))?;
            match (parts[0].to_ascii_lowercase().as_str(), nums.as_slice()) {
                ("dense", &[in_dim, out_dim]) => Ok(LayerSpec::Dense { in_dim, out_dim }),
                ("relu", []) => Ok(LayerSpec::Relu),
                ("flatten", []) => Ok(LayerSpec::Flatten),
                ("conv1d", &[in_channels, out_channels, kernel_len]) => Ok(LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel_len,
                }),
                _ => Err(bad("layers", format!("cannot parse layer {tok:?}"))),
            }
        })
        .collect()
}

pub fn parse_shape(text: &str) -> Result<Vec<usize>, CliError> {
    text.split('x')
        .map(|p| p.trim().parse::<usize>().ok().filter(|&n| n > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| bad("input", format!("cannot parse shape {text:?}")))
}

fn build_spec(args: &GradcheckArgs) -> Result<ModelSpec, CliError> {
    let layers = parse_layers(&args.layers)?;
    let num_classes = match layers.last() {
        Some(LayerSpec::Dense { out_dim, .. }) => *out_dim,
        _ => return Err(bad("layers", "the last layer must be dense")),
    };
    let specific_from = layers.len() - 1;
    let spec = ModelSpec::new(parse_shape(&args.input)?, layers, specific_from, num_classes)
        .map_err(|e| bad("layers", e.to_string()))?;
    if spec.param_count() > PARAM_CAP {
        return Err(bad(
            "layers",
            format!("{} parameters exceeds the cap of {PARAM_CAP}", spec.param_count()),
        ));
    }
    Ok(spec)
}

/// Initialized weights plus small random biases, so bias gradients are
/// checked away from zero as well.
fn random_point(spec: &ModelSpec, seed: u64, batch_size: usize) -> Result<(ParamSet, Batch), CliError> {
    let runtime = |e: fedpart_core::nn::NnError| CliError::Runtime(e.to_string());
    let init = init_params(spec, seed).map_err(runtime)?;
    let mut values = init.values().to_vec();
    let mut rng = rng_from(seed, &[1]);
    for (layer, seg) in spec.layers.iter().zip(init.segments()) {
        for b in &mut values[seg.offset + layer.weight_count()..seg.offset + seg.len] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *b = 0.1 * z;
        }
    }
    let params = ParamSet::from_values(spec, values).map_err(runtime)?;
    Ok((params, random_batch(spec, seed, batch_size)?))
}

fn random_batch(spec: &ModelSpec, seed: u64, batch_size: usize) -> Result<Batch, CliError> {
    let runtime = |e: fedpart_core::nn::NnError| CliError::Runtime(e.to_string());
    let mut rng = rng_from(seed, &[2]);
    let per_sample: usize = spec.input_shape.iter().product();
    let data = (0..batch_size * per_sample).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut shape = vec![batch_size];
    shape.extend_from_slice(&spec.input_shape);
    let labels = (0..batch_size).map(|_| rng.random_range(0..spec.num_classes)).collect();
    Batch::new(Tensor::new(shape, data).map_err(runtime)?, labels).map_err(runtime)
}

/// Compares analytic gradients with central differences at `EPS`.
/// `passed` is true iff the worst relative error is below `TOLERANCE`.
pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<GradcheckOutcome, CliError> {
    let spec = build_spec(args)?;
    if args.batch_size == 0 {
        return Err(bad("batch-size", "must be at least 1"));
    }
    let (params, batch) = random_point(&spec, args.seed, args.batch_size)?;
    let runtime = |e: fedpart_core::nn::NnError| CliError::Runtime(e.to_string());
    let (_, mut grads) = loss_and_grad(&spec, &params, &batch).map_err(runtime)?;
    if let Some(i) = args.corrupt_index {
        let n = grads.len();
        let g = grads
            .0
            .get_mut(i)
            .ok_or_else(|| bad("corrupt-grad", format!("index {i} out of range for {n} parameters")))?;
        *g += 1.0;
    }
    let report: GradCheckReport = compare_gradients(&spec, &params, &batch, &grads, EPS).map_err(runtime)?;
    Ok(GradcheckOutcome {
        params: spec.param_count(),
        max_rel_error: report.max_rel_error,
        worst_index: report.worst_index,
        passed: report.passes(TOLERANCE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(layers: &str, input: &str, seed: u64) -> GradcheckArgs {
        GradcheckArgs {
            layers: layers.into(),
            input: input.into(),
            seed,
            batch_size: 4,
            corrupt_index: None,
        }
    }

    #[test]
    fn parses_compact_layers() {
        assert_eq!(
            parse_layers("dense:4:8, relu ,conv1d:1:2:3,flatten").unwrap(),
            vec![
                LayerSpec::Dense { in_dim: 4, out_dim: 8 },
                LayerSpec::Relu,
                LayerSpec::Conv1d {
                    in_channels: 1,
                    out_channels: 2,
                    kernel_len: 3
                },
                LayerSpec::Flatten
            ]
        );
        assert!(parse_layers("dense:4").is_err());
        assert!(parse_layers("pool:2").is_err());
        assert_eq!(parse_shape("2x10").unwrap(), vec![2, 10]);
        assert!(parse_shape("2x0").is_err());
    }

    #[test]
    fn dense_relu_dense_passes() {
        let out = cmd_gradcheck(&args("dense:4:8,relu,dense:8:3", "4", 0)).unwrap();
        assert!(out.passed, "{out:?}");
    }

    #[test]
    fn cap_and_corruption() {
        let e = cmd_gradcheck(&args("dense:100:60,dense:60:2", "100", 0)).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        let mut a = args("dense:4:8,relu,dense:8:3", "4", 0);
        a.corrupt_index = Some(7);
        let out = cmd_gradcheck(&a).unwrap();
        assert!(!out.passed);
        assert_eq!(out.worst_index, 7);
    }
}
