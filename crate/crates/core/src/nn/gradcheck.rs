use super::{loss_and_grad, Batch, Gradients, ModelSpec, NnError, ParamSet, Result};

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

// Below this magnitude both gradients are treated as zero.
const REL_FLOOR: f64 = 1e-6;

/// Checks `loss_and_grad` against central differences with step `eps`.
pub fn check_gradients(spec: &ModelSpec, params: &ParamSet, batch: &Batch, eps: f64) -> Result<GradCheckReport> {
    let (_, grads) = loss_and_grad(spec, params, batch)?;
    compare_gradients(spec, params, batch, &grads, eps)
}

/// Compares caller-supplied gradients against central differences.
pub fn compare_gradients(
    spec: &ModelSpec,
    params: &ParamSet,
    batch: &Batch,
    analytic: &Gradients,
    eps: f64,
) -> Result<GradCheckReport> {
    if analytic.len() != params.len() {
        return Err(NnError::LengthMismatch {
            expected: params.len(),
            got: analytic.len(),
        });
    }
    let base = params.values().to_vec();
    let mut numeric = Vec::with_capacity(base.len());
    let mut probe = base.clone();
    for i in 0..base.len() {
        probe[i] = base[i] + eps;
        let plus = loss_and_grad(spec, &ParamSet::from_values(spec, probe.clone())?, batch)?.0;
        probe[i] = base[i] - eps;
        let minus = loss_and_grad(spec, &ParamSet::from_values(spec, probe.clone())?, batch)?.0;
        probe[i] = base[i];
        numeric.push((plus - minus) / (2.0 * eps));
    }

    let mut max_rel_error = 0.0;
    let mut worst_index = 0;
    for (i, (&a, &n)) in analytic.0.iter().zip(&numeric).enumerate() {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR);
        if rel > max_rel_error || rel.is_nan() {
            max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
            worst_index = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst_index,
        analytic: analytic.0.clone(),
        numeric,
    })
}
