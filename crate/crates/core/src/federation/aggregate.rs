use super::{ClientUpdateResult, FedError, Result};

/// `n_k / sum(n_k)` per update, in the order given.
pub fn aggregation_weights(updates: &[ClientUpdateResult]) -> Result<Vec<f64>> {
    if updates.is_empty() {
        return Err(FedError::EmptyUpdateSet);
    }
    let total: usize = updates.iter().map(|u| u.n_k).sum();
    if total == 0 {
        return Err(FedError::ZeroSamples);
    }
    Ok(updates.iter().map(|u| u.n_k as f64 / total as f64).collect())
}

/// Sample-count weighted mean of the participants' shared slices.
///
/// Updates are reduced in ascending client id whatever their input order.
/// The mean is accumulated as offsets from the first slice, so identical
/// slices come back exactly, and each component is clamped to the range
/// spanned by the updates to absorb rounding.
pub fn aggregate(updates: &[ClientUpdateResult]) -> Result<Vec<f64>> {
    let mut ordered: Vec<&ClientUpdateResult> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client_id);
    let owned: Vec<ClientUpdateResult> = ordered.iter().map(|&u| u.clone()).collect();
    let weights = aggregation_weights(&owned)?;
    let len = ordered[0].shared_slice.len();
    if let Some(bad) = ordered.iter().find(|u| u.shared_slice.len() != len) {
        return Err(FedError::LengthMismatch {
            expected: len,
            got: bad.shared_slice.len(),
        });
    }
    let reference = &ordered[0].shared_slice;
    let mut out = reference.clone();
    for (i, slot) in out.iter_mut().enumerate() {
        let base = reference[i];
        let mut offset = 0.0;
        let (mut lo, mut hi) = (base, base);
        for (u, &w) in ordered.iter().zip(&weights) {
            let v = u.shared_slice[i];
            offset += w * (v - base);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        *slot = (base + offset).clamp(lo, hi);
    }
    Ok(out)
}
