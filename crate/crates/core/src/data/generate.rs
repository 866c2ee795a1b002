use rand_distr::{Distribution, StandardNormal};

use super::{DataError, Dataset, Result};
use crate::nn::Tensor;
use crate::seed::{rng_from, SimRng};

fn gaussian_vec(rng: &mut SimRng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn sample_around(rng: &mut SimRng, center: &[f64], spread: f64, out: &mut Vec<f64>) {
    for &c in center {
        let z: f64 = StandardNormal.sample(rng);
        out.push(if spread == 0.0 { c } else { c + spread * z });
    }
}

fn check_common(num_classes: usize, per_class: usize, dim: usize, spread: f64) -> Result<()> {
    if num_classes < 2 {
        return Err(DataError::InvalidArgument("num_classes must be at least 2".into()));
    }
    if per_class == 0 || dim == 0 {
        return Err(DataError::InvalidArgument(
            "per_class and dim must be positive".into(),
        ));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(DataError::InvalidArgument("spread must be finite and >= 0".into()));
    }
    Ok(())
}

/// Isotropic Gaussian clusters, one per class, `per_class` samples each.
/// Class means are standard normal vectors; samples are laid out class by class.
pub fn gen_blobs(num_classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    check_common(num_classes, per_class, dim, spread)?;
    let mut rng = rng_from(seed, &[]);
    let means: Vec<Vec<f64>> = (0..num_classes).map(|_| gaussian_vec(&mut rng, dim)).collect();
    let n = num_classes * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            sample_around(&mut rng, mean, spread, &mut data);
            labels.push(c);
        }
    }
    Dataset::new(Tensor::new(vec![n, dim], data)?, labels, num_classes)
}

/// Output of [`gen_conflicting_modes`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModesDataset {
    pub dataset: Dataset,
    /// Mode index of every sample.
    pub mode_tags: Vec<usize>,
    /// `centers[class][mode]`.
    pub centers: Vec<Vec<Vec<f64>>>,
}

impl ModesDataset {
    /// Class whose mode-0 center is reused by `class`'s mode `mode`, under
    /// label conflict. Equal to `class` when `mode == 0`.
    pub fn conflict_partner(num_classes: usize, num_modes: usize, class: usize, mode: usize) -> usize {
        (class + mode * conflict_shift(num_classes, num_modes)) % num_classes
    }
}

fn conflict_shift(num_classes: usize, num_modes: usize) -> usize {
    (num_classes / num_modes).max(1)
}

/// Multi-modal classes: each class has `num_modes` cluster centers and
/// sample `j` of a class belongs to mode `j % num_modes`.
///
/// With `label_conflict`, only `num_classes` base centers exist and mode `m`
/// of class `c` sits on the mode-0 center of class
/// `(c + m * (num_classes / num_modes)) % num_classes`. The same input region
/// then carries different labels depending on the mode, so no single shared
/// classifier can be right on both groups.
pub fn gen_conflicting_modes(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    num_modes: usize,
    label_conflict: bool,
    seed: u64,
) -> Result<ModesDataset> {
    check_common(num_classes, per_class, dim, spread)?;
    if num_modes < 2 {
        return Err(DataError::InvalidArgument("num_modes must be at least 2".into()));
    }
    if label_conflict && num_modes > num_classes {
        return Err(DataError::InvalidArgument(
            "label conflict needs num_modes <= num_classes".into(),
        ));
    }
    let mut rng = rng_from(seed, &[]);
    let centers: Vec<Vec<Vec<f64>>> = if label_conflict {
        let base: Vec<Vec<f64>> = (0..num_classes).map(|_| gaussian_vec(&mut rng, dim)).collect();
        (0..num_classes)
            .map(|c| {
                (0..num_modes)
                    .map(|m| base[ModesDataset::conflict_partner(num_classes, num_modes, c, m)].clone())
                    .collect()
            })
            .collect()
    } else {
        (0..num_classes)
            .map(|_| (0..num_modes).map(|_| gaussian_vec(&mut rng, dim)).collect())
            .collect()
    };

    let n = num_classes * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    let mut mode_tags = Vec::with_capacity(n);
    for (c, modes) in centers.iter().enumerate() {
        for j in 0..per_class {
            let m = j % num_modes;
            sample_around(&mut rng, &modes[m], spread, &mut data);
            labels.push(c);
            mode_tags.push(m);
        }
    }
    Ok(ModesDataset {
        dataset: Dataset::new(Tensor::new(vec![n, dim], data)?, labels, num_classes)?,
        mode_tags,
        centers,
    })
}
