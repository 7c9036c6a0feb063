//! Labelled feature datasets and the synthetic Gaussian-mixture generator that
//! stands in for frozen backbone embeddings.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::seed::rng_for;

/// `n` feature vectors of dimension `d` with labels in `[0, classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    features: DenseMatrix,
    labels: Vec<usize>,
    classes: usize,
}

impl FeatureDataset {
    pub fn new(features: DenseMatrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::mismatch(
                "FeatureDataset::new",
                format!("{} labels", features.rows()),
                labels.len(),
            ));
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                classes,
            });
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            let cols = features.cols().max(1);
            return Err(Error::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> FeatureDataset {
        FeatureDataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Same labels, features replaced (e.g. after a random-feature lift).
    pub fn with_features(&self, features: DenseMatrix) -> Result<FeatureDataset> {
        FeatureDataset::new(features, self.labels.clone(), self.classes)
    }

    /// Random train/test split; `test_fraction` of the samples go to the second set.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(FeatureDataset, FeatureDataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::InvalidParams(format!(
                "test fraction must lie in [0, 1), got {test_fraction}"
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng_for(seed, "split"));
        let n_test = (self.len() as f64 * test_fraction).round() as usize;
        let (test, train) = order.split_at(n_test);
        let mut train = train.to_vec();
        let mut test = test.to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok((self.subset(&train), self.subset(&test)))
    }
}

/// Parameters of the synthetic class-conditional Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Length of each class mean vector.
    pub separation: f64,
    /// Ratio of the largest to the smallest per-axis noise variance.
    pub anisotropy: f64,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.dim < 2 {
            return Err(Error::InvalidParams(format!(
                "mixture needs at least 2 classes and 2 dimensions, got C={} d={}",
                self.classes, self.dim
            )));
        }
        if !(self.separation >= 0.0) || !self.separation.is_finite() {
            return Err(Error::InvalidParams(format!(
                "separation must be finite and non-negative, got {}",
                self.separation
            )));
        }
        if !(self.anisotropy >= 1.0) || !self.anisotropy.is_finite() {
            return Err(Error::InvalidParams(format!(
                "anisotropy must be >= 1, got {}",
                self.anisotropy
            )));
        }
        Ok(())
    }

    /// Per-axis noise standard deviations, log-spaced so the variances run
    /// from 1 down to `1 / anisotropy`.
    pub fn axis_std(&self) -> Vec<f64> {
        let last = (self.dim - 1) as f64;
        (0..self.dim)
            .map(|j| self.anisotropy.powf(-(j as f64) / last).sqrt())
            .collect()
    }
}

/// Draws a balanced mixture: class `c` is centred on a random direction scaled
/// to length `separation`, with diagonal noise of condition number `anisotropy`.
/// Values are rounded to `f32` precision so a dataset written to disk reads back
/// identical.
pub fn gen_gaussian_mixture(spec: &MixtureSpec) -> Result<FeatureDataset> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed, "datagen");
    let d = spec.dim;

    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            v.iter_mut().for_each(|x| *x *= spec.separation / norm);
            v
        })
        .collect();
    let std = spec.axis_std();

    let n = spec.classes * spec.per_class;
    let mut labels: Vec<usize> = (0..n).map(|i| i / spec.per_class).collect();
    labels.shuffle(&mut rng);

    let mut data = Vec::with_capacity(n * d);
    for &label in &labels {
        let mean = &means[label];
        for j in 0..d {
            let noise: f64 = rng.sample(StandardNormal);
            data.push((mean[j] + std[j] * noise) as f32 as f64);
        }
    }
    FeatureDataset::new(DenseMatrix::from_vec(n, d, data)?, labels, spec.classes)
}
