//! Ridge-regression sufficient statistics and the closed-form classifier.
//!
//! A client summarises its shard as `A = ZᵀZ` and `b = ZᵀY` (one-hot `Y`,
//! +1/0 encoding). Statistics form a commutative monoid under elementwise
//! addition, so any partition of a dataset folds back to the same `(A, b)`;
//! the server then solves `(A + λI) W = b` and unit-normalises each column.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::io::{atomic_write, ByteReader};
use crate::linalg::{accumulate_gram, spd_solve, DenseMatrix};

pub const DEFAULT_LAMBDA: f64 = 0.01;
pub const STATS_MAGIC: [u8; 4] = *b"F3RS";
pub const STATS_VERSION: u32 = 1;

/// Columns with a norm at or below this are treated as absent classes.
const ZERO_COLUMN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RRStatistics {
    a: DenseMatrix,
    b: DenseMatrix,
    count: u64,
}

impl RRStatistics {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        Self {
            a: DenseMatrix::zeros(dim, dim),
            b: DenseMatrix::zeros(dim, classes),
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    pub fn classes(&self) -> usize {
        self.b.cols()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    /// Adds the contribution of `features` (n×q) with the given labels.
    pub fn absorb(&mut self, features: &DenseMatrix, labels: &[usize]) -> Result<()> {
        if features.cols() != self.dim() {
            return Err(Error::mismatch(
                "compute_local_stats",
                format!("{} feature columns", self.dim()),
                features.cols(),
            ));
        }
        if features.rows() != labels.len() {
            return Err(Error::mismatch(
                "compute_local_stats",
                format!("{} labels", features.rows()),
                labels.len(),
            ));
        }
        let classes = self.classes();
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                classes,
            });
        }
        accumulate_gram(&mut self.a, features);
        for (r, &label) in labels.iter().enumerate() {
            for (i, &zi) in features.row(r).iter().enumerate() {
                let v = self.b.get(i, label) + zi;
                self.b.set(i, label, v);
            }
        }
        self.count += labels.len() as u64;
        Ok(())
    }

    /// In-place merge; `self` becomes `self + other`.
    pub fn merge_from(&mut self, other: &RRStatistics) -> Result<()> {
        if self.dim() != other.dim() || self.classes() != other.classes() {
            return Err(Error::mismatch(
                "merge_stats",
                format!("q={} C={}", self.dim(), self.classes()),
                format!("q={} C={}", other.dim(), other.classes()),
            ));
        }
        self.a.add_assign(&other.a)?;
        self.b.add_assign(&other.b)?;
        self.count += other.count;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (q, c) = (self.dim(), self.classes());
        let mut out = Vec::with_capacity(24 + (q * (q + 1) / 2 + q * c) * 8);
        out.extend_from_slice(&STATS_MAGIC);
        out.extend_from_slice(&STATS_VERSION.to_le_bytes());
        out.extend_from_slice(&(q as u32).to_le_bytes());
        out.extend_from_slice(&(c as u32).to_le_bytes());
        out.extend_from_slice(&self.count.to_le_bytes());
        for i in 0..q {
            for &v in &self.a.row(i)[i..] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for &v in self.b.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = decode_stats_header(bytes)?;
        let (q, c) = (header.dim as usize, header.classes as usize);
        let expected = 24 + ((q * (q + 1) / 2 + q * c) * 8) as u64;
        if bytes.len() as u64 != expected {
            return Err(Error::TruncatedFile {
                expected,
                found: bytes.len() as u64,
            });
        }
        let mut r = ByteReader::new(&bytes[24..]);
        let mut a = DenseMatrix::zeros(q, q);
        for i in 0..q {
            for j in i..q {
                a.set(i, j, r.f64()?);
            }
        }
        crate::linalg::mirror_upper(&mut a);
        let mut b_data = Vec::with_capacity(q * c);
        for _ in 0..q * c {
            b_data.push(r.f64()?);
        }
        debug_assert_eq!(r.remaining(), 0);
        Ok(Self {
            a,
            b: DenseMatrix::from_vec(q, c, b_data)?,
            count: header.count,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsHeader {
    pub version: u32,
    pub dim: u32,
    pub classes: u32,
    pub count: u64,
}

pub fn decode_stats_header(bytes: &[u8]) -> Result<StatsHeader> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(STATS_MAGIC)?;
    let version = r.u32()?;
    if version != STATS_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    Ok(StatsHeader {
        version,
        dim: r.u32()?,
        classes: r.u32()?,
        count: r.u64()?,
    })
}

pub fn compute_local_stats(
    features: &DenseMatrix,
    labels: &[usize],
    classes: usize,
) -> Result<RRStatistics> {
    let mut stats = RRStatistics::zeros(features.cols(), classes);
    stats.absorb(features, labels)?;
    Ok(stats)
}

pub fn merge_stats(s1: &RRStatistics, s2: &RRStatistics) -> Result<RRStatistics> {
    let mut out = s1.clone();
    out.merge_from(s2)?;
    Ok(out)
}

/// Linear classifier `f(z) = Wᵀz / τ` over a q-dimensional feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    weights: DenseMatrix,
    temperature: f64,
    normalized: bool,
    /// Classes whose column was too small to normalise (absent from the data).
    zero_columns: Vec<usize>,
}

impl Classifier {
    pub fn new(weights: DenseMatrix) -> Self {
        Self {
            weights,
            temperature: 1.0,
            normalized: false,
            zero_columns: Vec::new(),
        }
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn into_weights(self) -> DenseMatrix {
        self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn classes(&self) -> usize {
        self.weights.cols()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidParams(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        self.temperature = temperature;
        Ok(self)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn zero_columns(&self) -> &[usize] {
        &self.zero_columns
    }

    /// Divides each class column by its Euclidean norm. Columns with norm
    /// ≤ 1e-12 are left untouched and listed in [`zero_columns`](Self::zero_columns).
    pub fn normalize_columns(mut self) -> Self {
        let (q, c) = self.weights.shape();
        let mut zero = Vec::new();
        for col in 0..c {
            let norm = (0..q)
                .map(|r| self.weights.get(r, col).powi(2))
                .sum::<f64>()
                .sqrt();
            if norm > ZERO_COLUMN_NORM {
                for r in 0..q {
                    let v = self.weights.get(r, col) / norm;
                    self.weights.set(r, col, v);
                }
            } else {
                zero.push(col);
            }
        }
        if !zero.is_empty() {
            log::warn!("classifier columns {zero:?} have zero norm and were not normalized");
        }
        self.zero_columns = zero;
        self.normalized = true;
        self
    }

    /// Raw scores `Wᵀz` (before temperature).
    pub fn scores(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(Error::mismatch("predict", self.dim(), z.len()));
        }
        self.weights.transpose_matvec(z)
    }

    /// argmax over classes of `Wᵀz`; ties go to the lowest class index.
    pub fn predict(&self, z: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(z)?))
    }

    pub fn evaluate_accuracy(&self, ds: &FeatureDataset) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if ds.dim() != self.dim() {
            return Err(Error::mismatch("evaluate_accuracy", self.dim(), ds.dim()));
        }
        let mut correct = 0usize;
        for (r, &label) in ds.labels().iter().enumerate() {
            if self.predict(ds.features().row(r))? == label {
                correct += 1;
            }
        }
        Ok(correct as f64 / ds.len() as f64)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `W = (A + λI)⁻¹ b`, unnormalised, temperature 1.
pub fn solve_classifier(stats: &RRStatistics, lambda: f64) -> Result<Classifier> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParams(format!(
            "ridge penalty must be positive, got {lambda}"
        )));
    }
    let mut system = stats.a.clone();
    system.add_to_diagonal(lambda);
    let w = spd_solve(&system, &stats.b)?;
    Ok(Classifier::new(w))
}

/// Ridge classifier fitted on the whole dataset at once, normalised.
pub fn centralized_rr(
    features: &DenseMatrix,
    labels: &[usize],
    classes: usize,
    lambda: f64,
) -> Result<Classifier> {
    let stats = compute_local_stats(features, labels, classes)?;
    Ok(solve_classifier(&stats, lambda)?.normalize_columns())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_gaussian_mixture, MixtureSpec};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(seed: u64, n: usize, q: usize, c: usize) -> (DenseMatrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * q).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
        (DenseMatrix::from_vec(n, q, data).unwrap(), labels)
    }

    /// Σ φφᵀ and Σ φ e_yᵀ, one sample at a time.
    fn per_sample_oracle(
        z: &DenseMatrix,
        labels: &[usize],
        c: usize,
    ) -> (DenseMatrix, DenseMatrix) {
        let q = z.cols();
        let mut a = DenseMatrix::zeros(q, q);
        let mut b = DenseMatrix::zeros(q, c);
        for (r, &l) in labels.iter().enumerate() {
            let row = z.row(r);
            for i in 0..q {
                for j in 0..q {
                    a.set(i, j, a.get(i, j) + row[i] * row[j]);
                }
                b.set(i, l, b.get(i, l) + row[i]);
            }
        }
        (a, b)
    }

    #[test]
    fn single_sample_statistics() {
        let z = DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let s = compute_local_stats(&z, &[0], 2).unwrap();
        assert_eq!(s.a().to_rows(), vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(s.b().to_rows(), vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(s.count(), 1);
    }

    #[test]
    fn empty_shard_gives_zero_statistics() {
        let s = compute_local_stats(&DenseMatrix::zeros(0, 3), &[], 4).unwrap();
        assert_eq!(s, RRStatistics::zeros(3, 4));
    }

    #[test]
    fn local_stats_match_per_sample_loop() {
        let (z, labels) = random_data(20, 20, 4, 3);
        let s = compute_local_stats(&z, &labels, 3).unwrap();
        let (a, b) = per_sample_oracle(&z, &labels, 3);
        assert!(s.a().relative_distance(&a).unwrap() <= 1e-14);
        assert!(s.b().relative_distance(&b).unwrap() <= 1e-14);
    }

    #[test]
    fn label_out_of_range() {
        let z = DenseMatrix::zeros(2, 2);
        assert!(matches!(
            compute_local_stats(&z, &[0, 2], 2),
            Err(Error::LabelOutOfRange { index: 1, .. })
        ));
    }

    #[test]
    fn merge_identity_and_commutativity() {
        let (z1, l1) = random_data(1, 13, 5, 3);
        let (z2, l2) = random_data(2, 9, 5, 3);
        let s1 = compute_local_stats(&z1, &l1, 3).unwrap();
        let s2 = compute_local_stats(&z2, &l2, 3).unwrap();
        assert_eq!(merge_stats(&s1, &RRStatistics::zeros(5, 3)).unwrap(), s1);
        assert_eq!(
            merge_stats(&s1, &s2).unwrap(),
            merge_stats(&s2, &s1).unwrap()
        );
        assert!(merge_stats(&s1, &RRStatistics::zeros(4, 3)).is_err());
    }

    #[test]
    fn sharded_fold_matches_full_dataset() {
        let (z, labels) = random_data(100, 100, 6, 4);
        let full = compute_local_stats(&z, &labels, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut order: Vec<usize> = (0..100).collect();
        order.shuffle(&mut rng);
        let mut cuts: Vec<usize> = rand::seq::index::sample(&mut rng, 99, 6)
            .into_iter()
            .map(|c| c + 1)
            .collect();
        cuts.sort_unstable();
        cuts.insert(0, 0);
        cuts.push(100);
        let mut folded = RRStatistics::zeros(6, 4);
        for w in cuts.windows(2) {
            let idx = &order[w[0]..w[1]];
            let shard_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let shard = compute_local_stats(&z.select_rows(idx), &shard_labels, 4).unwrap();
            folded = merge_stats(&folded, &shard).unwrap();
        }
        assert_eq!(folded.count(), 100);
        assert!(folded.a().relative_distance(full.a()).unwrap() <= 1e-12);
        assert!(folded.b().relative_distance(full.b()).unwrap() <= 1e-12);
    }

    #[test]
    fn identity_design_solves_analytically() {
        let c = 4;
        let z = DenseMatrix::identity(c);
        let labels: Vec<usize> = (0..c).collect();
        let s = compute_local_stats(&z, &labels, c).unwrap();
        let w = solve_classifier(&s, 0.01).unwrap();
        let expected = DenseMatrix::identity(c).scaled(1.0 / 1.01);
        assert!(w.weights().relative_distance(&expected).unwrap() <= 1e-15);
        assert_eq!(w.temperature(), 1.0);
        assert!(!w.is_normalized());
    }

    #[test]
    fn heavy_regularisation_bounds_weights() {
        let (z, labels) = random_data(5, 40, 6, 3);
        let s = compute_local_stats(&z, &labels, 3).unwrap();
        let lambda = 1e6;
        let w = solve_classifier(&s, lambda).unwrap();
        assert!(w.weights().frobenius_norm() <= s.b().frobenius_norm() / lambda);
    }

    #[test]
    fn solve_residual_is_small() {
        let (z, labels) = random_data(8, 30, 8, 3);
        let s = compute_local_stats(&z, &labels, 3).unwrap();
        let w = solve_classifier(&s, 0.01).unwrap();
        let mut system = s.a().clone();
        system.add_to_diagonal(0.01);
        let residual = system.matmul(w.weights()).unwrap().sub(s.b()).unwrap();
        assert!(residual.frobenius_norm() <= 1e-8 * s.b().frobenius_norm());
    }

    #[test]
    fn non_positive_lambda_is_rejected() {
        let s = RRStatistics::zeros(2, 2);
        assert!(solve_classifier(&s, 0.0).is_err());
        assert!(solve_classifier(&s, -1.0).is_err());
    }

    #[test]
    fn normalisation_examples() {
        let w = Classifier::new(DenseMatrix::from_diag(&[3.0, 4.0])).normalize_columns();
        assert_eq!(w.weights(), &DenseMatrix::identity(2));
        let w = Classifier::new(DenseMatrix::from_vec(2, 1, vec![3.0, 4.0]).unwrap())
            .normalize_columns();
        assert!((w.weights().get(0, 0) - 0.6).abs() < 1e-15);
        assert!((w.weights().get(1, 0) - 0.8).abs() < 1e-15);
        assert!(w.is_normalized());
    }

    #[test]
    fn zero_columns_are_reported_not_touched() {
        let w = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let n = Classifier::new(w).normalize_columns();
        assert_eq!(n.zero_columns(), &[1]);
        assert_eq!(n.weights().column(1), vec![0.0, 0.0]);
        assert_eq!(n.weights().column(0), vec![1.0, 0.0]);
    }

    #[test]
    fn normalisation_is_idempotent() {
        let (z, labels) = random_data(3, 30, 5, 3);
        let s = compute_local_stats(&z, &labels, 3).unwrap();
        let once = solve_classifier(&s, 0.01).unwrap().normalize_columns();
        let twice = once.clone().normalize_columns();
        assert!(twice.weights().relative_distance(once.weights()).unwrap() <= 1e-12);
    }

    #[test]
    fn single_class_direct_formula() {
        let (z, _) = random_data(4, 25, 3, 1);
        let labels = vec![0; 25];
        let w = centralized_rr(&z, &labels, 1, 0.01).unwrap();
        // (A + λI)⁻¹ Σφ, then unit-normalised; computed with an independent dense inverse
        let mut a = DenseMatrix::zeros(3, 3);
        let mut sum = [0.0; 3];
        for r in 0..25 {
            let row = z.row(r);
            for i in 0..3 {
                sum[i] += row[i];
                for j in 0..3 {
                    a.set(i, j, a.get(i, j) + row[i] * row[j]);
                }
            }
        }
        a.add_to_diagonal(0.01);
        let inv = crate::linalg::oracles::gauss_jordan_inverse(&a);
        let raw: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| inv.get(i, j) * sum[j]).sum())
            .collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..3 {
            assert!((w.weights().get(i, 0) - raw[i] / norm).abs() < 1e-10);
        }
    }

    #[test]
    fn separable_blobs_are_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(400);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        // unit-variance blobs at ±3 along the first axis: 6σ apart
        for i in 0..400 {
            let label = i % 2;
            let centre = if label == 0 { -3.0 } else { 3.0 };
            let x: f64 = centre + rng.sample::<f64, _>(rand_distr::StandardNormal);
            let y: f64 = rng.sample(rand_distr::StandardNormal);
            rows.push(vec![x, y]);
            labels.push(label);
        }
        let z = DenseMatrix::from_rows(&rows).unwrap();
        let w = centralized_rr(&z, &labels, 2, 0.01).unwrap();
        let ds = FeatureDataset::new(z, labels, 2).unwrap();
        assert!(w.evaluate_accuracy(&ds).unwrap() >= 0.99);
    }

    #[test]
    fn predict_examples() {
        let w = Classifier::new(DenseMatrix::identity(3));
        assert_eq!(w.predict(&[1.0, 0.0, 0.0]).unwrap(), 0);
        assert_eq!(w.predict(&[0.0, 0.0, 2.0]).unwrap(), 2);
        let normed = w.clone().normalize_columns();
        assert_eq!(normed.predict(&[0.0, 0.0, 0.0]).unwrap(), 0);
        assert!(matches!(
            w.predict(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn accuracy_extremes() {
        let z = DenseMatrix::identity(2);
        let ds = FeatureDataset::new(z.clone(), vec![0, 1], 2).unwrap();
        let perfect = Classifier::new(DenseMatrix::identity(2));
        assert_eq!(perfect.evaluate_accuracy(&ds).unwrap(), 1.0);
        let flipped = FeatureDataset::new(z, vec![1, 0], 2).unwrap();
        assert_eq!(perfect.evaluate_accuracy(&flipped).unwrap(), 0.0);
        let empty = FeatureDataset::new(DenseMatrix::zeros(0, 2), vec![], 2).unwrap();
        assert!(matches!(
            perfect.evaluate_accuracy(&empty),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn random_classifier_is_near_chance() {
        let c = 5;
        let ds = gen_gaussian_mixture(&MixtureSpec {
            classes: c,
            dim: 8,
            per_class: 400,
            separation: 0.0,
            anisotropy: 1.0,
            seed: 1,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let w = DenseMatrix::from_vec(
            8,
            c,
            (0..8 * c).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let acc = Classifier::new(w).evaluate_accuracy(&ds).unwrap();
        let n = ds.len() as f64;
        assert!((acc - 1.0 / c as f64).abs() <= 5.0 / n.sqrt(), "acc {acc}");
    }

    #[test]
    fn statistics_round_trip_bitwise() {
        let (z, labels) = random_data(12, 17, 5, 3);
        let s = compute_local_stats(&z, &labels, 3).unwrap();
        let bytes = s.to_bytes();
        assert_eq!(&bytes[0..4], b"F3RS");
        assert_eq!(bytes.len(), 24 + (15 + 15) * 8);
        let back = RRStatistics::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert!(matches!(
            RRStatistics::from_bytes(&bytes[..bytes.len() - 8]),
            Err(Error::TruncatedFile { .. })
        ));
    }

    #[test]
    fn equal_norm_normalisation_keeps_argmax() {
        let (z, labels) = random_data(21, 30, 4, 3);
        let s = compute_local_stats(&z, &labels, 3).unwrap();
        let w = solve_classifier(&s, 0.01).unwrap().normalize_columns();
        let scaled = Classifier::new(w.weights().scaled(7.5)).normalize_columns();
        for r in 0..z.rows() {
            assert_eq!(
                w.predict(z.row(r)).unwrap(),
                scaled.predict(z.row(r)).unwrap()
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn merge_is_associative(seed in any::<u64>()) {
            let (z1, l1) = random_data(seed, 11, 4, 3);
            let (z2, l2) = random_data(seed ^ 1, 7, 4, 3);
            let (z3, l3) = random_data(seed ^ 2, 5, 4, 3);
            let s1 = compute_local_stats(&z1, &l1, 3).unwrap();
            let s2 = compute_local_stats(&z2, &l2, 3).unwrap();
            let s3 = compute_local_stats(&z3, &l3, 3).unwrap();
            let left = merge_stats(&merge_stats(&s1, &s2).unwrap(), &s3).unwrap();
            let right = merge_stats(&s1, &merge_stats(&s2, &s3).unwrap()).unwrap();
            prop_assert!(left.a().relative_distance(right.a()).unwrap() <= 1e-12);
            prop_assert!(left.b().relative_distance(right.b()).unwrap() <= 1e-12);
            prop_assert_eq!(left.count(), right.count());
        }

        #[test]
        fn argmax_is_positively_homogeneous(seed in any::<u64>(), scale in 1e-3f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = DenseMatrix::from_vec(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let clf = Classifier::new(w);
            let z: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let zs: Vec<f64> = z.iter().map(|v| v * scale).collect();
            prop_assert_eq!(clf.predict(&z).unwrap(), clf.predict(&zs).unwrap());
        }

        #[test]
        fn statistics_serialisation_round_trips(seed in any::<u64>(), n in 0usize..20, q in 1usize..7, c in 1usize..5) {
            let (z, labels) = random_data(seed, n, q, c);
            let s = compute_local_stats(&z, &labels, c).unwrap();
            prop_assert_eq!(RRStatistics::from_bytes(&s.to_bytes()).unwrap(), s);
        }
    }
}
