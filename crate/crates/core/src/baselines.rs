//! Reference methods on frozen features: nearest class mean (FedNCM) and
//! federated softmax linear probing trained with FedAvg / FedAvgM, optionally
//! initialised from a ridge classifier.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{Algorithm, CostLedger, CostParams};
use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::federation::{
    ClientSampler, FederationConfig, RoundRecord, SamplingMode, TrainingTrace,
};
use crate::linalg::DenseMatrix;
use crate::partition::PartitionManifest;
use crate::ridge::Classifier;
use crate::seed::rng_for;

/// Per-class feature sums and counts; mergeable like the ridge statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMeanStats {
    /// q×C, column c is the sum of class-c features.
    pub sums: DenseMatrix,
    pub counts: Vec<u64>,
}

impl ClassMeanStats {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        Self {
            sums: DenseMatrix::zeros(dim, classes),
            counts: vec![0; classes],
        }
    }

    pub fn absorb(&mut self, features: &DenseMatrix, labels: &[usize]) -> Result<()> {
        if features.rows() != labels.len() {
            return Err(Error::mismatch(
                "class means",
                features.rows(),
                labels.len(),
            ));
        }
        if features.cols() != self.sums.rows() {
            return Err(Error::mismatch(
                "class means",
                self.sums.rows(),
                features.cols(),
            ));
        }
        let classes = self.counts.len();
        for (r, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(Error::LabelOutOfRange {
                    index: r,
                    label: y,
                    classes,
                });
            }
            self.counts[y] += 1;
            for (i, &v) in features.row(r).iter().enumerate() {
                let s = self.sums.get(i, y);
                self.sums.set(i, y, s + v);
            }
        }
        Ok(())
    }

    pub fn merge_from(&mut self, other: &ClassMeanStats) -> Result<()> {
        self.sums.add_assign(&other.sums)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Normalised class means; classes with no samples keep a zero column.
    pub fn classifier(&self) -> Classifier {
        let mut means = self.sums.clone();
        for (c, &n) in self.counts.iter().enumerate() {
            if n > 0 {
                for r in 0..means.rows() {
                    let v = means.get(r, c) / n as f64;
                    means.set(r, c, v);
                }
            }
        }
        Classifier::new(means).normalize_columns()
    }
}

/// Nearest-class-mean classifier assembled from per-client class sums.
pub fn fedncm_fit(ds: &FeatureDataset, manifest: &PartitionManifest) -> Result<Classifier> {
    if manifest.num_samples != ds.len() {
        return Err(Error::InvalidManifest(format!(
            "manifest covers {} samples but the dataset has {}",
            manifest.num_samples,
            ds.len()
        )));
    }
    let local: Vec<ClassMeanStats> = manifest
        .clients()
        .par_iter()
        .map(|shard| {
            let mut s = ClassMeanStats::zeros(ds.dim(), ds.classes());
            let labels: Vec<usize> = shard.iter().map(|&i| ds.labels()[i]).collect();
            s.absorb(&ds.features().select_rows(shard), &labels)?;
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let mut total = ClassMeanStats::zeros(ds.dim(), ds.classes());
    for s in &local {
        total.merge_from(s)?;
    }
    Ok(total.classifier())
}

/// Row-wise softmax of `zW / τ` (n×C), computed with the row max subtracted.
pub fn softmax_forward(w: &DenseMatrix, temperature: f64, z: &DenseMatrix) -> Result<DenseMatrix> {
    let mut p = z.matmul(w)?;
    let inv_t = 1.0 / temperature;
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = ((*v - max) * inv_t).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(p)
}

/// Mean cross-entropy over the batch and its gradient `(1/τ) Zᵀ(P − Y) / |B|`.
pub fn ce_loss_and_grad(
    w: &DenseMatrix,
    temperature: f64,
    z: &DenseMatrix,
    labels: &[usize],
) -> Result<(f64, DenseMatrix)> {
    if z.rows() != labels.len() {
        return Err(Error::mismatch("cross entropy", z.rows(), labels.len()));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = w.cols();
    let logits = z.matmul(w)?;
    let inv_t = 1.0 / temperature;
    let mut resid = DenseMatrix::zeros(z.rows(), classes);
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::LabelOutOfRange {
                index: r,
                label: y,
                classes,
            });
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let out = resid.row_mut(r);
        let mut sum = 0.0;
        for (o, &v) in out.iter_mut().zip(row) {
            *o = ((v - max) * inv_t).exp();
            sum += *o;
        }
        loss += sum.ln() - (row[y] - max) * inv_t;
        out.iter_mut().for_each(|v| *v /= sum);
        out[y] -= 1.0;
    }
    let n = labels.len() as f64;
    let mut grad = z.transpose().matmul(&resid)?;
    grad.scale(inv_t / n);
    Ok((loss / n, grad))
}

pub fn mean_cross_entropy(w: &DenseMatrix, temperature: f64, ds: &FeatureDataset) -> Result<f64> {
    Ok(ce_loss_and_grad(w, temperature, ds.features(), ds.labels())?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LpConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub server_lr: f64,
    pub server_momentum: f64,
    pub rounds: usize,
    pub temperature: f64,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            weight_decay: 4e-5,
            batch_size: 50,
            local_epochs: 5,
            server_lr: 1.0,
            server_momentum: 0.0,
            rounds: 100,
            temperature: 1.0,
        }
    }
}

impl LpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParams(what.to_string()));
        // lr = 0 is allowed: it freezes the initial classifier
        if !(self.lr >= 0.0) || !self.lr.is_finite() || !(self.server_lr > 0.0) {
            return bad("need lr >= 0 and a positive server learning rate");
        }
        if !(self.weight_decay >= 0.0) || !(0.0..1.0).contains(&self.server_momentum) {
            return bad("need weight_decay >= 0 and server momentum in [0, 1)");
        }
        if self.batch_size == 0 || self.local_epochs == 0 {
            return bad("batch size and local epochs must be at least 1");
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return bad("temperature must be positive");
        }
        Ok(())
    }

    pub fn algorithm(&self) -> Algorithm {
        if self.server_momentum > 0.0 {
            Algorithm::FedavgmLp
        } else {
            Algorithm::FedavgLp
        }
    }
}

/// `local_epochs` passes of mini-batch SGD over one client's shard, starting
/// from `w`. Each epoch reshuffles; the last partial batch is kept.
pub fn local_sgd_lp<R: Rng>(
    w: &DenseMatrix,
    shard: &FeatureDataset,
    cfg: &LpConfig,
    rng: &mut R,
) -> Result<DenseMatrix> {
    let mut w = w.clone();
    let mut order: Vec<usize> = (0..shard.len()).collect();
    for _ in 0..cfg.local_epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            let z = shard.features().select_rows(batch);
            let labels: Vec<usize> = batch.iter().map(|&i| shard.labels()[i]).collect();
            let (_, mut grad) = ce_loss_and_grad(&w, cfg.temperature, &z, &labels)?;
            grad.axpy(cfg.weight_decay, &w)?;
            w.axpy(-cfg.lr, &grad)?;
        }
    }
    Ok(w)
}

/// Server state carried across rounds of FedAvg(M).
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub weights: DenseMatrix,
    pub momentum: DenseMatrix,
}

/// Sample-weighted average of client models, applied as a pseudo-gradient
/// step `Δ = W − avg`, `m ← μm + Δ`, `W ← W − η m`. With `μ = 0`, `η = 1` the
/// new weights are exactly the weighted average.
pub fn server_aggregate(
    state: &ServerState,
    updates: &[(DenseMatrix, usize)],
    server_lr: f64,
    server_momentum: f64,
) -> Result<ServerState> {
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    let (q, c) = state.weights.shape();
    let mut avg = DenseMatrix::zeros(q, c);
    for (w, n) in updates {
        avg.axpy(*n as f64 / total as f64, w)?;
    }
    let delta = state.weights.sub(&avg)?;
    let mut momentum = state.momentum.scaled(server_momentum);
    momentum.add_assign(&delta)?;
    let weights = if server_momentum == 0.0 && server_lr == 1.0 {
        avg
    } else {
        let mut w = state.weights.clone();
        w.axpy(-server_lr, &momentum)?;
        w
    };
    Ok(ServerState { weights, momentum })
}

/// Temperature from `grid` minimising mean cross-entropy on `ds`; ties go to
/// the smaller value.
pub fn calibrate_temperature(w: &DenseMatrix, ds: &FeatureDataset, grid: &[f64]) -> Result<f64> {
    let mut sorted: Vec<f64> = grid.to_vec();
    if sorted.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if sorted.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidParams("temperatures must be positive".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let mut best = (f64::INFINITY, sorted[0]);
    for &t in &sorted {
        let loss = mean_cross_entropy(w, t, ds)?;
        if loss < best.0 {
            best = (loss, t);
        }
    }
    Ok(best.1)
}

pub const DEFAULT_TEMPERATURE_GRID: [f64; 8] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0];

/// Starting weights for linear probing.
#[derive(Debug, Clone)]
pub enum LpInit {
    /// Small Gaussian weights drawn from the run seed.
    Random,
    /// A trained classifier's weights (its own temperature is ignored).
    From(Classifier),
}

#[derive(Debug, Clone)]
pub struct LpRun {
    pub classifier: Classifier,
    pub trace: TrainingTrace,
    pub cost_params: CostParams,
}

/// Federated linear probing. Clients are re-drawn every round (with
/// replacement); `fed.rounds_max` is ignored in favour of `lp.rounds`.
pub fn run_lp(
    ds: &FeatureDataset,
    manifest: &PartitionManifest,
    fed: &FederationConfig,
    lp: &LpConfig,
    init: LpInit,
    eval: Option<&FeatureDataset>,
) -> Result<LpRun> {
    fed.check_manifest(ds, manifest)?;
    lp.validate()?;
    let eval = eval.unwrap_or(ds);
    let (q, classes) = (ds.dim(), ds.classes());

    let weights = match init {
        LpInit::Random => {
            let mut rng = rng_for(fed.seed, "lp/init");
            let data = (0..q * classes)
                .map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            DenseMatrix::from_vec(q, classes, data)?
        }
        LpInit::From(c) => {
            if c.dim() != q || c.classes() != classes {
                return Err(Error::mismatch(
                    "linear probe init",
                    format!("{q}x{classes}"),
                    format!("{}x{}", c.dim(), c.classes()),
                ));
            }
            c.into_weights()
        }
    };
    let mut state = ServerState {
        momentum: DenseMatrix::zeros(q, classes),
        weights,
    };

    let algorithm = lp.algorithm();
    let mut cost_params = fed.cost.clone();
    cost_params.dim = q as u64;
    cost_params.classes = classes as u64;
    cost_params.local_epochs = lp.local_epochs as u64;
    let sizes: Vec<u64> = manifest.client_sizes().iter().map(|&n| n as u64).collect();
    let mut ledger = CostLedger::new(algorithm, cost_params.clone(), sizes)?;

    let shards: Vec<FeatureDataset> = manifest.clients().iter().map(|s| ds.subset(s)).collect();
    let mut rng = rng_for(fed.seed, "sampling");
    let mut sampler = ClientSampler::new(fed.num_clients, SamplingMode::WithReplacement);
    let mut seen = vec![false; fed.num_clients];
    let mut distinct = 0usize;
    let mut trace = TrainingTrace::new(algorithm);

    for round in 1..=lp.rounds {
        let sampled = sampler.next_round(fed.clients_per_round, &mut rng)?;
        let updates: Vec<(DenseMatrix, usize)> = sampled
            .par_iter()
            .filter(|&&k| !shards[k].is_empty())
            .map(|&k| {
                let mut crng = rng_for(fed.seed, &format!("lp/client/{k}/round/{round}"));
                let w = local_sgd_lp(&state.weights, &shards[k], lp, &mut crng)?;
                Ok((w, shards[k].len()))
            })
            .collect::<Result<_>>()?;
        if !updates.is_empty() {
            state = server_aggregate(&state, &updates, lp.server_lr, lp.server_momentum)?;
        }
        let new_clients: Vec<usize> = sampled.iter().copied().filter(|&k| !seen[k]).collect();
        for &k in &new_clients {
            seen[k] = true;
        }
        distinct += new_clients.len();
        let cost = ledger.record_round(&sampled)?;
        let evaluate = round == lp.rounds || (fed.eval_every > 0 && round % fed.eval_every == 0);
        let accuracy = if evaluate {
            Some(Classifier::new(state.weights.clone()).evaluate_accuracy(eval)?)
        } else {
            None
        };
        trace.records.push(RoundRecord {
            round,
            sampled,
            new_clients,
            distinct_clients: distinct,
            accuracy,
            cost,
        });
    }

    let classifier = Classifier::new(state.weights).with_temperature(lp.temperature)?;
    Ok(LpRun {
        classifier,
        trace,
        cost_params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_gaussian_mixture, MixtureSpec};
    use crate::partition::partition_dirichlet;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(seed: u64, separation: f64) -> FeatureDataset {
        gen_gaussian_mixture(&MixtureSpec {
            classes: 4,
            dim: 6,
            per_class: 50,
            separation,
            anisotropy: 2.0,
            seed,
        })
        .unwrap()
    }

    fn random_matrix(seed: u64, r: usize, c: usize, scale: f64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..r * c)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        DenseMatrix::from_vec(r, c, v).unwrap()
    }

    #[test]
    fn ncm_on_two_points() {
        let z = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -2.0], vec![1.0, 0.0]]).unwrap();
        let ds = FeatureDataset::new(z, vec![0, 1, 0], 3).unwrap();
        let m = PartitionManifest::new("dirichlet", 1.0, 0, 3, vec![vec![0, 1], vec![2]]).unwrap();
        let c = fedncm_fit(&ds, &m).unwrap();
        assert_eq!(c.weights().column(0), vec![1.0, 0.0]);
        assert_eq!(c.weights().column(1), vec![0.0, -1.0]);
        assert_eq!(c.zero_columns(), &[2]);
    }

    #[test]
    fn ncm_is_partition_invariant() {
        let ds = data(1, 2.0);
        let a = fedncm_fit(&ds, &partition_dirichlet(&ds, 3, 0.1, 1).unwrap()).unwrap();
        let b = fedncm_fit(&ds, &partition_dirichlet(&ds, 11, 10.0, 2).unwrap()).unwrap();
        assert!(a.weights().relative_distance(b.weights()).unwrap() <= 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one_under_large_logits() {
        let w = random_matrix(3, 6, 4, 1e3);
        let z = random_matrix(4, 5, 6, 1.0);
        let p = softmax_forward(&w, 0.01, &z).unwrap();
        for r in 0..5 {
            let s: f64 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(p.row(r).iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ds = data(5, 1.0);
        let z = ds.features().select_rows(&(0..17).collect::<Vec<_>>());
        let labels = ds.labels()[..17].to_vec();
        let w = random_matrix(6, 6, 4, 0.3);
        let tau = 0.7;
        let (_, grad) = ce_loss_and_grad(&w, tau, &z, &labels).unwrap();
        let h = 1e-6;
        for r in 0..6 {
            for c in 0..4 {
                let mut wp = w.clone();
                wp.set(r, c, w.get(r, c) + h);
                let mut wm = w.clone();
                wm.set(r, c, w.get(r, c) - h);
                let lp = ce_loss_and_grad(&wp, tau, &z, &labels).unwrap().0;
                let lm = ce_loss_and_grad(&wm, tau, &z, &labels).unwrap().0;
                let fd = (lp - lm) / (2.0 * h);
                assert!(
                    (fd - grad.get(r, c)).abs() <= 1e-6,
                    "({r},{c}) {fd} vs {}",
                    grad.get(r, c)
                );
            }
        }
    }

    #[test]
    fn uniform_logits_give_log_c_loss() {
        let z = random_matrix(7, 9, 6, 1.0);
        let labels: Vec<usize> = (0..9).map(|i| i % 4).collect();
        let (loss, _) = ce_loss_and_grad(&DenseMatrix::zeros(6, 4), 1.0, &z, &labels).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn local_sgd_one_step_by_hand() {
        let ds = data(8, 1.0).subset(&[0, 1, 2]);
        let cfg = LpConfig {
            lr: 0.5,
            weight_decay: 0.1,
            batch_size: 10,
            local_epochs: 1,
            ..LpConfig::default()
        };
        let w0 = random_matrix(9, 6, 4, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let got = local_sgd_lp(&w0, &ds, &cfg, &mut rng).unwrap();
        let (_, g) = ce_loss_and_grad(&w0, 1.0, ds.features(), ds.labels()).unwrap();
        let mut want = w0.clone();
        for i in 0..want.as_slice().len() {
            want.as_mut_slice()[i] -= 0.5 * (g.as_slice()[i] + 0.1 * w0.as_slice()[i]);
        }
        assert!(got.relative_distance(&want).unwrap() <= 1e-12);
    }

    #[test]
    fn local_sgd_takes_ceil_n_over_b_steps() {
        // with lr tiny the update is ≈ steps × first gradient; count steps via
        // a zero-data-gradient setup: pure weight decay shrinks by (1 − lr·wd) per step
        let z = DenseMatrix::zeros(7, 6);
        let ds = FeatureDataset::new(z, vec![0; 7], 4).unwrap();
        let cfg = LpConfig {
            lr: 0.1,
            weight_decay: 1.0,
            batch_size: 3,
            local_epochs: 2,
            ..LpConfig::default()
        };
        let w0 = random_matrix(1, 6, 4, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let got = local_sgd_lp(&w0, &ds, &cfg, &mut rng).unwrap();
        // 2 epochs × ⌈7/3⌉ = 6 steps
        let want = w0.scaled(0.9f64.powi(6));
        assert!(got.relative_distance(&want).unwrap() <= 1e-12);
    }

    #[test]
    fn plain_average_is_exact() {
        let base = random_matrix(1, 3, 2, 1.0);
        let a = random_matrix(2, 3, 2, 1.0);
        let b = random_matrix(3, 3, 2, 1.0);
        let state = ServerState {
            weights: base,
            momentum: DenseMatrix::zeros(3, 2),
        };
        let out = server_aggregate(&state, &[(a.clone(), 1), (b.clone(), 3)], 1.0, 0.0).unwrap();
        let mut avg = DenseMatrix::zeros(3, 2);
        avg.axpy(0.25, &a).unwrap();
        avg.axpy(0.75, &b).unwrap();
        assert_eq!(out.weights, avg);
    }

    #[test]
    fn momentum_unrolled_by_hand() {
        let (mu, eta) = (0.9, 0.5);
        let mut state = ServerState {
            weights: DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap(),
            momentum: DenseMatrix::zeros(1, 1),
        };
        // each round every client returns W − 0.1, so Δ = 0.1 always
        let (mut w, mut m) = (1.0f64, 0.0f64);
        for _ in 0..3 {
            let client = DenseMatrix::from_vec(1, 1, vec![state.weights.get(0, 0) - 0.1]).unwrap();
            state = server_aggregate(&state, &[(client, 5)], eta, mu).unwrap();
            m = mu * m + 0.1;
            w -= eta * m;
            assert!((state.weights.get(0, 0) - w).abs() < 1e-12);
        }
        // m: 0.1, 0.19, 0.271
        assert!((state.momentum.get(0, 0) - 0.271).abs() < 1e-12);
    }

    #[test]
    fn temperature_grid_and_ties() {
        let ds = data(11, 3.0);
        assert!(matches!(
            calibrate_temperature(&DenseMatrix::zeros(6, 4), &ds, &[]),
            Err(Error::EmptyGrid)
        ));
        // zero weights: loss is log C for every τ, so the smallest wins
        let t = calibrate_temperature(&DenseMatrix::zeros(6, 4), &ds, &[2.0, 0.5, 1.0]).unwrap();
        assert_eq!(t, 0.5);
        let grid = DEFAULT_TEMPERATURE_GRID;
        let w = crate::ridge::centralized_rr(ds.features(), ds.labels(), 4, 0.01).unwrap();
        let best = calibrate_temperature(w.weights(), &ds, &grid).unwrap();
        let best_loss = mean_cross_entropy(w.weights(), best, &ds).unwrap();
        for &t in &grid {
            assert!(best_loss <= mean_cross_entropy(w.weights(), t, &ds).unwrap());
        }
    }

    #[test]
    fn lp_learns_separable_data_and_is_deterministic() {
        let ds = data(12, 4.0);
        let m = partition_dirichlet(&ds, 8, 1.0, 1).unwrap();
        let mut fed = FederationConfig::new(8, 3, 4);
        fed.eval_every = 5;
        let lp = LpConfig {
            rounds: 20,
            ..LpConfig::default()
        };
        let a = run_lp(&ds, &m, &fed, &lp, LpInit::Random, None).unwrap();
        let b = run_lp(&ds, &m, &fed, &lp, LpInit::Random, None).unwrap();
        assert_eq!(a.classifier, b.classifier);
        assert_eq!(a.trace, b.trace);
        assert!(a.trace.final_accuracy().unwrap() >= 0.9);
        assert_eq!(a.trace.len(), 20);
        assert_eq!(
            a.trace
                .records
                .iter()
                .filter(|r| r.accuracy.is_some())
                .count(),
            4
        );
        // every visit uploads dC values
        let last = a.trace.records.last().unwrap();
        assert_eq!(last.cost.up_bytes, 20 * 3 * 4 * 6 * 4);
    }

    #[test]
    fn lp_rejects_mismatched_init() {
        let ds = data(13, 1.0);
        let m = partition_dirichlet(&ds, 4, 1.0, 1).unwrap();
        let fed = FederationConfig::new(4, 2, 0);
        let init = LpInit::From(Classifier::new(DenseMatrix::zeros(5, 4)));
        assert!(run_lp(&ds, &m, &fed, &LpConfig::default(), init, None).is_err());
    }

    #[test]
    fn softmax_examples() {
        let z = DenseMatrix::from_vec(1, 2, vec![1.0, -1.0]).unwrap();
        let p = softmax_forward(&DenseMatrix::zeros(2, 4), 1.0, &z).unwrap();
        assert!(p.row(0).iter().all(|&v| (v - 0.25).abs() < 1e-15));
        // logits (1, 0) at τ = 1e-3
        let w = DenseMatrix::from_vec(2, 2, vec![0.5, 0.0, -0.5, 0.0]).unwrap();
        let p = softmax_forward(&w, 1e-3, &z).unwrap();
        assert!(p.get(0, 0) >= 1.0 - 1e-6);
        let huge = DenseMatrix::from_vec(2, 3, vec![1e4, -1e4, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let p = softmax_forward(&huge, 1.0, &z).unwrap();
        assert!(p.row(0).iter().all(|v| v.is_finite()));
        assert!((p.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_argmax_matches_logits() {
        let w = random_matrix(21, 6, 5, 1.0);
        let z = random_matrix(22, 8, 6, 1.0);
        let logits = z.matmul(&w).unwrap();
        for tau in [0.01, 0.3, 1.0, 7.0] {
            let p = softmax_forward(&w, tau, &z).unwrap();
            for r in 0..8 {
                assert_eq!(
                    crate::ridge::argmax(p.row(r)),
                    crate::ridge::argmax(logits.row(r))
                );
            }
        }
    }

    #[test]
    fn confident_correct_predictions_have_vanishing_loss() {
        let z = DenseMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let w = DenseMatrix::from_diag(&[50.0, 50.0]);
        let (loss, grad) = ce_loss_and_grad(&w, 1.0, &z, &[0, 1]).unwrap();
        assert!(loss < 1e-20);
        assert!(grad.max_abs() < 1e-20);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let ds = data(14, 2.0);
        let w0 = random_matrix(3, 6, 4, 1.0);
        let cfg = LpConfig {
            lr: 0.0,
            ..LpConfig::default()
        };
        let out = local_sgd_lp(&w0, &ds, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out, w0);
    }

    #[test]
    fn local_training_lowers_shard_loss() {
        for seed in 0..10 {
            let ds = data(30 + seed, 4.0);
            let w0 = random_matrix(seed, 6, 4, 0.01);
            let cfg = LpConfig {
                lr: 0.01,
                ..LpConfig::default()
            };
            let w = local_sgd_lp(&w0, &ds, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(
                mean_cross_entropy(&w, 1.0, &ds).unwrap()
                    < mean_cross_entropy(&w0, 1.0, &ds).unwrap()
            );
        }
    }

    #[test]
    fn aggregation_examples() {
        let state = ServerState {
            weights: random_matrix(1, 2, 2, 1.0),
            momentum: DenseMatrix::zeros(2, 2),
        };
        let a = random_matrix(2, 2, 2, 1.0);
        let b = random_matrix(3, 2, 2, 1.0);
        assert_eq!(
            server_aggregate(&state, &[(a.clone(), 7)], 1.0, 0.0)
                .unwrap()
                .weights,
            a
        );
        let two = server_aggregate(&state, &[(a.clone(), 4), (b.clone(), 4)], 1.0, 0.0).unwrap();
        let mid = a.add(&b).unwrap().scaled(0.5);
        assert!(two.weights.relative_distance(&mid).unwrap() <= 1e-15);
        assert!(server_aggregate(&state, &[(a, 0)], 1.0, 0.0).is_err());
    }

    #[test]
    fn temperature_follows_logit_scale() {
        let ds = data(15, 3.0);
        let w = crate::ridge::centralized_rr(ds.features(), ds.labels(), 4, 0.01).unwrap();
        assert_eq!(
            calibrate_temperature(w.weights(), &ds, &[0.3]).unwrap(),
            0.3
        );
        let base = calibrate_temperature(w.weights(), &ds, &DEFAULT_TEMPERATURE_GRID).unwrap();
        // ten times hotter logits want a ten times larger temperature
        let hot = w.weights().scaled(10.0);
        let grid: Vec<f64> = DEFAULT_TEMPERATURE_GRID.iter().map(|t| t * 10.0).collect();
        let scaled = calibrate_temperature(&hot, &ds, &grid).unwrap();
        assert!((scaled - 10.0 * base).abs() <= 1e-12 * scaled);
    }

    #[test]
    fn frozen_fed3r_init_keeps_its_accuracy() {
        let ds = data(16, 3.0);
        let m = partition_dirichlet(&ds, 6, 0.5, 2).unwrap();
        let fed = FederationConfig::new(6, 2, 3);
        let init = crate::federation::run_fed3r(&ds, &m, &fed, None).unwrap();
        let acc = init.trace.final_accuracy().unwrap();
        let lp = LpConfig {
            lr: 0.0,
            rounds: 5,
            temperature: 0.1,
            ..LpConfig::default()
        };
        let run = run_lp(&ds, &m, &fed, &lp, LpInit::From(init.classifier), None).unwrap();
        assert!(run.trace.records.iter().all(|r| r.accuracy == Some(acc)));
    }

    #[test]
    fn random_init_beats_chance() {
        let ds = data(17, 4.0);
        let m = partition_dirichlet(&ds, 10, 0.5, 1).unwrap();
        let lp = LpConfig {
            lr: 0.01,
            rounds: 10,
            ..LpConfig::default()
        };
        let run = run_lp(
            &ds,
            &m,
            &FederationConfig::new(10, 3, 1),
            &lp,
            LpInit::Random,
            None,
        )
        .unwrap();
        assert!(run.trace.final_accuracy().unwrap() > 0.25 + 5.0 / (ds.len() as f64).sqrt());
    }

    proptest! {
        #[test]
        fn softmax_is_shift_invariant(seed in 0u64..500, shift in -50.0f64..50.0) {
            let w = random_matrix(seed, 3, 5, 2.0);
            let z = random_matrix(seed + 1, 4, 3, 1.0);
            // adding the same vector to every class column shifts each row's logits uniformly
            let mut shifted = w.clone();
            for r in 0..3 {
                for c in 0..5 {
                    shifted.set(r, c, w.get(r, c) + shift);
                }
            }
            let p = softmax_forward(&w, 1.0, &z).unwrap();
            let ps = softmax_forward(&shifted, 1.0, &z).unwrap();
            prop_assert!(p.relative_distance(&ps).unwrap() <= 1e-9);
        }

        #[test]
        fn aggregation_of_identical_models_is_identity(seed in 0u64..500, k in 1usize..6) {
            let w = random_matrix(seed, 4, 3, 1.0);
            let state = ServerState { weights: random_matrix(seed + 9, 4, 3, 1.0), momentum: DenseMatrix::zeros(4, 3) };
            let updates: Vec<(DenseMatrix, usize)> = (0..k).map(|i| (w.clone(), i + 1)).collect();
            let out = server_aggregate(&state, &updates, 1.0, 0.0).unwrap();
            prop_assert!(out.weights.relative_distance(&w).unwrap() <= 1e-12);
        }
    }
}
