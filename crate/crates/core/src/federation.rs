//! Round-based simulation of federated ridge classification.
//!
//! Each round the server samples a batch of clients; every newly seen client
//! computes its `(A_k, b_k)` once (after the random-feature lift, when
//! configured) and the server folds them in ascending client-id order. Without
//! replacement the run ends after exactly `⌈K/κ⌉` rounds with every client
//! absorbed. With replacement, repeat visits are charged in the cost ledger
//! but their statistics are not absorbed a second time.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{Algorithm, CostLedger, CostParams, CostSnapshot};
use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::partition::PartitionManifest;
use crate::rff::{RffConfig, RffMap};
use crate::ridge::{
    compute_local_stats, solve_classifier, Classifier, RRStatistics, DEFAULT_LAMBDA,
};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Clients leave the pool once sampled.
    WithoutReplacement,
    /// A fresh batch of distinct clients every round; clients recur across rounds.
    WithReplacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub num_clients: usize,
    /// Values above `num_clients` mean full participation.
    pub clients_per_round: usize,
    pub sampling: SamplingMode,
    /// Hard cap on rounds; `None` runs to full coverage.
    pub rounds_max: Option<usize>,
    pub lambda: f64,
    pub rff: Option<RffConfig>,
    pub seed: u64,
    /// Solve and evaluate every this many rounds (0: only at the end).
    pub eval_every: usize,
    /// Cost constants; `dim`, `classes` and `rff_dim` are filled in from the data.
    pub cost: CostParams,
}

impl FederationConfig {
    pub fn new(num_clients: usize, clients_per_round: usize, seed: u64) -> Self {
        Self {
            num_clients,
            clients_per_round,
            sampling: SamplingMode::WithoutReplacement,
            rounds_max: None,
            lambda: DEFAULT_LAMBDA,
            rff: None,
            seed,
            eval_every: 1,
            cost: CostParams::new(0, 0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 || self.clients_per_round == 0 {
            return Err(Error::InvalidParams(format!(
                "need at least one client and one client per round, got K={} kappa={}",
                self.num_clients, self.clients_per_round
            )));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParams(format!(
                "ridge penalty must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub(crate) fn check_manifest(
        &self,
        ds: &FeatureDataset,
        manifest: &PartitionManifest,
    ) -> Result<()> {
        self.validate()?;
        if manifest.num_clients() != self.num_clients {
            return Err(Error::InvalidParams(format!(
                "manifest has {} clients but the configuration expects {}",
                manifest.num_clients(),
                self.num_clients
            )));
        }
        if manifest.num_samples != ds.len() {
            return Err(Error::InvalidManifest(format!(
                "manifest covers {} samples but the dataset has {}",
                manifest.num_samples,
                ds.len()
            )));
        }
        Ok(())
    }
}

/// Draws per-round client batches.
#[derive(Debug, Clone)]
pub struct ClientSampler {
    clients: usize,
    mode: SamplingMode,
    remaining: Vec<usize>,
}

impl ClientSampler {
    pub fn new(clients: usize, mode: SamplingMode) -> Self {
        Self {
            clients,
            mode,
            remaining: (0..clients).collect(),
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.mode == SamplingMode::WithoutReplacement && self.remaining.is_empty()
    }

    /// Sorted ids of the next batch: `per_round` clients, or what is left of the
    /// pool on the last round without replacement.
    pub fn next_round<R: Rng>(&mut self, per_round: usize, rng: &mut R) -> Result<Vec<usize>> {
        let mut batch = match self.mode {
            SamplingMode::WithoutReplacement => {
                if self.remaining.is_empty() {
                    return Err(Error::PoolExhausted);
                }
                let take = per_round.min(self.remaining.len());
                let mut picks = index::sample(rng, self.remaining.len(), take).into_vec();
                // remove from the back so earlier positions stay valid
                picks.sort_unstable_by(|a, b| b.cmp(a));
                picks
                    .into_iter()
                    .map(|p| self.remaining.swap_remove(p))
                    .collect::<Vec<_>>()
            }
            SamplingMode::WithReplacement => {
                index::sample(rng, self.clients, per_round.min(self.clients)).into_vec()
            }
        };
        batch.sort_unstable();
        Ok(batch)
    }
}

pub fn sample_clients<R: Rng>(
    sampler: &mut ClientSampler,
    per_round: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    sampler.next_round(per_round, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    pub sampled: Vec<usize>,
    /// Sampled clients seen for the first time this round.
    pub new_clients: Vec<usize>,
    pub distinct_clients: usize,
    pub accuracy: Option<f64>,
    pub cost: CostSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub algorithm: Algorithm,
    pub records: Vec<RoundRecord>,
}

pub const METRICS_HEADER: &str = "round,new_clients,distinct_clients_cum,accuracy,comm_down_bytes_cum,comm_up_bytes_cum,avg_client_flops_cum";

impl TrainingTrace {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.accuracy)
    }

    /// First round whose evaluated accuracy reaches `target`.
    pub fn rounds_to_accuracy(&self, target: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.accuracy.is_some_and(|a| a >= target))
            .map(|r| r.round)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.records {
            let acc = r.accuracy.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.round,
                r.new_clients.len(),
                r.distinct_clients,
                acc,
                r.cost.down_bytes,
                r.cost.up_bytes,
                r.cost.avg_client_flops
            ));
        }
        out
    }

    /// Re-derives the cost ledger from the recorded client batches.
    pub fn replay_costs(
        &self,
        params: &CostParams,
        client_sizes: &[usize],
    ) -> Result<Vec<CostSnapshot>> {
        let mut ledger = CostLedger::new(
            self.algorithm,
            params.clone(),
            client_sizes.iter().map(|&n| n as u64).collect(),
        )?;
        self.records
            .iter()
            .map(|r| ledger.record_round(&r.sampled))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Fed3rRun {
    pub classifier: Classifier,
    pub trace: TrainingTrace,
    /// Server-side sum of every absorbed client's statistics.
    pub statistics: RRStatistics,
    /// The random-feature map used, for Fed3R-RF.
    pub feature_map: Option<RffMap>,
    pub cost_params: CostParams,
}

/// The feature space the ridge statistics live in: raw features or their
/// random-feature lift, plus the lifted evaluation set.
pub(crate) struct FeatureSpace {
    pub map: Option<RffMap>,
    pub train: FeatureDataset,
    pub eval: FeatureDataset,
}

impl FeatureSpace {
    pub fn build(
        ds: &FeatureDataset,
        eval: Option<&FeatureDataset>,
        rff: Option<&RffConfig>,
    ) -> Result<Self> {
        let eval = eval.unwrap_or(ds);
        if eval.dim() != ds.dim() {
            return Err(Error::mismatch("evaluation set", ds.dim(), eval.dim()));
        }
        match rff {
            None => Ok(Self {
                map: None,
                train: ds.clone(),
                eval: eval.clone(),
            }),
            Some(cfg) => {
                let map = RffMap::from_config(ds.dim(), cfg)?;
                let train = ds.with_features(map.apply(ds.features())?)?;
                let eval = eval.with_features(map.apply(eval.features())?)?;
                Ok(Self {
                    map: Some(map),
                    train,
                    eval,
                })
            }
        }
    }
}

fn solve_normalized(stats: &RRStatistics, lambda: f64) -> Result<Classifier> {
    Ok(solve_classifier(stats, lambda)?.normalize_columns())
}

/// Runs federated ridge classification per `cfg` and returns the final
/// normalised classifier with its per-round trace. Accuracy is measured on
/// `eval`, or on the training data when `eval` is `None`.
pub fn run_fed3r(
    ds: &FeatureDataset,
    manifest: &PartitionManifest,
    cfg: &FederationConfig,
    eval: Option<&FeatureDataset>,
) -> Result<Fed3rRun> {
    cfg.check_manifest(ds, manifest)?;
    let space = FeatureSpace::build(ds, eval, cfg.rff.as_ref())?;
    let q = space.train.dim();
    let classes = ds.classes();

    let algorithm = if cfg.rff.is_some() {
        Algorithm::Fed3rRf
    } else {
        Algorithm::Fed3r
    };
    let mut cost_params = cfg.cost.clone();
    cost_params.dim = ds.dim() as u64;
    cost_params.classes = classes as u64;
    cost_params.rff_dim = cfg.rff.map(|r| r.dim as u64);
    let sizes: Vec<u64> = manifest.client_sizes().iter().map(|&n| n as u64).collect();
    let mut ledger = CostLedger::new(algorithm, cost_params.clone(), sizes)?;

    let mut rng = rng_for(cfg.seed, "sampling");
    let mut sampler = ClientSampler::new(cfg.num_clients, cfg.sampling);
    let mut absorbed = vec![false; cfg.num_clients];
    let mut distinct = 0usize;
    let mut stats = RRStatistics::zeros(q, classes);
    let mut trace = TrainingTrace::new(algorithm);
    let mut classifier = None;

    let mut round = 0usize;
    loop {
        if sampler.is_exhausted() || distinct == cfg.num_clients {
            break;
        }
        if cfg.rounds_max.is_some_and(|max| round >= max) {
            break;
        }
        round += 1;
        let sampled = sampler.next_round(cfg.clients_per_round, &mut rng)?;
        let fresh: Vec<usize> = sampled.iter().copied().filter(|&k| !absorbed[k]).collect();

        let local: Vec<RRStatistics> = fresh
            .par_iter()
            .map(|&k| {
                let shard = manifest.client(k);
                let labels: Vec<usize> = shard.iter().map(|&i| space.train.labels()[i]).collect();
                compute_local_stats(&space.train.features().select_rows(shard), &labels, classes)
            })
            .collect::<Result<_>>()?;
        // `fresh` is ascending, so this is the deterministic fold order
        for (&k, s) in fresh.iter().zip(&local) {
            stats.merge_from(s)?;
            absorbed[k] = true;
        }
        distinct += fresh.len();
        let cost = ledger.record_round(&sampled)?;

        let finished = sampler.is_exhausted()
            || distinct == cfg.num_clients
            || cfg.rounds_max.is_some_and(|max| round >= max);
        let evaluate = finished || (cfg.eval_every > 0 && round.is_multiple_of(cfg.eval_every));
        let accuracy = if evaluate {
            let clf = solve_normalized(&stats, cfg.lambda)?;
            let acc = clf.evaluate_accuracy(&space.eval)?;
            classifier = Some(clf);
            Some(acc)
        } else {
            classifier = None;
            None
        };
        trace.records.push(RoundRecord {
            round,
            sampled,
            new_clients: fresh,
            distinct_clients: distinct,
            accuracy,
            cost,
        });
    }

    let classifier = match classifier {
        Some(c) => c,
        None => solve_normalized(&stats, cfg.lambda)?,
    };
    Ok(Fed3rRun {
        classifier,
        trace,
        statistics: stats,
        feature_map: space.map,
        cost_params,
    })
}

/// [`run_fed3r`] with clients re-drawn every round; stops at full coverage or
/// `rounds_max`.
pub fn run_fed3r_with_replacement(
    ds: &FeatureDataset,
    manifest: &PartitionManifest,
    cfg: &FederationConfig,
    eval: Option<&FeatureDataset>,
) -> Result<Fed3rRun> {
    let cfg = FederationConfig {
        sampling: SamplingMode::WithReplacement,
        ..cfg.clone()
    };
    run_fed3r(ds, manifest, &cfg, eval)
}

/// Ridge classifier on the whole dataset (lifted through `rff` when given):
/// the reference a complete federated run must reproduce.
pub fn centralized_reference(
    ds: &FeatureDataset,
    lambda: f64,
    rff: Option<&RffConfig>,
) -> Result<Classifier> {
    let space = FeatureSpace::build(ds, None, rff)?;
    crate::ridge::centralized_rr(
        space.train.features(),
        space.train.labels(),
        ds.classes(),
        lambda,
    )
}

/// Distinct clients seen so far, in ascending order.
pub fn seen_clients(trace: &TrainingTrace) -> BTreeSet<usize> {
    trace
        .records
        .iter()
        .flat_map(|r| r.new_clients.iter().copied())
        .collect()
}
