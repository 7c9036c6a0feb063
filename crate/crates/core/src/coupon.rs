//! Monte Carlo batch coupon collector: how many rounds of `κ` distinct clients
//! (drawn afresh each round out of `K`) until a given fraction of the
//! federation has been seen at least once.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

pub const DEFAULT_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub clients: usize,
    pub per_round: usize,
    pub fractions: Vec<f64>,
    pub mean_rounds: Vec<f64>,
    /// Sample standard deviation over trials.
    pub std_rounds: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl CoverageResult {
    /// `⌈f·K/κ⌉`: no trial can finish sooner.
    pub fn lower_bound(&self, fraction_index: usize) -> usize {
        coverage_target(self.fractions[fraction_index], self.clients).div_ceil(self.per_round)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("clients,per_round,fraction,mean_rounds,std_rounds,trials\n");
        for i in 0..self.fractions.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.clients,
                self.per_round,
                self.fractions[i],
                self.mean_rounds[i],
                self.std_rounds[i],
                self.trials
            ));
        }
        out
    }
}

/// Number of distinct clients that counts as reaching `fraction`.
fn coverage_target(fraction: f64, clients: usize) -> usize {
    ((fraction * clients as f64).ceil() as usize).clamp(1, clients)
}

/// Rounds until each target count of distinct clients is first reached, for one trial.
pub fn simulate_trial(
    clients: usize,
    per_round: usize,
    targets: &[usize],
    seed: u64,
) -> Vec<usize> {
    let mut rng = rng_for(seed, "coupon");
    let mut seen = vec![false; clients];
    let mut distinct = 0usize;
    let mut hit = vec![0usize; targets.len()];
    let goal = targets.iter().copied().max().unwrap_or(0);
    let mut round = 0usize;
    while distinct < goal {
        round += 1;
        for k in index::sample(&mut rng, clients, per_round) {
            if !seen[k] {
                seen[k] = true;
                distinct += 1;
            }
        }
        for (h, &t) in hit.iter_mut().zip(targets) {
            if *h == 0 && distinct >= t {
                *h = round;
            }
        }
    }
    hit
}

pub fn coupon_rounds(
    clients: usize,
    per_round: usize,
    fractions: &[f64],
    trials: usize,
    seed: u64,
) -> Result<CoverageResult> {
    if clients == 0 || per_round == 0 || per_round > clients {
        return Err(Error::InvalidParams(format!(
            "need 1 <= per_round <= clients, got K={clients} kappa={per_round}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidParams("need at least one trial".into()));
    }
    if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::InvalidParams(format!(
            "coverage fractions must lie in (0, 1], got {fractions:?}"
        )));
    }
    let targets: Vec<usize> = fractions
        .iter()
        .map(|&f| coverage_target(f, clients))
        .collect();
    let per_trial: Vec<Vec<usize>> = (0..trials)
        .into_par_iter()
        .map(|t| simulate_trial(clients, per_round, &targets, seed.wrapping_add(t as u64)))
        .collect();

    let mut mean_rounds = Vec::with_capacity(fractions.len());
    let mut std_rounds = Vec::with_capacity(fractions.len());
    for i in 0..fractions.len() {
        let xs: Vec<f64> = per_trial.iter().map(|r| r[i] as f64).collect();
        let mean = xs.iter().sum::<f64>() / trials as f64;
        let var = if trials > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64
        } else {
            0.0
        };
        mean_rounds.push(mean);
        std_rounds.push(var.sqrt());
    }
    Ok(CoverageResult {
        clients,
        per_round,
        fractions: fractions.to_vec(),
        mean_rounds,
        std_rounds,
        trials,
        seed,
    })
}
