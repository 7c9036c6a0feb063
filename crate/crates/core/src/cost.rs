//! Communication and computation accounting.
//!
//! Communication is counted in transmitted values per client per round and
//! converted to bytes at 4 bytes per value (FP32). Computation is counted in
//! FLOPs (one multiply-add = one FLOP) with a backward pass costed at twice the
//! forward pass.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BYTES_PER_VALUE: u64 = 4;

/// Backbone forward FLOPs per image (MobileNetV2, Landmarks head).
pub const DEFAULT_F_EXTRACTOR: f64 = 332_900_000.0;
pub const DEFAULT_F_HEAD: f64 = 2_600_000.0;
/// Parameter count of the frozen feature extractor shipped to clients.
pub const DEFAULT_EXTRACTOR_PARAMS: u64 = 2_223_872;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Fed3r,
    Fed3rRf,
    FedavgLp,
    FedavgmLp,
    FedavgFull,
    FedavgmFull,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Fed3r,
        Algorithm::Fed3rRf,
        Algorithm::FedavgLp,
        Algorithm::FedavgmLp,
        Algorithm::FedavgFull,
        Algorithm::FedavgmFull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fed3r => "fed3r",
            Algorithm::Fed3rRf => "fed3r_rf",
            Algorithm::FedavgLp => "fedavg_lp",
            Algorithm::FedavgmLp => "fedavgm_lp",
            Algorithm::FedavgFull => "fedavg_full",
            Algorithm::FedavgmFull => "fedavgm_full",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Latent feature dimensionality d.
    pub dim: u64,
    pub classes: u64,
    /// Random-feature dimensionality D (Fed3R-RF only).
    pub rff_dim: Option<u64>,
    pub local_epochs: u64,
    /// Forward FLOPs per image through the feature extractor.
    pub f_extractor: f64,
    /// Forward FLOPs per image through the classifier head.
    pub f_head: f64,
    pub extractor_params: u64,
    /// Add the d→D projection (`n_k·d·D`) to Fed3R-RF client compute.
    pub include_rff_projection: bool,
    /// Charge each client `d·D` downstream values once for the random-feature
    /// map instead of reconstructing it from the shared seed.
    pub ship_rff_map: bool,
    /// Charge each client the feature-extractor parameters once.
    pub bootstrap_extractor: bool,
}

impl CostParams {
    pub fn new(dim: u64, classes: u64) -> Self {
        Self {
            dim,
            classes,
            rff_dim: None,
            local_epochs: 5,
            f_extractor: DEFAULT_F_EXTRACTOR,
            f_head: DEFAULT_F_HEAD,
            extractor_params: DEFAULT_EXTRACTOR_PARAMS,
            include_rff_projection: true,
            ship_rff_map: false,
            bootstrap_extractor: false,
        }
    }

    /// Forward FLOPs of the whole model.
    pub fn f_model(&self) -> f64 {
        self.f_extractor + self.f_head
    }

    pub fn model_params(&self) -> u64 {
        self.extractor_params + self.dim * self.classes
    }

    fn rff_dim_required(&self) -> Result<u64> {
        self.rff_dim.ok_or_else(|| {
            Error::InvalidParams("fed3r_rf cost needs the random-feature dimension".into())
        })
    }
}

/// Values (not bytes) a sampled client downloads and uploads in one round.
pub fn comm_per_client(alg: Algorithm, p: &CostParams) -> Result<(u64, u64)> {
    let (d, c) = (p.dim, p.classes);
    Ok(match alg {
        Algorithm::Fed3r => (0, d * d + d * c),
        Algorithm::Fed3rRf => {
            let big = p.rff_dim_required()?;
            (0, big * big + big * c)
        }
        Algorithm::FedavgLp | Algorithm::FedavgmLp => (d * c, d * c),
        Algorithm::FedavgFull | Algorithm::FedavgmFull => (p.model_params(), p.model_params()),
    })
}

/// Values a client downloads once, the first time it participates.
pub fn one_time_download(alg: Algorithm, p: &CostParams) -> Result<u64> {
    let mut values = 0;
    if matches!(alg, Algorithm::Fed3r | Algorithm::Fed3rRf) && p.bootstrap_extractor {
        values += p.extractor_params;
    }
    if alg == Algorithm::Fed3rRf && p.ship_rff_map {
        values += p.dim * p.rff_dim_required()?;
    }
    Ok(values)
}

/// Client FLOPs for one round of participation with `n_k` local samples.
pub fn compute_per_round_per_client(alg: Algorithm, p: &CostParams, n_k: u64) -> Result<f64> {
    let n = n_k as f64;
    let e = p.local_epochs as f64;
    let stats_cost = |q: f64, c: f64| 0.5 * q * (q + 1.0) + q * c;
    Ok(match alg {
        Algorithm::FedavgFull | Algorithm::FedavgmFull => 3.0 * e * n * p.f_model(),
        Algorithm::FedavgLp | Algorithm::FedavgmLp => e * n * (p.f_extractor + 3.0 * p.f_head),
        Algorithm::Fed3r => n * (p.f_extractor + stats_cost(p.dim as f64, p.classes as f64)),
        Algorithm::Fed3rRf => {
            let big = p.rff_dim_required()? as f64;
            let projection = if p.include_rff_projection {
                p.dim as f64 * big
            } else {
                0.0
            };
            n * (p.f_extractor + stats_cost(big, p.classes as f64) + projection)
        }
    })
}

/// Expected cumulative cost of one client after `rounds` rounds when `per_round`
/// clients out of `clients` are sampled uniformly each round.
pub fn expected_cumulative_per_client(
    per_round_cost: f64,
    rounds: u64,
    per_round: u64,
    clients: u64,
) -> f64 {
    per_round_cost * ((rounds * per_round) as f64 / clients as f64)
}

/// Cumulative totals after a round.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostSnapshot {
    pub down_bytes: u64,
    pub up_bytes: u64,
    /// Total client FLOPs so far divided by the number of clients.
    pub avg_client_flops: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundCost {
    pub down_bytes: u64,
    pub up_bytes: u64,
    pub flops: f64,
}

/// Running communication/computation totals for one algorithm over a run.
#[derive(Debug, Clone, PartialEq)]
pub struct CostLedger {
    alg: Algorithm,
    params: CostParams,
    client_sizes: Vec<u64>,
    visited: Vec<bool>,
    total_flops: f64,
    current: CostSnapshot,
    rounds: Vec<RoundCost>,
}

impl CostLedger {
    pub fn new(alg: Algorithm, params: CostParams, client_sizes: Vec<u64>) -> Result<Self> {
        // surface configuration errors (missing D) up front
        comm_per_client(alg, &params)?;
        one_time_download(alg, &params)?;
        let k = client_sizes.len();
        Ok(Self {
            alg,
            params,
            client_sizes,
            visited: vec![false; k],
            total_flops: 0.0,
            current: CostSnapshot::default(),
            rounds: Vec::new(),
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.alg
    }

    pub fn params(&self) -> &CostParams {
        &self.params
    }

    /// Charges one round in which `sampled` clients each downloaded, computed
    /// and uploaded once.
    pub fn record_round(&mut self, sampled: &[usize]) -> Result<CostSnapshot> {
        let (down, up) = comm_per_client(self.alg, &self.params)?;
        let once = one_time_download(self.alg, &self.params)?;
        let mut round = RoundCost::default();
        for &k in sampled {
            let n_k = *self.client_sizes.get(k).ok_or_else(|| {
                Error::InvalidParams(format!("client {k} outside the federation"))
            })?;
            let mut down_values = down;
            if !self.visited[k] {
                down_values += once;
                self.visited[k] = true;
            }
            round.down_bytes += down_values * BYTES_PER_VALUE;
            round.up_bytes += up * BYTES_PER_VALUE;
            round.flops += compute_per_round_per_client(self.alg, &self.params, n_k)?;
        }
        self.total_flops += round.flops;
        self.current.down_bytes += round.down_bytes;
        self.current.up_bytes += round.up_bytes;
        self.current.avg_client_flops = self.total_flops / self.client_sizes.len() as f64;
        self.rounds.push(round);
        Ok(self.current)
    }

    pub fn snapshot(&self) -> CostSnapshot {
        self.current
    }

    pub fn rounds(&self) -> &[RoundCost] {
        &self.rounds
    }
}
