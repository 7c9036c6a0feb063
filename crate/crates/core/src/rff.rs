//! Random Fourier features for the Gaussian (RBF) kernel
//! `k(z, ζ) = exp(-‖z − ζ‖² / 2σ²)`.
//!
//! The map is `φ̂(z)_j = √(2/D) · cos(z·ω_j + b_j)` with `ω_j ~ N(0, σ⁻² I)` and
//! `b_j ~ U[0, 2π)`, so that `E[φ̂(z)·φ̂(ζ)] = k(z, ζ)`. Frequencies come from a
//! ChaCha stream keyed only by the seed: every party holding `(d, D, σ, seed)`
//! rebuilds the identical map.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RffConfig {
    pub dim: usize,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RffMap {
    input_dim: usize,
    output_dim: usize,
    sigma: f64,
    seed: u64,
    /// d×D; column j is ω_j.
    frequencies: DenseMatrix,
    phases: Vec<f64>,
}

pub fn sample_rff(input_dim: usize, output_dim: usize, sigma: f64, seed: u64) -> Result<RffMap> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidBandwidth(sigma));
    }
    if input_dim == 0 || output_dim == 0 {
        return Err(Error::InvalidParams(format!(
            "random feature map needs d >= 1 and D >= 1, got d={input_dim} D={output_dim}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let inv_sigma = 1.0 / sigma;
    let freq: Vec<f64> = (0..input_dim * output_dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * inv_sigma)
        .collect();
    let phases = (0..output_dim)
        .map(|_| rng.random_range(0.0..TAU))
        .collect();
    Ok(RffMap {
        input_dim,
        output_dim,
        sigma,
        seed,
        frequencies: DenseMatrix::from_vec(input_dim, output_dim, freq)?,
        phases,
    })
}

impl RffMap {
    pub fn from_config(input_dim: usize, cfg: &RffConfig) -> Result<Self> {
        sample_rff(input_dim, cfg.dim, cfg.sigma, cfg.seed)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn frequencies(&self) -> &DenseMatrix {
        &self.frequencies
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Lifts a single vector into the D-dimensional feature space.
    pub fn map_vector(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.input_dim {
            return Err(Error::mismatch("apply_rff", self.input_dim, z.len()));
        }
        let mut out = vec![0.0; self.output_dim];
        self.map_into(z, &mut out);
        Ok(out)
    }

    fn map_into(&self, z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.phases);
        for (i, &zi) in z.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.frequencies.row(i)) {
                *o += zi * w;
            }
        }
        let scale = (2.0 / self.output_dim as f64).sqrt();
        out.iter_mut().for_each(|v| *v = scale * v.cos());
    }

    /// Row-wise lift of an n×d matrix to n×D.
    pub fn apply(&self, z: &DenseMatrix) -> Result<DenseMatrix> {
        if z.cols() != self.input_dim {
            return Err(Error::mismatch("apply_rff", self.input_dim, z.cols()));
        }
        let mut out = DenseMatrix::zeros(z.rows(), self.output_dim);
        if self.output_dim > 0 {
            out.as_mut_slice()
                .par_chunks_mut(self.output_dim)
                .enumerate()
                .for_each(|(r, dst)| self.map_into(z.row(r), dst));
        }
        Ok(out)
    }
}

pub fn apply_rff(map: &RffMap, z: &DenseMatrix) -> Result<DenseMatrix> {
    map.apply(z)
}

pub fn kernel_exact(z: &[f64], zeta: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidBandwidth(sigma));
    }
    if z.len() != zeta.len() {
        return Err(Error::mismatch("kernel_exact", z.len(), zeta.len()));
    }
    let sq: f64 = z.iter().zip(zeta).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-sq / (2.0 * sigma * sigma)).exp())
}
