//! Synthetic series with known scaling, used as oracles.
//!
//! Fractional Gaussian noise is monofractal with `H(q) = H`; the binomial
//! multiplicative cascade has `τ(q) = −log₂(p^q + (1 − p)^q)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest series for which a failed circulant embedding falls back to Cholesky.
pub const CHOLESKY_MAX_LEN: usize = 4096;

/// Autocovariance of unit-variance fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(k: usize, hurst: f64) -> f64 {
    let k = k as f64;
    let h2 = 2.0 * hurst;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Eigenvalues of the `2n` circulant matrix embedding the fGn covariance.
fn circulant_eigenvalues(n: usize, hurst: f64) -> Vec<f64> {
    let m = 2 * n;
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let lag = if j <= n { j } else { m - j };
            Complex::new(fgn_autocovariance(lag, hurst), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    row.iter().map(|c| c.re).collect()
}

/// Unit-variance fractional Gaussian noise of length `n` by circulant embedding.
///
/// Deterministic in `seed`.
pub fn fgn(n: usize, hurst: f64, seed: u64) -> Result<Vec<f64>> {
    if n < 16 {
        return Err(Error::invalid(format!("fGn length {n} below 16")));
    }
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::invalid(format!("Hurst exponent {hurst} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eigen = circulant_eigenvalues(n, hurst);
    let max = eigen.iter().cloned().fold(0.0, f64::max);
    let min = eigen.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-10 * max {
        if n <= CHOLESKY_MAX_LEN {
            return fgn_cholesky(n, hurst, &mut rng);
        }
        return Err(Error::EmbeddingFailed { min_eigenvalue: min });
    }

    let m = eigen.len();
    let mut w: Vec<Complex<f64>> = eigen
        .iter()
        .map(|&l| {
            let scale = (l.max(0.0) / m as f64).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(scale * re, scale * im)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut w);
    Ok(w[..n].iter().map(|c| c.re).collect())
}

/// Exact fGn from the Cholesky factor of the full covariance matrix.
pub fn fgn_cholesky<R: Rng>(n: usize, hurst: f64, rng: &mut R) -> Result<Vec<f64>> {
    let cov = DMatrix::from_fn(n, n, |i, j| fgn_autocovariance(i.abs_diff(j), hurst));
    let chol = cov.cholesky().ok_or(Error::EmbeddingFailed { min_eigenvalue: f64::NAN })?;
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok((chol.l() * z).iter().copied().collect())
}

/// Parameters of a binomial multiplicative cascade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeSpec {
    /// Number of dyadic splits; the measure has `2^levels` cells.
    pub levels: u32,
    /// Mass fraction sent to the first child of every split.
    pub p: f64,
    /// Randomly swap the children of each split.
    pub shuffle: bool,
    pub seed: u64,
}

impl CascadeSpec {
    pub fn new(levels: u32, p: f64) -> Self {
        Self {
            levels,
            p,
            shuffle: false,
            seed: 0,
        }
    }
}

/// Binomial measure on `2^levels` cells, summing to one.
///
/// Cells come out in natural order unless `spec.shuffle` is set.
pub fn binomial_cascade(spec: &CascadeSpec) -> Result<Vec<f64>> {
    if !(4..=30).contains(&spec.levels) {
        return Err(Error::invalid(format!(
            "cascade levels {} outside [4, 30]",
            spec.levels
        )));
    }
    if !(spec.p > 0.0 && spec.p < 1.0) {
        return Err(Error::invalid(format!("cascade weight {} outside (0, 1)", spec.p)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cells = vec![1.0];
    for _ in 0..spec.levels {
        cells = cells
            .iter()
            .flat_map(|&m| {
                let (a, b) = (spec.p * m, (1.0 - spec.p) * m);
                if spec.shuffle && rng.random::<bool>() {
                    [b, a]
                } else {
                    [a, b]
                }
            })
            .collect();
    }
    Ok(cells)
}

/// `τ(q) = −log₂(p^q + (1 − p)^q)`.
pub fn analytic_cascade_tau(q: f64, p: f64) -> f64 {
    -(p.powf(q) + (1.0 - p).powf(q)).log2()
}
