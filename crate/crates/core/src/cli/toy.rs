//! Synthetic three-output dataset driven by a sum of cosines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cli::split::random_indices;
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToySpec {
    /// `S_d` in `G_d(tau) = S_d exp(-P_d tau^2)`.
    pub sensitivities: Vec<f64>,
    /// `P_d`.
    pub precisions: Vec<f64>,
    /// `u(t) = sum_{k=1}^{K} cos(2 k pi t) / k^2`.
    pub harmonics: u32,
    pub grid_points: usize,
    /// Quadrature sub-intervals per output grid interval.
    pub refinement: usize,
    /// Powers of `f_d` summed to form the clean output.
    pub powers: Vec<u32>,
    /// `sigma_d^2 = noise_ratio * var(clean_d)`.
    pub noise_ratio: f64,
    pub train_per_output: usize,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            sensitivities: vec![5.0, 1.0, 2.0],
            precisions: vec![200.0, 0.1, 100.0],
            harmonics: 4,
            grid_points: 200,
            refinement: 100,
            powers: vec![1, 2, 3],
            noise_ratio: 0.005,
            train_per_output: 50,
        }
    }
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(format!("toy: {msg}")));
        if self.sensitivities.is_empty() || self.sensitivities.len() != self.precisions.len() {
            return bad("sensitivities and precisions must be non-empty and of equal length");
        }
        if self.precisions.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return bad("precisions must be positive");
        }
        if self.grid_points < 2 || self.refinement < 1 {
            return bad("need at least 2 grid points and refinement >= 1");
        }
        if self.powers.is_empty() || self.powers.contains(&0) {
            return bad("powers must be non-empty and positive");
        }
        if self.noise_ratio.is_nan() || self.noise_ratio < 0.0 {
            return bad("noise_ratio must be non-negative");
        }
        if self.train_per_output == 0 || self.train_per_output > self.grid_points {
            return bad("train_per_output must lie in 1..=grid_points");
        }
        Ok(())
    }

    pub fn outputs(&self) -> usize {
        self.sensitivities.len()
    }

    pub fn latent(&self, t: f64) -> f64 {
        (1..=self.harmonics)
            .map(|k| {
                let k = k as f64;
                (2.0 * k * std::f64::consts::PI * t).cos() / (k * k)
            })
            .sum()
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_points - 1;
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }

    /// `f_d(t_i) = int_0^{t_i} G_d(t_i - tau) u(tau) dtau` at every grid point by the
    /// trapezoid rule on a grid `refinement` times finer than the output grid.
    pub fn convolution(&self, d: usize) -> Vec<f64> {
        let n = self.grid_points - 1;
        let m = n * self.refinement;
        let h = 1.0 / m as f64;
        let u: Vec<f64> = (0..=m).map(|j| self.latent(j as f64 * h)).collect();
        let (s, p) = (self.sensitivities[d], self.precisions[d]);
        (0..=n)
            .map(|i| {
                let top = i * self.refinement;
                if top == 0 {
                    return 0.0;
                }
                let t = top as f64 * h;
                let g = |j: usize| {
                    let tau = t - j as f64 * h;
                    s * (-p * tau * tau).exp() * u[j]
                };
                let inner: f64 = (1..top).map(g).sum();
                h * (inner + 0.5 * (g(0) + g(top)))
            })
            .collect()
    }

    pub fn clean(&self, d: usize) -> Vec<f64> {
        self.convolution(d)
            .into_iter()
            .map(|f| self.powers.iter().map(|&c| f.powi(c as i32)).sum())
            .collect()
    }
}

/// The full noisy grid for every output, before any train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyData {
    pub grid: Vec<f64>,
    pub clean: Vec<Vec<f64>>,
    pub noisy: Vec<Vec<f64>>,
    pub noise_variances: Vec<f64>,
    pub train_per_output: usize,
}

fn population_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Generates the noisy outputs. The noise uses stream 0 of the seeded generator;
/// splits use streams `1 + r` so that resplitting never changes the noise.
pub fn generate(spec: &ToySpec, seed: u64) -> Result<ToyData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean: Vec<Vec<f64>> = (0..spec.outputs()).map(|d| spec.clean(d)).collect();
    let mut noise_variances = Vec::with_capacity(clean.len());
    let noisy = clean
        .iter()
        .map(|f| {
            let var = spec.noise_ratio * population_variance(f);
            noise_variances.push(var);
            let normal = Normal::new(0.0, var.sqrt()).expect("finite non-negative std");
            f.iter().map(|v| v + normal.sample(&mut rng)).collect()
        })
        .collect();
    Ok(ToyData {
        grid: spec.grid(),
        clean,
        noisy,
        noise_variances,
        train_per_output: spec.train_per_output,
    })
}

impl ToyData {
    pub fn full(&self) -> Result<Dataset> {
        let inputs: Vec<Vec<f64>> = self.grid.iter().map(|t| vec![*t]).collect();
        Dataset::isotopic(inputs, self.noisy.clone())
    }

    /// Random train/test split number `split`.
    pub fn split(&self, seed: u64, split: u64) -> Result<(Dataset, Dataset)> {
        let full = self.full()?;
        let counts = vec![self.grid.len(); self.noisy.len()];
        let sizes = vec![self.train_per_output; self.noisy.len()];
        let parts = random_indices(&counts, &sizes, seed, split);
        let train: Vec<Vec<usize>> = parts.iter().map(|p| p.0.clone()).collect();
        let test: Vec<Vec<usize>> = parts.iter().map(|p| p.1.clone()).collect();
        Ok((full.subset(&train)?, full.subset(&test)?))
    }
}
