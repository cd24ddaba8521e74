//! Shared fixtures and independent oracles for the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ncmogp::data::Dataset;
use ncmogp::kernels::{KernelParams, Smoother};
use ncmogp::model::{ModelSpec, Variant};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// Random parameters of the right shape for `spec`. Sensitivities have random
/// sign and magnitude in `[s_lo, s_hi]`.
pub fn random_params(rng: &mut ChaCha8Rng, spec: &ModelSpec, s_lo: f64, s_hi: f64) -> KernelParams {
    let template = spec.template_params();
    let smoothers = template
        .smoothers
        .iter()
        .map(|s| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let sens = sign * uniform(rng, s_lo, s_hi);
            let ls = s.length_scales.iter().map(|_| uniform(rng, 0.2, 1.0)).collect();
            Smoother::new(sens, ls)
        })
        .collect();
    let latent = template
        .latent_length_scales
        .iter()
        .map(|_| uniform(rng, 0.2, 1.0))
        .collect();
    let noise = (0..spec.outputs).map(|_| uniform(rng, 0.05, 0.5)).collect();
    KernelParams::new(smoothers, latent, noise).unwrap()
}

pub fn random_inputs(rng: &mut ChaCha8Rng, counts: &[usize], p: usize, span: f64) -> Vec<Vec<Vec<f64>>> {
    counts
        .iter()
        .map(|&n| {
            (0..n)
                .map(|_| (0..p).map(|_| uniform(rng, 0.0, span)).collect())
                .collect()
        })
        .collect()
}

pub fn random_dataset(rng: &mut ChaCha8Rng, counts: &[usize], p: usize) -> Dataset {
    let inputs = random_inputs(rng, counts, p, 2.0);
    let targets = counts.iter().map(|&n| (0..n).map(|_| normal(rng)).collect()).collect();
    Dataset::new(p, inputs, targets).unwrap()
}

pub fn homogeneous(order: u32, outputs: usize, p: usize) -> ModelSpec {
    ModelSpec::new(order, Variant::Homogeneous, outputs, p).unwrap()
}

/// `(n - 1)!!` for even `n`, i.e. `E[X^n]` for a standard normal; 0 for odd `n`.
pub fn gaussian_moment(n: u32) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    (1..n).step_by(2).map(f64::from).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).map(|i| f64::from(n - i) / f64::from(i + 1)).product()
}

/// `E[X^a Y^b]` for a zero-mean bivariate normal, by conditioning on the shared part:
/// `sum_k C(a,k) C(b,k) k! s12^k E[X^{a-k}] E[Y^{b-k}]` with independent factors.
pub fn bivariate_moment(a: u32, b: u32, s11: f64, s12: f64, s22: f64) -> f64 {
    (0..=a.min(b))
        .map(|k| {
            let (ra, rb) = (a - k, b - k);
            if ra % 2 == 1 || rb % 2 == 1 {
                return 0.0;
            }
            let fact: f64 = (1..=k).map(f64::from).product();
            binomial(a, k)
                * binomial(b, k)
                * fact
                * s12.powi(k as i32)
                * gaussian_moment(ra)
                * s11.powi((ra / 2) as i32)
                * gaussian_moment(rb)
                * s22.powi((rb / 2) as i32)
        })
        .sum()
}

/// `E[prod_i X_{vars[i]}]` by explicit recursion over perfect pairings.
pub fn isserlis(vars: &[usize], cov: &dyn Fn(usize, usize) -> f64) -> f64 {
    if vars.is_empty() {
        return 1.0;
    }
    if vars.len() % 2 == 1 {
        return 0.0;
    }
    let first = vars[0];
    (1..vars.len())
        .map(|j| {
            let rest: Vec<usize> = vars[1..]
                .iter()
                .enumerate()
                .filter(|(i, _)| *i + 1 != j)
                .map(|(_, v)| *v)
                .collect();
            cov(first, vars[j]) * isserlis(&rest, cov)
        })
        .sum()
}

/// Homogeneous model moments from the bivariate closed form:
/// mean of `sum_c f^c` and covariance of two such sums.
pub fn homogeneous_mean_oracle(order: u32, k11: f64) -> f64 {
    (1..=order).map(|c| bivariate_moment(c, 0, k11, 0.0, 1.0)).sum()
}

pub fn homogeneous_cov_oracle(order: u32, k11: f64, k12: f64, k22: f64) -> f64 {
    let mut second = 0.0;
    for c in 1..=order {
        for c2 in 1..=order {
            second += bivariate_moment(c, c2, k11, k12, k22);
        }
    }
    second - homogeneous_mean_oracle(order, k11) * homogeneous_mean_oracle(order, k22)
}

/// Central finite differences with a step relative to each coordinate.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|i| {
            let step = h * theta[i].abs().max(1.0);
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[i] += step;
            down[i] -= step;
            (f(&up) - f(&down)) / (2.0 * step)
        })
        .collect()
}

/// Largest `|g - fd| / max(|fd|, floor)` over coordinates.
pub fn max_relative_error(g: &[f64], fd: &[f64], floor: f64) -> f64 {
    g.iter()
        .zip(fd)
        .map(|(a, b)| (a - b).abs() / b.abs().max(floor))
        .fold(0.0, f64::max)
}

/// Log-density of `N(mean, cov)` via an explicit inverse and LU determinant.
pub fn dense_log_density(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let r = y - mean;
    let inv = cov.clone().try_inverse().unwrap();
    let det = cov.clone().lu().determinant();
    let n = y.len() as f64;
    -0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * (r.transpose() * inv * &r)[(0, 0)] - 0.5 * det.ln()
}

/// Stacked `K + Sigma` for a dataset.
pub fn with_noise(k: &DMatrix<f64>, data: &Dataset, params: &KernelParams) -> DMatrix<f64> {
    let mut k = k.clone();
    let mut i = 0;
    for (d, n) in data.counts().into_iter().enumerate() {
        for _ in 0..n {
            k[(i, i)] += params.noise_variances[d];
            i += 1;
        }
    }
    k
}

pub fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Draws `draws` samples of a zero-mean Gaussian with covariance `cov`, applying
/// `f` to each; returns the sample mean and standard error of `f`.
pub fn monte_carlo(rng: &mut ChaCha8Rng, cov: &DMatrix<f64>, draws: usize, f: &dyn Fn(&[f64]) -> f64) -> (f64, f64) {
    let n = cov.nrows();
    let l = cov.clone().cholesky().expect("covariance is positive definite").l();
    let mut z = DVector::zeros(n);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        for v in z.iter_mut() {
            *v = normal(rng);
        }
        let x = &l * &z;
        let v = f(x.as_slice());
        sum += v;
        sum_sq += v * v;
    }
    let m = sum / draws as f64;
    let var = (sum_sq / draws as f64 - m * m).max(0.0);
    (m, (var / draws as f64).sqrt())
}
