//! Exact Gaussian log-marginal likelihood and its gradient.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::{sites, Dataset};
use crate::error::{Error, Result};
use crate::kernels::KernelParams;
use crate::model::{Model, ModelSpec};

/// Diagonal inflation tried when `K + Sigma` is not numerically positive definite.
///
/// The first attempt uses no jitter; after that the jitter starts at
/// `initial * trace / n` and doubles up to `max * trace / n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterPolicy {
    pub initial: f64,
    pub max: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            initial: 1e-10,
            max: 1e-6,
        }
    }
}

/// Cholesky factor of `K + Sigma (+ jitter I)`.
#[derive(Debug, Clone)]
pub struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl Factor {
    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }
}

/// Factorises a symmetric matrix under the jitter policy.
pub fn factorise(matrix: DMatrix<f64>, policy: &JitterPolicy) -> Result<Factor> {
    let n = matrix.nrows();
    if let Some(chol) = Cholesky::new(matrix.clone()) {
        return Ok(Factor { chol, jitter: 0.0 });
    }
    let trace = matrix.trace();
    let scale = if trace.is_finite() && trace > 0.0 {
        trace / n as f64
    } else {
        1.0
    };
    let max = policy.max * scale;
    let mut jitter = policy.initial * scale;
    loop {
        let mut shifted = matrix.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(shifted) {
            return Ok(Factor { chol, jitter });
        }
        if jitter >= max {
            break;
        }
        jitter = (2.0 * jitter).min(max);
    }
    Err(Error::Cholesky {
        size: n,
        trace,
        min_diagonal: matrix.diagonal().min(),
        max_jitter: max,
    })
}

/// Noise variance `sigma_d^2` for every stacked observation.
pub(crate) fn noise_diagonal(dataset: &Dataset, params: &KernelParams) -> DVector<f64> {
    DVector::from_iterator(
        dataset.len(),
        dataset
            .counts()
            .into_iter()
            .enumerate()
            .flat_map(|(d, n)| std::iter::repeat_n(params.noise_variances[d], n)),
    )
}

/// Everything the likelihood, its gradient and the predictive equations share.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: DVector<f64>,
    pub residual: DVector<f64>,
    /// `(K + Sigma)^{-1} (y - mu)`.
    pub alpha: DVector<f64>,
    pub factor: Factor,
}

impl Posterior {
    pub fn new(model: &Model, dataset: &Dataset, params: &KernelParams, policy: &JitterPolicy) -> Result<Self> {
        check(model.spec(), dataset)?;
        let s = sites(dataset.inputs());
        let mean = model.mean_vector(params, &s)?;
        let mut k = model.cov_matrix(params, &s)?;
        k.set_diagonal(&(k.diagonal() + noise_diagonal(dataset, params)));
        let factor = factorise(k, policy)?;
        let residual = dataset.stacked_targets() - &mean;
        let alpha = factor.chol.solve(&residual);
        Ok(Self {
            mean,
            residual,
            alpha,
            factor,
        })
    }

    pub fn log_marginal(&self) -> f64 {
        let n = self.residual.len() as f64;
        -0.5 * n * (2.0 * PI).ln() - 0.5 * self.residual.dot(&self.alpha) - 0.5 * self.factor.log_det()
    }
}

fn check(spec: &ModelSpec, dataset: &Dataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::EmptyData("training set has no observations".into()));
    }
    if dataset.num_outputs() != spec.outputs {
        return Err(Error::DimensionMismatch {
            expected: spec.outputs,
            got: dataset.num_outputs(),
        });
    }
    if dataset.input_dim() != spec.input_dim {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim,
            got: dataset.input_dim(),
        });
    }
    Ok(())
}

/// `log p(y) = -n/2 ln 2 pi - 1/2 (y - mu)^T (K + Sigma)^{-1} (y - mu) - 1/2 ln |K + Sigma|`.
pub fn log_marginal(dataset: &Dataset, spec: &ModelSpec, params: &KernelParams) -> Result<f64> {
    let model = Model::new(*spec)?;
    Ok(Posterior::new(&model, dataset, params, &JitterPolicy::default())?.log_marginal())
}

/// Log-marginal likelihood with its gradient in packed coordinates.
#[derive(Debug, Clone)]
pub struct LikelihoodEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub jitter: f64,
}

/// Value and gradient of the log-marginal likelihood:
///
/// ```text
/// dL/dtheta = 1/2 alpha^T dK alpha - 1/2 tr((K + Sigma)^{-1} dK) + alpha^T dmu
/// ```
pub fn log_marginal_with_grad(
    model: &Model,
    dataset: &Dataset,
    params: &KernelParams,
    policy: &JitterPolicy,
) -> Result<LikelihoodEval> {
    let post = Posterior::new(model, dataset, params, policy)?;
    let n = dataset.len();
    // (K + Sigma)^{-1} from the Cholesky factor; only its entries enter the trace term
    let inv = post.factor.chol.solve(&DMatrix::identity(n, n));
    let weights = 0.5 * (&post.alpha * post.alpha.transpose() - &inv);
    let s = sites(dataset.inputs());
    let mut gradient = model.contract_grad(params, &s, &weights, &post.alpha)?;

    let noise_offset = params.noise_offset();
    let mut start = 0;
    for (d, count) in dataset.counts().into_iter().enumerate() {
        let diag: f64 = (start..start + count).map(|i| weights[(i, i)]).sum();
        gradient[noise_offset + d] = params.noise_variances[d] * diag;
        start += count;
    }
    Ok(LikelihoodEval {
        value: post.log_marginal(),
        gradient,
        jitter: post.factor.jitter,
    })
}

/// Gradient of [`log_marginal`] with respect to the packed parameters.
pub fn grad_log_marginal(dataset: &Dataset, spec: &ModelSpec, params: &KernelParams) -> Result<Vec<f64>> {
    let model = Model::new(*spec)?;
    Ok(log_marginal_with_grad(&model, dataset, params, &JitterPolicy::default())?.gradient)
}
