//! Predictive distribution of the moment-matched GP.

use nalgebra::{DMatrix, DVector};

use crate::data::{sites, Dataset};
use crate::error::{Error, Result};
use crate::inference::likelihood::{JitterPolicy, Posterior};
use crate::kernels::KernelParams;
use crate::model::{Model, ModelSpec};

/// Predictive mean and covariance (noise included) at stacked test sites.
#[derive(Debug, Clone)]
pub struct PredictiveResult {
    /// Points per output, in stacking order.
    pub counts: Vec<usize>,
    pub mean: DVector<f64>,
    /// Marginal predictive variances, `sigma_d^2` included.
    pub variance: DVector<f64>,
    /// Full predictive covariance when requested.
    pub covariance: Option<DMatrix<f64>>,
}

impl PredictiveResult {
    fn range(&self, d: usize) -> std::ops::Range<usize> {
        let start: usize = self.counts[..d].iter().sum();
        start..start + self.counts[d]
    }

    pub fn output_mean(&self, d: usize) -> &[f64] {
        &self.mean.as_slice()[self.range(d)]
    }

    pub fn output_variance(&self, d: usize) -> &[f64] {
        &self.variance.as_slice()[self.range(d)]
    }
}

/// Predictive distribution at `test_inputs` (one list of inputs per output):
///
/// ```text
/// mean = mu_* + K_*f (K + Sigma)^{-1} (y - mu)
/// cov  = K_** - K_*f (K + Sigma)^{-1} K_f* + Sigma_*
/// ```
pub fn predict(
    train: &Dataset,
    test_inputs: &[Vec<Vec<f64>>],
    spec: &ModelSpec,
    params: &KernelParams,
    full_covariance: bool,
) -> Result<PredictiveResult> {
    if test_inputs.len() != spec.outputs {
        return Err(Error::DimensionMismatch {
            expected: spec.outputs,
            got: test_inputs.len(),
        });
    }
    let model = Model::new(*spec)?;
    let post = Posterior::new(&model, train, params, &JitterPolicy::default())?;
    let train_sites = sites(train.inputs());
    let test_sites = sites(test_inputs);

    let mean_star = model.mean_vector(params, &test_sites)?;
    let k_star = model.cross_cov_matrix(params, &test_sites, &train_sites)?;
    let mean = mean_star + &k_star * &post.alpha;

    // V = L^{-1} K_f*, so that K_*f (K + Sigma)^{-1} K_f* = V^T V
    let v = post
        .factor
        .chol
        .l_dirty()
        .solve_lower_triangular(&k_star.transpose())
        .ok_or_else(|| Error::InvalidParams("singular Cholesky factor".into()))?;
    let noise: Vec<f64> = test_sites.iter().map(|s| params.noise_variances[s.output]).collect();

    let (variance, covariance) = if full_covariance {
        let mut cov = model.cov_matrix(params, &test_sites)? - v.transpose() * &v;
        for (i, s2) in noise.iter().enumerate() {
            cov[(i, i)] = cov[(i, i)].max(0.0) + s2;
        }
        (cov.diagonal(), Some(cov))
    } else {
        let var = DVector::from_iterator(
            test_sites.len(),
            test_sites.iter().enumerate().map(|(i, s)| {
                let prior = model.cov(params, s.output, s.x, s.output, s.x);
                (prior - v.column(i).norm_squared()).max(0.0) + noise[i]
            }),
        );
        (var, None)
    };
    Ok(PredictiveResult {
        counts: test_inputs.iter().map(Vec::len).collect(),
        mean,
        variance,
        covariance,
    })
}
