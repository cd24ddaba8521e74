//! Training by exact marginal likelihood, prediction and evaluation metrics.

pub mod lbfgs;
pub mod likelihood;
pub mod metrics;
pub mod predict;
pub mod train;

pub use likelihood::{grad_log_marginal, log_marginal, log_marginal_with_grad, JitterPolicy, LikelihoodEval};
pub use metrics::{average, nlpd, nmse};
pub use predict::{predict, PredictiveResult};
pub use train::{optimize, InitOverrides, OptimizeConfig, OptimizeResult};

use crate::error::Result;
use crate::kernels::KernelParams;

/// Map between [`KernelParams`] and the flat unconstrained vector the optimiser
/// works on. The template fixes the shape (number of smoothers, dimensions).
#[derive(Debug, Clone)]
pub struct HyperParams {
    template: KernelParams,
}

impl HyperParams {
    pub fn new(template: KernelParams) -> Self {
        Self { template }
    }

    pub fn template(&self) -> &KernelParams {
        &self.template
    }

    pub fn len(&self) -> usize {
        self.template.packed_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pack(&self, params: &KernelParams) -> Vec<f64> {
        params.pack()
    }

    pub fn unpack(&self, theta: &[f64]) -> Result<KernelParams> {
        self.template.with_packed(theta)
    }
}
