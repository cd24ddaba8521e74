//! Maximum-marginal-likelihood training with random restarts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::lbfgs::{minimize, LbfgsConfig, Termination, TraceEntry};
use crate::inference::likelihood::{log_marginal_with_grad, JitterPolicy};
use crate::inference::HyperParams;
use crate::kernels::KernelParams;
use crate::model::{Model, ModelSpec};

/// Optional fixed starting values; anything left `None` comes from the data.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitOverrides {
    pub sensitivity: Option<f64>,
    pub length_scale: Option<f64>,
    pub latent_length_scale: Option<f64>,
    /// Initial `sigma_d^2` as a fraction of `var(y_d)`.
    pub noise_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeConfig {
    pub restarts: usize,
    pub seed: u64,
    pub lbfgs: LbfgsConfig,
    pub init: InitOverrides,
    pub jitter: JitterPolicy,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            seed: 0,
            lbfgs: LbfgsConfig::default(),
            init: InitOverrides::default(),
            jitter: JitterPolicy::default(),
        }
    }
}

const DEFAULT_NOISE_FRACTION: f64 = 0.1;
const MAX_DISTANCE_POINTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RestartOutcome {
    Converged {
        objective: f64,
        iterations: usize,
        evaluations: usize,
        termination: Termination,
    },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartReport {
    pub index: usize,
    pub initial: Vec<f64>,
    pub outcome: RestartOutcome,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub params: KernelParams,
    pub theta: Vec<f64>,
    /// `-log p(y)` at `theta`.
    pub objective: f64,
    pub best_restart: usize,
    pub termination: Termination,
    pub trace: Vec<TraceEntry>,
    pub restarts: Vec<RestartReport>,
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len().is_multiple_of(2) {
        0.5 * (values[m - 1] + values[m])
    } else {
        values[m]
    })
}

/// Median absolute pairwise difference of the pooled inputs along each axis.
/// Large inputs are thinned to an evenly strided subset first.
pub fn median_pairwise_distance(dataset: &Dataset) -> Vec<f64> {
    let pooled: Vec<&Vec<f64>> = dataset.inputs().iter().flatten().collect();
    let stride = pooled.len().div_ceil(MAX_DISTANCE_POINTS).max(1);
    let points: Vec<&Vec<f64>> = pooled.into_iter().step_by(stride).collect();
    (0..dataset.input_dim())
        .map(|q| {
            let diffs: Vec<f64> = points
                .iter()
                .enumerate()
                .flat_map(|(i, a)| points[i + 1..].iter().map(move |b| (a[q] - b[q]).abs()))
                .filter(|d| *d > 0.0)
                .collect();
            median(diffs).unwrap_or(1.0)
        })
        .collect()
}

/// Data-driven starting point.
///
/// Every smoother and the latent process get length-scales `m / sqrt(3)` per axis,
/// where `m` is the median pairwise distance, so that the implied output
/// covariance has length-scale `m`. Each output's sensitivities are then scaled
/// by a common factor found by bisection so that the prior variance equals
/// `(1 - f) var(y_d)`, with `sigma_d^2 = f var(y_d)`.
pub fn initial_params(dataset: &Dataset, spec: &ModelSpec, init: &InitOverrides) -> Result<KernelParams> {
    let model = Model::new(*spec)?;
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
    if dataset.is_empty() {
        return Err(Error::EmptyData("training set has no observations".into()));
    }
    let distances = median_pairwise_distance(dataset);
    let scale = |over: Option<f64>| -> Vec<f64> {
        match over {
            Some(l) => vec![l; spec.input_dim],
            None => distances.iter().map(|m| m / 3f64.sqrt()).collect(),
        }
    };
    let mut params = spec.template_params();
    for s in &mut params.smoothers {
        if !s.length_scales.is_empty() {
            s.length_scales = scale(init.length_scale);
        }
        s.sensitivity = init.sensitivity.unwrap_or(1.0);
    }
    if !params.latent_length_scales.is_empty() {
        params.latent_length_scales = scale(init.latent_length_scale);
    }
    let fraction = init.noise_fraction.unwrap_or(DEFAULT_NOISE_FRACTION);
    let per_output = spec.smoothers_per_output();
    let origin = vec![0.0; spec.input_dim];
    for d in 0..spec.outputs {
        let y = &dataset.targets()[d];
        let var_y = if y.len() > 1 { variance(y) } else { 0.0 };
        let var_y = if var_y > 0.0 { var_y } else { 1.0 };
        params.noise_variances[d] = fraction * var_y;
        if init.sensitivity.is_some() {
            continue;
        }
        let target = (1.0 - fraction).max(0.0) * var_y;
        let base = params.clone();
        let prior_var = |log_k: f64| {
            let mut p = base.clone();
            for s in &mut p.smoothers[d * per_output..(d + 1) * per_output] {
                s.sensitivity *= log_k.exp();
            }
            model.cov(&p, d, &origin, d, &origin)
        };
        let (mut lo, mut hi) = (-30.0, 30.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if prior_var(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let k = (0.5 * (lo + hi)).exp();
        for s in &mut params.smoothers[d * per_output..(d + 1) * per_output] {
            s.sensitivity *= k;
        }
    }
    spec.check_params(&params)?;
    Ok(params)
}

/// Perturbs a packed vector with standard-normal noise in log space: log-scale
/// coordinates are shifted, sensitivities are multiplied by `exp(z)`.
fn perturb(hyper: &HyperParams, theta: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sensitivity: Vec<usize> = (0..hyper.template().smoothers.len())
        .map(|i| hyper.template().smoother_offset(i))
        .collect();
    theta
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let z: f64 = StandardNormal.sample(rng);
            if sensitivity.contains(&j) {
                v * z.exp()
            } else {
                v + z
            }
        })
        .collect()
}

/// Starting points for every restart. Restart 0 is the data-driven
/// initialisation itself; restart `r > 0` perturbs it using ChaCha stream `r`.
pub fn restart_points(hyper: &HyperParams, theta0: &[f64], restarts: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..restarts)
        .map(|r| {
            if r == 0 {
                theta0.to_vec()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64);
                perturb(hyper, theta0, &mut rng)
            }
        })
        .collect()
}

/// Minimises `-log p(y | theta)` from several starting points in parallel and
/// keeps the best. Ties go to the lowest restart index.
pub fn optimize(dataset: &Dataset, spec: &ModelSpec, config: &OptimizeConfig) -> Result<OptimizeResult> {
    if config.restarts == 0 {
        return Err(Error::InvalidSpec("at least one restart is required".into()));
    }
    let model = Model::new(*spec)?;
    let start = initial_params(dataset, spec, &config.init)?;
    let hyper = HyperParams::new(start.clone());
    let theta0 = hyper.pack(&start);
    let starts = restart_points(&hyper, &theta0, config.restarts, config.seed);

    let runs: Vec<(RestartReport, Option<crate::inference::lbfgs::Minimum>)> = starts
        .into_par_iter()
        .enumerate()
        .map(|(index, initial)| {
            let mut last_error = None;
            let objective = |theta: &[f64]| {
                let eval = hyper
                    .unpack(theta)
                    .and_then(|p| log_marginal_with_grad(&model, dataset, &p, &config.jitter));
                match eval {
                    Ok(e) => Some((-e.value, e.gradient.iter().map(|g| -g).collect())),
                    Err(err) => {
                        last_error = Some(err.to_string());
                        None
                    }
                }
            };
            let result = minimize(objective, initial.clone(), &config.lbfgs);
            let outcome = match &result {
                Some(m) => RestartOutcome::Converged {
                    objective: m.value,
                    iterations: m.iterations,
                    evaluations: m.evaluations,
                    termination: m.termination,
                },
                None => RestartOutcome::Failed(
                    last_error.unwrap_or_else(|| "objective was not finite at the starting point".into()),
                ),
            };
            (
                RestartReport {
                    index,
                    initial,
                    outcome,
                },
                result,
            )
        })
        .collect();

    let best = runs
        .iter()
        .enumerate()
        .filter_map(|(i, (_, m))| m.as_ref().map(|m| (i, m.value)))
        .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, best)) if best <= v => acc,
            _ => Some((i, v)),
        });
    let reports: Vec<RestartReport> = runs.iter().map(|(r, _)| r.clone()).collect();
    let Some((index, _)) = best else {
        return Err(Error::AllRestartsFailed(
            reports
                .iter()
                .map(|r| match &r.outcome {
                    RestartOutcome::Failed(msg) => format!("restart {}: {msg}", r.index),
                    RestartOutcome::Converged { .. } => unreachable!(),
                })
                .collect(),
        ));
    };
    let minimum = runs[index].1.clone().expect("selected restart has a minimum");
    let params = hyper.unpack(&minimum.x)?;
    Ok(OptimizeResult {
        params,
        theta: minimum.x,
        objective: minimum.value,
        best_restart: index,
        termination: minimum.termination,
        trace: minimum.trace,
        restarts: reports,
    })
}
