//! Train/predict/score loops and their aggregation over resplits and orders.

use std::io::Write;

use rayon::prelude::*;

use crate::cli::io::{ModelFile, Provenance, MODEL_FORMAT, MODEL_VERSION, TOOL_VERSION};
use crate::cli::split::SplitPolicy;
use crate::data::Dataset;
use crate::error::Result;
use crate::inference::{average, nlpd, nmse, optimize, predict, OptimizeConfig};
use crate::model::{ModelSpec, Variant};

/// Fits a model and packages it with its provenance.
pub fn train_model(data: &Dataset, spec: &ModelSpec, config: &OptimizeConfig, config_hash: &str) -> Result<ModelFile> {
    let fit = optimize(data, spec, config)?;
    Ok(ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        tool_version: TOOL_VERSION.into(),
        config_hash: config_hash.into(),
        seed: config.seed,
        spec: *spec,
        params: fit.params,
        theta: fit.theta,
        objective: fit.objective,
        best_restart: fit.best_restart,
        termination: fit.termination,
        trace: fit.trace,
        restarts: fit.restarts,
        train: data.clone(),
    })
}

/// Per-output scores of one trained model on one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub nmse: Vec<Option<f64>>,
    pub nlpd: Vec<Option<f64>>,
}

impl Scores {
    pub fn mean_nmse(&self) -> f64 {
        average(&self.nmse)
    }

    pub fn mean_nlpd(&self) -> f64 {
        average(&self.nlpd)
    }
}

pub fn score(model: &ModelFile, test: &Dataset) -> Result<Scores> {
    let pred = predict(&model.train, test.inputs(), &model.spec, &model.params, false)?;
    Ok(Scores {
        nmse: nmse(&pred, test)?,
        nlpd: nlpd(&pred, test)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub order: u32,
    pub split: u64,
    pub objective: f64,
    pub scores: Scores,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub order: u32,
    pub splits: usize,
    pub nmse_mean: f64,
    pub nmse_std: f64,
    pub nlpd_mean: f64,
    pub nlpd_std: f64,
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub variant: Variant,
    pub results: Vec<SplitResult>,
}

impl EvalReport {
    pub fn summaries(&self) -> Vec<Summary> {
        let mut orders: Vec<u32> = self.results.iter().map(|r| r.order).collect();
        orders.dedup();
        orders
            .into_iter()
            .map(|order| {
                let rows: Vec<&SplitResult> = self.results.iter().filter(|r| r.order == order).collect();
                let nm: Vec<f64> = rows.iter().map(|r| r.scores.mean_nmse()).collect();
                let nl: Vec<f64> = rows.iter().map(|r| r.scores.mean_nlpd()).collect();
                let (nmse_mean, nmse_std) = mean_std(&nm);
                let (nlpd_mean, nlpd_std) = mean_std(&nl);
                Summary {
                    order,
                    splits: rows.len(),
                    nmse_mean,
                    nmse_std,
                    nlpd_mean,
                    nlpd_std,
                }
            })
            .collect()
    }

    pub fn summary(&self, order: u32) -> Option<Summary> {
        self.summaries().into_iter().find(|s| s.order == order)
    }

    /// Plain-text table: one row per order with `mean ± std` over splits.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:>3} | {:^19} | {:^19}\n", "C", "NMSE", "NLPD"));
        out.push_str(&format!("{}\n", "-".repeat(47)));
        for s in self.summaries() {
            out.push_str(&format!(
                "{:>3} | {:>8.4} ± {:<8.4} | {:>8.4} ± {:<8.4}\n",
                s.order, s.nmse_mean, s.nmse_std, s.nlpd_mean, s.nlpd_std
            ));
        }
        out
    }

    /// Long-format CSV: per split and output, then a `mean` row per split.
    pub fn csv(&self, provenance: &Provenance) -> Vec<u8> {
        let mut out = Vec::new();
        provenance.write(&mut out).expect("write to memory");
        writeln!(out, "variant,order,split,output,nmse,nlpd").expect("write to memory");
        let cell = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for r in &self.results {
            for (d, (a, b)) in r.scores.nmse.iter().zip(&r.scores.nlpd).enumerate() {
                writeln!(
                    out,
                    "{},{},{},{d},{},{}",
                    self.variant,
                    r.order,
                    r.split,
                    cell(*a),
                    cell(*b)
                )
                .expect("write to memory");
            }
            writeln!(
                out,
                "{},{},{},mean,{},{}",
                self.variant,
                r.order,
                r.split,
                r.scores.mean_nmse(),
                r.scores.mean_nlpd()
            )
            .expect("write to memory");
        }
        out
    }
}

/// Repeats split, train and score for every order and resplit. Resplit `r`
/// partitions with stream `r` of `seed` and trains with optimiser seed `seed + r`.
pub fn resplit_eval(
    data: &Dataset,
    policy: &SplitPolicy,
    variant: Variant,
    orders: &[u32],
    resplits: u64,
    seed: u64,
    config: &OptimizeConfig,
) -> Result<EvalReport> {
    let jobs: Vec<(u32, u64)> = orders
        .iter()
        .flat_map(|&c| (0..resplits).map(move |r| (c, r)))
        .collect();
    let results = jobs
        .into_par_iter()
        .map(|(order, split)| {
            let (train, test) = policy.apply(data, seed, split)?;
            let spec = ModelSpec::new(order, variant, data.num_outputs(), data.input_dim())?;
            let opt = OptimizeConfig {
                seed: seed.wrapping_add(split),
                ..*config
            };
            let model = train_model(&train, &spec, &opt, "")?;
            Ok(SplitResult {
                order,
                split,
                objective: model.objective,
                scores: score(&model, &test)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { variant, results })
}
