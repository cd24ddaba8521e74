//! Columnar export of predictive bands on a regular grid, with data overlays.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cli::io::{ModelFile, Provenance};
use crate::cli::CliError;
use crate::data::Dataset;
use crate::inference::predict;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotGrid {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl PlotGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let step = (self.end - self.start) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.start + i as f64 * step).collect()
    }
}

/// Rows `output,kind,t,mean,variance,half_width,lower,upper,y`.
///
/// `kind = grid` rows carry the predictive mean, variance (noise included) and the
/// band `mean ± 2 sqrt(variance)`; `train` and `test` rows carry only `t` and `y`.
/// The model must have a one-dimensional input.
pub fn export(
    model: &ModelFile,
    grid: &PlotGrid,
    test: Option<&Dataset>,
    provenance: &Provenance,
) -> Result<Vec<u8>, CliError> {
    if model.spec.input_dim != 1 {
        return Err(CliError::Data(format!(
            "plot export needs one-dimensional inputs, model has {}",
            model.spec.input_dim
        )));
    }
    if grid.points == 0 || !(grid.start.is_finite() && grid.end.is_finite()) || grid.start > grid.end {
        return Err(CliError::Config(
            "plot grid needs points >= 1 and finite start <= end".into(),
        ));
    }
    if let Some(t) = test {
        if t.num_outputs() != model.spec.outputs || t.input_dim() != 1 {
            return Err(CliError::Data("test data does not match the model".into()));
        }
    }
    let seen: Vec<f64> = model.train.inputs().iter().flatten().map(|x| x[0]).collect();
    let (lo, hi) = seen
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let span = (hi - lo).max(f64::EPSILON);
    if grid.start < lo - 0.5 * span || grid.end > hi + 0.5 * span {
        log::warn!(
            "plot grid [{}, {}] extends well beyond the training inputs [{lo}, {hi}]",
            grid.start,
            grid.end
        );
    }

    let ts = grid.values();
    let inputs: Vec<Vec<Vec<f64>>> = (0..model.spec.outputs)
        .map(|_| ts.iter().map(|t| vec![*t]).collect())
        .collect();
    let pred = predict(&model.train, &inputs, &model.spec, &model.params, false)?;

    let mut out = Vec::new();
    provenance.write(&mut out).expect("write to memory");
    writeln!(out, "output,kind,t,mean,variance,half_width,lower,upper,y").expect("write to memory");
    for d in 0..model.spec.outputs {
        for ((t, m), v) in ts.iter().zip(pred.output_mean(d)).zip(pred.output_variance(d)) {
            let half = 2.0 * v.sqrt();
            writeln!(out, "{d},grid,{t},{m},{v},{half},{},{},", m - half, m + half).expect("write to memory");
        }
        let overlays = [("train", Some(&model.train)), ("test", test)];
        for (kind, data) in overlays {
            let Some(data) = data else { continue };
            for (x, y) in data.inputs()[d].iter().zip(&data.targets()[d]) {
                writeln!(out, "{d},{kind},{},,,,,,{y}", x[0]).expect("write to memory");
            }
        }
    }
    Ok(out)
}
