//! Multi-output datasets with per-output (heterotopic) input locations.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observations `y_d(x_n)` grouped by output. Outputs may have different input sets.
///
/// Stacked vectors use output-major order: all points of output 0, then output 1, ...
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    input_dim: usize,
    inputs: Vec<Vec<Vec<f64>>>,
    targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(input_dim: usize, inputs: Vec<Vec<Vec<f64>>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidSpec("input dimension must be at least 1".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        if inputs.is_empty() {
            return Err(Error::EmptyData("dataset has no outputs".into()));
        }
        for (xs, ys) in inputs.iter().zip(&targets) {
            if xs.len() != ys.len() {
                return Err(Error::DimensionMismatch {
                    expected: xs.len(),
                    got: ys.len(),
                });
            }
            if let Some(x) = xs.iter().find(|x| x.len() != input_dim) {
                return Err(Error::DimensionMismatch {
                    expected: input_dim,
                    got: x.len(),
                });
            }
            if xs.iter().flatten().chain(ys).any(|v| !v.is_finite()) {
                return Err(Error::InvalidParams("dataset contains non-finite values".into()));
            }
        }
        Ok(Self {
            input_dim,
            inputs,
            targets,
        })
    }

    /// Same inputs on every output (isotopic), targets given per output.
    pub fn isotopic(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        let input_dim = inputs.first().map_or(1, |x| x.len());
        let per_output = targets.iter().map(|_| inputs.clone()).collect();
        Self::new(input_dim, per_output, targets)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_outputs(&self) -> usize {
        self.inputs.len()
    }

    /// Total number of observations across outputs.
    pub fn len(&self) -> usize {
        self.targets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &[Vec<Vec<f64>>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn counts(&self) -> Vec<usize> {
        self.targets.iter().map(Vec::len).collect()
    }

    /// Stacked target vector `[y_1; ..; y_D]`.
    pub fn stacked_targets(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.targets.iter().flatten().copied())
    }

    /// Dataset with outputs reordered so that new output `k` is old output `perm[k]`.
    pub fn permute_outputs(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_outputs() {
            return Err(Error::DimensionMismatch {
                expected: self.num_outputs(),
                got: perm.len(),
            });
        }
        Self::new(
            self.input_dim,
            perm.iter().map(|&k| self.inputs[k].clone()).collect(),
            perm.iter().map(|&k| self.targets[k].clone()).collect(),
        )
    }

    /// Keeps, for each output, the points whose indices are listed.
    pub fn subset(&self, keep: &[Vec<usize>]) -> Result<Self> {
        if keep.len() != self.num_outputs() {
            return Err(Error::DimensionMismatch {
                expected: self.num_outputs(),
                got: keep.len(),
            });
        }
        let inputs = keep
            .iter()
            .zip(&self.inputs)
            .map(|(idx, xs)| idx.iter().map(|&i| xs[i].clone()).collect())
            .collect();
        let targets = keep
            .iter()
            .zip(&self.targets)
            .map(|(idx, ys)| idx.iter().map(|&i| ys[i]).collect())
            .collect();
        Self::new(self.input_dim, inputs, targets)
    }
}

/// One stacked location: output index, index within that output, and the input.
#[derive(Debug, Clone, Copy)]
pub struct Site<'a> {
    pub output: usize,
    pub index: usize,
    pub x: &'a [f64],
}

/// Flattens per-output inputs into output-major sites.
pub fn sites(inputs: &[Vec<Vec<f64>>]) -> Vec<Site<'_>> {
    inputs
        .iter()
        .enumerate()
        .flat_map(|(output, xs)| {
            xs.iter().enumerate().map(move |(index, x)| Site {
                output,
                index,
                x: x.as_slice(),
            })
        })
        .collect()
}
