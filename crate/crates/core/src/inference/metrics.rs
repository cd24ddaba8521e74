//! Per-output NMSE and NLPD.

use std::f64::consts::PI;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::predict::PredictiveResult;

fn aligned(pred: &PredictiveResult, truth: &Dataset) -> Result<()> {
    if pred.counts != truth.counts() {
        return Err(Error::InvalidParams(format!(
            "prediction layout {:?} does not match test layout {:?}",
            pred.counts,
            truth.counts()
        )));
    }
    if truth.is_empty() {
        return Err(Error::EmptyData("test set has no observations".into()));
    }
    Ok(())
}

/// `mean_n (y_n - mu_n)^2 / var(y)` per output, with the population variance of the
/// test targets. Outputs without test points give `None`.
pub fn nmse(pred: &PredictiveResult, truth: &Dataset) -> Result<Vec<Option<f64>>> {
    aligned(pred, truth)?;
    (0..truth.num_outputs())
        .map(|d| {
            let y = &truth.targets()[d];
            if y.is_empty() {
                return Ok(None);
            }
            let n = y.len() as f64;
            let mean = y.iter().sum::<f64>() / n;
            let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var <= 0.0 {
                return Err(Error::ZeroVariance(d));
            }
            let mse = y
                .iter()
                .zip(pred.output_mean(d))
                .map(|(t, m)| (t - m).powi(2))
                .sum::<f64>()
                / n;
            Ok(Some(mse / var))
        })
        .collect()
}

/// `mean_n [1/2 ln(2 pi v_n) + (y_n - mu_n)^2 / (2 v_n)]` per output.
pub fn nlpd(pred: &PredictiveResult, truth: &Dataset) -> Result<Vec<Option<f64>>> {
    aligned(pred, truth)?;
    Ok((0..truth.num_outputs())
        .map(|d| {
            let y = &truth.targets()[d];
            if y.is_empty() {
                return None;
            }
            let total: f64 = y
                .iter()
                .zip(pred.output_mean(d))
                .zip(pred.output_variance(d))
                .map(|((t, m), v)| 0.5 * (2.0 * PI * v).ln() + (t - m).powi(2) / (2.0 * v))
                .sum();
            Some(total / y.len() as f64)
        })
        .collect())
}

/// Average over the outputs that have a value.
pub fn average(values: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    present.iter().sum::<f64>() / present.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn pred(mean: Vec<f64>, var: Vec<f64>, counts: Vec<usize>) -> PredictiveResult {
        PredictiveResult {
            counts,
            mean: DVector::from_vec(mean),
            variance: DVector::from_vec(var),
            covariance: None,
        }
    }

    fn truth() -> Dataset {
        Dataset::new(
            1,
            vec![vec![vec![0.0], vec![1.0], vec![2.0]], vec![]],
            vec![vec![1.0, 2.0, 4.0], vec![]],
        )
        .unwrap()
    }

    #[test]
    fn perfect_and_constant_predictions() {
        let t = truth();
        let perfect = pred(vec![1.0, 2.0, 4.0], vec![1.0; 3], vec![3, 0]);
        assert_eq!(nmse(&perfect, &t).unwrap(), vec![Some(0.0), None]);
        let m = 7.0 / 3.0;
        let constant = pred(vec![m; 3], vec![1.0; 3], vec![3, 0]);
        let v = nmse(&constant, &t).unwrap()[0].unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nlpd_of_standard_normal() {
        let t = truth();
        let p = pred(vec![1.0, 2.0, 4.0], vec![1.0; 3], vec![3, 0]);
        let v = nlpd(&p, &t).unwrap()[0].unwrap();
        assert!((v - 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert_eq!(average(&[Some(1.0), None, Some(3.0)]), 2.0);
    }

    #[test]
    fn errors() {
        let t = truth();
        assert!(nmse(&pred(vec![0.0; 2], vec![1.0; 2], vec![2, 0]), &t).is_err());
        let flat = Dataset::new(1, vec![vec![vec![0.0], vec![1.0]]], vec![vec![2.0, 2.0]]).unwrap();
        assert!(matches!(
            nmse(&pred(vec![0.0; 2], vec![1.0; 2], vec![2]), &flat),
            Err(Error::ZeroVariance(0))
        ));
        let empty = Dataset::new(1, vec![vec![]], vec![vec![]]).unwrap();
        assert!(matches!(
            nmse(&pred(vec![], vec![], vec![0]), &empty),
            Err(Error::EmptyData(_))
        ));
    }
}
