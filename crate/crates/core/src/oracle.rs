//! Numerical quadrature of the convolution integrals, used to certify the
//! closed-form covariances. One-dimensional inputs only.
//!
//! Integrals are evaluated with the composite trapezoid rule on a uniform grid.
//! Every integrand is a product of Gaussians, analytic and decaying, so the rule
//! converges geometrically: with `n` grid points per length-scale the
//! discretisation error is bounded by roughly `2 exp(-2 pi^2 n^2 / 2) |I|`, and
//! truncating at `W` length-scales leaves a tail of order `exp(-W^2 / 2)`. The
//! defaults (`W = 10`, `n = 8`) push both below double-precision rounding.

use crate::error::{Error, Result};
use crate::kernels::{KernelParams, Smoother};

/// Grid used by the trapezoid rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Half-width of each integration window, in length-scales of the kernel it is centred on.
    pub window_scales: f64,
    /// Grid points per (smallest relevant) length-scale.
    pub points_per_scale: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            window_scales: 10.0,
            points_per_scale: 8,
        }
    }
}

/// Relative integrand mass tolerated in the outermost length-scale of a window.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

struct Axis {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Nodes lying within one length-scale of either window edge.
    band: Vec<bool>,
}

impl Axis {
    fn new(centre: f64, scale: f64, step_scale: f64, grid: &GridSpec) -> Self {
        let half = grid.window_scales * scale;
        let h_target = step_scale / grid.points_per_scale.max(1) as f64;
        let intervals = ((2.0 * half / h_target).ceil() as usize).max(2);
        let h = 2.0 * half / intervals as f64;
        let lo = centre - half;
        let nodes: Vec<f64> = (0..=intervals).map(|i| lo + i as f64 * h).collect();
        let weights = (0..=intervals)
            .map(|i| if i == 0 || i == intervals { 0.5 * h } else { h })
            .collect();
        let band = nodes
            .iter()
            .map(|x| (x - lo) < scale || (lo + 2.0 * half - x) < scale)
            .collect();
        Self { nodes, weights, band }
    }
}

fn boundary_check(boundary: f64, total: f64) -> Result<()> {
    let ratio = if total > 0.0 { boundary / total } else { 0.0 };
    if ratio > BOUNDARY_TOLERANCE || !ratio.is_finite() {
        return Err(Error::WindowTooSmall {
            boundary_mass: ratio,
            tolerance: BOUNDARY_TOLERANCE,
        });
    }
    Ok(())
}

fn one_dimensional(params: &KernelParams, d: usize) -> Result<&Smoother> {
    let s = params.smoothers.get(d).ok_or(Error::InvalidOutput {
        index: d,
        outputs: params.smoothers.len(),
    })?;
    if s.length_scales.len() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: s.length_scales.len(),
        });
    }
    Ok(s)
}

/// Trapezoid evaluation of `iint G_d(t - a) G_d'(t' - b) k(a, b) da db` for an EQ latent kernel.
pub fn cross_cov_quadrature(
    d: usize,
    d_prime: usize,
    t: f64,
    t_prime: f64,
    params: &KernelParams,
    grid: &GridSpec,
) -> Result<f64> {
    let (ga, gb) = (one_dimensional(params, d)?, one_dimensional(params, d_prime)?);
    if params.latent_length_scales.len() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: params.latent_length_scales.len(),
        });
    }
    let lu = params.latent_length_scales[0];
    let (la, lb) = (ga.length_scales[0], gb.length_scales[0]);
    let outer = Axis::new(t, la, la.min(lu), grid);
    let inner = Axis::new(t_prime, lb, lb.min(lu), grid);

    let inner_g: Vec<f64> = inner.nodes.iter().map(|&b| gb.eval(&[t_prime - b])).collect();
    let mut total = 0.0;
    let mut total_abs = 0.0;
    let mut boundary = 0.0;
    for (i, &a) in outer.nodes.iter().enumerate() {
        let g_outer = ga.eval(&[t - a]);
        let mut row = 0.0;
        let mut row_abs = 0.0;
        let mut row_band = 0.0;
        for (j, &b) in inner.nodes.iter().enumerate() {
            let z = (a - b) / lu;
            let v = inner.weights[j] * inner_g[j] * (-0.5 * z * z).exp();
            row += v;
            row_abs += v.abs();
            if inner.band[j] {
                row_band += v.abs();
            }
        }
        let w = outer.weights[i] * g_outer;
        total += w * row;
        total_abs += (w * row_abs).abs();
        boundary += if outer.band[i] {
            (w * row_abs).abs()
        } else {
            (w * row_band).abs()
        };
    }
    boundary_check(boundary, total_abs)?;
    Ok(total)
}

/// Trapezoid evaluation of `int G_d(t - s) G_d'(t' - s) ds` (white-noise latent process).
pub fn dgp_cross_cov_quadrature(
    d: usize,
    d_prime: usize,
    t: f64,
    t_prime: f64,
    params: &KernelParams,
    grid: &GridSpec,
) -> Result<f64> {
    let (ga, gb) = (one_dimensional(params, d)?, one_dimensional(params, d_prime)?);
    let (la, lb) = (ga.length_scales[0], gb.length_scales[0]);
    // a window wide enough for both kernels, centred between them
    let lo = (t - grid.window_scales * la).min(t_prime - grid.window_scales * lb);
    let hi = (t + grid.window_scales * la).max(t_prime + grid.window_scales * lb);
    let scale = 0.5 * (hi - lo);
    let axis = Axis::new(
        0.5 * (lo + hi),
        scale,
        la.min(lb),
        &GridSpec {
            window_scales: 1.0,
            points_per_scale: grid.points_per_scale,
        },
    );
    let mut total = 0.0;
    let mut total_abs = 0.0;
    let mut boundary = 0.0;
    for (i, &s) in axis.nodes.iter().enumerate() {
        let v = axis.weights[i] * ga.eval(&[t - s]) * gb.eval(&[t_prime - s]);
        total += v;
        total_abs += v.abs();
        let edge = (s - axis.nodes[0]).min(axis.nodes[axis.nodes.len() - 1] - s);
        if edge < la.min(lb) {
            boundary += v.abs();
        }
    }
    boundary_check(boundary, total_abs)?;
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::cross_cov;

    fn params(la: f64, lb: f64, lu: f64) -> KernelParams {
        KernelParams::new(
            vec![Smoother::new(1.2, vec![la]), Smoother::new(0.6, vec![lb])],
            vec![lu],
            vec![0.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn agrees_with_closed_form() {
        let p = params(0.2, 0.35, 0.5);
        let q = cross_cov_quadrature(0, 1, 0.1, 0.4, &p, &GridSpec::default()).unwrap();
        let c = cross_cov(0, 1, &[0.1], &[0.4], &p).unwrap();
        assert!((q - c).abs() < 1e-10 * c.abs(), "{q} vs {c}");
    }

    #[test]
    fn small_window_detected() {
        let p = params(0.2, 0.35, 0.5);
        let grid = GridSpec {
            window_scales: 3.0,
            points_per_scale: 8,
        };
        assert!(matches!(
            cross_cov_quadrature(0, 1, 0.1, 0.4, &p, &grid),
            Err(Error::WindowTooSmall { .. })
        ));
        assert!(matches!(
            dgp_cross_cov_quadrature(0, 1, 0.1, 0.4, &p, &grid),
            Err(Error::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn refinement_converges_at_least_quadratically() {
        let p = params(0.3, 0.25, 0.4);
        let at = |n| {
            cross_cov_quadrature(
                0,
                1,
                0.0,
                0.2,
                &p,
                &GridSpec {
                    window_scales: 10.0,
                    points_per_scale: n,
                },
            )
            .unwrap()
        };
        let (i1, i2, i4) = (at(1), at(2), at(4));
        let (c1, c2) = ((i2 - i1).abs(), (i4 - i2).abs());
        assert!(c2 <= c1 / 4.0 || c2 < 1e-14 * i4.abs(), "changes {c1:e} then {c2:e}");
    }
}
