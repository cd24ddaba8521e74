//! Exponentiated-quadratic smoothing kernels, the latent EQ kernel and the
//! closed-form convolution covariance between smoothed outputs.
//!
//! With `G(tau) = S exp(-tau^2 / (2 l^2))` and `k(tau, tau') = exp(-(tau - tau')^2 / (2 l_u^2))`,
//! the double convolution has, per input dimension,
//!
//! ```text
//! k_ab(t, t') = S_a S_b * 2 pi l_a l_b l_u / sqrt(v) * exp(-(t - t')^2 / (2 v)),   v = l_a^2 + l_b^2 + l_u^2
//! ```
//!
//! and factorises as a product over dimensions. The same algebra with a white-noise
//! latent process (DGP) or delta smoothers (ICM) gives the two degenerate baselines.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single input location `x` in `R^p` (a time `t` when `p = 1`).
pub type InputPoint = [f64];

/// An EQ smoothing kernel `G(tau) = S exp(-sum_q tau_q^2 / (2 l_q^2))`.
///
/// An empty `length_scales` denotes a Dirac delta scaled by `sensitivity` (ICM).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Smoother {
    pub sensitivity: f64,
    pub length_scales: Vec<f64>,
}

impl Smoother {
    pub fn new(sensitivity: f64, length_scales: Vec<f64>) -> Self {
        Self {
            sensitivity,
            length_scales,
        }
    }

    /// `G(tau) = S exp(-P tau^2)` form: `l = 1 / sqrt(2 P)`.
    pub fn from_precision(sensitivity: f64, precisions: &[f64]) -> Self {
        Self {
            sensitivity,
            length_scales: precisions.iter().map(|p| (0.5 / p).sqrt()).collect(),
        }
    }

    pub fn eval(&self, tau: &[f64]) -> f64 {
        let exponent: f64 = tau
            .iter()
            .zip(&self.length_scales)
            .map(|(t, l)| t * t / (2.0 * l * l))
            .sum();
        self.sensitivity * (-exponent).exp()
    }
}

/// Hyperparameters of the kernel stack: smoothing kernels, the shared latent
/// length-scales and one noise variance per output.
///
/// Optimisation works on the packed vector `[S, ln l_1..l_p]` per smoother,
/// then `ln l_u`, then `ln sigma^2` per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub smoothers: Vec<Smoother>,
    pub latent_length_scales: Vec<f64>,
    pub noise_variances: Vec<f64>,
}

impl KernelParams {
    pub fn new(smoothers: Vec<Smoother>, latent_length_scales: Vec<f64>, noise_variances: Vec<f64>) -> Result<Self> {
        let params = Self {
            smoothers,
            latent_length_scales,
            noise_variances,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: &f64| v.is_finite() && *v > 0.0;
        for (i, s) in self.smoothers.iter().enumerate() {
            if !s.sensitivity.is_finite() {
                return Err(Error::InvalidParams(format!("smoother {i}: non-finite sensitivity")));
            }
            if !s.length_scales.iter().all(positive) {
                return Err(Error::InvalidParams(format!(
                    "smoother {i}: length-scales must be positive"
                )));
            }
        }
        if !self.latent_length_scales.iter().all(positive) {
            return Err(Error::InvalidParams("latent length-scales must be positive".into()));
        }
        if !self.noise_variances.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::InvalidParams("noise variances must be non-negative".into()));
        }
        Ok(())
    }

    /// Number of entries in the packed vector.
    pub fn packed_len(&self) -> usize {
        self.smoothers.iter().map(|s| 1 + s.length_scales.len()).sum::<usize>()
            + self.latent_length_scales.len()
            + self.noise_variances.len()
    }

    /// Offset of smoother `i` in the packed vector: its sensitivity sits here,
    /// its log length-scales follow.
    pub fn smoother_offset(&self, i: usize) -> usize {
        self.smoothers[..i].iter().map(|s| 1 + s.length_scales.len()).sum()
    }

    pub fn latent_offset(&self) -> usize {
        self.smoother_offset(self.smoothers.len())
    }

    pub fn noise_offset(&self) -> usize {
        self.latent_offset() + self.latent_length_scales.len()
    }

    /// Unconstrained representation. Zero noise variances pack to `ln(f64::MIN_POSITIVE)`.
    pub fn pack(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.packed_len());
        for s in &self.smoothers {
            theta.push(s.sensitivity);
            theta.extend(s.length_scales.iter().map(|l| l.ln()));
        }
        theta.extend(self.latent_length_scales.iter().map(|l| l.ln()));
        theta.extend(self.noise_variances.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()));
        theta
    }

    /// Parameters with the same shape as `self`, read from a packed vector.
    pub fn with_packed(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.packed_len() {
            return Err(Error::DimensionMismatch {
                expected: self.packed_len(),
                got: theta.len(),
            });
        }
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("packed entry {i} is not finite")));
        }
        let mut it = theta.iter().copied();
        let mut next = || it.next().expect("length checked above");
        let smoothers = self
            .smoothers
            .iter()
            .map(|s| {
                let sensitivity = next();
                let length_scales = s.length_scales.iter().map(|_| next().exp()).collect();
                Smoother::new(sensitivity, length_scales)
            })
            .collect();
        let latent_length_scales = self.latent_length_scales.iter().map(|_| next().exp()).collect();
        let noise_variances = self.noise_variances.iter().map(|_| next().exp()).collect();
        let params = Self {
            smoothers,
            latent_length_scales,
            noise_variances,
        };
        params.validate()?;
        Ok(params)
    }

    fn smoother(&self, d: usize) -> Result<&Smoother> {
        self.smoothers.get(d).ok_or(Error::InvalidOutput {
            index: d,
            outputs: self.smoothers.len(),
        })
    }
}

/// Value of a kernel between two smoothed processes together with its partial
/// derivatives in packed coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrad {
    pub value: f64,
    /// `d/dS_a`, `d/dS_b`.
    pub d_sensitivity: [f64; 2],
    /// `d/d ln l_{a,q}`, `d/d ln l_{b,q}`.
    pub d_log_length: [Vec<f64>; 2],
    /// `d/d ln l_{u,q}`.
    pub d_log_latent: Vec<f64>,
}

impl PairGrad {
    /// Adds `weight * gradient` into a dense packed gradient, mapping the two
    /// smoothers to `offset_a` / `offset_b` and the latent block to `latent_offset`.
    pub fn scatter(&self, weight: f64, offset_a: usize, offset_b: usize, latent_offset: usize, out: &mut [f64]) {
        out[offset_a] += weight * self.d_sensitivity[0];
        out[offset_b] += weight * self.d_sensitivity[1];
        for (q, g) in self.d_log_length[0].iter().enumerate() {
            out[offset_a + 1 + q] += weight * g;
        }
        for (q, g) in self.d_log_length[1].iter().enumerate() {
            out[offset_b + 1 + q] += weight * g;
        }
        for (q, g) in self.d_log_latent.iter().enumerate() {
            out[latent_offset + q] += weight * g;
        }
    }
}

fn check_dims(expected: usize, t: &[f64], t_prime: &[f64]) -> Result<()> {
    for x in [t, t_prime] {
        if x.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: x.len() });
        }
    }
    Ok(())
}

/// `prod_q exp(-(t_q - t'_q)^2 / (2 l_{u,q}^2))`.
pub fn latent_cov(t: &InputPoint, t_prime: &InputPoint, params: &KernelParams) -> Result<f64> {
    check_dims(params.latent_length_scales.len(), t, t_prime)?;
    Ok(eq_product(t, t_prime, &params.latent_length_scales))
}

fn eq_product(t: &[f64], t_prime: &[f64], length_scales: &[f64]) -> f64 {
    let exponent: f64 = t
        .iter()
        .zip(t_prime)
        .zip(length_scales)
        .map(|((a, b), l)| (a - b) * (a - b) / (2.0 * l * l))
        .sum();
    (-exponent).exp()
}

/// `G_d(tau)` for output `d`.
pub fn smoothing_kernel(d: usize, tau: &[f64], params: &KernelParams) -> Result<f64> {
    let s = params.smoother(d)?;
    if tau.len() != s.length_scales.len() {
        return Err(Error::DimensionMismatch {
            expected: s.length_scales.len(),
            got: tau.len(),
        });
    }
    Ok(s.eval(tau))
}

/// Closed-form `cov[f_d(t), f_d'(t')]` for EQ smoothers driven by an EQ latent process.
pub fn cross_cov(d: usize, d_prime: usize, t: &InputPoint, t_prime: &InputPoint, params: &KernelParams) -> Result<f64> {
    let (a, b) = (params.smoother(d)?, params.smoother(d_prime)?);
    check_dims(params.latent_length_scales.len(), t, t_prime)?;
    check_dims(a.length_scales.len(), t, t_prime)?;
    check_dims(b.length_scales.len(), t, t_prime)?;
    Ok(conv_cov(a, b, &params.latent_length_scales, t, t_prime))
}

/// Gradient of [`cross_cov`] over the whole packed parameter vector.
pub fn cross_cov_grad(
    d: usize,
    d_prime: usize,
    t: &InputPoint,
    t_prime: &InputPoint,
    params: &KernelParams,
) -> Result<Vec<f64>> {
    let (a, b) = (params.smoother(d)?, params.smoother(d_prime)?);
    check_dims(params.latent_length_scales.len(), t, t_prime)?;
    check_dims(a.length_scales.len(), t, t_prime)?;
    check_dims(b.length_scales.len(), t, t_prime)?;
    let g = conv_cov_grad(a, b, &params.latent_length_scales, t, t_prime);
    let mut out = vec![0.0; params.packed_len()];
    g.scatter(
        1.0,
        params.smoother_offset(d),
        params.smoother_offset(d_prime),
        params.latent_offset(),
        &mut out,
    );
    Ok(out)
}

/// Per-dimension factor of the convolution covariance, with `ln`-derivatives
/// with respect to `ln l_a`, `ln l_b` and `ln l_u`.
#[inline]
fn conv_factor(la: f64, lb: f64, lu: f64, r: f64) -> (f64, [f64; 3]) {
    let v = la * la + lb * lb + lu * lu;
    let r2 = r * r;
    let value = 2.0 * PI * (la * lb) * lu / v.sqrt() * (-r2 / (2.0 * v)).exp();
    let dlog = |l: f64| 1.0 - l * l / v + r2 * l * l / (v * v);
    (value, [dlog(la), dlog(lb), dlog(lu)])
}

pub(crate) fn conv_cov(a: &Smoother, b: &Smoother, latent: &[f64], t: &[f64], t_prime: &[f64]) -> f64 {
    let mut value = a.sensitivity * b.sensitivity;
    for q in 0..latent.len() {
        value *= conv_factor(a.length_scales[q], b.length_scales[q], latent[q], t[q] - t_prime[q]).0;
    }
    value
}

pub(crate) fn conv_cov_grad(a: &Smoother, b: &Smoother, latent: &[f64], t: &[f64], t_prime: &[f64]) -> PairGrad {
    let p = latent.len();
    let mut shape = 1.0;
    let mut dla = Vec::with_capacity(p);
    let mut dlb = Vec::with_capacity(p);
    let mut dlu = Vec::with_capacity(p);
    for q in 0..p {
        let (f, g) = conv_factor(a.length_scales[q], b.length_scales[q], latent[q], t[q] - t_prime[q]);
        shape *= f;
        dla.push(g[0]);
        dlb.push(g[1]);
        dlu.push(g[2]);
    }
    let value = a.sensitivity * b.sensitivity * shape;
    for g in dla.iter_mut().chain(dlb.iter_mut()).chain(dlu.iter_mut()) {
        *g *= value;
    }
    PairGrad {
        value,
        d_sensitivity: [b.sensitivity * shape, a.sensitivity * shape],
        d_log_length: [dla, dlb],
        d_log_latent: dlu,
    }
}

/// Single convolution of two EQ smoothers against white noise:
/// per dimension `sqrt(2 pi) l_a l_b / sqrt(v) exp(-r^2 / (2 v))`, `v = l_a^2 + l_b^2`.
pub(crate) fn white_cov(a: &Smoother, b: &Smoother, t: &[f64], t_prime: &[f64]) -> f64 {
    white_cov_grad(a, b, t, t_prime).value
}

pub(crate) fn white_cov_grad(a: &Smoother, b: &Smoother, t: &[f64], t_prime: &[f64]) -> PairGrad {
    let p = t.len();
    let mut shape = 1.0;
    let mut dla = Vec::with_capacity(p);
    let mut dlb = Vec::with_capacity(p);
    for q in 0..p {
        let (la, lb) = (a.length_scales[q], b.length_scales[q]);
        let v = la * la + lb * lb;
        let r2 = (t[q] - t_prime[q]).powi(2);
        shape *= (2.0 * PI).sqrt() * (la * lb) / v.sqrt() * (-r2 / (2.0 * v)).exp();
        dla.push(1.0 - la * la / v + r2 * la * la / (v * v));
        dlb.push(1.0 - lb * lb / v + r2 * lb * lb / (v * v));
    }
    let value = a.sensitivity * b.sensitivity * shape;
    for g in dla.iter_mut().chain(dlb.iter_mut()) {
        *g *= value;
    }
    PairGrad {
        value,
        d_sensitivity: [b.sensitivity * shape, a.sensitivity * shape],
        d_log_length: [dla, dlb],
        d_log_latent: Vec::new(),
    }
}

/// Rank-one coregionalisation `a_d a_d' k(t, t')`.
pub(crate) fn icm_cov_grad(a: &Smoother, b: &Smoother, latent: &[f64], t: &[f64], t_prime: &[f64]) -> PairGrad {
    let shape = eq_product(t, t_prime, latent);
    let value = a.sensitivity * b.sensitivity * shape;
    let d_log_latent = latent
        .iter()
        .enumerate()
        .map(|(q, l)| value * (t[q] - t_prime[q]).powi(2) / (l * l))
        .collect();
    PairGrad {
        value,
        d_sensitivity: [b.sensitivity * shape, a.sensitivity * shape],
        d_log_length: [Vec::new(), Vec::new()],
        d_log_latent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> KernelParams {
        KernelParams::new(
            vec![
                Smoother::new(1.5, vec![0.2]),
                Smoother::new(-0.7, vec![0.45]),
                Smoother::new(2.0, vec![0.1]),
            ],
            vec![0.3],
            vec![0.01, 0.02, 0.03],
        )
        .unwrap()
    }

    #[test]
    fn latent_kernel_values() {
        let p = params();
        assert_eq!(latent_cov(&[0.4], &[0.4], &p).unwrap(), 1.0);
        assert!(latent_cov(&[0.0], &[1e3], &p).unwrap() < 1e-300);
        let v = latent_cov(&[0.1], &[0.4], &p).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!(latent_cov(&[0.1, 0.2], &[0.4], &p).is_err());
    }

    #[test]
    fn smoothing_kernel_values() {
        let p = params();
        assert_eq!(smoothing_kernel(0, &[0.0], &p).unwrap(), 1.5);
        assert_eq!(
            smoothing_kernel(1, &[0.3], &p).unwrap(),
            smoothing_kernel(1, &[-0.3], &p).unwrap()
        );
        let toy = KernelParams::new(vec![Smoother::from_precision(5.0, &[200.0])], vec![1.0], vec![0.0]).unwrap();
        let v = smoothing_kernel(0, &[0.1], &toy).unwrap();
        assert!((v - 5.0 * (-2.0f64).exp()).abs() < 1e-14);
        assert!(matches!(
            smoothing_kernel(7, &[0.0], &p),
            Err(Error::InvalidOutput { index: 7, .. })
        ));
    }

    #[test]
    fn cross_cov_symmetry_and_stationarity() {
        let p = params();
        let a = cross_cov(0, 1, &[0.2], &[0.5], &p).unwrap();
        let b = cross_cov(1, 0, &[0.5], &[0.2], &p).unwrap();
        assert_eq!(a, b);
        let c = cross_cov(0, 1, &[1.2], &[1.5], &p).unwrap();
        assert!((a - c).abs() < 1e-15 * a.abs());
    }

    #[test]
    fn zero_sensitivity_vanishes() {
        let mut p = params();
        p.smoothers[0].sensitivity = 0.0;
        assert_eq!(cross_cov(0, 2, &[0.1], &[0.3], &p).unwrap(), 0.0);
        // linear in S_d: the derivative at zero equals the value at S_d = 1
        let g = cross_cov_grad(0, 2, &[0.1], &[0.3], &p).unwrap();
        p.smoothers[0].sensitivity = 1.0;
        let unit = cross_cov(0, 2, &[0.1], &[0.3], &p).unwrap();
        assert!((g[p.smoother_offset(0)] - unit).abs() < 1e-15 * unit.abs());
    }

    #[test]
    fn unrelated_output_has_zero_gradient() {
        let p = params();
        let g = cross_cov_grad(0, 2, &[0.1], &[0.3], &p).unwrap();
        assert_eq!(g[p.smoother_offset(1)], 0.0);
        assert_eq!(g[p.smoother_offset(1) + 1], 0.0);
        assert!(g[p.noise_offset()..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn multi_dimensional_factorises() {
        let p = KernelParams::new(
            vec![Smoother::new(1.0, vec![0.2, 0.6]), Smoother::new(1.0, vec![0.4, 0.1])],
            vec![0.3, 0.9],
            vec![0.0, 0.0],
        )
        .unwrap();
        let dim = |q: usize| {
            KernelParams::new(
                vec![
                    Smoother::new(1.0, vec![p.smoothers[0].length_scales[q]]),
                    Smoother::new(1.0, vec![p.smoothers[1].length_scales[q]]),
                ],
                vec![p.latent_length_scales[q]],
                vec![0.0, 0.0],
            )
            .unwrap()
        };
        let (t, s) = ([0.1, -0.4], [0.7, 0.2]);
        let full = cross_cov(0, 1, &t, &s, &p).unwrap();
        let prod =
            cross_cov(0, 1, &t[..1], &s[..1], &dim(0)).unwrap() * cross_cov(0, 1, &t[1..], &s[1..], &dim(1)).unwrap();
        assert!((full - prod).abs() < 1e-14 * full.abs());
    }

    #[test]
    fn pack_round_trip() {
        let p = params();
        let theta = p.pack();
        assert_eq!(theta.len(), p.packed_len());
        let q = p.with_packed(&theta).unwrap();
        for (a, b) in q.pack().iter().zip(&theta) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(p.with_packed(&theta[1..]).is_err());
        assert!(p.with_packed(&vec![f64::NAN; theta.len()]).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(KernelParams::new(vec![Smoother::new(1.0, vec![0.0])], vec![1.0], vec![0.1]).is_err());
        assert!(KernelParams::new(vec![Smoother::new(1.0, vec![1.0])], vec![-1.0], vec![0.1]).is_err());
        assert!(KernelParams::new(vec![Smoother::new(1.0, vec![1.0])], vec![1.0], vec![-0.1]).is_err());
    }

    #[test]
    fn white_and_icm_gradients_match_finite_differences() {
        let a = Smoother::new(1.3, vec![0.3, 0.5]);
        let b = Smoother::new(0.8, vec![0.2, 0.7]);
        let lat = [0.4, 0.9];
        let (t, s) = ([0.1, 0.3], [0.5, -0.2]);
        let h = 1e-6;
        let bump = |sm: &Smoother, q: usize, dh: f64| {
            let mut c = sm.clone();
            c.length_scales[q] *= dh.exp();
            c
        };
        let g = white_cov_grad(&a, &b, &t, &s);
        for q in 0..2 {
            let fd = (white_cov(&bump(&a, q, h), &b, &t, &s) - white_cov(&bump(&a, q, -h), &b, &t, &s)) / (2.0 * h);
            assert!((fd - g.d_log_length[0][q]).abs() < 1e-7);
        }
        let g = icm_cov_grad(&a, &b, &lat, &t, &s);
        for q in 0..2 {
            let mut up = lat;
            up[q] *= h.exp();
            let mut dn = lat;
            dn[q] *= (-h).exp();
            let fd = (icm_cov_grad(&a, &b, &up, &t, &s).value - icm_cov_grad(&a, &b, &dn, &t, &s).value) / (2.0 * h);
            assert!((fd - g.d_log_latent[q]).abs() < 1e-7);
        }
    }
}
