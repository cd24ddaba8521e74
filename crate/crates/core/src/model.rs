//! Moment-matched Gaussian process for a truncated Volterra series driven by a
//! shared latent GP.
//!
//! Each output is `f_d(t) = sum_{c=1..C} prod_{i=1..c} f_d^{(c,i)}(t)` where every
//! factor is a linear smoothing of the latent process. The non-Gaussian output is
//! replaced by the GP with the same mean `E[f_d(t)]` and covariance
//! `E[f_d(t) f_d'(t')] - E[f_d(t)] E[f_d'(t')]`, both of which reduce to Gaussian
//! product moments of the linear factors.
//!
//! Variants:
//! * `homogeneous`: every factor equals the same smoothed process `f_d`, so the
//!   moments are polynomials in `k_dd(t,t)`, `k_dd'(t,t')`, `k_d'd'(t',t')`.
//! * `separable`: every `(c, i)` factor has its own smoothing kernel.
//! * `icm` / `dgp`: first-order baselines with delta smoothers or a white-noise latent process.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sites, Dataset, Site};
use crate::error::{Error, Result};
use crate::kernels::{self, KernelParams, PairGrad, Smoother};
use crate::moments::{
    enumerate_moment_matrices, integer_from_log, pair_moment_coefficient, product_moment_unit,
    product_moment_with_grad, CovarianceTable, ExponentVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "homogeneous")]
    Homogeneous,
    #[serde(rename = "separable")]
    Separable,
    #[serde(rename = "icm")]
    Icm,
    #[serde(rename = "dgp")]
    Dgp,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Homogeneous => "homogeneous",
            Variant::Separable => "separable",
            Variant::Icm => "icm",
            Variant::Dgp => "dgp",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homogeneous" => Ok(Variant::Homogeneous),
            "separable" => Ok(Variant::Separable),
            "icm" => Ok(Variant::Icm),
            "dgp" => Ok(Variant::Dgp),
            other => Err(Error::InvalidSpec(format!(
                "unknown variant '{other}' (expected homogeneous, separable, icm or dgp)"
            ))),
        }
    }
}

/// Volterra order, variant, output count and input dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub order: u32,
    pub variant: Variant,
    pub outputs: usize,
    pub input_dim: usize,
}

impl ModelSpec {
    pub fn new(order: u32, variant: Variant, outputs: usize, input_dim: usize) -> Result<Self> {
        let spec = Self {
            order,
            variant,
            outputs,
            input_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidSpec("Volterra order must be at least 1".into()));
        }
        if matches!(self.variant, Variant::Icm | Variant::Dgp) && self.order != 1 {
            return Err(Error::InvalidSpec(format!(
                "the {} baseline is first order; got order {}",
                self.variant, self.order
            )));
        }
        if self.outputs == 0 || self.input_dim == 0 {
            return Err(Error::InvalidSpec(
                "need at least one output and one input dimension".into(),
            ));
        }
        Ok(())
    }

    /// Smoothing kernels per output: one, or `C (C + 1) / 2` for the separable variant.
    pub fn smoothers_per_output(&self) -> usize {
        match self.variant {
            Variant::Separable => (self.order * (self.order + 1) / 2) as usize,
            _ => 1,
        }
    }

    /// Index of the smoother for factor `i` (1-based) of degree `c` on output `d`.
    pub fn smoother_index(&self, d: usize, c: u32, i: u32) -> usize {
        match self.variant {
            Variant::Separable => d * self.smoothers_per_output() + (c * (c - 1) / 2 + (i - 1)) as usize,
            _ => d,
        }
    }

    /// Parameters of the right shape with unit sensitivities and length-scales.
    pub fn template_params(&self) -> KernelParams {
        let p = self.input_dim;
        let smoother_dims = if self.variant == Variant::Icm { 0 } else { p };
        let latent_dims = if self.variant == Variant::Dgp { 0 } else { p };
        KernelParams {
            smoothers: vec![Smoother::new(1.0, vec![1.0; smoother_dims]); self.outputs * self.smoothers_per_output()],
            latent_length_scales: vec![1.0; latent_dims],
            noise_variances: vec![0.1; self.outputs],
        }
    }

    /// Checks that `params` has the shape this spec expects.
    pub fn check_params(&self, params: &KernelParams) -> Result<()> {
        let template = self.template_params();
        let mismatch = |what: &str, expected: usize, got: usize| {
            Err(Error::InvalidParams(format!(
                "{what}: expected {expected}, got {got} for a {} model",
                self.variant
            )))
        };
        if params.smoothers.len() != template.smoothers.len() {
            return mismatch("smoothers", template.smoothers.len(), params.smoothers.len());
        }
        let dims = template.smoothers[0].length_scales.len();
        if let Some(s) = params.smoothers.iter().find(|s| s.length_scales.len() != dims) {
            return mismatch("smoother length-scales", dims, s.length_scales.len());
        }
        if params.latent_length_scales.len() != template.latent_length_scales.len() {
            return mismatch(
                "latent length-scales",
                template.latent_length_scales.len(),
                params.latent_length_scales.len(),
            );
        }
        if params.noise_variances.len() != self.outputs {
            return mismatch("noise variances", self.outputs, params.noise_variances.len());
        }
        params.validate()
    }
}

/// Offsets of each block in the packed parameter vector.
#[derive(Debug, Clone)]
pub struct Layout {
    smoothers: Vec<usize>,
    latent: usize,
    noise: usize,
    len: usize,
}

impl Layout {
    pub fn new(params: &KernelParams) -> Self {
        let smoothers = (0..params.smoothers.len()).map(|i| params.smoother_offset(i)).collect();
        Self {
            smoothers,
            latent: params.latent_offset(),
            noise: params.noise_offset(),
            len: params.packed_len(),
        }
    }

    pub fn smoother(&self, i: usize) -> usize {
        self.smoothers[i]
    }

    pub fn latent(&self) -> usize {
        self.latent
    }

    pub fn noise(&self, d: usize) -> usize {
        self.noise + d
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// `coef * k11^l11 * k12^l12 * k22^l22` in the homogeneous second moment.
#[derive(Debug, Clone, Copy)]
struct PairTerm {
    coef: f64,
    l11: i32,
    l12: i32,
    l22: i32,
}

/// Evaluates means, covariances and their gradients for one [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    pair_terms: Vec<PairTerm>,
    /// `(c / 2, c! / (2^{c/2} (c/2)!))` for even `c <= C`.
    mean_terms: Vec<(i32, f64)>,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let order = spec.order;
        let mut pair_terms = Vec::new();
        for c in 1..=order {
            for c2 in 1..=order {
                if (c + c2) % 2 == 1 {
                    continue;
                }
                let a = ExponentVector::new(vec![c, c2])?;
                for l in enumerate_moment_matrices(&a).iter() {
                    pair_terms.push(PairTerm {
                        coef: integer_from_log(pair_moment_coefficient(c, c2, l)?),
                        l11: l.get(0, 0) as i32,
                        l12: l.get(0, 1) as i32,
                        l22: l.get(1, 1) as i32,
                    });
                }
            }
        }
        let mean_terms = (2..=order)
            .step_by(2)
            .map(|c| {
                let half = c / 2;
                let log = crate::moments::ln_factorial(c)
                    - half as f64 * std::f64::consts::LN_2
                    - crate::moments::ln_factorial(half);
                (half as i32, integer_from_log(log))
            })
            .collect();
        Ok(Self {
            spec,
            pair_terms,
            mean_terms,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    // ----- first-order kernel between two smoothers --------------------------------

    fn base(&self, params: &KernelParams, a: usize, b: usize, x: &[f64], y: &[f64]) -> f64 {
        let (sa, sb) = (&params.smoothers[a], &params.smoothers[b]);
        match self.spec.variant {
            Variant::Homogeneous | Variant::Separable => kernels::conv_cov(sa, sb, &params.latent_length_scales, x, y),
            Variant::Dgp => kernels::white_cov(sa, sb, x, y),
            Variant::Icm => kernels::icm_cov_grad(sa, sb, &params.latent_length_scales, x, y).value,
        }
    }

    fn base_grad(&self, params: &KernelParams, a: usize, b: usize, x: &[f64], y: &[f64]) -> PairGrad {
        let (sa, sb) = (&params.smoothers[a], &params.smoothers[b]);
        match self.spec.variant {
            Variant::Homogeneous | Variant::Separable => {
                kernels::conv_cov_grad(sa, sb, &params.latent_length_scales, x, y)
            }
            Variant::Dgp => kernels::white_cov_grad(sa, sb, x, y),
            Variant::Icm => kernels::icm_cov_grad(sa, sb, &params.latent_length_scales, x, y),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn scatter_base(
        &self,
        params: &KernelParams,
        layout: &Layout,
        a: usize,
        b: usize,
        x: &[f64],
        y: &[f64],
        weight: f64,
        out: &mut [f64],
    ) {
        if weight == 0.0 {
            return;
        }
        let g = self.base_grad(params, a, b, x, y);
        g.scatter(weight, layout.smoother(a), layout.smoother(b), layout.latent(), out);
    }

    // ----- homogeneous polynomials ---------------------------------------------------

    /// `sum_{even c} m_c k^{c/2}` and its derivative in `k`.
    fn mean_poly(&self, k: f64) -> (f64, f64) {
        let mut value = 0.0;
        let mut deriv = 0.0;
        for &(half, coef) in &self.mean_terms {
            value += coef * k.powi(half);
            deriv += coef * half as f64 * k.powi(half - 1);
        }
        (value, deriv)
    }

    /// Second moment as a polynomial in `(k11, k12, k22)`, with partial derivatives.
    fn second_poly(&self, k11: f64, k12: f64, k22: f64) -> (f64, [f64; 3]) {
        let mut value = 0.0;
        let mut grad = [0.0; 3];
        for t in &self.pair_terms {
            let (p11, p12, p22) = (k11.powi(t.l11), k12.powi(t.l12), k22.powi(t.l22));
            value += t.coef * p11 * p12 * p22;
            if t.l11 > 0 {
                grad[0] += t.coef * t.l11 as f64 * k11.powi(t.l11 - 1) * p12 * p22;
            }
            if t.l12 > 0 {
                grad[1] += t.coef * t.l12 as f64 * p11 * k12.powi(t.l12 - 1) * p22;
            }
            if t.l22 > 0 {
                grad[2] += t.coef * t.l22 as f64 * p11 * p12 * k22.powi(t.l22 - 1);
            }
        }
        (value, grad)
    }

    // ----- separable tables -----------------------------------------------------------

    fn degree_table(&self, params: &KernelParams, d: usize, c: u32, x: &[f64]) -> CovarianceTable {
        let idx: Vec<usize> = (1..=c).map(|i| self.spec.smoother_index(d, c, i)).collect();
        CovarianceTable::from_fn(c as usize, |i, j| self.base(params, idx[i], idx[j], x, x))
    }

    /// Stacked factors of `prod_i f_d^{(c,i)}(x) prod_j f_d'^{(c',j)}(y)`.
    fn stacked<'a>(&self, d: usize, c: u32, x: &'a [f64], d2: usize, c2: u32, y: &'a [f64]) -> Vec<(usize, &'a [f64])> {
        (1..=c)
            .map(|i| (self.spec.smoother_index(d, c, i), x))
            .chain((1..=c2).map(|j| (self.spec.smoother_index(d2, c2, j), y)))
            .collect()
    }

    fn stacked_table(&self, params: &KernelParams, factors: &[(usize, &[f64])]) -> CovarianceTable {
        CovarianceTable::from_fn(factors.len(), |i, j| {
            self.base(params, factors[i].0, factors[j].0, factors[i].1, factors[j].1)
        })
    }

    fn separable_mean(&self, params: &KernelParams, d: usize, x: &[f64]) -> f64 {
        (2..=self.spec.order)
            .step_by(2)
            .map(|c| {
                product_moment_unit(c as usize, &self.degree_table(params, d, c, x))
                    .expect("table dimension matches degree")
            })
            .sum()
    }

    fn separable_second(&self, params: &KernelParams, d: usize, x: &[f64], d2: usize, y: &[f64]) -> f64 {
        let order = self.spec.order;
        let mut total = 0.0;
        for c in 1..=order {
            for c2 in 1..=order {
                if (c + c2) % 2 == 1 {
                    continue;
                }
                let factors = self.stacked(d, c, x, d2, c2, y);
                let table = self.stacked_table(params, &factors);
                total += product_moment_unit(factors.len(), &table).expect("table dimension matches");
            }
        }
        total
    }

    /// Adds `weight * d/dtheta E[prod factors]` and returns the moment.
    fn scatter_product(
        &self,
        params: &KernelParams,
        layout: &Layout,
        factors: &[(usize, &[f64])],
        weight: f64,
        out: &mut [f64],
    ) -> f64 {
        let table = self.stacked_table(params, factors);
        let a = ExponentVector::ones(factors.len()).expect("non-empty");
        let (value, grad) = product_moment_with_grad(&a, &table).expect("table dimension matches");
        for i in 0..factors.len() {
            for j in i..factors.len() {
                let g = grad.get(i, j);
                if g != 0.0 {
                    let (fi, fj) = (factors[i], factors[j]);
                    self.scatter_base(params, layout, fi.0, fj.0, fi.1, fj.1, weight * g, out);
                }
            }
        }
        value
    }

    // ----- public moments ---------------------------------------------------------------

    /// `E[f_d(x)]` under the Volterra model.
    pub fn mean(&self, params: &KernelParams, d: usize, x: &[f64]) -> f64 {
        match self.spec.variant {
            Variant::Separable => self.separable_mean(params, d, x),
            _ => {
                if self.mean_terms.is_empty() {
                    return 0.0;
                }
                self.mean_poly(self.base(params, d, d, x, x)).0
            }
        }
    }

    /// `E[f_d(x) f_d'(y)]`.
    pub fn second_moment(&self, params: &KernelParams, d: usize, x: &[f64], d2: usize, y: &[f64]) -> f64 {
        match self.spec.variant {
            Variant::Separable => self.separable_second(params, d, x, d2, y),
            _ => {
                let k12 = self.base(params, d, d2, x, y);
                if self.spec.order == 1 {
                    return self.second_poly(1.0, k12, 1.0).0;
                }
                let k11 = self.base(params, d, d, x, x);
                let k22 = self.base(params, d2, d2, y, y);
                self.second_poly(k11, k12, k22).0
            }
        }
    }

    /// `cov[f_d(x), f_d'(y)]` of the moment-matched GP.
    pub fn cov(&self, params: &KernelParams, d: usize, x: &[f64], d2: usize, y: &[f64]) -> f64 {
        self.second_moment(params, d, x, d2, y) - self.mean(params, d, x) * self.mean(params, d2, y)
    }

    /// Adds `weight * d mean / d theta` into `out`; returns the mean.
    pub fn mean_grad(
        &self,
        params: &KernelParams,
        layout: &Layout,
        d: usize,
        x: &[f64],
        weight: f64,
        out: &mut [f64],
    ) -> f64 {
        match self.spec.variant {
            Variant::Separable => {
                let mut total = 0.0;
                for c in (2..=self.spec.order).step_by(2) {
                    let factors = self.stacked(d, c, x, d, 0, x);
                    total += self.scatter_product(params, layout, &factors, weight, out);
                }
                total
            }
            _ => {
                if self.mean_terms.is_empty() {
                    return 0.0;
                }
                let k = self.base(params, d, d, x, x);
                let (value, deriv) = self.mean_poly(k);
                self.scatter_base(params, layout, d, d, x, x, weight * deriv, out);
                value
            }
        }
    }

    /// Adds `weight * d cov / d theta` into `out`; returns the covariance.
    #[allow(clippy::too_many_arguments)]
    pub fn cov_grad(
        &self,
        params: &KernelParams,
        layout: &Layout,
        d: usize,
        x: &[f64],
        d2: usize,
        y: &[f64],
        weight: f64,
        out: &mut [f64],
    ) -> f64 {
        match self.spec.variant {
            Variant::Separable => {
                let order = self.spec.order;
                let mut second = 0.0;
                for c in 1..=order {
                    for c2 in 1..=order {
                        if (c + c2) % 2 == 1 {
                            continue;
                        }
                        let factors = self.stacked(d, c, x, d2, c2, y);
                        second += self.scatter_product(params, layout, &factors, weight, out);
                    }
                }
                let m1 = self.separable_mean(params, d, x);
                let m2 = self.separable_mean(params, d2, y);
                self.mean_grad(params, layout, d, x, -weight * m2, out);
                self.mean_grad(params, layout, d2, y, -weight * m1, out);
                second - m1 * m2
            }
            _ => {
                let k12 = self.base(params, d, d2, x, y);
                if self.spec.order == 1 {
                    self.scatter_base(params, layout, d, d2, x, y, weight, out);
                    return self.second_poly(1.0, k12, 1.0).0;
                }
                let k11 = self.base(params, d, d, x, x);
                let k22 = self.base(params, d2, d2, y, y);
                let (second, g) = self.second_poly(k11, k12, k22);
                let (m1, dm1) = self.mean_poly(k11);
                let (m2, dm2) = self.mean_poly(k22);
                self.scatter_base(params, layout, d, d, x, x, weight * (g[0] - dm1 * m2), out);
                self.scatter_base(params, layout, d, d2, x, y, weight * g[1], out);
                self.scatter_base(params, layout, d2, d2, y, y, weight * (g[2] - m1 * dm2), out);
                second - m1 * m2
            }
        }
    }

    // ----- matrices ---------------------------------------------------------------------

    fn check_sites(&self, sites: &[Site<'_>]) -> Result<()> {
        for s in sites {
            if s.output >= self.spec.outputs {
                return Err(Error::InvalidOutput {
                    index: s.output,
                    outputs: self.spec.outputs,
                });
            }
            if s.x.len() != self.spec.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.spec.input_dim,
                    got: s.x.len(),
                });
            }
        }
        Ok(())
    }

    /// Stacked mean vector over `sites`.
    pub fn mean_vector(&self, params: &KernelParams, sites: &[Site<'_>]) -> Result<DVector<f64>> {
        self.spec.check_params(params)?;
        self.check_sites(sites)?;
        let values: Vec<f64> = sites.par_iter().map(|s| self.mean(params, s.output, s.x)).collect();
        if let Some((s, v)) = sites.iter().zip(&values).find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteMean {
                d: s.output,
                n: s.index,
                value: *v,
            });
        }
        Ok(DVector::from_vec(values))
    }

    /// Symmetric covariance over `sites`; only the upper triangle is evaluated.
    pub fn cov_matrix(&self, params: &KernelParams, sites: &[Site<'_>]) -> Result<DMatrix<f64>> {
        self.spec.check_params(params)?;
        self.check_sites(sites)?;
        let n = sites.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let a = &sites[i];
                (i..n)
                    .map(|j| self.cov(params, a.output, a.x, sites[j].output, sites[j].x))
                    .collect()
            })
            .collect();
        let mut k = DMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            for (off, &v) in row.iter().enumerate() {
                let j = i + off;
                if !v.is_finite() {
                    return Err(non_finite(&sites[i], &sites[j], v));
                }
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    /// Rectangular covariance `cov[f(rows), f(cols)]`.
    pub fn cross_cov_matrix(
        &self,
        params: &KernelParams,
        rows: &[Site<'_>],
        cols: &[Site<'_>],
    ) -> Result<DMatrix<f64>> {
        self.spec.check_params(params)?;
        self.check_sites(rows)?;
        self.check_sites(cols)?;
        let values: Vec<Vec<f64>> = rows
            .par_iter()
            .map(|a| {
                cols.iter()
                    .map(|b| self.cov(params, a.output, a.x, b.output, b.x))
                    .collect()
            })
            .collect();
        let mut k = DMatrix::zeros(rows.len(), cols.len());
        for (i, row) in values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(non_finite(&rows[i], &cols[j], v));
                }
                k[(i, j)] = v;
            }
        }
        Ok(k)
    }

    /// `sum_{n,m} cov_weights[n,m] dK_nm/dtheta + sum_n mean_weights[n] dmu_n/dtheta`
    /// over the packed kernel parameters. `cov_weights` must be symmetric.
    pub fn contract_grad(
        &self,
        params: &KernelParams,
        sites: &[Site<'_>],
        cov_weights: &DMatrix<f64>,
        mean_weights: &DVector<f64>,
    ) -> Result<Vec<f64>> {
        self.spec.check_params(params)?;
        self.check_sites(sites)?;
        let layout = Layout::new(params);
        let n = sites.len();
        let partials: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = vec![0.0; layout.len()];
                let a = &sites[i];
                for (j, b) in sites.iter().enumerate().skip(i) {
                    let w = if i == j {
                        cov_weights[(i, i)]
                    } else {
                        2.0 * cov_weights[(i, j)]
                    };
                    if w != 0.0 {
                        self.cov_grad(params, &layout, a.output, a.x, b.output, b.x, w, &mut g);
                    }
                }
                if mean_weights[i] != 0.0 {
                    self.mean_grad(params, &layout, a.output, a.x, mean_weights[i], &mut g);
                }
                g
            })
            .collect();
        let mut total = vec![0.0; layout.len()];
        for g in &partials {
            for (t, v) in total.iter_mut().zip(g) {
                *t += v;
            }
        }
        Ok(total)
    }
}

fn non_finite(a: &Site<'_>, b: &Site<'_>, value: f64) -> Error {
    Error::NonFinite {
        d: a.output,
        d_prime: b.output,
        n: a.index,
        m: b.index,
        value,
    }
}

// ----- free-standing operations ---------------------------------------------------------

fn infer_spec(order: u32, variant: Variant, params: &KernelParams) -> Result<ModelSpec> {
    let per_output = match variant {
        Variant::Separable => (order * (order + 1) / 2) as usize,
        _ => 1,
    };
    if per_output == 0 || !params.smoothers.len().is_multiple_of(per_output) {
        return Err(Error::InvalidParams(format!(
            "{} smoothers cannot be split into blocks of {per_output}",
            params.smoothers.len()
        )));
    }
    let input_dim = match variant {
        Variant::Dgp => params.smoothers.first().map_or(0, |s| s.length_scales.len()),
        _ => params.latent_length_scales.len(),
    };
    let spec = ModelSpec::new(order, variant, params.smoothers.len() / per_output, input_dim)?;
    spec.check_params(params)?;
    Ok(spec)
}

fn checked(model: &Model, outputs: &[usize], points: &[&[f64]]) -> Result<()> {
    for &d in outputs {
        if d >= model.spec.outputs {
            return Err(Error::InvalidOutput {
                index: d,
                outputs: model.spec.outputs,
            });
        }
    }
    for x in points {
        if x.len() != model.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: model.spec.input_dim,
                got: x.len(),
            });
        }
    }
    Ok(())
}

fn model_for(
    order: u32,
    variant: Variant,
    params: &KernelParams,
    outputs: &[usize],
    points: &[&[f64]],
) -> Result<Model> {
    let model = Model::new(infer_spec(order, variant, params)?)?;
    checked(&model, outputs, points)?;
    Ok(model)
}

/// `E[f_d(t)] = sum_{even c <= C} c! / (2^{c/2} (c/2)!) k_dd(t,t)^{c/2}`.
pub fn mean_homogeneous(d: usize, t: &[f64], order: u32, params: &KernelParams) -> Result<f64> {
    let model = model_for(order, Variant::Homogeneous, params, &[d], &[t])?;
    Ok(model.mean(params, d, t))
}

/// `E[f_d(t) f_d'(t')]` for homogeneous separable kernels.
pub fn second_moment_homogeneous(
    d: usize,
    d_prime: usize,
    t: &[f64],
    t_prime: &[f64],
    order: u32,
    params: &KernelParams,
) -> Result<f64> {
    let model = model_for(order, Variant::Homogeneous, params, &[d, d_prime], &[t, t_prime])?;
    Ok(model.second_moment(params, d, t, d_prime, t_prime))
}

pub fn cov_homogeneous(
    d: usize,
    d_prime: usize,
    t: &[f64],
    t_prime: &[f64],
    order: u32,
    params: &KernelParams,
) -> Result<f64> {
    let model = model_for(order, Variant::Homogeneous, params, &[d, d_prime], &[t, t_prime])?;
    Ok(model.cov(params, d, t, d_prime, t_prime))
}

/// Mean with independent `(c, i)` smoothers; `params.smoothers` holds
/// `C (C + 1) / 2` kernels per output, ordered by degree then factor.
pub fn mean_separable(d: usize, t: &[f64], order: u32, params: &KernelParams) -> Result<f64> {
    let model = model_for(order, Variant::Separable, params, &[d], &[t])?;
    Ok(model.mean(params, d, t))
}

pub fn cov_separable(
    d: usize,
    d_prime: usize,
    t: &[f64],
    t_prime: &[f64],
    order: u32,
    params: &KernelParams,
) -> Result<f64> {
    let model = model_for(order, Variant::Separable, params, &[d, d_prime], &[t, t_prime])?;
    Ok(model.cov(params, d, t, d_prime, t_prime))
}

/// Rank-one ICM: `a_d a_d' k(t, t')`, with `a_d` stored as the smoother sensitivity.
pub fn icm_cross_cov(d: usize, d_prime: usize, t: &[f64], t_prime: &[f64], params: &KernelParams) -> Result<f64> {
    let model = model_for(1, Variant::Icm, params, &[d, d_prime], &[t, t_prime])?;
    Ok(model.cov(params, d, t, d_prime, t_prime))
}

/// DGP: EQ smoothers convolved against a white-noise latent process.
pub fn dgp_cross_cov(d: usize, d_prime: usize, t: &[f64], t_prime: &[f64], params: &KernelParams) -> Result<f64> {
    let model = model_for(1, Variant::Dgp, params, &[d, d_prime], &[t, t_prime])?;
    Ok(model.cov(params, d, t, d_prime, t_prime))
}

/// Stacked mean vector and covariance matrix for every observation in `dataset`.
pub fn assemble(dataset: &Dataset, spec: &ModelSpec, params: &KernelParams) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if dataset.is_empty() {
        return Err(Error::EmptyData("cannot assemble an empty dataset".into()));
    }
    if dataset.num_outputs() != spec.outputs {
        return Err(Error::DimensionMismatch {
            expected: spec.outputs,
            got: dataset.num_outputs(),
        });
    }
    let model = Model::new(*spec)?;
    let s = sites(dataset.inputs());
    Ok((model.mean_vector(params, &s)?, model.cov_matrix(params, &s)?))
}
