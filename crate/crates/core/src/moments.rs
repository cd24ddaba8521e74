//! Product moments of zero-mean jointly Gaussian variables.
//!
//! For Gaussian variables `X_1..X_c` with covariances `phi_ij`, the moment
//! `E[prod_k X_k^{a_k}]` is a sum over the set `T_a` of symmetric non-negative
//! integer matrices `L` whose rows satisfy
//!
//! ```text
//! a_k = 2 l_kk + sum_{j != k} l_jk        for every k
//! ```
//!
//! Each `L` contributes `prod_k a_k! / (2^{tr L} prod_{i<=j} l_ij!) * prod_{i<=j} phi_ij^{l_ij}`.
//! When every exponent is one this reduces to the sum over perfect pairings
//! (Isserlis / Wick).
//!
//! Coefficients are evaluated in log-gamma space, so large orders do not overflow
//! before the final exponentiation.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, RwLock};

use crate::error::{Error, Result};

/// Exponents `a_k` of the Gaussian variables in a product moment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExponentVector {
    exponents: Vec<u32>,
    total: u32,
}

impl ExponentVector {
    pub fn new(exponents: Vec<u32>) -> Result<Self> {
        if exponents.is_empty() {
            return Err(Error::InvalidSpec("exponent vector must be non-empty".into()));
        }
        let total = exponents.iter().sum();
        Ok(Self { exponents, total })
    }

    /// All-ones exponent vector of length `c`.
    pub fn ones(c: usize) -> Result<Self> {
        Self::new(vec![1; c])
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.exponents
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Sum of the exponents.
    pub fn total(&self) -> u32 {
        self.total
    }
}

#[inline]
fn upper_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // rows before i hold dim, dim - 1, .., dim - i + 1 entries
    i * dim - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Symmetric non-negative integer matrix stored as its row-major upper triangle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MomentMatrix {
    dim: usize,
    upper: Vec<u32>,
}

impl MomentMatrix {
    /// Builds a matrix from its row-major upper triangle `(l_00, l_01, .., l_0c, l_11, ..)`.
    pub fn from_upper(dim: usize, upper: Vec<u32>) -> Result<Self> {
        let expected = dim * (dim + 1) / 2;
        if upper.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: upper.len(),
            });
        }
        Ok(Self { dim, upper })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.upper[upper_index(self.dim, i, j)]
    }

    /// Row-major upper triangle, diagonal included.
    pub fn upper(&self) -> &[u32] {
        &self.upper
    }

    pub fn trace(&self) -> u32 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Dense `dim x dim` copy.
    pub fn to_dense(&self) -> Vec<Vec<u32>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// True when `a_k - l_kk - sum_j l_jk == 0` for every row.
    pub fn satisfies(&self, a: &ExponentVector) -> bool {
        a.len() == self.dim
            && (0..self.dim).all(|k| {
                let row: u32 = (0..self.dim).map(|j| self.get(j, k)).sum();
                a.as_slice()[k] == row + self.get(k, k)
            })
    }

    /// `ln( prod_k a_k! / (2^{tr L} prod_{i<=j} l_ij!) )`.
    fn log_coefficient(&self, log_numerator: f64) -> f64 {
        let log_denominator: f64 = self.upper.iter().map(|&l| ln_factorial(l)).sum();
        log_numerator - self.trace() as f64 * std::f64::consts::LN_2 - log_denominator
    }

    /// `prod_{i<=j} phi_ij^{l_ij}`.
    fn monomial(&self, phi: &CovarianceTable) -> f64 {
        self.upper
            .iter()
            .zip(phi.upper.iter())
            .filter(|(&l, _)| l > 0)
            .map(|(&l, &p)| p.powi(l as i32))
            .product()
    }
}

/// Symmetric covariance table `phi_ij` of the Gaussian variables.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTable {
    dim: usize,
    upper: Vec<f64>,
}

impl CovarianceTable {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            upper: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    /// Fills the table from `f(i, j)` evaluated for `i <= j`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut upper = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in i..dim {
                upper.push(f(i, j));
            }
        }
        Self { dim, upper }
    }

    /// Builds a table from dense rows, rejecting asymmetric input or negative variances.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row[i] < 0.0 {
                return Err(Error::InvalidParams(format!("negative variance at ({i}, {i})")));
            }
            for j in 0..i {
                let scale = row[j].abs().max(rows[j][i].abs()).max(f64::MIN_POSITIVE);
                if (row[j] - rows[j][i]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParams(format!("asymmetric entry at ({i}, {j})")));
                }
            }
        }
        Ok(Self::from_fn(dim, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[upper_index(self.dim, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let idx = upper_index(self.dim, i, j);
        self.upper[idx] = value;
    }

    /// Row-major upper triangle, diagonal included.
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
}

/// `ln(n!)` via the log-gamma function.
pub fn ln_factorial(n: u32) -> f64 {
    if n < 2 {
        0.0
    } else {
        libm::lgamma(n as f64 + 1.0)
    }
}

/// Exponentiates a log-coefficient known to be a non-negative integer,
/// snapping to the nearest integer while that is exactly representable.
#[inline]
pub(crate) fn integer_from_log(log_value: f64) -> f64 {
    let v = log_value.exp();
    if v < 4.5e15 {
        v.round()
    } else {
        v
    }
}

type Cache = RwLock<HashMap<Vec<u32>, Arc<[MomentMatrix]>>>;

static MOMENT_SETS: LazyLock<Cache> = LazyLock::new(|| RwLock::new(HashMap::new()));

/// Returns `T_a` in lexicographic order of the flattened upper triangle.
///
/// Results are cached per exponent vector; the cache is shared across threads.
pub fn enumerate_moment_matrices(a: &ExponentVector) -> Arc<[MomentMatrix]> {
    if let Some(hit) = MOMENT_SETS.read().expect("moment cache poisoned").get(a.as_slice()) {
        return Arc::clone(hit);
    }
    let set: Arc<[MomentMatrix]> = enumerate_uncached(a.as_slice()).into();
    MOMENT_SETS
        .write()
        .expect("moment cache poisoned")
        .entry(a.as_slice().to_vec())
        .or_insert(set)
        .clone()
}

fn enumerate_uncached(a: &[u32]) -> Vec<MomentMatrix> {
    let dim = a.len();
    let mut out = Vec::new();
    if a.iter().sum::<u32>() % 2 == 1 {
        return out;
    }
    let mut remaining = a.to_vec();
    let mut upper = vec![0u32; dim * (dim + 1) / 2];
    backtrack(dim, 0, 0, 0, &mut remaining, &mut upper, &mut out);
    out
}

// Walks the upper triangle in row-major order, trying values in ascending order
// so that solutions come out lexicographically sorted.
fn backtrack(
    dim: usize,
    row: usize,
    col: usize,
    pos: usize,
    remaining: &mut [u32],
    upper: &mut [u32],
    out: &mut Vec<MomentMatrix>,
) {
    if row == dim {
        out.push(MomentMatrix {
            dim,
            upper: upper.to_vec(),
        });
        return;
    }
    let (next_row, next_col) = if col + 1 == dim {
        (row + 1, row + 1)
    } else {
        (row, col + 1)
    };
    let closes_row = col + 1 == dim;

    if col == row {
        for v in 0..=remaining[row] / 2 {
            remaining[row] -= 2 * v;
            if !closes_row || remaining[row] == 0 {
                upper[pos] = v;
                backtrack(dim, next_row, next_col, pos + 1, remaining, upper, out);
            }
            remaining[row] += 2 * v;
        }
    } else {
        let max = remaining[row].min(remaining[col]);
        // the last entry of a row is forced
        let range = if closes_row {
            if remaining[row] > max {
                return;
            }
            remaining[row]..=remaining[row]
        } else {
            0..=max
        };
        for v in range {
            remaining[row] -= v;
            remaining[col] -= v;
            upper[pos] = v;
            backtrack(dim, next_row, next_col, pos + 1, remaining, upper, out);
            remaining[row] += v;
            remaining[col] += v;
        }
    }
    upper[pos] = 0;
}

fn check_dim(a: &ExponentVector, phi: &CovarianceTable) -> Result<()> {
    if a.len() != phi.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: phi.dim(),
        });
    }
    Ok(())
}

fn log_numerator(a: &ExponentVector) -> f64 {
    a.as_slice().iter().map(|&k| ln_factorial(k)).sum()
}

/// `E[prod_k X_k^{a_k}]` for zero-mean Gaussians with covariance table `phi`.
///
/// Returns exactly `0.0` when the total exponent is odd.
pub fn product_moment(a: &ExponentVector, phi: &CovarianceTable) -> Result<f64> {
    check_dim(a, phi)?;
    if a.total() % 2 == 1 {
        return Ok(0.0);
    }
    let log_num = log_numerator(a);
    Ok(enumerate_moment_matrices(a)
        .iter()
        .map(|l| integer_from_log(l.log_coefficient(log_num)) * l.monomial(phi))
        .sum())
}

/// `E[X_1 X_2 .. X_c]`: the sum over perfect pairings of products of `phi_ij`.
pub fn product_moment_unit(c: usize, phi: &CovarianceTable) -> Result<f64> {
    let a = ExponentVector::ones(c)?;
    check_dim(&a, phi)?;
    if c % 2 == 1 {
        return Ok(0.0);
    }
    Ok(enumerate_moment_matrices(&a).iter().map(|l| l.monomial(phi)).sum())
}

/// Value and gradient `d/d phi_ij` (upper triangle) of [`product_moment`].
pub fn product_moment_with_grad(a: &ExponentVector, phi: &CovarianceTable) -> Result<(f64, CovarianceTable)> {
    check_dim(a, phi)?;
    let mut grad = CovarianceTable::zeros(phi.dim());
    if a.total() % 2 == 1 {
        return Ok((0.0, grad));
    }
    let log_num = log_numerator(a);
    let mut value = 0.0;
    for l in enumerate_moment_matrices(a).iter() {
        let coef = integer_from_log(l.log_coefficient(log_num));
        value += coef * l.monomial(phi);
        for (idx, &lij) in l.upper.iter().enumerate() {
            if lij == 0 {
                continue;
            }
            let mut partial = coef * lij as f64 * phi.upper[idx].powi(lij as i32 - 1);
            for (other, &lkm) in l.upper.iter().enumerate() {
                if other != idx && lkm > 0 {
                    partial *= phi.upper[other].powi(lkm as i32);
                }
            }
            grad.upper[idx] += partial;
        }
    }
    Ok((value, grad))
}

/// `ln A_{c,c',L}` with `A = c! c'! / (2^{l11 + l22} l11! l12! l22!)`, for a 2x2 `L`
/// satisfying `2 l11 + l12 = c` and `l12 + 2 l22 = c'`.
pub fn pair_moment_coefficient(c: u32, c_prime: u32, l: &MomentMatrix) -> Result<f64> {
    if l.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: l.dim(),
        });
    }
    let (l11, l12, l22) = (l.get(0, 0), l.get(0, 1), l.get(1, 1));
    if 2 * l11 + l12 != c || l12 + 2 * l22 != c_prime {
        return Err(Error::ConstraintViolation(format!(
            "(l11, l12, l22) = ({l11}, {l12}, {l22}) does not solve c = {c}, c' = {c_prime}"
        )));
    }
    Ok(ln_factorial(c) + ln_factorial(c_prime)
        - (l11 + l22) as f64 * std::f64::consts::LN_2
        - ln_factorial(l11)
        - ln_factorial(l12)
        - ln_factorial(l22))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(a: &[u32]) -> ExponentVector {
        ExponentVector::new(a.to_vec()).unwrap()
    }

    /// Exhaustive search over every symmetric matrix with entries bounded by the exponents.
    fn brute_force(a: &[u32]) -> Vec<Vec<u32>> {
        let dim = a.len();
        let len = dim * (dim + 1) / 2;
        let bound = *a.iter().max().unwrap();
        let mut found = Vec::new();
        let mut digits = vec![0u32; len];
        loop {
            let m = MomentMatrix::from_upper(dim, digits.clone()).unwrap();
            if m.satisfies(&ev(a)) {
                found.push(digits.clone());
            }
            let mut k = len;
            loop {
                if k == 0 {
                    found.sort();
                    return found;
                }
                k -= 1;
                if digits[k] < bound {
                    digits[k] += 1;
                    break;
                }
                digits[k] = 0;
            }
        }
    }

    #[test]
    fn upper_index_is_row_major() {
        let mut expected = 0;
        for i in 0..5 {
            for j in i..5 {
                assert_eq!(upper_index(5, i, j), expected);
                assert_eq!(upper_index(5, j, i), expected);
                expected += 1;
            }
        }
    }

    #[test]
    fn four_unit_exponents_give_three_pairings() {
        let set = enumerate_moment_matrices(&ev(&[1, 1, 1, 1]));
        let dense: Vec<_> = set.iter().map(|m| m.to_dense()).collect();
        let pairing = |p: (usize, usize), q: (usize, usize)| {
            let mut m = vec![vec![0u32; 4]; 4];
            for (i, j) in [p, q] {
                m[i][j] = 1;
                m[j][i] = 1;
            }
            m
        };
        assert_eq!(dense.len(), 3);
        for m in [
            pairing((0, 1), (2, 3)),
            pairing((0, 2), (1, 3)),
            pairing((0, 3), (1, 2)),
        ] {
            assert!(dense.contains(&m));
        }
    }

    #[test]
    fn three_three_has_two_solutions() {
        let set = enumerate_moment_matrices(&ev(&[3, 3]));
        let upper: Vec<_> = set.iter().map(|m| m.upper().to_vec()).collect();
        assert_eq!(upper, vec![vec![0, 3, 0], vec![1, 1, 1]]);
    }

    #[test]
    fn odd_total_is_empty_and_zero() {
        assert!(enumerate_moment_matrices(&ev(&[1, 1, 1])).is_empty());
        let phi = CovarianceTable::from_fn(3, |_, _| 0.7);
        assert_eq!(product_moment(&ev(&[1, 1, 1]), &phi).unwrap(), 0.0);
        assert_eq!(product_moment(&ev(&[2, 0, 3]), &phi).unwrap(), 0.0);
    }

    #[test]
    fn six_unit_exponents_match_brute_force() {
        let set = enumerate_moment_matrices(&ev(&[1; 6]));
        let got: Vec<_> = set.iter().map(|m| m.upper().to_vec()).collect();
        let expected = brute_force(&[1; 6]);
        assert_eq!(expected.len(), 15);
        assert_eq!(got, expected);
    }

    #[test]
    fn enumeration_matches_brute_force_on_mixed_exponents() {
        for a in [
            vec![2, 2],
            vec![3, 1],
            vec![2, 1, 1],
            vec![2, 2, 2],
            vec![3, 2, 1],
            vec![0, 2, 2],
            vec![3, 3],
            vec![4],
        ] {
            let got: Vec<_> = enumerate_moment_matrices(&ev(&a))
                .iter()
                .map(|m| m.upper().to_vec())
                .collect();
            assert_eq!(got, brute_force(&a), "a = {a:?}");
        }
    }

    #[test]
    fn scalar_moments() {
        let phi = CovarianceTable::from_fn(1, |_, _| 1.7);
        assert_eq!(product_moment(&ev(&[2]), &phi).unwrap(), 1.7);
        let v4 = product_moment(&ev(&[4]), &phi).unwrap();
        assert!((v4 - 3.0 * 1.7 * 1.7).abs() < 1e-14);
        let v6 = product_moment(&ev(&[6]), &phi).unwrap();
        assert!((v6 - 15.0 * 1.7f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn unit_moment_four() {
        let phi = CovarianceTable::from_fn(4, |i, j| if i == j { 1.0 } else { (i + 2 * j) as f64 * 0.1 });
        let expected = phi.get(0, 1) * phi.get(2, 3) + phi.get(0, 2) * phi.get(1, 3) + phi.get(0, 3) * phi.get(1, 2);
        let got = product_moment_unit(4, &phi).unwrap();
        assert!((got - expected).abs() < 1e-15);
        let phi2 = CovarianceTable::from_fn(2, |i, j| if i == j { 2.0 } else { 0.3 });
        assert_eq!(product_moment_unit(2, &phi2).unwrap(), 0.3);
        let phi3 = CovarianceTable::from_fn(3, |_, _| 1.0);
        assert_eq!(product_moment_unit(3, &phi3).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let phi = CovarianceTable::zeros(3);
        assert!(matches!(
            product_moment(&ev(&[1, 1]), &phi),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(product_moment_unit(2, &phi).is_err());
        assert!(ExponentVector::new(vec![]).is_err());
    }

    #[test]
    fn pair_coefficients() {
        let m = |u: [u32; 3]| MomentMatrix::from_upper(2, u.to_vec()).unwrap();
        assert!((pair_moment_coefficient(3, 3, &m([0, 3, 0])).unwrap().exp() - 6.0).abs() < 1e-12);
        assert!((pair_moment_coefficient(3, 3, &m([1, 1, 1])).unwrap().exp() - 9.0).abs() < 1e-12);
        assert_eq!(pair_moment_coefficient(1, 1, &m([0, 1, 0])).unwrap(), 0.0);
        assert!(matches!(
            pair_moment_coefficient(3, 3, &m([1, 1, 0])),
            Err(Error::ConstraintViolation(_))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = ev(&[2, 3, 1]);
        let phi =
            CovarianceTable::from_rows(&[vec![1.2, 0.4, -0.3], vec![0.4, 0.9, 0.2], vec![-0.3, 0.2, 1.5]]).unwrap();
        let (value, grad) = product_moment_with_grad(&a, &phi).unwrap();
        assert_eq!(value, product_moment(&a, &phi).unwrap());
        for i in 0..3 {
            for j in i..3 {
                let h = 1e-6;
                let mut plus = phi.clone();
                plus.set(i, j, phi.get(i, j) + h);
                let mut minus = phi.clone();
                minus.set(i, j, phi.get(i, j) - h);
                let fd = (product_moment(&a, &plus).unwrap() - product_moment(&a, &minus).unwrap()) / (2.0 * h);
                assert!(
                    (fd - grad.get(i, j)).abs() < 1e-7,
                    "({i},{j}) {fd} vs {}",
                    grad.get(i, j)
                );
            }
        }
    }

    #[test]
    fn asymmetric_rows_rejected() {
        assert!(CovarianceTable::from_rows(&[vec![1.0, 0.2], vec![0.3, 1.0]]).is_err());
        assert!(CovarianceTable::from_rows(&[vec![-1.0]]).is_err());
    }
}
