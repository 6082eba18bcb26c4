//! The polynomial family `p_n` with
//! `sum_{k>=0} k^n lambda^k = lambda * p_{n-1}(lambda) / (1-lambda)^{n+1}`,
//! and the perturbation-distance bound built from it. The sum uses the
//! convention `0^0 = 1`, so the `n = 0` member is the full geometric
//! series; for `n >= 1` the `k = 0` term vanishes either way.
//!
//! The recursion differentiates the closed form once per degree:
//! `p_{n-1} = (p_{n-2} + lambda p_{n-2}')(1-lambda) + n lambda p_{n-2}`,
//! starting from `p_0 = 1`. Note the indexing: the polynomial paired with
//! the `n`-th power sum has degree `n-1`; [`series_polynomial`] takes the
//! power-sum index `n` and returns `p_{n-1}`. The distance bound for an
//! `n`-user network instead needs the degree-`n` member, i.e.
//! `series_polynomial(n + 1)`.

use crate::error::{Error, Result};

/// Coefficient-growth guard for [`power_series_sum`].
pub const MAX_SERIES_INDEX: usize = 20;

/// A polynomial with the coefficient of `lambda^k` at index `k`.
/// Members of this family have constant coefficient one and nonnegative
/// integer coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPolynomial {
    coeffs: Vec<f64>,
}

impl SeriesPolynomial {
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Horner evaluation.
    pub fn eval(&self, lambda: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * lambda + c)
    }
}

/// The polynomial `p_{n-1}` paired with the power sum `sum k^n lambda^k`,
/// for `n >= 1`.
pub fn series_polynomial(n: usize) -> Result<SeriesPolynomial> {
    if n == 0 {
        return Err(Error::Domain(
            "series polynomials start at power-sum index 1".into(),
        ));
    }
    let mut coeffs = vec![1.0];
    for step in 2..=n {
        coeffs = advance(&coeffs, step);
    }
    Ok(SeriesPolynomial { coeffs })
}

/// One recursion step: from `p_{step-2}` to `p_{step-1}` via
/// `(p + lambda p')(1 - lambda) + step * lambda * p`.
fn advance(p: &[f64], step: usize) -> Vec<f64> {
    let d = p.len();
    // q = p + lambda p': q_k = (k + 1) p_k.
    let q: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(k, &c)| (k as f64 + 1.0) * c)
        .collect();
    let mut out = vec![0.0; d + 1];
    for (k, &c) in q.iter().enumerate() {
        out[k] += c;
        out[k + 1] -= c;
    }
    for (k, &c) in p.iter().enumerate() {
        out[k + 1] += step as f64 * c;
    }
    out
}

/// The closed-form value of `sum_{k>=0} k^n lambda^k` for `lambda` in
/// `[0, 1)`; with `0^0 = 1`, the `n = 0` member is the geometric series
/// `1 / (1 - lambda)`.
///
/// `n` is capped at 20 because the integer coefficients grow factorially.
pub fn power_series_sum(n: usize, lambda: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::Domain(format!(
            "series converges only for lambda in [0, 1), got {lambda}"
        )));
    }
    if n > MAX_SERIES_INDEX {
        return Err(Error::Domain(format!(
            "power-sum index {n} exceeds the guard {MAX_SERIES_INDEX}"
        )));
    }
    if n == 0 {
        return Ok(1.0 / (1.0 - lambda));
    }
    let p = series_polynomial(n)?;
    Ok(lambda * p.eval(lambda) / (1.0 - lambda).powi(n as i32 + 1))
}

/// The distance bound between the trajectory-product consensus weights and
/// the stationary distribution of the limit matrix, up to an unknown
/// constant factor.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiDistanceBound {
    /// `z0_deviation * lambda1 * p_n(lambda1) / (1 - lambda1)^(n+1)`.
    pub value: f64,
    /// The bound holds only up to a constant the theory does not pin down;
    /// the reported value sets that constant to one.
    pub constant_unknown: bool,
}

/// Bound on `‖phi - phi_tilde‖_1` in terms of the network propagation
/// radius `lambda1`, the network size `n`, and `‖z(0) - 1‖_1`.
pub fn phi_distance_bound(lambda1: f64, n: usize, z0_deviation: f64) -> Result<PhiDistanceBound> {
    if !(0.0..1.0).contains(&lambda1) {
        return Err(Error::Domain(format!(
            "the bound needs lambda1 in [0, 1), got {lambda1}"
        )));
    }
    if n == 0 || n > 150 {
        return Err(Error::Domain(format!(
            "network size {n} outside the supported range 1..=150"
        )));
    }
    if z0_deviation < 0.0 {
        return Err(Error::Domain("deviation norm must be nonnegative".into()));
    }
    let p = series_polynomial(n + 1)?;
    let value = z0_deviation * lambda1 * p.eval(lambda1) / (1.0 - lambda1).powi(n as i32 + 1);
    Ok(PhiDistanceBound {
        value,
        constant_unknown: true,
    })
}
