//! Spectral quantities: dominant-eigenvalue magnitude, subdominant magnitude,
//! stationary distributions of row-stochastic matrices, and the decay of
//! matrix power norms.
//!
//! The primary route for the spectral radius is power iteration with a
//! Rayleigh-quotient stopping rule; matrices it cannot settle (complex or
//! tied dominant pairs) fall through to a dense Schur-based eigensolver.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::RowStochasticMatrix;

/// Iteration cap shared by power methods in this module.
pub const MAX_ITERATIONS: usize = 100_000;

/// Relative-change threshold for the Rayleigh-quotient stopping rule.
pub const POWER_TOL: f64 = 1e-12;

/// Residual bound for stationary distributions.
pub const STATIONARY_RESIDUAL: f64 = 1e-10;

/// Magnitude of the dominant eigenvalue of a square matrix.
///
/// Runs power iteration from a deterministic positive start vector. When the
/// Rayleigh quotient fails to settle within the iteration budget (the
/// dominant eigenvalue is complex, or a tie), the dense eigensolver decides.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    check_square(m)?;
    let n = m.nrows();
    if n == 1 {
        return Ok(m[(0, 0)].abs());
    }
    if m.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    match power_iteration(m) {
        Some(rho) => Ok(rho),
        None => Ok(dense_radius(m)?),
    }
}

fn power_iteration(m: &DMatrix<f64>) -> Option<f64> {
    let n = m.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7079_7261);
    let mut x = DVector::from_fn(n, |_, _| 0.5 + rng.random::<f64>());
    x /= x.norm();
    let mut prev = f64::NAN;
    for _ in 0..MAX_ITERATIONS {
        let y = m * &x;
        let norm = y.norm();
        if !norm.is_finite() || norm < 1e-290 {
            // The iterate died or blew up; let the dense route decide.
            return None;
        }
        x = y / norm;
        let image = m * &x;
        let rq = x.dot(&image);
        if prev.is_finite() {
            let scale = rq.abs().max(1e-300);
            if (rq - prev).abs() <= POWER_TOL * scale {
                // A stagnant Rayleigh quotient is not proof of convergence
                // (it is exactly constant for a rotation); accept only once
                // the iterate is actually close to an eigenvector.
                let residual = (&image - &x * rq).norm();
                if residual <= 1e-10 * (1.0 + rq.abs()) {
                    return Some(rq.abs());
                }
            }
        }
        prev = rq;
    }
    None
}

/// Eigenvalue magnitudes from the dense Schur-based solver, sorted
/// descending. Serves as the fallback inside [`spectral_radius`] and as the
/// source for subdominant magnitudes.
pub fn eigenvalue_magnitudes(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_square(m)?;
    let eig = m.clone().complex_eigenvalues();
    let mut mags: Vec<f64> = eig.iter().map(|c| c.norm()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).expect("eigenvalue magnitudes are finite"));
    Ok(mags)
}

fn dense_radius(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalue_magnitudes(m)?[0])
}

/// Largest magnitude among the eigenvalues after removing one instance of
/// the dominant one. Ties are broken by magnitude only, so an eigenvalue
/// equal in magnitude to the dominant one is itself the answer.
pub fn subdominant_magnitude(m: &DMatrix<f64>) -> Result<f64> {
    let mags = eigenvalue_magnitudes(m)?;
    if mags.len() < 2 {
        return Err(Error::Domain(
            "subdominant eigenvalue needs a matrix of size at least 2".into(),
        ));
    }
    Ok(mags[1])
}

/// The unique left eigenvector of a row-stochastic matrix at eigenvalue one,
/// normalized to sum one.
///
/// Solves the singular system directly with one row replaced by the
/// normalization constraint, then enforces the residual bound
/// `‖phi^T P - phi^T‖_1 <= 1e-10`, refining by transpose iteration if the
/// solve alone is not accurate enough. Fails with `NotUnique` when the
/// dominant eigenvalue is not simple (in magnitude) within `1e-9`.
pub fn stationary_distribution(p: &RowStochasticMatrix) -> Result<DVector<f64>> {
    let n = p.n();
    if n == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let mags = eigenvalue_magnitudes(p.matrix())?;
    if mags[1] >= 1.0 - 1e-9 {
        return Err(Error::NotUnique);
    }

    // (I - P^T) phi = 0 with the last equation replaced by sum(phi) = 1.
    let mut a = DMatrix::identity(n, n) - p.matrix().transpose();
    for w in 0..n {
        a[(n - 1, w)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let mut phi = match a.lu().solve(&b) {
        Some(x) => x,
        None => DVector::from_element(n, 1.0 / n as f64),
    };
    sanitize_distribution(&mut phi);

    if stationary_residual(p, &phi) <= STATIONARY_RESIDUAL {
        return Ok(phi);
    }
    let pt = p.matrix().transpose();
    for _ in 0..MAX_ITERATIONS {
        phi = &pt * &phi;
        sanitize_distribution(&mut phi);
        if stationary_residual(p, &phi) <= STATIONARY_RESIDUAL {
            return Ok(phi);
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
    })
}

fn stationary_residual(p: &RowStochasticMatrix, phi: &DVector<f64>) -> f64 {
    let image = p.matrix().transpose() * phi;
    (image - phi).abs().sum()
}

fn sanitize_distribution(phi: &mut DVector<f64>) {
    for x in phi.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s = phi.sum();
    if s > 0.0 {
        *phi /= s;
    }
}

/// Infinity norms of `M^k` for `k = 1..=k_max`, computed by repeated
/// multiplication. Stops with `Overflow` if an entry leaves the finite
/// range, reporting the last `k` whose norm was finite.
pub fn power_norm_decay(m: &DMatrix<f64>, k_max: usize) -> Result<Vec<f64>> {
    check_square(m)?;
    if k_max == 0 {
        return Err(Error::Domain("k_max must be at least 1".into()));
    }
    let mut norms = Vec::with_capacity(k_max);
    let mut power = m.clone();
    for k in 1..=k_max {
        let norm = infinity_norm(&power);
        if !norm.is_finite() {
            return Err(Error::Overflow { k_reached: k - 1 });
        }
        norms.push(norm);
        if k < k_max {
            power = &power * m;
        }
    }
    Ok(norms)
}

/// Maximum absolute row sum.
pub fn infinity_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|v| m.row(v).iter().map(|x| x.abs()).sum())
        .fold(0.0f64, f64::max)
}

/// Least-squares slope of `ln norms[k]` against `k` over the tail half of
/// the sequence. Entries that are zero or non-finite are skipped; returns
/// `None` when fewer than two usable points remain.
pub fn decay_slope(norms: &[f64]) -> Option<f64> {
    let start = norms.len() / 2;
    let points: Vec<(f64, f64)> = norms
        .iter()
        .enumerate()
        .skip(start)
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(i, &v)| ((i + 1) as f64, v.ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::Domain("matrix must have at least one row".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diagonal_matrix_radius_is_largest_magnitude() {
        let m = DMatrix::from_row_slice(3, 3, &[0.3, 0.0, 0.0, 0.0, -0.9, 0.0, 0.0, 0.0, 0.5]);
        assert_relative_eq!(spectral_radius(&m).unwrap(), 0.9, max_relative = 1e-10);
    }

    #[test]
    fn stochastic_matrix_radius_is_one() {
        let p = RowStochasticMatrix::erdos_renyi(12, 0.3, 5).unwrap();
        assert_relative_eq!(
            spectral_radius(p.matrix()).unwrap(),
            1.0,
            max_relative = 1e-10
        );
    }

    #[test]
    fn rotation_matrix_falls_back_to_dense_route() {
        // Dominant pair is complex; the Rayleigh quotient cannot settle.
        let (c, s) = (0.6f64, 0.8f64);
        let m = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        assert_relative_eq!(spectral_radius(&m).unwrap(), 1.0, max_relative = 1e-8);
    }

    #[test]
    fn nilpotent_matrix_has_zero_radius() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_relative_eq!(spectral_radius(&m).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn power_route_matches_dense_oracle_on_random_nonnegative_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..25 {
            let n = 2 + (rng.random::<u32>() % 7) as usize;
            let m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
            let via_power = spectral_radius(&m).unwrap();
            let via_dense = eigenvalue_magnitudes(&m).unwrap()[0];
            assert_relative_eq!(via_power, via_dense, max_relative = 1e-8);
        }
    }

    #[test]
    fn subdominant_magnitude_skips_one_dominant_instance() {
        let m = DMatrix::from_row_slice(3, 3, &[0.9, 0.0, 0.0, 0.0, 0.9, 0.0, 0.0, 0.0, 0.2]);
        // Two eigenvalues tie at 0.9: removing one instance leaves 0.9.
        assert_relative_eq!(subdominant_magnitude(&m).unwrap(), 0.9, epsilon = 1e-12);
    }

    #[test]
    fn stationary_distribution_matches_matrix_power_oracle() {
        let p = RowStochasticMatrix::from_rows(&[
            vec![0.5, 0.5, 0.0],
            vec![0.2, 0.3, 0.5],
            vec![0.4, 0.0, 0.6],
        ])
        .unwrap();
        let phi = stationary_distribution(&p).unwrap();
        // Oracle: a long matrix power applied to an arbitrary start row.
        let mut row = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        let pt = p.matrix().transpose();
        for _ in 0..10_000 {
            row = &pt * &row;
        }
        for v in 0..3 {
            assert_relative_eq!(phi[v], row[v], epsilon = 1e-10);
        }
        assert_relative_eq!(phi.sum(), 1.0, epsilon = 1e-12);
        assert!(stationary_residual(&p, &phi) <= STATIONARY_RESIDUAL);
    }

    #[test]
    fn identity_has_no_unique_stationary_distribution() {
        let p = RowStochasticMatrix::identity(2).unwrap();
        assert_eq!(stationary_distribution(&p), Err(Error::NotUnique));
    }

    #[test]
    fn power_norms_decay_at_the_spectral_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let raw = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
        let target = 0.8;
        let m = raw.clone() * (target / spectral_radius(&raw).unwrap());
        let norms = power_norm_decay(&m, 400).unwrap();
        let slope = decay_slope(&norms).unwrap();
        let expect = target.ln();
        assert!(
            ((slope - expect) / expect).abs() < 0.02,
            "slope {slope} vs ln rho {expect}"
        );
    }

    #[test]
    fn power_norms_overflow_reports_last_finite_k() {
        let m = DMatrix::from_row_slice(1, 1, &[1e308]);
        match power_norm_decay(&m, 10) {
            Err(Error::Overflow { k_reached }) => assert_eq!(k_reached, 1),
            other => panic!("expected overflow, got {other:?}"),
        }
    }
}
