//! Model state and the one-step update law.
//!
//! Each of `m` influencers holds an attention column over `n` users. A user
//! splits its next attention for influencer `i` between three sources with
//! per-user weights `alpha` (neighbors, through a row-stochastic matrix),
//! `beta` (the current popularity index), and `gamma` (the influencer's
//! intrinsic quality):
//!
//! ```text
//! x_v(t+1) = alpha_v * (P x(t))_v + beta_v * pi(t) + gamma_v * q
//! ```
//!
//! applied per influencer, where `pi(t)` is that influencer's share of total
//! attention. The weights satisfy `alpha_v + beta_v + gamma_v = 1`, so the
//! update is a convex combination and the unit box is invariant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::RowStochasticMatrix;

/// A weight vector counts as identically zero when every component is below
/// this cutoff; regime dispatch and hypothesis checks use it.
pub const ZERO_CUTOFF: f64 = 1e-12;

/// Per-row weight triples must sum to one within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Per-user convex weights `(alpha, beta, gamma)`, one triple per user.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    alpha: DVector<f64>,
    beta: DVector<f64>,
    gamma: DVector<f64>,
}

impl ModelParams {
    /// Validates entry ranges and the per-row simplex constraint.
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let n = alpha.len();
        if n == 0 {
            return Err(Error::Domain("weights need at least one user".into()));
        }
        if beta.len() != n || gamma.len() != n {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "alpha has {n} entries, beta {}, gamma {}",
                    beta.len(),
                    gamma.len()
                ),
            });
        }
        for v in 0..n {
            for (name, x) in [("alpha", alpha[v]), ("beta", beta[v]), ("gamma", gamma[v])] {
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::Domain(format!(
                        "{name}[{v}] = {x} lies outside [0, 1]"
                    )));
                }
            }
            let s = alpha[v] + beta[v] + gamma[v];
            if (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::Domain(format!(
                    "weights for user {v} sum to {s}, expected 1"
                )));
            }
        }
        Ok(Self {
            alpha: DVector::from_vec(alpha),
            beta: DVector::from_vec(beta),
            gamma: DVector::from_vec(gamma),
        })
    }

    /// The same `(alpha, beta, gamma)` triple for every one of `n` users.
    pub fn uniform(n: usize, alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        Self::new(vec![alpha; n], vec![beta; n], vec![gamma; n])
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn gamma(&self) -> &DVector<f64> {
        &self.gamma
    }

    pub fn mean_beta(&self) -> f64 {
        self.beta.sum() / self.n() as f64
    }

    /// The network propagation matrix `diag(alpha) * P`.
    pub fn ap(&self, p: &RowStochasticMatrix) -> Result<DMatrix<f64>> {
        if p.n() != self.n() {
            return Err(Error::DimensionMismatch {
                context: format!("{} users but a {}-node matrix", self.n(), p.n()),
            });
        }
        let mut m = p.matrix().clone();
        for v in 0..self.n() {
            let a = self.alpha[v];
            for w in 0..self.n() {
                m[(v, w)] *= a;
            }
        }
        Ok(m)
    }

    pub fn alpha_is_zero(&self) -> bool {
        self.alpha.iter().all(|&x| x < ZERO_CUTOFF)
    }

    pub fn beta_is_zero(&self) -> bool {
        self.beta.iter().all(|&x| x < ZERO_CUTOFF)
    }

    pub fn gamma_is_zero(&self) -> bool {
        self.gamma.iter().all(|&x| x < ZERO_CUTOFF)
    }
}

/// Intrinsic qualities, one entry in `[0, 1]` per influencer.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityVector {
    q: DVector<f64>,
}

impl QualityVector {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::Domain("need at least one influencer".into()));
        }
        for (i, &x) in q.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Domain(format!(
                    "quality[{i}] = {x} lies outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            q: DVector::from_vec(q),
        })
    }

    pub fn m(&self) -> usize {
        self.q.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.q[i]
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.q
    }

    /// Total quality, the normalizer in every popularity limit.
    pub fn total(&self) -> f64 {
        self.q.sum()
    }
}

/// The popularity index: each influencer's share of total attention.
/// Entries are nonnegative and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityVector {
    pi: DVector<f64>,
}

impl PopularityVector {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        let v = DVector::from_vec(pi);
        if v.iter().any(|&x| x < 0.0) || (v.sum() - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain(format!(
                "popularity must be a probability vector; sum = {}",
                v.sum()
            )));
        }
        Ok(Self { pi: v })
    }

    pub fn m(&self) -> usize {
        self.pi.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.pi[i]
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.pi
    }
}

/// Per-user attention totals `z(t)`, the row sums of the state across
/// influencers. They follow an autonomous affine recursion, which is what
/// the equilibrium analysis runs on.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTotals {
    z: DVector<f64>,
}

impl AttentionTotals {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::Domain("totals need at least one user".into()));
        }
        if z.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Domain("totals must be nonnegative".into()));
        }
        Ok(Self {
            z: DVector::from_vec(z),
        })
    }

    pub fn from_vector(z: DVector<f64>) -> Result<Self> {
        Self::new(z.iter().copied().collect())
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn sum(&self) -> f64 {
        self.z.sum()
    }

    pub fn min(&self) -> f64 {
        self.z.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// One step of the totals recursion
    /// `z(t+1) = AP z(t) + beta + q_tot * gamma`.
    pub fn step(
        &self,
        params: &ModelParams,
        p: &RowStochasticMatrix,
        q_tot: f64,
    ) -> Result<AttentionTotals> {
        if params.n() != self.n() {
            return Err(Error::DimensionMismatch {
                context: format!("{} totals but {} users", self.n(), params.n()),
            });
        }
        let ap = params.ap(p)?;
        let z = ap * &self.z + params.beta() + params.gamma() * q_tot;
        AttentionTotals::from_vector(z)
    }
}

/// The attention each user pays each influencer at one time step: an
/// `n x m` matrix with entries in `[0, 1]`, column `i` belonging to
/// influencer `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionState {
    t: u64,
    x: DMatrix<f64>,
}

impl AttentionState {
    /// Validates the entry range. An all-zero state is representable; the
    /// popularity index is what rejects it, at the time step where it is
    /// actually needed.
    pub fn new(t: u64, x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Domain(
                "state needs at least one user and one influencer".into(),
            ));
        }
        for v in 0..x.nrows() {
            for i in 0..x.ncols() {
                let e = x[(v, i)];
                if !(0.0..=1.0).contains(&e) {
                    return Err(Error::Domain(format!(
                        "attention[{v}][{i}] = {e} lies outside [0, 1]"
                    )));
                }
            }
        }
        Ok(Self { t, x })
    }

    pub fn from_rows(t: u64, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::Domain(
                "state needs at least one user and one influencer".into(),
            ));
        }
        let m = rows[0].len();
        for r in rows {
            if r.len() != m {
                return Err(Error::DimensionMismatch {
                    context: format!("ragged state rows: {} vs {}", r.len(), m),
                });
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(t, DMatrix::from_row_slice(rows.len(), m, &flat))
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn users(&self) -> usize {
        self.x.nrows()
    }

    pub fn influencers(&self) -> usize {
        self.x.ncols()
    }

    pub fn get(&self, v: usize, i: usize) -> f64 {
        self.x[(v, i)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// The popularity index at this state. Fails when total attention is
    /// zero, because the index is then undefined.
    pub fn popularity(&self) -> Result<PopularityVector> {
        let total: f64 = self.x.sum();
        if total <= 0.0 {
            return Err(Error::ZeroTotalAttention { t: self.t });
        }
        let pi: Vec<f64> = (0..self.influencers())
            .map(|i| self.x.column(i).sum() / total)
            .collect();
        PopularityVector::new(pi)
    }

    /// Row sums across influencers.
    pub fn totals(&self) -> AttentionTotals {
        let z: Vec<f64> = (0..self.users()).map(|v| self.x.row(v).sum()).collect();
        AttentionTotals::new(z).expect("row sums of a valid state are nonnegative")
    }

    /// The state of influencer `i` extended by its popularity: the
    /// `(n+1)`-vector the augmented linear analysis runs on.
    pub fn augmented(&self, i: usize) -> Result<DVector<f64>> {
        if i >= self.influencers() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.influencers(),
            });
        }
        let pi = self.popularity()?;
        let mut s = DVector::zeros(self.users() + 1);
        for v in 0..self.users() {
            s[v] = self.x[(v, i)];
        }
        s[self.users()] = pi.get(i);
        Ok(s)
    }

    /// One synchronous step of the update law for every influencer.
    ///
    /// The popularity index is computed once from the current state and then
    /// each column advances independently. Entries are nudged back into
    /// `[0, 1]` to absorb rounding at the box boundary.
    pub fn step(
        &self,
        params: &ModelParams,
        p: &RowStochasticMatrix,
        q: &QualityVector,
    ) -> Result<AttentionState> {
        if params.n() != self.users() || p.n() != self.users() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "state has {} users, weights {}, matrix {}",
                    self.users(),
                    params.n(),
                    p.n()
                ),
            });
        }
        if q.m() != self.influencers() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "state has {} influencers, quality {}",
                    self.influencers(),
                    q.m()
                ),
            });
        }
        let pi = self.popularity()?;
        let ap = params.ap(p)?;
        let mut next = ap * &self.x;
        for i in 0..self.influencers() {
            let pi_i = pi.get(i);
            let q_i = q.get(i);
            for v in 0..self.users() {
                let val = next[(v, i)] + params.beta()[v] * pi_i + params.gamma()[v] * q_i;
                next[(v, i)] = val.clamp(0.0, 1.0);
            }
        }
        Ok(AttentionState {
            t: self.t + 1,
            x: next,
        })
    }
}
