//! Closed-form limits, consensus functionals, and stability certificates.
//!
//! The weight pattern decides which analysis applies:
//!
//! - `alpha ≡ 0` (no network): popularity follows a scalar affine recursion
//!   per influencer with an explicit limit and contraction factor;
//! - `gamma ≡ 0` (no quality): the augmented per-influencer state obeys a
//!   time-varying stochastic product that drives every entry to a common
//!   consensus value, a linear functional of the initial state;
//! - `beta ≡ 0` (no recommendation): influencers decouple into independent
//!   opinion dynamics whose fixed point is the flat quality profile;
//! - general: the augmented state contracts to the solution of a linear
//!   system built at the totals fixed point.
//!
//! All structural hypotheses are reachability statements about the support
//! graph and are reported as machine-checkable certificate flags.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Hypothesis, Result};
use crate::graph::{is_aperiodic_node, reaching_set, NodeSet, RowStochasticMatrix};
use crate::model::{
    AttentionState, AttentionTotals, ModelParams, PopularityVector, QualityVector, ZERO_CUTOFF,
};
use crate::spectral::{eigenvalue_magnitudes, spectral_radius};

/// Residual bound every linear solve in this module must meet.
pub const SOLVE_RESIDUAL: f64 = 1e-10;

/// Default iteration budget for the consensus product.
pub const PRODUCT_HORIZON: usize = 100_000;

/// Default row-agreement tolerance for the consensus product.
pub const PRODUCT_TOL: f64 = 1e-12;

/// Which special weight pattern a parameter set falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `alpha ≡ 0`: no neighbor influence.
    NoNetwork,
    /// `gamma ≡ 0`: no intrinsic quality.
    NoQuality,
    /// `beta ≡ 0`: no popularity feedback.
    NoRecommendation,
    /// No weight vector vanishes.
    General,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::NoNetwork => "no_network",
            Regime::NoQuality => "no_quality",
            Regime::NoRecommendation => "no_recommendation",
            Regime::General => "general",
        };
        f.write_str(s)
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_network" => Ok(Regime::NoNetwork),
            "no_quality" => Ok(Regime::NoQuality),
            "no_recommendation" => Ok(Regime::NoRecommendation),
            "general" => Ok(Regime::General),
            other => Err(Error::Domain(format!("unknown regime {other:?}"))),
        }
    }
}

/// Classifies weights by which vectors vanish (every component below the
/// zero cutoff). Exactly one vanishing vector selects its special regime;
/// none selects the general one; two vanishing vectors are ambiguous because
/// two special analyses would both claim the instance.
pub fn detect_regime(params: &ModelParams) -> Result<Regime> {
    let zeros = [
        params.alpha_is_zero(),
        params.beta_is_zero(),
        params.gamma_is_zero(),
    ];
    match zeros.iter().filter(|&&z| z).count() {
        0 => Ok(Regime::General),
        1 => {
            if zeros[0] {
                Ok(Regime::NoNetwork)
            } else if zeros[1] {
                Ok(Regime::NoRecommendation)
            } else {
                Ok(Regime::NoQuality)
            }
        }
        _ => Err(Error::AmbiguousRegime),
    }
}

/// The linearization at the totals fixed point: the augmented update matrix
/// and offset evaluated at `z*`, with the spectral data the convergence-rate
/// statements quote.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    /// `(n+1) x (n+1)` update matrix at the totals fixed point.
    pub u_tilde: DMatrix<f64>,
    /// Offset vector at the totals fixed point; zero when `gamma ≡ 0`.
    pub c_tilde: DVector<f64>,
    /// Totals fixed point `z*`.
    pub z_star: DVector<f64>,
    /// Spectral radius of the network block `AP`.
    pub lambda1: f64,
    /// Magnitude of the largest subdominant eigenvalue of `u_tilde`.
    pub lambda2: f64,
    /// Dominant eigenvalue magnitude of `u_tilde`; one exactly in the
    /// `gamma ≡ 0` regime, below one when the general fixed point exists.
    pub rho_u: f64,
}

/// Limit of the no-network regime (`alpha ≡ 0`).
///
/// Popularity converges to the quality shares `q / q_tot`; user `v` settles
/// at the convex mix `beta_v * q_i / q_tot + (1 - beta_v) * q_i`.
pub fn no_network_limit(
    params: &ModelParams,
    q: &QualityVector,
) -> Result<(PopularityVector, AttentionState)> {
    require_no_network(params, q)?;
    let q_tot = q.total();
    let pi: Vec<f64> = (0..q.m()).map(|i| q.get(i) / q_tot).collect();
    let n = params.n();
    let mut x = DMatrix::zeros(n, q.m());
    for v in 0..n {
        let b = params.beta()[v];
        for i in 0..q.m() {
            let val = b * q.get(i) / q_tot + (1.0 - b) * q.get(i);
            x[(v, i)] = val.clamp(0.0, 1.0);
        }
    }
    Ok((PopularityVector::new(pi)?, AttentionState::new(0, x)?))
}

/// Contraction factor of the no-network popularity recursion:
/// `mean(beta) / (mean(beta) + (1 - mean(beta)) * q_tot)`.
pub fn no_network_rate(params: &ModelParams, q: &QualityVector) -> Result<f64> {
    require_no_network(params, q)?;
    let b = params.mean_beta();
    Ok(b / (b + (1.0 - b) * q.total()))
}

fn require_no_network(params: &ModelParams, q: &QualityVector) -> Result<()> {
    if !params.alpha_is_zero() {
        return Err(Error::HypothesisViolated(Hypothesis::AlphaAllZero));
    }
    if !params.beta().iter().any(|&b| b < 1.0 - ZERO_CUTOFF) {
        return Err(Error::HypothesisViolated(Hypothesis::SomeBetaBelowOne));
    }
    if q.total() < ZERO_CUTOFF {
        return Err(Error::HypothesisViolated(Hypothesis::PositiveTotalQuality));
    }
    Ok(())
}

/// Fixed point of the totals recursion.
///
/// Requires every node to reach a user with `alpha < 1`; that reachability
/// is exactly what makes `I - AP` invertible. With `gamma ≡ 0` the fixed
/// point is the all-ones vector and is returned exactly; otherwise
/// `(I - AP) z = beta + q_tot * gamma` is solved and residual-checked.
pub fn z_limit(
    params: &ModelParams,
    p: &RowStochasticMatrix,
    q_tot: f64,
) -> Result<AttentionTotals> {
    if !(q_tot >= 0.0) {
        return Err(Error::Domain(format!(
            "total quality must be nonnegative, got {q_tot}"
        )));
    }
    require_all_reach(p, &alpha_deficiency(params))?;
    let n = params.n();
    if params.gamma_is_zero() {
        return AttentionTotals::new(vec![1.0; n]);
    }
    let a = DMatrix::identity(n, n) - params.ap(p)?;
    let b = params.beta() + params.gamma() * q_tot;
    let z = solve_checked(&a, &b)?;
    if z.iter().any(|&x| x <= 0.0) {
        return Err(Error::SingularSystem);
    }
    AttentionTotals::from_vector(z)
}

/// The augmented update matrix and offset at an arbitrary totals vector
/// `z`:
///
/// ```text
/// U = [ AP              beta ]      c = [ gamma            ]
///     [ 1^T AP / s   sum(beta) / s ]     [ sum(gamma) / s ]
/// ```
///
/// with `s = sum(z)`. Applied to an influencer's augmented state it
/// advances it one step, provided `z` holds the totals *after* that step
/// (the popularity denominator is the post-step total attention).
pub fn augmented_at(
    params: &ModelParams,
    p: &RowStochasticMatrix,
    z: &AttentionTotals,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if z.n() != params.n() {
        return Err(Error::DimensionMismatch {
            context: format!("{} totals but {} users", z.n(), params.n()),
        });
    }
    let s = z.sum();
    if s <= 0.0 {
        return Err(Error::Domain("totals must have positive sum".into()));
    }
    let n = params.n();
    let ap = params.ap(p)?;
    let mut u = DMatrix::zeros(n + 1, n + 1);
    for v in 0..n {
        for w in 0..n {
            u[(v, w)] = ap[(v, w)];
        }
        u[(v, n)] = params.beta()[v];
    }
    for w in 0..n {
        u[(n, w)] = ap.column(w).sum() / s;
    }
    u[(n, n)] = params.beta().sum() / s;
    let mut c = DVector::zeros(n + 1);
    for v in 0..n {
        c[v] = params.gamma()[v];
    }
    c[n] = params.gamma().sum() / s;
    Ok((u, c))
}

/// The augmented system at the totals fixed point, with its spectral data.
pub fn augmented_limit(
    params: &ModelParams,
    p: &RowStochasticMatrix,
    q_tot: f64,
) -> Result<AugmentedSystem> {
    let z_star = z_limit(params, p, q_tot)?;
    let (u_tilde, c_tilde) = augmented_at(params, p, &z_star)?;
    let lambda1 = spectral_radius(&params.ap(p)?)?;
    let mags = eigenvalue_magnitudes(&u_tilde)?;
    Ok(AugmentedSystem {
        u_tilde,
        c_tilde,
        z_star: z_star.vector().clone(),
        lambda1,
        lambda2: mags[1],
        rho_u: mags[0],
    })
}

/// The general-regime limit of influencer `i`: the solution of
/// `(I - U~) s = q_i c~`.
///
/// Signals `SingularSystem` when the system has no unique solution, which
/// is exactly the `gamma ≡ 0` situation (the update matrix is then
/// stochastic and `I - U~` drops rank); that regime is served by
/// [`consensus_functional`] instead.
pub fn general_fixed_point(
    sys: &AugmentedSystem,
    q: &QualityVector,
    i: usize,
) -> Result<DVector<f64>> {
    if i >= q.m() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: q.m(),
        });
    }
    if sys.rho_u >= 1.0 - 1e-9 {
        return Err(Error::SingularSystem);
    }
    let dim = sys.u_tilde.nrows();
    let a = DMatrix::identity(dim, dim) - &sys.u_tilde;
    let b = &sys.c_tilde * q.get(i);
    solve_checked(&a, &b)
}

/// The decoupled fixed point of influencer `i` when `beta ≡ 0`: the flat
/// profile `q_i * ones`. The closed form is cross-checked against the
/// linear-solve form `(I - AP) x = (I - A) q_i ones` before returning.
pub fn fj_decoupled_fixed_point(
    params: &ModelParams,
    p: &RowStochasticMatrix,
    q: &QualityVector,
    i: usize,
) -> Result<DVector<f64>> {
    if !params.beta_is_zero() {
        return Err(Error::HypothesisViolated(Hypothesis::BetaAllZero));
    }
    if i >= q.m() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: q.m(),
        });
    }
    require_all_reach(p, &alpha_deficiency(params))?;
    let n = params.n();
    let a = DMatrix::identity(n, n) - params.ap(p)?;
    let b = DVector::from_fn(n, |v, _| (1.0 - params.alpha()[v]) * q.get(i));
    let solved = solve_checked(&a, &b)?;
    let flat = DVector::from_element(n, q.get(i));
    if (&solved - &flat).abs().max() > SOLVE_RESIDUAL {
        return Err(Error::SingularSystem);
    }
    Ok(flat)
}

/// The consensus weights of the `gamma ≡ 0` regime.
///
/// Every influencer's augmented state converges to `phi^T s(0)` times the
/// all-ones vector, where `phi` does not depend on the influencer. The
/// weights are the common row of the limit of the time-varying update
/// product accumulated along the totals trajectory from `z0`; accumulation
/// stops once the product's rows pairwise agree within `tol` in the 1-norm.
///
/// The returned row satisfies `phi^T (z0, 1) = 1` (initial popularity
/// shares summing to one is preserved in the limit); its own entries sum to
/// one only when `z0` is the all-ones vector, in which case `phi` is the
/// stationary distribution of the limit matrix.
pub fn consensus_functional(
    params: &ModelParams,
    p: &RowStochasticMatrix,
    z0: &AttentionTotals,
    horizon: usize,
    tol: f64,
) -> Result<DVector<f64>> {
    if !params.gamma_is_zero() {
        return Err(Error::HypothesisViolated(Hypothesis::GammaAllZero));
    }
    if z0.n() != params.n() {
        return Err(Error::DimensionMismatch {
            context: format!("{} totals but {} users", z0.n(), params.n()),
        });
    }
    if !(tol > 0.0) || horizon == 0 {
        return Err(Error::Domain(
            "product accumulation needs tol > 0 and horizon >= 1".into(),
        ));
    }
    let aperiodic = aperiodic_deficiency(params, p)?;
    if aperiodic.is_empty() || !reaching_set(p, &aperiodic)?.is_all(p.n()) {
        return Err(Error::HypothesisViolated(
            Hypothesis::AperiodicDeficientReachable,
        ));
    }
    let n = params.n();
    let mut z = z0.clone();
    let mut product = DMatrix::<f64>::identity(n + 1, n + 1);
    for _ in 0..horizon {
        // The factor propagating step k-1 -> k carries the totals after the
        // step; advance first, then assemble.
        z = z.step(params, p, 0.0)?;
        let (u, _) = augmented_at(params, p, &z)?;
        product = u * product;
        if max_row_disagreement(&product) <= tol {
            return Ok(row_mean(&product));
        }
    }
    Err(Error::NoConvergence {
        iterations: horizon,
    })
}

fn max_row_disagreement(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for a in 0..m.nrows() {
        for b in (a + 1)..m.nrows() {
            let d: f64 = (0..m.ncols()).map(|j| (m[(a, j)] - m[(b, j)]).abs()).sum();
            worst = worst.max(d);
        }
    }
    worst
}

fn row_mean(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.ncols(), |j, _| m.column(j).sum() / m.nrows() as f64)
}

/// Machine-checkable stability and hypothesis flags for one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    pub regime: Regime,
    /// The deficiency set the regime's theory quantifies over:
    /// `{v : gamma_v > 0}` in the general regime, `{v : alpha_v < 1}`
    /// otherwise.
    pub deficiency: NodeSet,
    pub deficiency_nonempty: bool,
    /// Every node has a path into the deficiency set.
    pub all_reach_deficient: bool,
    /// The deficient nodes that are also aperiodic.
    pub aperiodic_deficient: NodeSet,
    /// Every node has a path to an aperiodic deficient node.
    pub all_reach_aperiodic_deficient: bool,
    /// Spectral radius of `AP`, the numeric witness.
    pub rho_ap: f64,
    /// Structural Schur stability of `AP`: every node reaches a user with
    /// `alpha < 1`. Equivalent to `rho_ap < 1`, but decided exactly.
    pub schur_stable: bool,
    /// `q_tot >= 1` when a total quality was supplied.
    pub q_tot_at_least_one: Option<bool>,
    /// `z(0) >= 1` componentwise when initial totals were supplied.
    pub z0_at_least_one: Option<bool>,
    /// All hypotheses of the regime's convergence statement that could be
    /// checked from the supplied data hold.
    pub hypotheses_met: bool,
}

/// Evaluates the stability certificate for `regime`. Optional `q_tot` and
/// initial totals extend the check to the data-dependent hypotheses; when
/// absent those flags stay unknown and do not count as violations.
pub fn schur_certificate(
    params: &ModelParams,
    p: &RowStochasticMatrix,
    regime: Regime,
    q_tot: Option<f64>,
    z0: Option<&AttentionTotals>,
) -> Result<StabilityCertificate> {
    if p.n() != params.n() {
        return Err(Error::DimensionMismatch {
            context: format!("{} users but a {}-node matrix", params.n(), p.n()),
        });
    }
    let deficiency = match regime {
        Regime::General => gamma_deficiency(params),
        _ => alpha_deficiency(params),
    };
    let all_reach_deficient = all_reach(p, &deficiency)?;
    let aperiodic_deficient = filter_aperiodic(p, &deficiency)?;
    let all_reach_aperiodic_deficient = all_reach(p, &aperiodic_deficient)?;

    let alpha_set = alpha_deficiency(params);
    let schur_stable = all_reach(p, &alpha_set)?;
    let rho_ap = spectral_radius(&params.ap(p)?)?;

    let q_tot_at_least_one = q_tot.map(|q| q >= 1.0 - 1e-12);
    let z0_at_least_one = z0.map(|z| z.min() >= 1.0 - 1e-12);

    let hypotheses_met = match regime {
        Regime::NoNetwork | Regime::NoRecommendation => all_reach_deficient,
        Regime::NoQuality => all_reach_aperiodic_deficient && z0_at_least_one.unwrap_or(true),
        Regime::General => {
            all_reach_aperiodic_deficient
                && q_tot_at_least_one.unwrap_or(true)
                && z0_at_least_one.unwrap_or(true)
        }
    };

    let deficiency_nonempty = !deficiency.is_empty();
    Ok(StabilityCertificate {
        regime,
        deficiency,
        deficiency_nonempty,
        all_reach_deficient,
        aperiodic_deficient,
        all_reach_aperiodic_deficient,
        rho_ap,
        schur_stable,
        q_tot_at_least_one,
        z0_at_least_one,
        hypotheses_met,
    })
}

fn alpha_deficiency(params: &ModelParams) -> NodeSet {
    (0..params.n())
        .filter(|&v| params.alpha()[v] < 1.0 - ZERO_CUTOFF)
        .collect()
}

fn gamma_deficiency(params: &ModelParams) -> NodeSet {
    (0..params.n())
        .filter(|&v| params.gamma()[v] > ZERO_CUTOFF)
        .collect()
}

fn aperiodic_deficiency(params: &ModelParams, p: &RowStochasticMatrix) -> Result<NodeSet> {
    filter_aperiodic(p, &alpha_deficiency(params))
}

fn filter_aperiodic(p: &RowStochasticMatrix, set: &NodeSet) -> Result<NodeSet> {
    let mut out = NodeSet::new();
    for v in set.iter() {
        if is_aperiodic_node(p, v)? {
            out.insert(v);
        }
    }
    Ok(out)
}

fn all_reach(p: &RowStochasticMatrix, targets: &NodeSet) -> Result<bool> {
    if targets.is_empty() {
        return Ok(false);
    }
    Ok(reaching_set(p, targets)?.is_all(p.n()))
}

fn require_all_reach(p: &RowStochasticMatrix, targets: &NodeSet) -> Result<()> {
    let n = p.n();
    if targets.is_empty() {
        return Err(Error::StabilityConditionUnmet {
            unreachable: (0..n).collect(),
        });
    }
    let reached = reaching_set(p, targets)?;
    if reached.is_all(n) {
        Ok(())
    } else {
        Err(Error::StabilityConditionUnmet {
            unreachable: (0..n).filter(|&v| !reached.contains(v)).collect(),
        })
    }
}

fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let x = a.clone().lu().solve(b).ok_or(Error::SingularSystem)?;
    let residual = (a * &x - b).abs().max();
    if residual > SOLVE_RESIDUAL {
        return Err(Error::SingularSystem);
    }
    Ok(x)
}
