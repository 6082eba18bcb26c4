//! Trajectory simulation, convergence detection, and theory-versus-
//! simulation verification.
//!
//! A [`Scenario`] bundles everything one run needs; [`simulate`] iterates
//! the update law and records the time series; [`detect_convergence`]
//! applies a windowed successive-difference criterion and fits an empirical
//! rate; [`verify_regime`] dispatches on the weight pattern, computes the
//! matching closed-form limit, and reports the gap between theory and the
//! simulated terminal state.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::equilibria::{
    augmented_limit, consensus_functional, detect_regime, fj_decoupled_fixed_point,
    general_fixed_point, no_network_limit, schur_certificate, Regime, StabilityCertificate,
    PRODUCT_HORIZON, PRODUCT_TOL,
};
use crate::error::{Error, Result};
use crate::graph::RowStochasticMatrix;
use crate::model::{
    AttentionState, AttentionTotals, ModelParams, PopularityVector, QualityVector, ZERO_CUTOFF,
};

/// Window length for the sustained successive-difference criterion, used
/// both by [`simulate`]'s early stop and as the conventional window for
/// [`detect_convergence`].
pub const DEFAULT_WINDOW: usize = 10;

/// Conventional successive-difference tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Successive differences below this floor are floating-point noise and are
/// excluded from rate fitting.
pub const RATE_FLOOR: f64 = 1e-14;

/// Successive differences above this ceiling belong to the transient and
/// are excluded from rate fitting.
pub const RATE_CEIL: f64 = 1e-2;

/// Minimum number of qualifying points for a rate fit.
pub const RATE_MIN_POINTS: usize = 10;

/// A fully specified, deterministic simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    p: RowStochasticMatrix,
    params: ModelParams,
    q: QualityVector,
    x0: AttentionState,
    horizon: u64,
    tol: f64,
    seed: u64,
    record_every: u64,
}

impl Scenario {
    /// Validates mutual dimension consistency and the run controls. The
    /// initial state must sit at time zero; `seed` is carried as metadata
    /// recording how sampled ingredients were drawn.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        p: RowStochasticMatrix,
        params: ModelParams,
        q: QualityVector,
        x0: AttentionState,
        horizon: u64,
        tol: f64,
        seed: u64,
        record_every: u64,
    ) -> Result<Self> {
        if params.n() != p.n() || x0.users() != p.n() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "graph has {} nodes, weights {}, initial state {} users",
                    p.n(),
                    params.n(),
                    x0.users()
                ),
            });
        }
        if q.m() != x0.influencers() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "quality has {} influencers, initial state {}",
                    q.m(),
                    x0.influencers()
                ),
            });
        }
        if x0.t() != 0 {
            return Err(Error::Domain(format!(
                "initial state must sit at t = 0, got t = {}",
                x0.t()
            )));
        }
        if horizon == 0 {
            return Err(Error::Domain("horizon must be at least 1".into()));
        }
        if !(tol > 0.0) {
            return Err(Error::Domain(format!("tol must be positive, got {tol}")));
        }
        if record_every == 0 {
            return Err(Error::Domain("record_every must be at least 1".into()));
        }
        Ok(Self {
            p,
            params,
            q,
            x0,
            horizon,
            tol,
            seed,
            record_every,
        })
    }

    pub fn graph(&self) -> &RowStochasticMatrix {
        &self.p
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn quality(&self) -> &QualityVector {
        &self.q
    }

    pub fn initial_state(&self) -> &AttentionState {
        &self.x0
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn record_every(&self) -> u64 {
        self.record_every
    }
}

/// Parallel time series of states, popularity vectors, and attention
/// totals at the recorded steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<u64>,
    states: Vec<AttentionState>,
    popularity: Vec<PopularityVector>,
    totals: Vec<AttentionTotals>,
}

impl Trajectory {
    /// Builds the parallel series from recorded states, deriving each
    /// record's popularity and totals. Times must be strictly increasing
    /// and dimensions consistent across records.
    pub fn from_states(states: Vec<AttentionState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Domain(
                "a trajectory needs at least one record".into(),
            ));
        }
        let (n, m) = (states[0].users(), states[0].influencers());
        let mut times = Vec::with_capacity(states.len());
        let mut popularity = Vec::with_capacity(states.len());
        let mut totals = Vec::with_capacity(states.len());
        for s in &states {
            if s.users() != n || s.influencers() != m {
                return Err(Error::DimensionMismatch {
                    context: format!(
                        "record at t = {} is {}x{}, expected {n}x{m}",
                        s.t(),
                        s.users(),
                        s.influencers()
                    ),
                });
            }
            if let Some(&prev) = times.last() {
                if s.t() <= prev {
                    return Err(Error::Domain(format!(
                        "record times must increase strictly: {} after {prev}",
                        s.t()
                    )));
                }
            }
            times.push(s.t());
            popularity.push(s.popularity()?);
            totals.push(s.totals());
        }
        Ok(Self {
            times,
            states,
            popularity,
            totals,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[u64] {
        &self.times
    }

    pub fn states(&self) -> &[AttentionState] {
        &self.states
    }

    pub fn popularity(&self) -> &[PopularityVector] {
        &self.popularity
    }

    pub fn totals(&self) -> &[AttentionTotals] {
        &self.totals
    }

    pub fn last_state(&self) -> &AttentionState {
        self.states.last().expect("trajectories are nonempty")
    }

    pub fn last_popularity(&self) -> &PopularityVector {
        self.popularity.last().expect("trajectories are nonempty")
    }
}

/// Iterates the update law from the scenario's initial state, recording
/// every `record_every` steps plus the final step reached.
///
/// The run ends early once the per-step max-norm state difference stays at
/// or below the scenario tolerance for [`DEFAULT_WINDOW`] consecutive
/// steps; otherwise it ends at the horizon. The output is a pure function
/// of the scenario, bitwise.
pub fn simulate(sc: &Scenario) -> Result<Trajectory> {
    let mut state = sc.x0.clone();
    let mut recorded = vec![state.clone()];
    let mut sustained = 0usize;
    for t in 1..=sc.horizon {
        let next = state.step(&sc.params, &sc.p, &sc.q)?;
        let diff = (next.matrix() - state.matrix()).abs().max();
        state = next;
        if t % sc.record_every == 0 {
            recorded.push(state.clone());
        }
        if diff <= sc.tol {
            sustained += 1;
            if sustained >= DEFAULT_WINDOW {
                break;
            }
        } else {
            sustained = 0;
        }
    }
    if recorded.last().map(AttentionState::t) != Some(state.t()) {
        recorded.push(state);
    }
    Trajectory::from_states(recorded)
}

/// Verdict of the windowed successive-difference criterion, with the
/// terminal records and, where a comparison was possible, the distance to
/// the regime's theoretical limit.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// The recorded successive differences stayed within tolerance over the
    /// trailing window.
    pub converged: bool,
    /// First recorded time from which the difference criterion held through
    /// the end of the trajectory; present iff `converged`.
    pub t_converged: Option<u64>,
    pub terminal_state: AttentionState,
    pub terminal_popularity: PopularityVector,
    /// Per-step geometric factor fitted to the successive-difference decay,
    /// when enough clean points exist.
    pub estimated_rate: Option<f64>,
    /// Max over influencers of the max-norm gap between the terminal
    /// augmented state and the regime's predicted limit; absent when no
    /// prediction was computable.
    pub theory_delta: Option<f64>,
    /// Regime the verification dispatched on; absent for plain convergence
    /// detection.
    pub regime: Option<Regime>,
    /// Hypothesis certificate of the dispatched regime, when evaluated.
    pub certificate: Option<StabilityCertificate>,
    /// Human-readable notes: unmet hypotheses, unavailable predictions.
    pub warnings: Vec<String>,
}

/// Applies the windowed successive-difference criterion to a recorded
/// trajectory: converged iff the max-norm difference between consecutive
/// records stays `<= tol` over the last `window` records. Also fits the
/// per-step decay factor of the difference sequence over the clean band
/// `(RATE_FLOOR, RATE_CEIL)` when at least [`RATE_MIN_POINTS`] records
/// qualify.
pub fn detect_convergence(traj: &Trajectory, tol: f64, window: usize) -> Result<ConvergenceReport> {
    if window == 0 || !(tol > 0.0) {
        return Err(Error::Domain(
            "convergence detection needs tol > 0 and window >= 1".into(),
        ));
    }
    if traj.len() < window + 1 {
        return Err(Error::TooShort {
            records: traj.len(),
            needed: window + 1,
        });
    }
    let diffs: Vec<f64> = traj
        .states()
        .windows(2)
        .map(|w| (w[1].matrix() - w[0].matrix()).abs().max())
        .collect();
    let mut run = 0usize;
    while run < diffs.len() && diffs[diffs.len() - 1 - run] <= tol {
        run += 1;
    }
    let converged = run >= window;
    let t_converged = converged.then(|| traj.times()[diffs.len() - run + 1]);
    Ok(ConvergenceReport {
        converged,
        t_converged,
        terminal_state: traj.last_state().clone(),
        terminal_popularity: traj.last_popularity().clone(),
        estimated_rate: log_linear_rate(&traj.times()[1..], &diffs),
        theory_delta: None,
        regime: None,
        certificate: None,
        warnings: Vec::new(),
    })
}

/// Least-squares slope of `ln diff` against time over the clean band,
/// exponentiated back to a per-step factor.
fn log_linear_rate(times: &[u64], diffs: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(diffs)
        .filter(|(_, &d)| d > RATE_FLOOR && d < RATE_CEIL)
        .map(|(&t, &d)| (t as f64, d.ln()))
        .collect();
    if pts.len() < RATE_MIN_POINTS {
        return None;
    }
    let k = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(t, y) in &pts {
        num += (t - mean_t) * (y - mean_y);
        den += (t - mean_t) * (t - mean_t);
    }
    if den == 0.0 {
        return None;
    }
    Some((num / den).exp())
}

/// Max-minus-min attention per influencer: zero exactly at consensus.
pub fn consensus_gap(state: &AttentionState) -> DVector<f64> {
    DVector::from_fn(state.influencers(), |i, _| {
        let col = state.matrix().column(i);
        col.max() - col.min()
    })
}

/// Simulates the scenario, computes the matching regime's theoretical
/// limit, and reports the gap.
///
/// The weight pattern must match exactly one regime. Hypothesis failures in
/// the theory path do not abort the run: the simulation result stands and
/// the failure is reported as a warning, with `theory_delta` absent. The
/// regime's certificate is always evaluated and attached. The convergence
/// window shrinks to fit trajectories shorter than [`DEFAULT_WINDOW`], so a
/// deliberately truncated horizon yields a not-converged report instead of
/// an error.
pub fn verify_regime(sc: &Scenario) -> Result<ConvergenceReport> {
    let regime = detect_regime(&sc.params)?;
    let traj = simulate(sc)?;
    let window = DEFAULT_WINDOW.min(traj.len() - 1).max(1);
    let mut report = detect_convergence(&traj, sc.tol, window)?;
    report.regime = Some(regime);

    let z0 = sc.x0.totals();
    let cert = schur_certificate(&sc.params, &sc.p, regime, Some(sc.q.total()), Some(&z0))?;
    if !cert.hypotheses_met {
        report
            .warnings
            .push(format!("hypotheses of the {regime} regime are not met"));
    }
    report.certificate = Some(cert);

    match predicted_augmented_limits(sc, regime, &z0) {
        Ok(predicted) => {
            let mut worst = 0.0f64;
            for (i, pred) in predicted.iter().enumerate() {
                let actual = report.terminal_state.augmented(i)?;
                worst = worst.max((&actual - pred).abs().max());
            }
            report.theory_delta = Some(worst);
        }
        Err(e) => report
            .warnings
            .push(format!("theoretical limit unavailable: {e}")),
    }
    Ok(report)
}

/// The per-influencer predicted augmented limit for the given regime.
fn predicted_augmented_limits(
    sc: &Scenario,
    regime: Regime,
    z0: &AttentionTotals,
) -> Result<Vec<DVector<f64>>> {
    let n = sc.params.n();
    let m = sc.q.m();
    match regime {
        Regime::NoNetwork => {
            let (pi, x) = no_network_limit(&sc.params, &sc.q)?;
            Ok((0..m)
                .map(|i| {
                    DVector::from_fn(n + 1, |v, _| if v < n { x.get(v, i) } else { pi.get(i) })
                })
                .collect())
        }
        Regime::NoQuality => {
            let phi = consensus_functional(&sc.params, &sc.p, z0, PRODUCT_HORIZON, PRODUCT_TOL)?;
            let mut out = Vec::with_capacity(m);
            for i in 0..m {
                let consensus = phi.dot(&sc.x0.augmented(i)?);
                out.push(DVector::from_element(n + 1, consensus));
            }
            Ok(out)
        }
        Regime::NoRecommendation => {
            let q_tot = sc.q.total();
            if q_tot < ZERO_CUTOFF {
                return Err(Error::Domain(
                    "popularity has no limit when total quality is zero".into(),
                ));
            }
            let mut out = Vec::with_capacity(m);
            for i in 0..m {
                let x = fj_decoupled_fixed_point(&sc.params, &sc.p, &sc.q, i)?;
                let mut s = DVector::zeros(n + 1);
                s.rows_mut(0, n).copy_from(&x);
                s[n] = sc.q.get(i) / q_tot;
                out.push(s);
            }
            Ok(out)
        }
        Regime::General => {
            let sys = augmented_limit(&sc.params, &sc.p, sc.q.total())?;
            (0..m)
                .map(|i| general_fixed_point(&sys, &sc.q, i))
                .collect()
        }
    }
}

/// Preset experiment protocols. The names are the scenario-file keys; each
/// fixes one weight pattern on a 20-user, 3-influencer instance:
/// `fig1` mixes popularity and quality only (no network), `fig2` mixes
/// network and popularity only (no quality, consensus dynamics), `fig3`
/// draws fully mixed weight triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Fig1,
    Fig2,
    Fig3,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Protocol::Fig1 => "fig1",
            Protocol::Fig2 => "fig2",
            Protocol::Fig3 => "fig3",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Protocol::Fig1),
            "fig2" => Ok(Protocol::Fig2),
            "fig3" => Ok(Protocol::Fig3),
            other => Err(Error::UnknownProtocol(other.to_string())),
        }
    }
}

const PROTOCOL_USERS: usize = 20;
const PROTOCOL_QUALITY: [f64; 3] = [0.3, 0.7, 0.5];
const PROTOCOL_EDGE_PROBABILITY: f64 = 0.2;

/// Draws a fully specified scenario under a preset protocol.
///
/// The master seed feeds a seeded generator that in turn draws three
/// sub-seeds, in order, for the graph, the weights, and the initial state,
/// so every ingredient has an independent, reproducible stream.
///
/// - `fig1`: no network influence; `beta ~ U[0,1]` per user, the graph is
///   the identity, and everyone starts with equal attention shares.
/// - `fig2`: no quality; `beta ~ U[0,1]`, `alpha = 1 - beta`, a random
///   graph with edge probability 0.2, and a uniform initial state whose
///   rows are rescaled where needed so every user starts with total
///   attention at least one.
/// - `fig3`: fully mixed; each user's weight triple is a normalized
///   uniform draw, the graph as in `fig2`, and a raw uniform initial state
///   (per-user totals may drop below one, deliberately exercising runs
///   beyond the convergence hypotheses).
pub fn sample_scenario(protocol: Protocol, seed: u64) -> Result<Scenario> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let graph_seed: u64 = master.random();
    let params_seed: u64 = master.random();
    let x0_seed: u64 = master.random();
    let n = PROTOCOL_USERS;
    let m = PROTOCOL_QUALITY.len();
    let q = QualityVector::new(PROTOCOL_QUALITY.to_vec())?;

    let mut params_rng = ChaCha8Rng::seed_from_u64(params_seed);
    let mut x0_rng = ChaCha8Rng::seed_from_u64(x0_seed);

    match protocol {
        Protocol::Fig1 => {
            let p = RowStochasticMatrix::identity(n)?;
            let beta: Vec<f64> = (0..n).map(|_| params_rng.random()).collect();
            let gamma: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
            let params = ModelParams::new(vec![0.0; n], beta, gamma)?;
            let x0 = AttentionState::new(0, DMatrix::from_element(n, m, 1.0 / m as f64))?;
            Scenario::new(p, params, q, x0, 1_000, DEFAULT_TOL, seed, 1)
        }
        Protocol::Fig2 => {
            let p = RowStochasticMatrix::erdos_renyi(n, PROTOCOL_EDGE_PROBABILITY, graph_seed)?;
            let beta: Vec<f64> = (0..n).map(|_| params_rng.random()).collect();
            let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
            let params = ModelParams::new(alpha, beta, vec![0.0; n])?;
            let mut x = DMatrix::from_fn(n, m, |_, _| x0_rng.random::<f64>());
            raise_rows_to_unit_total(&mut x);
            let x0 = AttentionState::new(0, x)?;
            Scenario::new(p, params, q, x0, 10_000, DEFAULT_TOL, seed, 1)
        }
        Protocol::Fig3 => {
            let p = RowStochasticMatrix::erdos_renyi(n, PROTOCOL_EDGE_PROBABILITY, graph_seed)?;
            let mut alpha = Vec::with_capacity(n);
            let mut beta = Vec::with_capacity(n);
            let mut gamma = Vec::with_capacity(n);
            for _ in 0..n {
                let (a, b, c): (f64, f64, f64) = (
                    params_rng.random(),
                    params_rng.random(),
                    params_rng.random(),
                );
                let s = a + b + c;
                alpha.push(a / s);
                beta.push(b / s);
                gamma.push(1.0 - a / s - b / s);
            }
            let params = ModelParams::new(alpha, beta, gamma)?;
            let x0 = AttentionState::new(0, DMatrix::from_fn(n, m, |_, _| x0_rng.random::<f64>()))?;
            Scenario::new(p, params, q, x0, 10_000, DEFAULT_TOL, seed, 1)
        }
    }
}

/// Scales up any row whose sum is below one so it sums to exactly one;
/// entries stay in `[0, 1]` because no entry exceeds its row sum.
fn raise_rows_to_unit_total(x: &mut DMatrix<f64>) {
    let m = x.ncols();
    for v in 0..x.nrows() {
        let z: f64 = x.row(v).sum();
        if z >= 1.0 {
            continue;
        }
        if z <= 0.0 {
            for i in 0..m {
                x[(v, i)] = 1.0 / m as f64;
            }
        } else {
            for i in 0..m {
                x[(v, i)] /= z;
            }
        }
    }
}
