//! Scenario configuration files, plot-ready CSV export, and JSON reports.
//!
//! A scenario file is a JSON document whose ingredients can be given
//! explicitly (matrix rows, weight vectors, initial state) or delegated to
//! seeded draws (random graph, preset protocol, uniform initial state).
//! [`ScenarioFile::resolve`] turns a parsed document into a validated
//! [`Scenario`]; [`ScenarioFile::from_scenario`] inverts it into the fully
//! explicit form, and the two compose to a bit-exact round trip.
//!
//! CSV numbers are printed with 17 significant digits, enough to
//! reconstruct every double exactly; JSON numbers rely on the serializer's
//! shortest-round-trip encoding, which is exact as well.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::equilibria::{
    augmented_limit, consensus_functional, detect_regime, fj_decoupled_fixed_point,
    general_fixed_point, no_network_limit, no_network_rate, schur_certificate, Regime,
    StabilityCertificate, PRODUCT_HORIZON, PRODUCT_TOL,
};
use crate::error::{Error, Result};
use crate::graph::RowStochasticMatrix;
use crate::model::{AttentionState, ModelParams, QualityVector, ZERO_CUTOFF};
use crate::sim::{
    consensus_gap, sample_scenario, ConvergenceReport, Protocol, Scenario, Trajectory,
};
use crate::spectral::stationary_distribution;

/// Fallback horizon when a scenario file leaves it out.
pub const DEFAULT_FILE_HORIZON: u64 = 10_000;

/// Fallback successive-difference tolerance for scenario files.
pub const DEFAULT_FILE_TOL: f64 = 1e-10;

/// Fallback recording stride for scenario files.
pub const DEFAULT_FILE_RECORD_EVERY: u64 = 1;

/// How a scenario file specifies the interaction graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GraphSpec {
    /// Seeded random graph with the given edge probability.
    ErdosRenyi { n: usize, p: f64, seed: u64 },
    /// Row-major matrix rows; nonnegative, rows normalized on load when not
    /// already stochastic.
    Explicit { rows: Vec<Vec<f64>> },
}

impl GraphSpec {
    fn build(&self) -> Result<RowStochasticMatrix> {
        match self {
            GraphSpec::ErdosRenyi { n, p, seed } => {
                RowStochasticMatrix::erdos_renyi(*n, *p, *seed).map_err(wrap_field("graph"))
            }
            GraphSpec::Explicit { rows } => {
                RowStochasticMatrix::from_rows(rows).map_err(wrap_field("graph"))
            }
        }
    }
}

/// How a scenario file specifies the per-user weights: explicitly, or by a
/// preset protocol that also fixes the remaining ingredients (which
/// explicit keys in the same file then override).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamsSpec {
    Protocol {
        protocol: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Explicit {
        alpha: Vec<f64>,
        beta: Vec<f64>,
        gamma: Vec<f64>,
    },
}

/// How a scenario file specifies the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum X0Spec {
    /// Row-major attention matrix, users by influencers.
    Explicit { explicit: Vec<Vec<f64>> },
    /// Entries drawn uniformly from `[0, 1]` under this seed.
    Uniform { uniform_seed: u64 },
}

impl X0Spec {
    fn build(&self, n: usize, m: usize) -> Result<AttentionState> {
        match self {
            X0Spec::Explicit { explicit } => {
                AttentionState::from_rows(0, explicit).map_err(wrap_field("x0"))
            }
            X0Spec::Uniform { uniform_seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*uniform_seed);
                AttentionState::new(0, DMatrix::from_fn(n, m, |_, _| rng.random::<f64>()))
                    .map_err(wrap_field("x0"))
            }
        }
    }
}

/// The JSON scenario document. Every key is optional in the serde sense;
/// [`resolve`](ScenarioFile::resolve) enforces which combinations are
/// complete and reports the offending key otherwise.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioFile {
    /// Top-level seed: fallback for a protocol draw's seed, and recorded as
    /// the scenario's seed metadata.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<X0Spec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<u64>,
}

fn wrap_field(key: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::ScenarioField {
        key: key.to_string(),
        constraint: e.to_string(),
    }
}

fn missing(key: &str) -> Error {
    Error::ScenarioField {
        key: key.to_string(),
        constraint: "required key is missing".to_string(),
    }
}

impl ScenarioFile {
    /// Parses a JSON document; the error carries serde's line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario files always serialize");
        s.push('\n');
        s
    }

    /// The fully explicit document equivalent to `sc`; resolving it
    /// reproduces `sc` bit-for-bit.
    pub fn from_scenario(sc: &Scenario) -> Self {
        ScenarioFile {
            seed: Some(sc.seed()),
            graph: Some(GraphSpec::Explicit {
                rows: matrix_rows(sc.graph().matrix()),
            }),
            params: Some(ParamsSpec::Explicit {
                alpha: sc.params().alpha().iter().copied().collect(),
                beta: sc.params().beta().iter().copied().collect(),
                gamma: sc.params().gamma().iter().copied().collect(),
            }),
            quality: Some(sc.quality().vector().iter().copied().collect()),
            x0: Some(X0Spec::Explicit {
                explicit: matrix_rows(sc.initial_state().matrix()),
            }),
            horizon: Some(sc.horizon()),
            tol: Some(sc.tol()),
            record_every: Some(sc.record_every()),
        }
    }

    /// Validates and assembles the scenario this document describes.
    ///
    /// With protocol params, the protocol fixes every ingredient and any
    /// explicit key overrides it; the protocol's seed comes from the params
    /// entry or falls back to the top-level `seed`. With explicit params,
    /// `graph`, `quality`, and `x0` are required, and the run controls
    /// default to horizon 10000, tol 1e-10, record_every 1.
    pub fn resolve(&self) -> Result<Scenario> {
        let params_spec = self.params.as_ref().ok_or_else(|| missing("params"))?;
        match params_spec {
            ParamsSpec::Protocol { protocol, seed } => {
                let proto: Protocol = protocol.parse()?;
                let master = seed.or(self.seed).ok_or_else(|| Error::ScenarioField {
                    key: "params.seed".to_string(),
                    constraint: "a protocol draw needs a seed, either here or at the top level"
                        .to_string(),
                })?;
                let base = sample_scenario(proto, master)?;
                let p = match &self.graph {
                    Some(g) => g.build()?,
                    None => base.graph().clone(),
                };
                let q = match &self.quality {
                    Some(q) => QualityVector::new(q.clone()).map_err(wrap_field("quality"))?,
                    None => base.quality().clone(),
                };
                let x0 = match &self.x0 {
                    Some(spec) => spec.build(p.n(), q.m())?,
                    None => base.initial_state().clone(),
                };
                Scenario::new(
                    p,
                    base.params().clone(),
                    q,
                    x0,
                    self.horizon.unwrap_or(base.horizon()),
                    self.tol.unwrap_or(base.tol()),
                    master,
                    self.record_every.unwrap_or(base.record_every()),
                )
                .map_err(wrap_field("scenario"))
            }
            ParamsSpec::Explicit { alpha, beta, gamma } => {
                let params = ModelParams::new(alpha.clone(), beta.clone(), gamma.clone())
                    .map_err(wrap_field("params"))?;
                let p = self
                    .graph
                    .as_ref()
                    .ok_or_else(|| missing("graph"))?
                    .build()?;
                let q = QualityVector::new(self.quality.clone().ok_or_else(|| missing("quality"))?)
                    .map_err(wrap_field("quality"))?;
                let x0_spec = self.x0.as_ref().ok_or_else(|| missing("x0"))?;
                let x0 = x0_spec.build(p.n(), q.m())?;
                let seed = self.seed.unwrap_or(match x0_spec {
                    X0Spec::Uniform { uniform_seed } => *uniform_seed,
                    X0Spec::Explicit { .. } => 0,
                });
                Scenario::new(
                    p,
                    params,
                    q,
                    x0,
                    self.horizon.unwrap_or(DEFAULT_FILE_HORIZON),
                    self.tol.unwrap_or(DEFAULT_FILE_TOL),
                    seed,
                    self.record_every.unwrap_or(DEFAULT_FILE_RECORD_EVERY),
                )
                .map_err(wrap_field("scenario"))
            }
        }
    }
}

/// Row-major nested rows of a dense matrix.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|v| (0..m.ncols()).map(|w| m[(v, w)]).collect())
        .collect()
}

/// Formats one double with 17 significant digits, the exact-round-trip
/// width.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// The state time series as CSV `t,user,influencer,x`.
pub fn state_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,user,influencer,x\n");
    for (idx, s) in traj.states().iter().enumerate() {
        let t = traj.times()[idx];
        for v in 0..s.users() {
            for i in 0..s.influencers() {
                let _ = writeln!(out, "{t},{v},{i},{}", fmt_f64(s.get(v, i)));
            }
        }
    }
    out
}

/// The popularity time series as CSV `t,influencer,pi`.
pub fn popularity_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,influencer,pi\n");
    for (idx, pi) in traj.popularity().iter().enumerate() {
        let t = traj.times()[idx];
        for i in 0..pi.m() {
            let _ = writeln!(out, "{t},{i},{}", fmt_f64(pi.get(i)));
        }
    }
    out
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn certificate_value(cert: &StabilityCertificate) -> Value {
    json!({
        "regime": cert.regime.to_string(),
        "deficiency": cert.deficiency.iter().collect::<Vec<_>>(),
        "deficiency_nonempty": cert.deficiency_nonempty,
        "all_reach_deficient": cert.all_reach_deficient,
        "aperiodic_deficient": cert.aperiodic_deficient.iter().collect::<Vec<_>>(),
        "all_reach_aperiodic_deficient": cert.all_reach_aperiodic_deficient,
        "rho_ap": cert.rho_ap,
        "schur_stable": cert.schur_stable,
        "q_tot_at_least_one": cert.q_tot_at_least_one,
        "z0_at_least_one": cert.z0_at_least_one,
        "hypotheses_met": cert.hypotheses_met,
    })
}

/// A convergence report as pretty-printed JSON, terminal records included.
pub fn report_json(report: &ConvergenceReport) -> String {
    let terminal = &report.terminal_state;
    let value = json!({
        "converged": report.converged,
        "t_converged": report.t_converged,
        "estimated_rate": report.estimated_rate,
        "theory_delta": report.theory_delta,
        "regime": report.regime.map(|r| r.to_string()),
        "warnings": report.warnings,
        "terminal": {
            "t": terminal.t(),
            "popularity": vec_of(report.terminal_popularity.vector()),
            "state_rows": matrix_rows(terminal.matrix()),
            "totals": vec_of(terminal.totals().vector()),
            "consensus_gap": vec_of(&consensus_gap(terminal)),
        },
        "certificate": report.certificate.as_ref().map(certificate_value),
    });
    pretty(&value)
}

/// The equilibrium summary of a scenario: regime, hypothesis certificate,
/// spectral data, and the regime's predicted limit, all without simulating.
/// The boolean reports whether the dispatched regime's hypotheses are met
/// (false as well when the weight pattern is ambiguous), which is what the
/// command line turns into its exit code.
pub fn equilibrium_json(sc: &Scenario) -> Result<(String, bool)> {
    let params = sc.params();
    let p = sc.graph();
    let q = sc.quality();
    let mut warnings: Vec<String> = Vec::new();

    let regime = match detect_regime(params) {
        Ok(r) => Some(r),
        Err(Error::AmbiguousRegime) => {
            warnings
                .push("more than one weight vector vanishes; no single regime applies".to_string());
            None
        }
        Err(e) => return Err(e),
    };
    // All special regimes certify the same alpha-deficiency structure, so
    // an ambiguous pattern still gets a meaningful certificate.
    let cert_regime = regime.unwrap_or(Regime::NoQuality);
    let z0 = sc.initial_state().totals();
    let cert = schur_certificate(params, p, cert_regime, Some(q.total()), Some(&z0))?;

    let spectral = match augmented_limit(params, p, q.total()) {
        Ok(sys) => Some(sys),
        Err(e) => {
            warnings.push(format!("totals fixed point unavailable: {e}"));
            None
        }
    };

    let fixed_point = match regime {
        Some(Regime::NoNetwork) => match no_network_limit(params, q) {
            Ok((pi, x)) => json!({
                "pi": vec_of(pi.vector()),
                "x_rows": matrix_rows(x.matrix()),
                "rate": no_network_rate(params, q)?,
            }),
            Err(e) => {
                warnings.push(format!("limit unavailable: {e}"));
                Value::Null
            }
        },
        Some(Regime::NoQuality) => {
            match consensus_functional(params, p, &z0, PRODUCT_HORIZON, PRODUCT_TOL) {
                Ok(phi) => {
                    let phi_tilde = spectral
                        .as_ref()
                        .map(|sys| {
                            let u = RowStochasticMatrix::from_raw(&sys.u_tilde)?;
                            stationary_distribution(&u)
                        })
                        .transpose()?;
                    let consensus: Result<Vec<f64>> = (0..q.m())
                        .map(|i| Ok(phi.dot(&sc.initial_state().augmented(i)?)))
                        .collect();
                    json!({
                        "phi": vec_of(&phi),
                        "phi_tilde": phi_tilde.as_ref().map(vec_of),
                        "phi_gap_l1": phi_tilde.as_ref().map(|pt| (&phi - pt).abs().sum()),
                        "consensus": consensus?,
                    })
                }
                Err(e) => {
                    warnings.push(format!("consensus weights unavailable: {e}"));
                    Value::Null
                }
            }
        }
        Some(Regime::NoRecommendation) => {
            let flats: Result<Vec<f64>> = (0..q.m())
                .map(|i| Ok(fj_decoupled_fixed_point(params, p, q, i)?[0]))
                .collect();
            match flats {
                Ok(flat) => {
                    let pi: Option<Vec<f64>> = if q.total() >= ZERO_CUTOFF {
                        Some((0..q.m()).map(|i| q.get(i) / q.total()).collect())
                    } else {
                        None
                    };
                    json!({ "x_flat": flat, "pi": pi })
                }
                Err(e) => {
                    warnings.push(format!("limit unavailable: {e}"));
                    Value::Null
                }
            }
        }
        Some(Regime::General) => match &spectral {
            Some(sys) => {
                let points: Result<Vec<Vec<f64>>> = (0..q.m())
                    .map(|i| Ok(vec_of(&general_fixed_point(sys, q, i)?)))
                    .collect();
                match points {
                    Ok(augmented) => json!({ "augmented": augmented }),
                    Err(e) => {
                        warnings.push(format!("limit unavailable: {e}"));
                        Value::Null
                    }
                }
            }
            None => Value::Null,
        },
        None => Value::Null,
    };

    let hypotheses_met = regime.is_some() && cert.hypotheses_met;
    let value = json!({
        "regime": regime.map(|r| r.to_string()).unwrap_or_else(|| "ambiguous".to_string()),
        "z_star": spectral.as_ref().map(|s| vec_of(&s.z_star)),
        "lambda1": spectral.as_ref().map(|s| s.lambda1),
        "lambda2": spectral.as_ref().map(|s| s.lambda2),
        "rho_u": spectral.as_ref().map(|s| s.rho_u),
        "hypotheses": certificate_value(&cert),
        "fixed_point": fixed_point,
        "warnings": warnings,
    });
    Ok((pretty(&value), hypotheses_met))
}

fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}
