//! Command line for the popularity-dynamics toolkit.
//!
//! Subcommands cover the full workflow: `simulate` runs scenario files and
//! writes plot-ready CSVs plus a convergence report, `equilibrium` prints
//! the closed-form predictions and stability certificate without
//! simulating, `verify` runs both and compares them, `series` exposes the
//! power-sum closed form, and `gen-graph` draws a reusable random graph.
//!
//! Exit codes: 0 success; 2 unreadable or invalid input; 3 model or
//! runtime failure; 4 equilibrium hypotheses unmet (output still printed);
//! 5 verification failure (report still written). A batch run exits with
//! the worst per-scenario code.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use popdyn::error::Error;
use popdyn::graph::RowStochasticMatrix;
use popdyn::io::{
    equilibrium_json, matrix_rows, popularity_csv, report_json, state_csv, GraphSpec, ParamsSpec,
    ScenarioFile, X0Spec,
};
use popdyn::series::{power_series_sum, series_polynomial};
use popdyn::sim::{detect_convergence, simulate, verify_regime, Scenario, DEFAULT_WINDOW};

const EXIT_INPUT: u8 = 2;
const EXIT_MODEL: u8 = 3;
const EXIT_HYPOTHESES: u8 = 4;
const EXIT_VERIFY: u8 = 5;

#[derive(Parser)]
#[command(
    name = "popdyn",
    version,
    about = "Simulate and analyze coupled popularity dynamics on user networks"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Directory artifacts are written into; with several scenario files,
    /// each gets its own subdirectory named after the file stem
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Replace the scenario's sampling seeds (top-level seed, protocol
    /// seed, and uniform-x0 seed; an explicit random-graph seed is data
    /// and stays put)
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Worker threads when several scenario files are given
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenario files and write trajectory CSVs, a convergence report,
    /// and a run manifest
    Simulate {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
    },
    /// Print the regime, stability certificate, and predicted limits as
    /// JSON, without simulating
    Equilibrium { scenario: PathBuf },
    /// Simulate, then compare the terminal state against the predicted
    /// limits; exits 0 only when they agree within 100x the scenario tol
    Verify {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
    },
    /// Print the closed form of sum_{k>=0} k^n lambda^k, its polynomial
    /// coefficients, and a brute-force partial-sum cross-check
    Series { n: usize, lambda: f64 },
    /// Draw a seeded random row-stochastic graph and print it in the
    /// explicit form scenario files accept
    GenGraph { n: usize, p: f64, seed: u64 },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Simulate { scenarios } => {
            run_batch(scenarios, &cli.global, "simulate", simulate_one)
        }
        Command::Verify { scenarios } => run_batch(scenarios, &cli.global, "verify", verify_one),
        Command::Equilibrium { scenario } => run_equilibrium(scenario, &cli.global),
        Command::Series { n, lambda } => run_series(*n, *lambda),
        Command::GenGraph { n, p, seed } => run_gen_graph(*n, *p, *seed),
    };
    ExitCode::from(code)
}

/// A scenario together with its provenance: source path and input digest.
struct Loaded {
    scenario: Scenario,
    path: PathBuf,
    digest: String,
    seed_override: Option<u64>,
}

fn fail(code: u8, msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    code
}

/// Write to stdout without panicking when the reader closes the pipe
/// early (say, `popdyn gen-graph 50 0.3 1 | head`). A closed pipe means
/// the reader already has everything it wanted, so the process ends
/// quietly; any other write error is a real failure.
fn emit(text: std::fmt::Arguments) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_fmt(text).and_then(|()| out.flush()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: writing stdout: {e}");
        std::process::exit(i32::from(EXIT_MODEL));
    }
}

/// Input-shaped errors exit 2; everything else is a model/runtime failure.
fn classify(e: &Error) -> u8 {
    match e {
        Error::Json(_)
        | Error::ScenarioField { .. }
        | Error::UnknownProtocol(_)
        | Error::Domain(_)
        | Error::DimensionMismatch { .. }
        | Error::NonSquare { .. }
        | Error::NegativeEntry { .. }
        | Error::ZeroRow { .. }
        | Error::NodeOutOfRange { .. } => EXIT_INPUT,
        _ => EXIT_MODEL,
    }
}

fn load_scenario(path: &Path, seed_override: Option<u64>) -> Result<Loaded, u8> {
    let bytes =
        fs::read(path).map_err(|e| fail(EXIT_INPUT, format_args!("{}: {e}", path.display())))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let text = String::from_utf8(bytes)
        .map_err(|e| fail(EXIT_INPUT, format_args!("{}: {e}", path.display())))?;
    let mut file = ScenarioFile::from_json(&text)
        .map_err(|e| fail(classify(&e), format_args!("{}: {e}", path.display())))?;
    if let Some(seed) = seed_override {
        apply_seed_override(&mut file, seed);
    }
    let scenario = file
        .resolve()
        .map_err(|e| fail(classify(&e), format_args!("{}: {e}", path.display())))?;
    Ok(Loaded {
        scenario,
        path: path.to_path_buf(),
        digest,
        seed_override,
    })
}

fn apply_seed_override(file: &mut ScenarioFile, seed: u64) {
    file.seed = Some(seed);
    if let Some(ParamsSpec::Protocol { seed: s, .. }) = &mut file.params {
        *s = Some(seed);
    }
    if let Some(X0Spec::Uniform { uniform_seed }) = &mut file.x0 {
        *uniform_seed = seed;
    }
}

fn run_batch(
    paths: &[PathBuf],
    global: &GlobalArgs,
    command: &str,
    per_scenario: fn(&Loaded, &Path, &str) -> u8,
) -> u8 {
    let multi = paths.len() > 1;
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(global.jobs.max(1))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => return fail(EXIT_MODEL, e),
    };
    let codes: Vec<u8> = pool.install(|| {
        paths
            .par_iter()
            .map(|path| {
                let dir = if multi {
                    let stem = path
                        .file_stem()
                        .map(|s| s.to_os_string())
                        .unwrap_or_else(|| "scenario".into());
                    global.out_dir.join(stem)
                } else {
                    global.out_dir.clone()
                };
                match load_scenario(path, global.seed_override) {
                    Ok(loaded) => per_scenario(&loaded, &dir, command),
                    Err(code) => code,
                }
            })
            .collect()
    });
    codes.into_iter().max().unwrap_or(0)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), u8> {
    fs::write(dir.join(name), text)
        .map_err(|e| fail(EXIT_MODEL, format_args!("writing {name}: {e}")))
}

fn write_manifest(loaded: &Loaded, dir: &Path, command: &str, outputs: &[&str]) -> Result<(), u8> {
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "scenario_path": loaded.path.display().to_string(),
        "scenario_digest_sha256": loaded.digest,
        "seed": loaded.scenario.seed(),
        "seed_override": loaded.seed_override,
        "outputs": outputs,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifests always serialize");
    text.push('\n');
    write_text(dir, "manifest.json", &text)
}

fn simulate_one(loaded: &Loaded, dir: &Path, command: &str) -> u8 {
    let sc = &loaded.scenario;
    if let Err(e) = fs::create_dir_all(dir) {
        return fail(EXIT_MODEL, format_args!("creating {}: {e}", dir.display()));
    }
    let traj = match simulate(sc) {
        Ok(traj) => traj,
        Err(e) => return fail(classify(&e), format_args!("{}: {e}", loaded.path.display())),
    };
    // Short recordings shrink the window so the report stays honest
    // instead of erroring out.
    let window = DEFAULT_WINDOW.min(traj.len().saturating_sub(1)).max(1);
    let report = match detect_convergence(&traj, sc.tol(), window) {
        Ok(report) => report,
        Err(e) => return fail(classify(&e), format_args!("{}: {e}", loaded.path.display())),
    };
    let steps: [(&str, String); 3] = [
        ("x.csv", state_csv(&traj)),
        ("pi.csv", popularity_csv(&traj)),
        ("report.json", report_json(&report)),
    ];
    for (name, text) in &steps {
        if let Err(code) = write_text(dir, name, text) {
            return code;
        }
    }
    if let Err(code) = write_manifest(loaded, dir, command, &["x.csv", "pi.csv", "report.json"]) {
        return code;
    }
    emit(format_args!(
        "{}: {} records, converged = {} -> {}\n",
        loaded.path.display(),
        traj.len(),
        report.converged,
        dir.display()
    ));
    0
}

fn verify_one(loaded: &Loaded, dir: &Path, command: &str) -> u8 {
    let sc = &loaded.scenario;
    if let Err(e) = fs::create_dir_all(dir) {
        return fail(EXIT_MODEL, format_args!("creating {}: {e}", dir.display()));
    }
    let report = match verify_regime(sc) {
        Ok(report) => report,
        Err(e) => return fail(classify(&e), format_args!("{}: {e}", loaded.path.display())),
    };
    if let Err(code) = write_text(dir, "report.json", &report_json(&report)) {
        return code;
    }
    if let Err(code) = write_manifest(loaded, dir, command, &["report.json"]) {
        return code;
    }
    let gate = sc.tol() * 1e2;
    let verdict = match report.theory_delta {
        Some(delta) if delta <= gate => "ok",
        Some(_) => "theory mismatch",
        None => "no prediction",
    };
    emit(format_args!(
        "{}: regime = {}, theory_delta = {}, gate = {gate:e}: {verdict}\n",
        loaded.path.display(),
        report
            .regime
            .map(|r| r.to_string())
            .unwrap_or_else(|| "none".to_string()),
        report
            .theory_delta
            .map(|d| format!("{d:e}"))
            .unwrap_or_else(|| "none".to_string()),
    ));
    for warning in &report.warnings {
        eprintln!("warning: {}: {warning}", loaded.path.display());
    }
    if verdict == "ok" {
        0
    } else {
        EXIT_VERIFY
    }
}

fn run_equilibrium(path: &Path, global: &GlobalArgs) -> u8 {
    let loaded = match load_scenario(path, global.seed_override) {
        Ok(loaded) => loaded,
        Err(code) => return code,
    };
    match equilibrium_json(&loaded.scenario) {
        Ok((text, hypotheses_met)) => {
            emit(format_args!("{text}"));
            if hypotheses_met {
                0
            } else {
                EXIT_HYPOTHESES
            }
        }
        Err(e) => fail(classify(&e), format_args!("{}: {e}", path.display())),
    }
}

fn run_series(n: usize, lambda: f64) -> u8 {
    if !(lambda > 0.0 && lambda < 1.0) {
        return fail(
            EXIT_INPUT,
            format_args!("lambda must lie strictly inside (0, 1), got {lambda}"),
        );
    }
    let value = match power_series_sum(n, lambda) {
        Ok(value) => value,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    let coefficients: Option<Vec<f64>> = if n == 0 {
        None
    } else {
        match series_polynomial(n) {
            Ok(poly) => Some(poly.coefficients().to_vec()),
            Err(e) => return fail(EXIT_INPUT, e),
        }
    };
    let (partial_sum, terms) = brute_force_sum(n, lambda);
    let relative_difference = (value - partial_sum).abs() / value.abs().max(f64::MIN_POSITIVE);
    let out = serde_json::json!({
        "n": n,
        "lambda": lambda,
        "value": value,
        "coefficients": coefficients,
        "partial_sum": partial_sum,
        "terms": terms,
        "relative_difference": relative_difference,
    });
    emit(format_args!(
        "{}\n",
        serde_json::to_string_pretty(&out).expect("series output always serializes")
    ));
    0
}

/// Partial sums of `k^n lambda^k` until the terms stop mattering at
/// double precision.
fn brute_force_sum(n: usize, lambda: f64) -> (f64, usize) {
    let mut sum = 0.0f64;
    let mut k = 0usize;
    loop {
        let term = (k as f64).powi(n as i32) * lambda.powi(k as i32);
        sum += term;
        k += 1;
        if k > n && term <= sum * 1e-18 || k > 1_000_000 {
            return (sum, k);
        }
    }
}

fn run_gen_graph(n: usize, p: f64, seed: u64) -> u8 {
    match RowStochasticMatrix::erdos_renyi(n, p, seed) {
        Ok(graph) => {
            let spec = GraphSpec::Explicit {
                rows: matrix_rows(graph.matrix()),
            };
            emit(format_args!(
                "{}\n",
                serde_json::to_string_pretty(&spec).expect("graphs always serialize")
            ));
            0
        }
        Err(e) => fail(EXIT_INPUT, e),
    }
}
