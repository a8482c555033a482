//! Command-line front end: loads or generates a matrix, runs an estimator
//! or an exact oracle, and prints a JSON report with a reproducibility
//! manifest. Exit codes: 0 success, 2 usage or input error, 3 numerical
//! failure, 4 no exact oracle applies.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use spectra_count::estimators::{
    estimate_count_arnoldi, estimate_count_chebyshev, estimate_count_lanczos,
    estimate_interval_count, exact_count, CountConfig, EstimateReport, Method, RngKind,
};
use spectra_count::precond::{
    as_unfactored, ildl_factorize, make_abs_diagonal, make_abs_ildl, FactoredPreconditioner,
};
use spectra_count::sparse::{gen_laplace_2d, read_matrix_market, CsrMatrix};
use spectra_count::Error;

const EXIT_USAGE: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;
const EXIT_NO_ORACLE: i32 = 4;

#[derive(Parser)]
#[command(name = "spectra-count", version, about = "Estimates eigenvalue counts of sparse symmetric matrices in intervals")]
struct Cli {
    /// Cap on sample-loop parallelism (default: all cores). Results are
    /// identical for any value.
    #[arg(long, global = true, env = "SPECTRA_COUNT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Stochastic count estimate at a shift or inside an interval.
    Count(CountArgs),
    /// Exact count from an oracle (analytic Laplacian spectrum or dense
    /// factorization for small matrices).
    Exact(ExactArgs),
    /// Repeated count runs over a parameter grid.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct MatrixArgs {
    /// Matrix Market file with a real symmetric matrix.
    #[arg(long, conflicts_with = "gen_laplace")]
    matrix: Option<PathBuf>,

    /// Generate the 2D Laplacian on a (2^s - 1)^2 grid instead.
    #[arg(long)]
    gen_laplace: Option<u32>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Lanczos,
    LanczosGa,
    Arnoldi,
    Chebyshev,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Lanczos => Method::Lanczos,
            MethodArg::LanczosGa => Method::LanczosGa,
            MethodArg::Arnoldi => Method::Arnoldi,
            MethodArg::Chebyshev => Method::Chebyshev,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum PrecondArg {
    None,
    Absdiag,
    Ildl,
    LdlExact,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum RngArg {
    Gaussian,
    Rademacher,
}

#[derive(Args, Clone)]
struct CountArgs {
    #[command(flatten)]
    matrix: MatrixArgs,

    /// Count eigenvalues below this shift.
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["xi", "eta"])]
    tau: Option<f64>,

    /// Lower interval endpoint (with --eta: count inside (xi, eta)).
    #[arg(long, allow_hyphen_values = true, requires = "eta")]
    xi: Option<f64>,

    /// Upper interval endpoint.
    #[arg(long, allow_hyphen_values = true, requires = "xi")]
    eta: Option<f64>,

    #[arg(long, value_enum, default_value = "lanczos")]
    method: MethodArg,

    #[arg(long, value_enum, default_value = "none")]
    precond: PrecondArg,

    /// Drop tolerance for --precond ildl.
    #[arg(long, default_value_t = 1e-3)]
    drop_tol: f64,

    /// Krylov steps per sample (Chebyshev: polynomial degree).
    #[arg(long, default_value_t = 16)]
    k: usize,

    /// Number of random samples.
    #[arg(long, default_value_t = 50)]
    m: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, value_enum, default_value = "gaussian")]
    rng: RngArg,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    matrix: MatrixArgs,

    #[arg(long, allow_hyphen_values = true)]
    tau: f64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SweepOver {
    K,
    Mesh,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    base: CountArgs,

    /// Parameter the sweep varies: k (Krylov steps / degree) or mesh
    /// (Laplacian parameter s, implies --gen-laplace per point).
    #[arg(long, value_enum)]
    over: SweepOver,

    /// Comma-separated grid values.
    #[arg(long, value_delimiter = ',')]
    values: Vec<u64>,
}

#[derive(Serialize)]
struct Timings {
    factorize_s: f64,
    samples_s: f64,
    total_s: f64,
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::OracleUnavailable(_) => EXIT_NO_ORACLE,
        Error::Io(_)
        | Error::Parse { .. }
        | Error::NotSquare { .. }
        | Error::UnsupportedField(_)
        | Error::NotSymmetric { .. }
        | Error::InvalidStructure(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

fn fail(msg: &str, code: i32) -> ! {
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({ "error": msg })).unwrap()
    );
    std::process::exit(code);
}

struct Problem {
    matrix: CsrMatrix,
    laplace_s: Option<u32>,
    provenance: Value,
}

fn load_problem(args: &MatrixArgs) -> Problem {
    match (&args.matrix, args.gen_laplace) {
        (Some(path), None) => {
            let bytes = match std::fs::read(path) {
                Ok(b) => b,
                Err(e) => fail(&format!("cannot read {}: {e}", path.display()), EXIT_USAGE),
            };
            let matrix = match read_matrix_market(path) {
                Ok(m) => m,
                Err(e) => fail(&e.to_string(), exit_code_for(&e)),
            };
            let digest = Sha256::digest(&bytes);
            Problem {
                matrix,
                laplace_s: None,
                provenance: json!({
                    "path": path.display().to_string(),
                    "sha256": format!("{digest:x}"),
                }),
            }
        }
        (None, Some(s)) => Problem {
            matrix: gen_laplace_2d(s),
            laplace_s: Some(s),
            provenance: json!({ "generator": "laplace2d", "s": s }),
        },
        _ => fail("exactly one of --matrix or --gen-laplace is required", EXIT_USAGE),
    }
}

fn precond_label(p: PrecondArg, drop_tol: f64) -> String {
    match p {
        PrecondArg::None => "none".into(),
        PrecondArg::Absdiag => "absdiag".into(),
        PrecondArg::Ildl => format!("ildl({drop_tol})"),
        PrecondArg::LdlExact => "ldl-exact".into(),
    }
}

fn build_precond(
    a: &CsrMatrix,
    tau: f64,
    p: PrecondArg,
    drop_tol: f64,
) -> Result<FactoredPreconditioner, Error> {
    Ok(match p {
        PrecondArg::None => FactoredPreconditioner::identity(a.dim()),
        PrecondArg::Absdiag => make_abs_diagonal(a, tau),
        PrecondArg::Ildl => make_abs_ildl(ildl_factorize(a, tau, drop_tol)?),
        PrecondArg::LdlExact => make_abs_ildl(ildl_factorize(a, tau, 0.0)?),
    })
}

fn count_config(args: &CountArgs, tau: f64) -> CountConfig {
    CountConfig {
        tau,
        k: args.k,
        m: args.m,
        seed: args.seed,
        method: args.method.into(),
        rng: match args.rng {
            RngArg::Gaussian => RngKind::Gaussian,
            RngArg::Rademacher => RngKind::Rademacher,
        },
        precond: precond_label(args.precond, args.drop_tol),
    }
}

/// One estimator run at a single shift; returns the report and the
/// preconditioner setup time.
fn run_single(
    problem: &Problem,
    args: &CountArgs,
    tau: f64,
) -> Result<(EstimateReport, f64), Error> {
    let cfg = count_config(args, tau);
    let t0 = Instant::now();
    match cfg.method {
        Method::Chebyshev => {
            let mut rep = estimate_count_chebyshev(&problem.matrix, &cfg, cfg.k)?;
            if args.precond != PrecondArg::None {
                rep.warnings.push(
                    "the Chebyshev baseline is unpreconditioned; --precond ignored".into(),
                );
            }
            Ok((rep, 0.0))
        }
        Method::Arnoldi => {
            let p = build_precond(&problem.matrix, tau, args.precond, args.drop_tol)?;
            let mut rep_warn = boost_warning(&p);
            let t = as_unfactored(p);
            let factorize_s = t0.elapsed().as_secs_f64();
            let mut rep = estimate_count_arnoldi(&problem.matrix, &cfg, &t)?;
            rep.warnings.append(&mut rep_warn);
            Ok((rep, factorize_s))
        }
        Method::Lanczos | Method::LanczosGa => {
            let p = build_precond(&problem.matrix, tau, args.precond, args.drop_tol)?;
            let factorize_s = t0.elapsed().as_secs_f64();
            let mut rep = estimate_count_lanczos(&problem.matrix, &cfg, &p)?;
            rep.warnings.extend(boost_warning(&p));
            Ok((rep, factorize_s))
        }
    }
}

fn boost_warning(p: &FactoredPreconditioner) -> Vec<String> {
    if p.boosted_pivots > 0 {
        vec![format!("{} pivot(s) boosted during factorization", p.boosted_pivots)]
    } else {
        Vec::new()
    }
}

fn manifest(
    problem: &Problem,
    cfg: &CountConfig,
    interval: Option<[f64; 2]>,
    timings: Timings,
) -> Value {
    let mut m = json!({
        "config": serde_json::to_value(cfg).unwrap(),
        "provenance": problem.provenance,
        "version": env!("CARGO_PKG_VERSION"),
        "timings": serde_json::to_value(timings).unwrap(),
    });
    if let Some([xi, eta]) = interval {
        m["interval"] = json!([xi, eta]);
    }
    m
}

fn cmd_count(args: &CountArgs) -> Result<Value, Error> {
    let problem = load_problem(&args.matrix);
    let total0 = Instant::now();
    match (args.tau, args.xi, args.eta) {
        (Some(tau), None, None) => {
            let t_samples = Instant::now();
            let (report, factorize_s) = run_single(&problem, args, tau)?;
            let samples_s = t_samples.elapsed().as_secs_f64() - factorize_s;
            let mut doc = serde_json::to_value(&report).unwrap();
            doc["manifest"] = manifest(
                &problem,
                &report.config,
                None,
                Timings {
                    factorize_s,
                    samples_s,
                    total_s: total0.elapsed().as_secs_f64(),
                },
            );
            Ok(doc)
        }
        (None, Some(xi), Some(eta)) => {
            if xi >= eta {
                fail("--xi must be strictly less than --eta", EXIT_USAGE);
            }
            let cfg = count_config(args, xi);
            let t_fact = Instant::now();
            let p_lo = build_precond(&problem.matrix, xi, args.precond, args.drop_tol)?;
            let p_hi = build_precond(&problem.matrix, eta, args.precond, args.drop_tol)?;
            let factorize_s = t_fact.elapsed().as_secs_f64();
            let t_samples = Instant::now();
            let interval =
                estimate_interval_count(&problem.matrix, xi, eta, &cfg, p_lo, p_hi)?;
            let samples_s = t_samples.elapsed().as_secs_f64();
            let mut doc = serde_json::to_value(&interval).unwrap();
            doc["manifest"] = manifest(
                &problem,
                &cfg,
                Some([xi, eta]),
                Timings {
                    factorize_s,
                    samples_s,
                    total_s: total0.elapsed().as_secs_f64(),
                },
            );
            Ok(doc)
        }
        _ => fail("either --tau or both --xi and --eta are required", EXIT_USAGE),
    }
}

fn cmd_exact(args: &ExactArgs) -> Result<Value, Error> {
    let problem = load_problem(&args.matrix);
    let count = exact_count(&problem.matrix, problem.laplace_s, args.tau)?;
    Ok(json!({ "count": count }))
}

fn cmd_sweep(args: &SweepArgs) -> Result<Value, Error> {
    if args.values.is_empty() {
        fail("--values must list at least one grid point", EXIT_USAGE);
    }
    if args.over == SweepOver::Mesh && args.base.matrix.matrix.is_some() {
        fail("--over mesh generates Laplacians; --matrix does not apply", EXIT_USAGE);
    }
    let tau = match args.base.tau {
        Some(t) => t,
        None => fail("sweep requires --tau", EXIT_USAGE),
    };
    let mut points = Vec::new();
    for &value in &args.values {
        let outcome = match args.over {
            SweepOver::K => {
                let mut point_args = args.base.clone();
                point_args.k = value as usize;
                let problem = load_problem(&args.base.matrix);
                run_single(&problem, &point_args, tau)
            }
            SweepOver::Mesh => {
                let mut matrix_args = args.base.matrix.clone();
                matrix_args.gen_laplace = Some(value as u32);
                let problem = load_problem(&matrix_args);
                run_single(&problem, &args.base, tau)
            }
        };
        let entry = match outcome {
            Ok((report, _)) => {
                let mut v = serde_json::to_value(&report).unwrap();
                v["point"] = json!(value);
                v
            }
            // A failing point is recorded; the sweep continues.
            Err(e) => json!({ "point": value, "error": e.to_string() }),
        };
        points.push(entry);
    }
    Ok(Value::Array(points))
}

fn main() {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => fail(&format!("cannot build thread pool: {e}"), EXIT_USAGE),
    };
    let result = pool.install(|| match &cli.cmd {
        Cmd::Count(args) => cmd_count(args),
        Cmd::Exact(args) => cmd_exact(args),
        Cmd::Sweep(args) => cmd_sweep(args),
    });
    match result {
        Ok(doc) => println!("{}", serde_json::to_string_pretty(&doc).unwrap()),
        Err(e) => fail(&e.to_string(), exit_code_for(&e)),
    }
}
