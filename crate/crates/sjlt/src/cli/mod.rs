//! Command-line surface: parameter planning, batch embedding of vector
//! files, the verification suites, and timing/bit benchmarks.
//!
//! Exit codes: 0 success, 1 verification check failed, 2 usage or
//! validation error, 3 planner refuses (no useful reduction). The
//! `SJLT_THREADS` environment variable caps the worker pool used for
//! per-vector parallelism.

pub mod vecfile;

use crate::randbits::BitSource;
use crate::transform::{self, EmbeddingPlan, KappaForm, PlanMode};
use crate::verify::{self, CheckReport, TestVectorSpec, VerifyError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::path::PathBuf;
use std::time::Instant;
use vecfile::{VecFileError, VectorFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NO_REDUCTION: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "sjlt",
    version,
    about = "Sparse fast Johnson-Lindenstrauss transform with bit-metered randomness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan embedding parameters and estimate the random bits needed.
    Plan(PlanArgs),
    /// Embed a vector file into the planned target dimension.
    Embed(EmbedArgs),
    /// Run verification suites and print one JSON record per check.
    Verify(VerifyArgs),
    /// Time embeddings and report bit usage as CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    L2,
    L1,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Input dimension (power of two).
    #[arg(long)]
    pub n: usize,
    /// Distortion parameter in (0, 1).
    #[arg(long)]
    pub eps: f64,
    /// Per-vector failure bound in (0, 1/2); the guarantee holds with
    /// probability 1 - 2 delta. Ignored when --points is given.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Plan for the l1 target instead of l2.
    #[arg(long)]
    pub l1: bool,
    /// Error split for the l1 target.
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    /// Plan for an N-point set (requires --fail).
    #[arg(long)]
    pub points: Option<u64>,
    /// Whole-set failure probability for --points.
    #[arg(long)]
    pub fail: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the 1-kappa^2 variant of the l1 row-weight formula.
    #[arg(long)]
    pub printed_kappa_form: bool,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Input vector file (binary SJLT1 or CSV, sniffed).
    #[arg(long)]
    pub input: PathBuf,
    /// Output vector file; same encoding as the input. A plan record is
    /// written next to it as <output>.plan.json.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum)]
    pub target: Target,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    #[arg(long)]
    pub points: Option<u64>,
    #[arg(long)]
    pub fail: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub printed_kappa_form: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Linf,
    Negcorr,
    Bernstein,
    Moments,
    Normal,
    Deviation,
    Endtoend,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    /// Monte Carlo trials per check.
    #[arg(long, default_value_t = 20_000)]
    pub trials: u64,
    /// Independent embeddings for the end-to-end checks.
    #[arg(long, default_value_t = 2_000)]
    pub seeds: u64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Input dimensions to benchmark.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = Target::L2)]
    pub target: Target,
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Vectors embedded per configuration when timing.
    #[arg(long, default_value_t = 8)]
    pub vectors: usize,
}

/// Entry point; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Ok(threads) = std::env::var("SJLT_THREADS") {
        match threads.parse::<usize>() {
            Ok(t) if t >= 1 => {
                // A later global build (e.g. second call in-process) is fine
                // to ignore; the first configuration wins.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            }
            _ => {
                eprintln!("SJLT_THREADS must be a positive integer, got {threads:?}");
                return EXIT_USAGE;
            }
        }
    }
    match cli.command {
        Command::Plan(args) => cmd_plan(args),
        Command::Embed(args) => cmd_embed(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn kappa_form(printed: bool) -> KappaForm {
    if printed {
        KappaForm::ComplementOfSquare
    } else {
        KappaForm::SquaredComplement
    }
}

/// Common planning flags resolved from a subcommand.
struct PlanRequest {
    n: usize,
    eps: f64,
    delta: Option<f64>,
    points: Option<u64>,
    fail: Option<f64>,
    l1: bool,
    kappa: f64,
    form: KappaForm,
    seed: u64,
}

/// Resolves (--delta | --points --fail) into a plan.
fn make_plan(req: &PlanRequest) -> Result<EmbeddingPlan, String> {
    let plan = match (req.points, req.fail) {
        (Some(points), Some(p)) => {
            let q = if req.l1 { 1 } else { 2 };
            transform::plan_for_pointset(req.n, points, req.eps, p, q, req.kappa, req.form)
                .map_err(|e| e.to_string())?
        }
        (None, None) => {
            let delta = req
                .delta
                .ok_or("either --delta or --points/--fail is required")?;
            if req.l1 {
                transform::plan_l1_with_form(req.n, req.eps, delta, req.kappa, req.form)
                    .map_err(|e| e.to_string())?
            } else {
                transform::plan_l2(req.n, req.eps, delta).map_err(|e| e.to_string())?
            }
        }
        _ => return Err("--points and --fail must be given together".into()),
    };
    Ok(plan.with_seed(req.seed))
}

fn cmd_plan(args: PlanArgs) -> i32 {
    let plan = match make_plan(&PlanRequest {
        n: args.n,
        eps: args.eps,
        delta: args.delta,
        points: args.points,
        fail: args.fail,
        l1: args.l1,
        kappa: args.kappa,
        form: kappa_form(args.printed_kappa_form),
        seed: args.seed,
    }) {
        Ok(plan) => plan,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    print_plan(&plan);
    EXIT_OK
}

fn print_plan(plan: &EmbeddingPlan) {
    println!("n: {}", plan.n);
    println!("d: {}", plan.d);
    println!("k: {}", plan.k);
    println!("l: {}", plan.l);
    println!("q: {}", plan.q);
    println!("eps: {}", plan.eps);
    println!("delta: {:e}", plan.delta);
    if let Some(kappa) = plan.kappa {
        println!("kappa: {kappa}");
    }
    println!("mode: {}", plan.mode);
    if plan.mode == PlanMode::NoReduction {
        println!("estimated_bits: n/a (nothing to build)");
    } else {
        println!("estimated_bits: {:.0}", plan.estimated_bits());
    }
    println!("provenance:");
    for line in &plan.provenance {
        println!("  - {line}");
    }
}

fn cmd_embed(args: EmbedArgs) -> i32 {
    let input = match VectorFile::read(&args.input) {
        Ok(f) => f,
        Err(e @ (VecFileError::Io(_) | VecFileError::BadMagic)) => {
            eprintln!("error reading {}: {e}", args.input.display());
            return EXIT_USAGE;
        }
        Err(e) => {
            eprintln!("malformed vector file {}: {e}", args.input.display());
            return EXIT_USAGE;
        }
    };
    if input.dim == 0 {
        eprintln!("error: input vectors must have dimension >= 1");
        return EXIT_USAGE;
    }
    let n = input.dim.next_power_of_two();
    let plan = match make_plan(&PlanRequest {
        n,
        eps: args.eps,
        delta: args.delta,
        points: args.points,
        fail: args.fail,
        l1: args.target == Target::L1,
        kappa: args.kappa,
        form: kappa_form(args.printed_kappa_form),
        seed: args.seed,
    }) {
        Ok(plan) => plan,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    if plan.mode == PlanMode::NoReduction {
        eprintln!(
            "error: planner refuses at n={n}, eps={}, delta={:e}: the row-weight \
             bound exceeds n for every kappa, so the target dimension would be \
             at least proportional to n and the embedding would not reduce it",
            plan.eps, plan.delta
        );
        return EXIT_NO_REDUCTION;
    }
    let built = match transform::build_embedding(&plan, &BitSource::new(args.seed)) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let rows: Vec<&[f64]> = input.rows().collect();
    let embedded: Result<Vec<Vec<f64>>, _> = rows
        .par_iter()
        .map(|row| transform::apply(&built, row))
        .collect();
    let embedded = match embedded {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let out = VectorFile::from_rows(&embedded, plan.d, input.encoding);
    if let Err(e) = out.write(&args.output) {
        eprintln!("error writing {}: {e}", args.output.display());
        return EXIT_USAGE;
    }
    let sidecar = args.output.with_file_name(format!(
        "{}.plan.json",
        args.output
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into())
    ));
    let record = serde_json::json!({
        "plan": plan,
        "bit_report": built.report,
        "input": args.input.display().to_string(),
        "vectors": input.count(),
        "input_dim": input.dim,
        "output_dim": plan.d,
    });
    if let Err(e) = std::fs::write(&sidecar, format!("{:#}\n", record)) {
        eprintln!("error writing {}: {e}", sidecar.display());
        return EXIT_USAGE;
    }
    EXIT_OK
}

struct SuiteRun {
    reports: Vec<CheckReport>,
    failed: bool,
}

impl SuiteRun {
    fn new() -> Self {
        SuiteRun {
            reports: Vec::new(),
            failed: false,
        }
    }

    fn push(&mut self, report: CheckReport) {
        println!("{}", report.to_json_line());
        self.failed |= !report.passed;
        self.reports.push(report);
    }
}

fn run_verify_suites(args: &VerifyArgs) -> Result<SuiteRun, VerifyError> {
    let mut run = SuiteRun::new();
    let src = BitSource::new(args.seed);
    let trials = args.trials;

    let suite = args.suite;
    let want = |s: Suite| suite == s || suite == Suite::All;

    if want(Suite::Linf) {
        let n = args.n.unwrap_or(1024);
        let delta = args.delta.unwrap_or(0.05);
        run.push(verify::check_linf_flattening(n, delta, trials, &src.child(100))?);
    }
    if want(Suite::Negcorr) {
        let n = args.n.unwrap_or(8);
        let k = args.k.unwrap_or(3);
        run.push(verify::check_negative_correlation(n, k)?);
    }
    if want(Suite::Bernstein) {
        let n = args.n.unwrap_or(1024);
        let k = args.k.unwrap_or(256);
        let grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.5).collect();
        let spec = TestVectorSpec::flat(n, k);
        run.push(verify::check_sparse_bernstein(
            n,
            k,
            &spec,
            &grid,
            trials,
            &src.child(101),
        )?);
    }
    if want(Suite::Moments) {
        let n = args.n.unwrap_or(4096);
        let k = args.k.unwrap_or(1024);
        let spec = TestVectorSpec::flat(n, k);
        run.push(verify::check_moment_table(n, k, &spec, trials, &src.child(102))?);
    }
    if want(Suite::Normal) {
        let n = args.n.unwrap_or(4096);
        let k = args.k.unwrap_or(1024);
        let spec = TestVectorSpec::flat(n, k);
        run.push(verify::check_normal_approx(n, k, &spec, trials, &src.child(103))?);
    }
    if want(Suite::Deviation) {
        let n = args.n.unwrap_or(4096);
        let k = args.k.unwrap_or(1024);
        let d = args.d.unwrap_or(64);
        let plan = EmbeddingPlan::explicit(n, d, k, 2, args.seed)
            .map_err(VerifyError::Plan)?;
        let spec = TestVectorSpec::flat(n, k);
        run.push(verify::check_sum_deviation(&plan, &spec, trials, &src.child(104))?);
    }
    if want(Suite::Endtoend) {
        let n = args.n.unwrap_or(1024);
        let eps = args.eps.unwrap_or(0.5);
        let delta = args.delta.unwrap_or(0.05);
        let mut u_src = src.child(105);
        let mut u_set = vec![verify::basis_vector(n), verify::flat_vector(n)];
        for _ in 0..3 {
            u_set.push(verify::random_unit_vector(n, &mut u_src));
        }
        let l2 = transform::plan_l2(n, eps, delta)?.with_seed(args.seed);
        run.push(verify::check_end_to_end(&l2, &u_set, args.seeds)?);
        let l1 = transform::plan_l1(n, eps, delta, 0.5)?.with_seed(args.seed);
        run.push(verify::check_end_to_end(&l1, &u_set, args.seeds)?);
        run.push(verify::check_end_to_end_pointset(
            n, 10, eps, 0.5, 2, args.seeds, args.seed,
        )?);
    }
    Ok(run)
}

fn cmd_verify(args: VerifyArgs) -> i32 {
    match run_verify_suites(&args) {
        Ok(run) => {
            if run.failed {
                EXIT_CHECK_FAILED
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                VerifyError::Build(transform::BuildError::NoReduction) => EXIT_NO_REDUCTION,
                _ => EXIT_USAGE,
            }
        }
    }
}

fn cmd_bench(args: BenchArgs) -> i32 {
    println!("n,d,k,mode,time_us,bits");
    for &n in &args.n {
        let plan = match make_plan(&PlanRequest {
            n,
            eps: args.eps,
            delta: Some(args.delta),
            points: None,
            fail: None,
            l1: args.target == Target::L1,
            kappa: args.kappa,
            form: KappaForm::SquaredComplement,
            seed: args.seed,
        }) {
            Ok(plan) => plan,
            Err(msg) => {
                eprintln!("error at n={n}: {msg}");
                return EXIT_USAGE;
            }
        };
        if plan.mode == PlanMode::NoReduction {
            println!("{n},{},{},{},,", plan.d, plan.k, plan.mode);
            continue;
        }
        let built = match transform::build_embedding(&plan, &BitSource::new(args.seed)) {
            Ok(b) => b,
            Err(e) => {
                eprintln!("error at n={n}: {e}");
                return EXIT_USAGE;
            }
        };
        let mut u_src = BitSource::with_stream(args.seed, 424242);
        let vectors: Vec<Vec<f64>> = (0..args.vectors.max(1))
            .map(|_| verify::random_unit_vector(n, &mut u_src))
            .collect();
        // Warm pass, then timed pass over all vectors.
        for u in &vectors {
            let _ = transform::apply(&built, u);
        }
        let start = Instant::now();
        for u in &vectors {
            let _ = transform::apply(&built, u);
        }
        let per_vector_us = start.elapsed().as_secs_f64() * 1e6 / vectors.len() as f64;
        println!(
            "{n},{},{},{},{:.2},{}",
            plan.d,
            plan.k,
            plan.mode,
            per_vector_us,
            built.report.total()
        );
    }
    EXIT_OK
}
