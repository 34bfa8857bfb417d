//! Command-line driver: classify commuting-contraction tuples, run the full
//! dilation pipeline with its residual ledger, and run von Neumann
//! inequality experiments.
//!
//! Exit codes: 0 all checks pass, 1 a verification check fails, 2 a
//! construction or parse error (including class rejection).

use clap::{Args, Parser, Subcommand, ValueEnum};
use polydil::corpus::{self, GenSpec};
use polydil::json;
use polydil::par::with_jobs;
use polydil::tuple::{class_membership, is_brehmer, is_pure, is_szego, OperatorTuple, SubsetMask};
use polydil::verify::{von_neumann_check, PolySample, ResidualLedger};
use polydil::window::assemble_theorem;
use polydil::{Error, Tolerances};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "polydil", version, about = "Isometric dilation toolkit for commuting contraction tuples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a tuple and report its positivity classifications.
    Classify(CommonArgs),
    /// Run the dilation pipeline and verify every claimed identity.
    Dilate(DilateArgs),
    /// Check the von Neumann inequality on random polynomials.
    Vn(VnArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RecipeArg {
    Diagonal,
    PolyOfOne,
    ScaledUnitaries,
    JordanPair,
}

impl From<RecipeArg> for corpus::Recipe {
    fn from(r: RecipeArg) -> corpus::Recipe {
        match r {
            RecipeArg::Diagonal => corpus::Recipe::Diagonal,
            RecipeArg::PolyOfOne => corpus::Recipe::PolyOfOne,
            RecipeArg::ScaledUnitaries => corpus::Recipe::ScaledUnitaries,
            RecipeArg::JordanPair => corpus::Recipe::JordanPair,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Tuple JSON file ({dim, n, ops}); omit to use a generator recipe.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generator recipe used when no input file is given.
    #[arg(long, value_enum)]
    gen: Option<RecipeArg>,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of coordinates for generated tuples.
    #[arg(long, default_value_t = 3)]
    n: u32,
    /// Space dimension for generated tuples.
    #[arg(long, default_value_t = 3)]
    d: usize,
    /// Norm cap for generated tuples.
    #[arg(long, default_value_t = 0.5)]
    radius_cap: f64,
    /// Index p of the first distinguished coordinate (re-indexed to 1).
    #[arg(long, default_value_t = 1)]
    p: u32,
    /// Index q of the second distinguished coordinate (re-indexed to n).
    #[arg(long)]
    q: Option<u32>,
    /// Base residual tolerance for validation gates.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Write the machine-readable JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallelism hint (thread count); defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct DilateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Truncation degree N of the coefficient spaces.
    #[arg(long, default_value_t = 12)]
    degree: usize,
    /// Window bound M for the final dilation (requires N >= 2M).
    #[arg(long, default_value_t = 4)]
    window: usize,
}

#[derive(Args)]
struct VnArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of random polynomials.
    #[arg(long, default_value_t = 50)]
    samples: usize,
    /// Maximum degree per variable of the sampled polynomials.
    #[arg(long, default_value_t = 3)]
    poly_degree: usize,
    /// Torus grid points per variable for the supremum.
    #[arg(long, default_value_t = 64)]
    grid: usize,
}

fn load_tuple(args: &CommonArgs, tol: &Tolerances) -> Result<OperatorTuple, Error> {
    let mut t = match (&args.input, args.gen) {
        (Some(path), _) => json::read_tuple_file(path, tol)?.0,
        (None, Some(recipe)) => corpus::generate(&GenSpec {
            seed: args.seed,
            n: args.n,
            d: args.d,
            recipe: recipe.into(),
            radius_cap: args.radius_cap,
        })?,
        (None, None) => {
            return Err(Error::precondition(
                "provide --input <file> or --gen <recipe>",
            ))
        }
    };
    // Re-index (p, q) to (1, n): the pipeline is written for the first and
    // last coordinates; other pairs reduce to it by swapping.
    let n = t.n();
    let q = args.q.unwrap_or(n);
    if !(args.p >= 1 && args.p < q && q <= n) {
        return Err(Error::precondition("need 1 <= p < q <= n"));
    }
    t.ops.swap(0, (args.p - 1) as usize);
    t.ops.swap((n - 1) as usize, (q - 1) as usize);
    Ok(t)
}

fn write_report(out: &Option<PathBuf>, ledger: &ResidualLedger) -> Result<(), Error> {
    if let Some(path) = out {
        std::fs::write(path, json::to_json_pretty(ledger))
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn print_ledger(ledger: &ResidualLedger) {
    for e in &ledger.entries {
        println!(
            "{} {:45} residual {:.3e}  tol {:.1e}",
            if e.pass { "PASS" } else { "FAIL" },
            e.name,
            e.residual,
            e.tol
        );
    }
}

fn cmd_classify(args: &CommonArgs) -> Result<ResidualLedger, Error> {
    let tol = Tolerances::default();
    let t = load_tuple(args, &tol)?;
    let n = t.n();
    let mut ledger = ResidualLedger::new();
    let describe = |r: &Result<(), polydil::tuple::NegativityWitness>| match r {
        Ok(()) => ("true".to_string(), 0.0),
        Err(w) => (
            format!(
                "false (subset {:?}, eigenvalue {:.3e})",
                w.subset.indices(),
                w.min_eig
            ),
            -w.min_eig,
        ),
    };
    let (sz_text, sz_res) = describe(&is_szego(&t, &tol)?);
    ledger.push("szego_positive", "full-set positivity", sz_res, args.tol, &sz_text);
    let (br_text, br_res) = describe(&is_brehmer(&t, &tol)?);
    ledger.push("brehmer_positive", "all-subset positivity", br_res, args.tol, &br_text);
    let pure = is_pure(&t, 1e-9);
    println!("n = {}, dim = {}", n, t.dim);
    println!("szego positive:   {sz_text}");
    println!("brehmer positive: {br_text}");
    println!("pure:             {pure}");
    let class = class_membership(&t, 1, n, &tol)?;
    ledger.push(
        "class_membership",
        "both deleted sub-tuples Brehmer",
        (-class.worst_eig).max(0.0),
        args.tol,
        format!("member: {}", class.member),
    );
    println!("class (p, q):     {}", class.member);
    if n >= 2 {
        let mut worst = (0.0f64, 0.0f64);
        for g in SubsetMask::all(n - 1) {
            if !g.contains(1) {
                continue;
            }
            let (r1, r2) = polydil::tuple::check_defect_identity(&t, g, &tol)?;
            worst = (worst.0.max(r1), worst.1.max(r2));
        }
        ledger.push(
            "defect_identity",
            "glued-tuple defect decomposition",
            worst.0.max(worst.1),
            1e-10,
            "worst over subsets containing 1",
        );
        println!("defect identity residual: {:.3e}", worst.0.max(worst.1));
    }
    Ok(ledger)
}

fn cmd_dilate(args: &DilateArgs) -> Result<ResidualLedger, Error> {
    let tol = Tolerances::default();
    let t = load_tuple(&args.common, &tol)?;
    let fd = assemble_theorem(&t, args.degree, args.window, &tol)?;
    let mut ledger = ResidualLedger::new();
    for c in &fd.checks {
        ledger.push(&c.name, "dilation pipeline", c.residual, c.tol, "");
    }
    println!(
        "dilation built: window {}, worst word residual {:.3e} at {:?}",
        fd.window, fd.worst_residual, fd.worst_index
    );
    print_ledger(&ledger);
    Ok(ledger)
}

fn random_polys(seed: u64, n: usize, degree: usize, count: usize) -> Vec<PolySample> {
    let mut rng = corpus::SplitMix64::new(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut coeffs = Vec::new();
        // Up to 6 monomials with random exponents and disc coefficients.
        let terms = 2 + (rng.next_u64() % 5) as usize;
        for _ in 0..terms {
            let k: Vec<usize> = (0..n).map(|_| (rng.next_u64() as usize) % (degree + 1)).collect();
            coeffs.push((k, rng.next_in_disc(1.0)));
        }
        out.push(PolySample::new(n, degree, coeffs).expect("sampled exponents are in range"));
    }
    out
}

fn cmd_vn(args: &VnArgs) -> Result<ResidualLedger, Error> {
    let tol = Tolerances::default();
    let t = load_tuple(&args.common, &tol)?;
    let samples = random_polys(
        args.common.seed ^ 0xA5A5_5A5A_DEAD_BEEF,
        t.n() as usize,
        args.poly_degree,
        args.samples,
    );
    let ledger = von_neumann_check(&t, &samples, args.grid, args.common.tol)?;
    println!(
        "von Neumann: {} samples, grid {}^{}, {} passed",
        samples.len(),
        args.grid,
        t.n(),
        ledger.entries.iter().filter(|e| e.pass).count()
    );
    if let Some(w) = ledger.worst() {
        println!("worst margin: {} excess {:.3e} (allowed {:.3e})", w.name, w.residual, w.tol);
    }
    Ok(ledger)
}

fn run() -> Result<(ResidualLedger, Option<PathBuf>), Error> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Classify(a) => {
            let jobs = a.jobs;
            let out = a.out.clone();
            with_jobs(jobs, || cmd_classify(a)).map(|l| (l, out))
        }
        Command::Dilate(a) => {
            let jobs = a.common.jobs;
            let out = a.common.out.clone();
            with_jobs(jobs, || cmd_dilate(a)).map(|l| (l, out))
        }
        Command::Vn(a) => {
            let jobs = a.common.jobs;
            let out = a.common.out.clone();
            with_jobs(jobs, || cmd_vn(a)).map(|l| (l, out))
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok((ledger, out)) => {
            if let Err(e) = write_report(&out, &ledger) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            if ledger.pass() {
                ExitCode::SUCCESS
            } else {
                eprintln!("verification failed: see ledger");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
