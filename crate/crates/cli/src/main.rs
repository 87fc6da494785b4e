use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use l0uniq::certificates::{CandidateSolution, CertificateConfig};
use l0uniq::experiments::{
    complete_y, ensemble_csv, generate_instance, run_analyze, run_ensemble, run_solve, AnalyzeConfig, Distribution,
    ExperimentConfig, ReportDocument,
};
use l0uniq::io::{read_matrix, read_vector, write_matrix, MatrixFormat};
use l0uniq::oracle::{Constraint, Instance, DEFAULT_K_MAX};
use l0uniq::{DenseMatrix, Result, SearchConfig, ToleranceConfig};

#[derive(Parser)]
#[command(name = "l0uniq", version, about = "Uniqueness analysis for partial l0-minimization")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantities, certificates and oracle for one instance.
    Analyze(AnalyzeArgs),
    /// Exhaustive sparsest x-part.
    Solve(SolveArgs),
    /// Seeded batch of random planted instances.
    Ensemble(EnsembleArgs),
    /// Write one random planted instance to files.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Mm,
    Csv,
}

impl From<FormatArg> for MatrixFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Mm => MatrixFormat::MatrixMarket,
            FormatArg::Csv => MatrixFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConstraintArg {
    Free,
    Nonneg,
}

impl From<ConstraintArg> for Constraint {
    fn from(c: ConstraintArg) -> Self {
        match c {
            ConstraintArg::Free => Constraint::FreeY,
            ConstraintArg::Nonneg => Constraint::NonnegativeY,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DistributionArg {
    Gaussian,
    IdentityPlusDense,
}

impl From<DistributionArg> for Distribution {
    fn from(d: DistributionArg) -> Self {
        match d {
            DistributionArg::Gaussian => Distribution::GaussianIid,
            DistributionArg::IdentityPlusDense => Distribution::PartialIdentityPlusDense,
        }
    }
}

#[derive(Args)]
struct InstanceArgs {
    #[arg(long)]
    a1: PathBuf,
    /// Omit for an instance without a y part.
    #[arg(long)]
    a2: Option<PathBuf>,
    #[arg(long)]
    b: PathBuf,
    /// Input format; inferred from the extension when absent.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, value_enum, default_value = "free")]
    constraint: ConstraintArg,
}

impl InstanceArgs {
    fn format_for(&self, p: &Path) -> MatrixFormat {
        self.format.map_or_else(|| MatrixFormat::from_path(p), Into::into)
    }

    fn load(&self, tol: &ToleranceConfig) -> Result<Instance> {
        let a1 = read_matrix(&self.a1, self.format_for(&self.a1))?;
        let a2 = match &self.a2 {
            Some(p) => read_matrix(p, self.format_for(p))?,
            None => DenseMatrix::zeros(a1.rows(), 0),
        };
        let b = read_vector(&self.b, self.format_for(&self.b))?;
        Instance::new(a1, a2, b, self.constraint.into(), None, tol)
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Candidate x; defaults to the oracle's sparsest x-part.
    #[arg(long)]
    x: Option<PathBuf>,
    /// Candidate y; completed by least squares when only x is given.
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Seed for the basis searches.
    #[arg(long, default_value_t = SearchConfig::default().seed)]
    seed: u64,
    /// Skip the searches over bases.
    #[arg(long)]
    no_search: bool,
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    k_max: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    k_max: usize,
}

#[derive(Args)]
struct ShapeArgs {
    #[arg(long, default_value_t = 6)]
    m: usize,
    #[arg(long, default_value_t = 10)]
    n1: usize,
    #[arg(long, default_value_t = 2)]
    n2: usize,
    /// Planted support size.
    #[arg(long, default_value_t = 2)]
    k0: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    distribution: DistributionArg,
    #[arg(long, value_enum, default_value = "free")]
    constraint: ConstraintArg,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct EnsembleArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long)]
    no_search: bool,
    /// Random starts per basis search.
    #[arg(long, default_value_t = SearchConfig::default().n_starts)]
    n_starts: usize,
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    k_max: usize,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-trial rows.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long, default_value_t = 0)]
    trial: usize,
    #[arg(long, value_enum, default_value = "mm")]
    format: FormatArg,
    /// Directory receiving a1, a2, b, x0 and y0.
    #[arg(long)]
    out_dir: PathBuf,
}

impl ShapeArgs {
    fn config(&self, trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            m: self.m,
            n1: self.n1,
            n2: self.n2,
            k0: self.k0,
            trials,
            seed: self.seed,
            distribution: self.distribution.into(),
            constraint: self.constraint.into(),
            ..ExperimentConfig::default()
        }
    }
}

fn emit(doc: &ReportDocument, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> Result<i32> {
    let tol = ToleranceConfig::default();
    let inst = args.instance.load(&tol)?;
    let candidate = match &args.x {
        Some(xp) => {
            let x = read_vector(xp, args.instance.format_for(xp))?;
            let y = match &args.y {
                Some(yp) => read_vector(yp, args.instance.format_for(yp))?,
                None => complete_y(&inst, &x, &tol)?,
            };
            Some(CandidateSolution::new(&inst, x, y, &tol)?)
        }
        None => None,
    };
    let cfg = AnalyzeConfig {
        certificates: CertificateConfig {
            search: SearchConfig {
                seed: args.seed,
                ..SearchConfig::default()
            },
            ..CertificateConfig::default()
        },
        use_search: !args.no_search,
        run_oracle: true,
        oracle_k_max: args.k_max,
    };
    let doc = run_analyze(&inst, candidate, &cfg)?;
    emit(&doc, args.report.as_deref())?;
    Ok(doc.exit_code())
}

fn solve(args: &SolveArgs) -> Result<i32> {
    let tol = ToleranceConfig::default();
    let inst = args.instance.load(&tol)?;
    let doc = run_solve(&inst, args.k_max, &tol)?;
    emit(&doc, args.report.as_deref())?;
    Ok(0)
}

fn ensemble(args: &EnsembleArgs) -> Result<i32> {
    let mut cfg = args.shape.config(args.trials);
    cfg.use_search = !args.no_search;
    cfg.search.n_starts = args.n_starts;
    cfg.oracle_k_max = args.k_max;
    let doc = run_ensemble(&cfg)?;
    if let (Some(p), Some(s)) = (&args.csv, &doc.ensemble) {
        std::fs::write(p, ensemble_csv(s))?;
    }
    emit(&doc, args.report.as_deref())?;
    let violations = doc.ensemble.as_ref().map_or(0, |s| s.soundness_violations);
    Ok(if violations > 0 { 1 } else { 0 })
}

fn gen(args: &GenArgs) -> Result<i32> {
    let inst = generate_instance(&args.shape.config(1), args.trial)?;
    let fmt: MatrixFormat = args.format.into();
    let ext = match args.format {
        FormatArg::Mm => "mtx",
        FormatArg::Csv => "csv",
    };
    std::fs::create_dir_all(&args.out_dir)?;
    let planted = inst.planted.as_ref().expect("generated instances are planted");
    let file = |name: &str| args.out_dir.join(format!("{name}.{ext}"));
    write_matrix(&file("a1"), fmt, &inst.a1)?;
    write_matrix(&file("a2"), fmt, &inst.a2)?;
    write_matrix(&file("b"), fmt, &DenseMatrix::column_vector(&inst.b)?)?;
    write_matrix(&file("x0"), fmt, &DenseMatrix::column_vector(&planted.x)?)?;
    write_matrix(&file("y0"), fmt, &DenseMatrix::column_vector(&planted.y)?)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Solve(a) => solve(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Gen(a) => gen(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
