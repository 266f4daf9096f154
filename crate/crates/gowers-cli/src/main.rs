//! Workbench for multilinear forms, certificates and Gowers-norm
//! computations. Every command emits a JSON report; with `--out DIR` the
//! report and any artifacts are written there instead of stdout.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gowers_forms::rankbias::{ProxyMode, RankProxyPolicy};
use gowers_forms::Error;

pub use report::Report;

/// Exit statuses besides success.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Budget(String),
    #[error("{0}")]
    Step(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Step(_) => 4,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::BudgetExceeded { .. } | Error::SizeGuard(_) => CliError::Budget(e.to_string()),
            Error::StepFailed(_) => CliError::Step(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "gowers-forms", version, about = "Exact multilinear-form and Gowers-norm workbench")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Ambient dimension.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Arity or norm order.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Evaluation budget as a power of two.
    #[arg(long, global = true, default_value_t = gowers_forms::gowers::DEFAULT_BUDGET_LOG2)]
    pub budget: u32,
    /// Rank proxy: `exact-bilinear`, `tiny` or `bias:<t>`.
    #[arg(long, global = true, default_value = "exact-bilinear", value_parser = parse_policy)]
    pub policy: RankProxyPolicy,
    /// Directory for the report and artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "GOWERS_FORMS_THREADS")]
    pub threads: Option<usize>,
}

fn parse_policy(s: &str) -> Result<RankProxyPolicy, String> {
    let mode = match s {
        "exact-bilinear" => ProxyMode::ExactBilinear,
        "tiny" => ProxyMode::ExhaustiveTiny,
        _ => match s.strip_prefix("bias:").map(str::parse) {
            Some(Ok(t)) => ProxyMode::BiasThreshold(t),
            _ => return Err(format!("unknown policy `{s}`")),
        },
    };
    Ok(RankProxyPolicy { mode, ..RankProxyPolicy::default() })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Zero,
    Random,
    Dot,
    Diagonal,
    /// Random form symmetrized over all slots.
    Symmetric,
    Counterexample,
    PlantedPair,
    PlantedExtend4,
    PlantedRepeated,
    /// `e(q)` with `Δ^k q = |σ|/2` for a lifted dot product `σ`.
    FunctionConstructed,
    FunctionNoise,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Driver {
    Pair,
    Odd,
    Extend4,
    Extend5,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Naive,
    Recursive,
    Both,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Generate a form or function, with companion files where relevant.
    Gen {
        #[arg(value_enum)]
        kind: GenKind,
    },
    /// Evaluate a form at vectors given as bitmasks.
    Eval {
        #[arg(long)]
        form: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<u64>,
    },
    /// Exact bias of a form.
    Bias {
        #[arg(long)]
        form: PathBuf,
    },
    /// Analytic rank, from the exact bias.
    Arank {
        #[arg(long)]
        form: PathBuf,
    },
    /// Partition-rank bounds, exact where the domain allows.
    Prank {
        #[arg(long)]
        form: PathBuf,
    },
    /// Emit the best available certificate for a form.
    Certify {
        #[arg(long)]
        form: PathBuf,
    },
    /// Re-verify a certificate bit-exactly.
    Verify {
        #[arg(long)]
        cert: PathBuf,
        /// Optional form the certificate's target must equal.
        #[arg(long)]
        form: Option<PathBuf>,
    },
    /// Weak regularization of forms symmetric in their first `m` slots.
    Regularize {
        #[arg(long = "form", required = true)]
        forms: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        c: u32,
        #[arg(long, default_value_t = 1)]
        d: u32,
    },
    /// Run a symmetrization driver given a certificate for the swap difference.
    Symmetrize {
        #[arg(long, value_enum)]
        driver: Driver,
        #[arg(long)]
        form: PathBuf,
        #[arg(long)]
        cert: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        ell: usize,
    },
    /// Make the diagonal contraction vanish, keeping symmetry in the first `m` slots.
    RemoveRepeated {
        #[arg(long)]
        form: PathBuf,
        /// Certificate for the diagonal contraction; computed when absent.
        #[arg(long)]
        cert: Option<PathBuf>,
        #[arg(long)]
        m: usize,
    },
    /// Solve for the symmetric-in-three form built from the dot product.
    Counterexample,
    /// Integrate a strongly symmetric form to a non-classical polynomial.
    Integrate {
        #[arg(long)]
        form: PathBuf,
    },
    /// Gowers norm of order `k` of a phase function.
    Gowers {
        #[arg(long)]
        function: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        method: Method,
    },
    /// Correlation of a phase function with the phase of a form.
    Correlate {
        #[arg(long)]
        function: PathBuf,
        #[arg(long)]
        form: PathBuf,
    },
    /// Forms whose phases correlate with a function above a threshold.
    Spectrum {
        #[arg(long)]
        function: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Run the end-to-end structure demo on a function and a correlating form.
    Pipeline {
        #[arg(long)]
        function: PathBuf,
        #[arg(long)]
        form: PathBuf,
        /// Claimed correlation.
        #[arg(long, default_value_t = 0.1)]
        c: f64,
        #[arg(long, default_value_t = 0.1)]
        floor: f64,
    },
    /// Re-validate a report from its referenced inputs.
    ReportVerify {
        #[arg(long)]
        report: PathBuf,
    },
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.global.threads {
        gowers_forms::par::set_threads(t.max(1));
    }
    let out = cli.global.out.clone();
    match commands::run(&cli, replay_args(&argv[1..])) {
        Ok(ran) => {
            if out.is_none() {
                match gowers_forms::io::to_json(&ran.report) {
                    Ok(s) => print!("{s}"),
                    Err(e) => {
                        eprintln!("{e}");
                        return ExitCode::from(1);
                    }
                }
            }
            if ran.step_failed {
                ExitCode::from(4)
            } else if ran.report.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

/// The arguments that determine a report, without output or threading
/// options.
pub fn replay_args(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--out" || a == "--threads" {
            skip = true;
            continue;
        }
        if a.starts_with("--out=") || a.starts_with("--threads=") {
            continue;
        }
        out.push(a.clone());
    }
    out
}
