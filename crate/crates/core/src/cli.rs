//! The `convflow` command line: `fit`, `eval`, `sample` and `check`.
//!
//! Exit codes: 0 success, 1 failed check or other runtime error, 2 bad
//! flags, 3 training divergence, 4 unreadable or invalid checkpoint, 5 model
//! without an inverse. Loss lines and results go to stdout, diagnostics to
//! stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checks::{run_suite, Suite, SuiteOptions};
use crate::config::{Checkpoint, ModelConfig};
use crate::density::{
    emit_csv, emit_pgm, model_density_grid, read_csv, sample, true_density_grid, tvd, DensityGrid, GridSpec,
};
use crate::error::Error;
use crate::math::RngState;
use crate::objectives::{train_with, Energy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_BAD_CHECKPOINT: i32 = 4;
pub const EXIT_NOT_INVERTIBLE: i32 = 5;

/// Seed stream used for parameter initialization in `fit`.
pub const INIT_STREAM: u64 = 0;

#[derive(Debug, Parser)]
#[command(name = "convflow", version, about = "Convolutional normalizing flows: fit, evaluate, sample and check")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a flow to a 2-d energy by minimizing the Monte-Carlo KL loss.
    Fit(FitArgs),
    /// Evaluate a model's density on a 2-d grid.
    Eval(EvalArgs),
    /// Draw samples from a model.
    Sample(SampleArgs),
    /// Run the numerical property suites.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long, value_parser = parse_energy)]
    energy: Energy,
    /// Built-in model layout (synthetic-k8, dense-50, dense-100).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Model config document (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Print a loss line every this many steps.
    #[arg(long, default_value_t = 100)]
    log_every: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GridFormat {
    Csv,
    Pgm,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// `xmin:xmax:n` or `xmin:xmax:nx,ymin:ymax:ny`.
    #[arg(long, value_parser = parse_grid, default_value = "-4:4:200", allow_hyphen_values = true)]
    grid: GridSpec,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = GridFormat::Csv)]
    format: GridFormat,
    /// Compare against the box-normalized density of this energy.
    #[arg(long, value_parser = parse_energy)]
    true_energy: Option<Energy>,
    /// Compare against a grid previously written as CSV.
    #[arg(long, conflicts_with = "true_energy")]
    reference: Option<PathBuf>,
    /// Print `tvd=<value>` against the comparison grid.
    #[arg(long)]
    tvd: bool,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SuiteChoice {
    All,
    One(Suite),
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// roundtrip, logdet, gradcheck, triangularity or all.
    #[arg(long, value_parser = parse_suite, default_value = "all")]
    suite: SuiteChoice,
    #[arg(long, value_delimiter = ',', default_values_t = SuiteOptions::default().dims)]
    dims: Vec<usize>,
    #[arg(long, default_value_t = SuiteOptions::default().trials)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_energy(s: &str) -> Result<Energy, String> {
    s.parse::<Energy>().map_err(|e| e.to_string())
}

fn parse_suite(s: &str) -> Result<SuiteChoice, String> {
    if s == "all" {
        Ok(SuiteChoice::All)
    } else {
        s.parse::<Suite>().map(SuiteChoice::One)
    }
}

/// Parses `lo:hi:n`.
fn parse_axis(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err(format!("`{s}` is not of the form lo:hi:n"));
    };
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad bound `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad bound `{hi}`"))?;
    let n: usize = n.trim().parse().map_err(|_| format!("bad cell count `{n}`"))?;
    Ok((lo, hi, n))
}

pub fn parse_grid(s: &str) -> Result<GridSpec, String> {
    let (x, y) = match s.split_once(',') {
        Some((x, y)) => (parse_axis(x)?, parse_axis(y)?),
        None => {
            let x = parse_axis(s)?;
            (x, x)
        }
    };
    GridSpec::new(x.0, x.1, y.0, y.1, x.2, y.2).map_err(|e| e.to_string())
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Diverged { .. } => EXIT_DIVERGED,
            Error::NotInvertible(_) => EXIT_NOT_INVERTIBLE,
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Failure::new(code, e.to_string())
    }
}

type CmdResult = Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path).map_err(|e| Failure::new(EXIT_BAD_CHECKPOINT, e.to_string()))
}

fn cmd_fit(a: FitArgs) -> CmdResult {
    let mut config = match (&a.preset, &a.config) {
        (_, Some(path)) => ModelConfig::load(path).map_err(|e| Failure::usage(e.to_string()))?,
        (Some(name), None) => ModelConfig::preset(name).map_err(|e| Failure::usage(e.to_string()))?,
        (None, None) => ModelConfig::default(),
    };
    if config.dim != 2 {
        return Err(Failure::usage(format!("energies are 2-dimensional but the model has dim {}", config.dim)));
    }
    let t = &mut config.training;
    t.steps = a.steps.unwrap_or(t.steps);
    t.batch = a.batch.unwrap_or(t.batch);
    t.lr = a.lr.unwrap_or(t.lr);
    t.seed = a.seed.unwrap_or(t.seed);
    if a.log_every == 0 {
        return Err(Failure::usage("--log-every must be at least 1"));
    }
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;

    let mut rng = RngState::with_stream(config.training.seed, INIT_STREAM);
    let mut stack = config.init_stack(&mut rng)?;
    let train_cfg = config.training.to_train_config(a.log_every);

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let _ = writeln!(out, "step,loss,logdet_term,energy_term");
    let history = train_with(&mut stack, a.energy, &train_cfg, |rec| {
        let r = &rec.report;
        let _ = writeln!(out, "{},{:.10e},{:.10e},{:.10e}", rec.step, r.loss, r.logdet_term, r.energy_term);
    })?;
    drop(out);

    let final_loss = history.losses.last().copied();
    let checkpoint = Checkpoint::from_stack(&config, &stack, Some(a.energy), final_loss)?;
    checkpoint.save(&a.out)?;
    eprintln!("wrote {} ({} parameters)", a.out.display(), checkpoint.params.len());
    Ok(EXIT_OK)
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let checkpoint = load_checkpoint(&a.model)?;
    let stack = checkpoint.stack().map_err(|e| Failure::new(EXIT_BAD_CHECKPOINT, e.to_string()))?;
    if !stack.is_invertible() {
        return Err(Failure::new(
            EXIT_NOT_INVERTIBLE,
            "model contains layers without an inverse; density evaluation needs ConvFlow/Revert layers only",
        ));
    }
    if stack.dim() != 2 {
        return Err(Failure::usage(format!("grids need a 2-dimensional model, this one has dim {}", stack.dim())));
    }
    if a.tvd && a.true_energy.is_none() && a.reference.is_none() {
        return Err(Failure::usage("--tvd needs --true-energy or --reference"));
    }
    let grid = model_density_grid(&stack, &a.grid)?;
    match a.format {
        GridFormat::Csv => emit_csv(&grid, &a.out)?,
        GridFormat::Pgm => emit_pgm(&grid, &a.out)?,
    }
    if a.tvd {
        let reference = match (a.true_energy, &a.reference) {
            (Some(energy), _) => true_density_grid(energy, &a.grid)?,
            (None, Some(path)) => read_csv(path)?,
            (None, None) => unreachable!("checked above"),
        };
        if !same_box(&reference.spec, &grid.spec) {
            return Err(Failure::usage("reference grid does not cover the same cells as --grid"));
        }
        let reference = DensityGrid::new(grid.spec, reference.values)?;
        println!("tvd={:.10e}", tvd(&grid, &reference)?);
    }
    Ok(EXIT_OK)
}

/// Grids recovered from CSV cell centres can differ from the requested box
/// in the last few bits.
fn same_box(a: &GridSpec, b: &GridSpec) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0);
    a.nx == b.nx
        && a.ny == b.ny
        && close(a.xmin, b.xmin)
        && close(a.xmax, b.xmax)
        && close(a.ymin, b.ymin)
        && close(a.ymax, b.ymax)
}

fn cmd_sample(a: SampleArgs) -> CmdResult {
    if a.n == 0 {
        return Err(Failure::usage("--n must be at least 1"));
    }
    let checkpoint = load_checkpoint(&a.model)?;
    let stack = checkpoint.stack().map_err(|e| Failure::new(EXIT_BAD_CHECKPOINT, e.to_string()))?;
    let mut rng = RngState::new(a.seed);
    let samples = sample(&stack, &mut rng, a.n)?;
    let d = stack.dim();
    let mut text = String::with_capacity(a.n * d * 25);
    let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    text.push_str(&header.join(","));
    text.push('\n');
    for s in &samples {
        for (i, v) in s.iter().enumerate() {
            if i > 0 {
                text.push(',');
            }
            write!(text, "{v:.16e}").expect("writing to a String");
        }
        text.push('\n');
    }
    fs::write(&a.out, text).map_err(|e| Error::io(&a.out, e))?;
    Ok(EXIT_OK)
}

fn cmd_check(a: CheckArgs) -> CmdResult {
    let opts = SuiteOptions { dims: a.dims, trials: a.trials, seed: a.seed };
    let suites: Vec<Suite> = match a.suite {
        SuiteChoice::All => Suite::ALL.to_vec(),
        SuiteChoice::One(s) => vec![s],
    };
    let mut all_passed = true;
    for suite in suites {
        let report = run_suite(suite, &opts)?;
        println!("{report}");
        all_passed &= report.passed;
    }
    Ok(if all_passed { EXIT_OK } else { EXIT_FAILURE })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_flag_forms() {
        let g = parse_grid("-4:4:200").unwrap();
        assert_eq!((g.xmin, g.xmax, g.nx, g.ymin, g.ymax, g.ny), (-4.0, 4.0, 200, -4.0, 4.0, 200));
        let g = parse_grid("-1:2:3,0:5:7").unwrap();
        assert_eq!((g.xmin, g.xmax, g.nx, g.ymin, g.ymax, g.ny), (-1.0, 2.0, 3, 0.0, 5.0, 7));
        assert!(parse_grid("1:0:10").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("a:1:3").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["convflow"]), EXIT_USAGE);
        assert_eq!(run(["convflow", "fit", "--energy", "u1"]), EXIT_USAGE);
        assert_eq!(run(["convflow", "fit", "--energy", "u3", "--out", "x.json"]), EXIT_USAGE);
        assert_eq!(run(["convflow", "check", "--suite", "everything"]), EXIT_USAGE);
        assert_eq!(run(["convflow", "fit", "--energy", "u1", "--preset", "dense-50", "--out", "x.json"]), EXIT_USAGE);
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(run(["convflow", "--help"]), EXIT_OK);
    }

    #[test]
    fn check_small_suite() {
        assert_eq!(run(["convflow", "check", "--suite", "triangularity", "--dims", "2,3", "--trials", "3"]), EXIT_OK);
    }
}
