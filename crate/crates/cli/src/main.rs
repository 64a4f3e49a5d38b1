//! `coac`: fit, bound, and select polynomial model orders from the shell.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use coac_core::sim::{run_and_write, Experiment};
use coac_core::{
    fit, kfold_select_order, sample_complexity_known_order, select_order, validate_noise_variance,
    ConfidenceParams, Convention, Dataset, Error, ExperimentConfig, KernelFamily, KernelSpec,
    SigmaPolicy,
};
use serde::Serialize;

/// Version of every JSON document this tool prints.
const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(
    name = "coac",
    version,
    about = "Learnability bounds and model order selection for polynomial regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Least-squares fit of one order; prints the fit as JSON.
    Fit(FitArgs),
    /// Choose the order minimizing the upper risk bound; prints the report as JSON.
    Select(SelectArgs),
    /// Data length needed at a known order; prints an integer.
    SampleComplexity(SampleComplexityArgs),
    /// Confidence interval on the noise variance from one fit; prints JSON.
    NoiseRange(NoiseRangeArgs),
    /// Run the Monte Carlo experiments and write CSV tables plus a manifest.
    Simulate(SimulateArgs),
    /// Run bound-based selection and k-fold cross-validation on one dataset.
    CompareCv(CompareCvArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    /// Columns x, x^2, ..., x^m.
    Poly,
    /// Columns 1, x, ..., x^(m-1).
    PolyIntercept,
}

impl KernelArg {
    fn spec(self, max_order: usize) -> Result<KernelSpec, Error> {
        let family = match self {
            KernelArg::Poly => KernelFamily::PolynomialNoIntercept,
            KernelArg::PolyIntercept => KernelFamily::PolynomialWithIntercept,
        };
        KernelSpec::new(family, max_order)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    /// Risk divided by twice the noise variance.
    Canonical,
    /// Risk divided by the noise variance.
    Unhalved,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Canonical => Convention::CanonicalHalf,
            ConventionArg::Unhalved => Convention::Unhalved,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
    Figs,
}

impl From<TableArg> for Experiment {
    fn from(t: TableArg) -> Self {
        match t {
            TableArg::One => Experiment::SampleComplexity,
            TableArg::Two => Experiment::CvComparison,
            TableArg::Three => Experiment::Selection,
            TableArg::Figs => Experiment::Figures,
        }
    }
}

#[derive(Args)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with header `x,y` or `x,y,y_bar`.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long)]
    order: usize,
    #[arg(long, value_enum, default_value = "poly")]
    kernel: KernelArg,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
#[command(group(ArgGroup::new("noise").required(true).args(["noise_var", "estimate_noise"])))]
struct SelectArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value_t = 10)]
    max_order: usize,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    /// Known noise variance.
    #[arg(long)]
    noise_var: Option<f64>,
    /// Use the midpoint of the validated noise-variance interval at the top order.
    #[arg(long)]
    estimate_noise: bool,
    #[arg(long, value_enum, default_value = "canonical")]
    convention: ConventionArg,
    #[arg(long, value_enum, default_value = "poly")]
    kernel: KernelArg,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct SampleComplexityArgs {
    #[arg(long)]
    order: usize,
    #[arg(long, allow_negative_numbers = true)]
    epsilon: f64,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
}

#[derive(Args)]
struct NoiseRangeArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Order of the fit whose training error is validated.
    #[arg(long)]
    order: usize,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "poly")]
    kernel: KernelArg,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON experiment configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiments to run; repeat the flag for several. Default: all.
    #[arg(long, value_enum)]
    table: Vec<TableArg>,
    #[arg(long, default_value = "coac-out")]
    out_dir: PathBuf,
    /// Overrides `master_seed` of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `trials` of the configuration.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads for the trials.
    #[arg(long, env = "COAC_THREADS")]
    threads: Option<usize>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("noise").required(true).args(["noise_var", "estimate_noise"])))]
struct CompareCvArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value_t = 10)]
    max_order: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Seed of the fold shuffle.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    #[arg(long)]
    noise_var: Option<f64>,
    #[arg(long)]
    estimate_noise: bool,
    #[arg(long, value_enum, default_value = "canonical")]
    convention: ConventionArg,
    #[arg(long, value_enum, default_value = "poly")]
    kernel: KernelArg,
    #[command(flatten)]
    out: Output,
}

/// JSON envelope carrying the schema version next to the payload fields.
#[derive(Serialize)]
struct Versioned<T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

fn emit_json<T: Serialize>(body: T, out: &Output) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(&Versioned {
        schema_version: SCHEMA_VERSION,
        body,
    })? + "\n";
    match &out.output {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Known variance from the flag, or the estimated policy.
fn noise_policy(ds: Dataset, noise_var: Option<f64>) -> Result<(Dataset, SigmaPolicy), Error> {
    match noise_var {
        Some(v) => Ok((ds.observed_only().with_noise_var(v)?, SigmaPolicy::Oracle)),
        None => Ok((ds.observed_only(), SigmaPolicy::Estimated)),
    }
}

fn load(path: &Path) -> Result<Dataset, Error> {
    Dataset::from_csv_path(path).map_err(|e| match e {
        Error::Csv { line, message } => Error::Csv {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Fit(a) => {
            let ds = load(&a.input)?;
            let f = fit(&ds, a.order, &a.kernel.spec(a.order)?)?;
            emit_json(f, &a.out)
        }
        Command::Select(a) => {
            let params = ConfidenceParams::new(a.alpha, a.beta)?;
            let (ds, policy) = noise_policy(load(&a.input)?, a.noise_var)?;
            let kernel = a.kernel.spec(a.max_order)?;
            let report = select_order(
                &ds,
                a.max_order,
                &kernel,
                params,
                policy,
                a.convention.into(),
            )?;
            emit_json(report, &a.out)
        }
        Command::SampleComplexity(a) => {
            println!(
                "{}",
                sample_complexity_known_order(a.order, a.epsilon, a.beta)?
            );
            Ok(())
        }
        Command::NoiseRange(a) => {
            let ds = load(&a.input)?;
            let f = fit(&ds, a.order, &a.kernel.spec(a.order)?)?;
            emit_json(
                validate_noise_variance(f.r_ms, a.order, ds.n(), a.alpha)?,
                &a.out,
            )
        }
        Command::Simulate(a) => {
            let mut config = match &a.config {
                Some(p) => ExperimentConfig::from_path(p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = a.seed {
                config.master_seed = s;
            }
            if let Some(t) = a.trials {
                config.trials = t;
            }
            config.validate()?;
            let experiments: Vec<Experiment> = if a.table.is_empty() {
                Experiment::ALL.to_vec()
            } else {
                let mut v: Vec<Experiment> = Vec::new();
                for t in &a.table {
                    let e = Experiment::from(*t);
                    if !v.contains(&e) {
                        v.push(e);
                    }
                }
                v
            };
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(t) = a.threads {
                if t == 0 {
                    return Err(Error::InvalidParameter(
                        "--threads must be at least 1".into(),
                    ));
                }
                pool = pool.num_threads(t);
            }
            let pool = pool
                .build()
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            pool.install(|| run_and_write(&config, &experiments, &a.out_dir))?;
            println!("{}", a.out_dir.join("manifest.json").display());
            Ok(())
        }
        Command::CompareCv(a) => {
            let params = ConfidenceParams::new(a.alpha, a.beta)?;
            let raw = load(&a.input)?;
            let kernel = a.kernel.spec(a.max_order)?;
            let (ds, policy) = noise_policy(raw, a.noise_var)?;
            let proposed = select_order(
                &ds,
                a.max_order,
                &kernel,
                params,
                policy,
                a.convention.into(),
            )?;
            let proposed_refit = fit(&ds, proposed.m_star_hat, &kernel)?;
            let cv = kfold_select_order(&ds, a.max_order, a.folds, &kernel, a.seed)?;
            #[derive(Serialize)]
            struct Comparison {
                proposed: coac_core::SelectionReport,
                proposed_refit: coac_core::FitResult,
                cv: coac_core::CvReport,
            }
            emit_json(
                Comparison {
                    proposed,
                    proposed_refit,
                    cv,
                },
                &a.out,
            )
        }
    }
}

/// Stable exit codes: 2 usage or validation, 3 rank deficiency,
/// 4 too few samples for noise validation.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::RankDeficient { .. } => 3,
        Error::InsufficientSamples { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
