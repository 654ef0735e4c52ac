use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hvaf::esprit;
use hvaf::experiments::{run_experiment, ExperimentSpec, THREADS_ENV};
use hvaf::hvaf::{solve, FitMode, InitStrategy, MultiplierTrace, SolverConfig, SolverReport};
use hvaf::io::{read_mask, read_signal_file, write_model, write_signal_file};
use hvaf::lrhm::solve_lrhm;
use hvaf::metrics::rlne;
use hvaf::signal::{random_mask, random_model, synthesize, SamplingMask};
use hvaf::HvafError;
use serde_json::json;

const EXIT_USAGE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_NUMERICAL: u8 = 5;

#[derive(Parser)]
#[command(name = "hvaf", version, about = "Spectrally sparse signal recovery by Hankel completion with Vandermonde factors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random exponential model and write its samples and parameters.
    Generate(GenerateArgs),
    /// Fill in the unobserved samples of a signal.
    Recover(RecoverArgs),
    /// Fit frequencies, dampings and amplitudes to a signal with ESPRIT.
    Estimate(EstimateArgs),
    /// Run a Monte-Carlo experiment described by a JSON spec.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Signal length.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Number of exponentials.
    #[arg(long = "R", value_parser = clap::value_parser!(u64).range(1..))]
    r: u64,
    #[arg(long)]
    damped: bool,
    /// Minimum wrap-around distance between frequencies.
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scale the signal to unit peak magnitude (amplitudes scaled to match).
    #[arg(long)]
    normalize: bool,
    /// Signal CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Model JSON to write; defaults to the signal path with a .json extension.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Hvaf,
    Lrhm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Svd,
    Random,
}

#[derive(Args)]
struct RecoverArgs {
    /// Signal CSV; only the entries selected by the mask are read as data.
    #[arg(long)]
    signal: PathBuf,
    /// Mask file of observed 1-based indices.
    #[arg(long, conflicts_with = "m", required_unless_present = "m")]
    mask: Option<PathBuf>,
    /// Draw a uniformly random mask with this many samples.
    #[arg(long = "M", id = "m", value_name = "M", value_parser = clap::value_parser!(u64).range(1..))]
    m: Option<u64>,
    /// Seed for the mask draw and the random initialisation.
    #[arg(long)]
    seed: Option<u64>,
    /// Assumed number of exponentials; required by the hvaf solver.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    rank: Option<u64>,
    #[arg(long, value_enum, default_value = "hvaf")]
    solver: Solver,
    /// Fit the observations in least squares instead of matching them exactly.
    #[arg(long)]
    noisy: bool,
    /// Data-fit weight for --noisy.
    #[arg(long, requires = "noisy")]
    lambda: Option<f64>,
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    beta_max: Option<f64>,
    #[arg(long)]
    mu0: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap per continuation stage.
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, value_enum, default_value = "svd")]
    init: Init,
    /// Record the multiplier norms after every iteration.
    #[arg(long)]
    trace_multipliers: bool,
    /// Ground truth signal CSV; its RLNE is added to the report.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Recovered signal CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Report JSON to write.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    signal: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    rank: u64,
    /// Model JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON spec with a `kind` tag, or the manifest of an earlier run.
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to HVAF_THREADS, then to all cores.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    /// Result table to write.
    #[arg(long)]
    out: PathBuf,
    /// Manifest JSON to write; defaults to the table path with a .json extension.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// A failure together with the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<HvafError> for Failure {
    fn from(e: HvafError) -> Self {
        let code = match &e {
            HvafError::Io(_) | HvafError::Parse { .. } => EXIT_IO,
            HvafError::Json(j) if !j.is_data() => EXIT_IO,
            HvafError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

impl Failure {
    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
    }
}

type Outcome = std::result::Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Recover(a) => recover(a),
        Command::Estimate(a) => estimate(a),
        Command::Experiment(a) => experiment(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn seed_or_entropy(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random();
        log::info!("drew seed {s}");
        s
    })
}

fn create(path: &Path) -> std::result::Result<BufWriter<fs::File>, Failure> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> std::result::Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn generate(a: GenerateArgs) -> Outcome {
    let seed = seed_or_entropy(a.seed);
    if a.seed.is_none() {
        eprintln!("seed: {seed}");
    }
    let mut model = random_model(a.r as usize, a.damped, a.separation, seed)?;
    let mut x = synthesize(&model, a.n as usize)?;
    if a.normalize {
        let peak = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if peak > 0.0 {
            x.iter_mut().for_each(|v| *v /= peak);
            model = model.scaled(1.0 / peak);
        }
    }
    write_signal_file(&a.out, &x)?;
    let model_path = a.model.unwrap_or_else(|| a.out.with_extension("json"));
    write_model(create(&model_path)?, &model)?;
    Ok(0)
}

fn recover(a: RecoverArgs) -> Outcome {
    if a.rank.is_none() && matches!(a.solver, Solver::Hvaf) {
        return Err(Failure { code: EXIT_USAGE, message: "--rank is required with the hvaf solver".into() });
    }
    let y = read_signal_file(&a.signal)?;
    let n = y.len();
    let seed = seed_or_entropy(a.seed);
    let mask: SamplingMask = match (&a.mask, a.m) {
        (Some(path), _) => read_mask(fs::File::open(path).map_err(|e| Failure::io(path, e))?, n)?,
        (None, Some(m)) => random_mask(n, m as usize, seed)?,
        (None, None) => unreachable!("clap requires one of --mask and --M"),
    };
    let obs = mask.observe(&y)?;

    let mut config = SolverConfig::with_rank(a.rank.unwrap_or(1) as usize);
    if a.noisy {
        config.mode = FitMode::Noisy { lambda: a.lambda.unwrap_or(hvaf::hvaf::DEFAULT_LAMBDA) };
    }
    config.beta0 = a.beta0.unwrap_or(config.beta0);
    config.beta_max = a.beta_max.unwrap_or(config.beta_max);
    config.mu0 = a.mu0.unwrap_or(config.mu0);
    config.rho = a.rho.unwrap_or(config.rho);
    config.tol = a.tol.unwrap_or(config.tol);
    config.max_inner_iters = a.max_iters.unwrap_or(config.max_inner_iters);
    config.init = match a.init {
        Init::Svd => InitStrategy::SvdWarmStart,
        Init::Random => InitStrategy::SeededRandom,
    };
    if a.trace_multipliers {
        config.multiplier_trace = MultiplierTrace::EveryIteration;
    }
    config.seed = seed;

    let (report, extra): (SolverReport, serde_json::Value) = match a.solver {
        Solver::Hvaf => (solve(&obs, &config)?, json!(null)),
        Solver::Lrhm => {
            let r = solve_lrhm(&obs, &config)?;
            let trace = json!(r.nuclear_norm_trace);
            (r.report, trace)
        }
    };
    write_signal_file(&a.out, &report.recovered)?;

    let reference_rlne = match &a.reference {
        Some(path) => Some(rlne(&report.recovered, &read_signal_file(path)?)?),
        None => None,
    };
    if let Some(e) = reference_rlne {
        log::info!("RLNE against reference: {e:.3e}");
    }
    if let Some(path) = &a.report {
        let mut doc = serde_json::to_value(&report).expect("reports serialize");
        let obj = doc.as_object_mut().expect("report is an object");
        obj.insert("solver".into(), json!(match a.solver { Solver::Hvaf => "hvaf", Solver::Lrhm => "lrhm" }));
        obj.insert("config".into(), serde_json::to_value(&config).expect("configs serialize"));
        obj.insert("seed".into(), json!(seed));
        obj.insert("mask".into(), json!(mask.indices()));
        obj.insert("reference_rlne".into(), json!(reference_rlne));
        if !extra.is_null() {
            obj.insert("nuclear_norm_trace".into(), extra);
        }
        write_json(path, &doc)?;
    }
    Ok(if report.converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn estimate(a: EstimateArgs) -> Outcome {
    let x = read_signal_file(&a.signal)?;
    let est = esprit::estimate(&x, a.rank as usize)?;
    for w in &est.warnings {
        log::warn!("{w}");
    }
    write_model(create(&a.out)?, &est.model)?;
    Ok(0)
}

fn experiment(a: ExperimentArgs) -> Outcome {
    let text = fs::read_to_string(&a.spec).map_err(|e| Failure::io(&a.spec, e))?;
    let bad_json = |e: serde_json::Error| {
        let code = if e.is_data() { EXIT_USAGE } else { EXIT_IO };
        Failure { code, message: format!("{}: {e}", a.spec.display()) }
    };
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(bad_json)?;
    if value.get("kind").is_none() {
        if let Some(inner) = value.get_mut("spec") {
            value = inner.take();
        }
    }
    let mut spec: ExperimentSpec = serde_json::from_value(value).map_err(bad_json)?;
    if let Some(seed) = a.seed {
        spec.set_seed(seed);
    } else if spec.seed().is_none() {
        let seed = seed_or_entropy(None);
        eprintln!("seed: {seed}");
        spec.set_seed(seed);
    }
    if let Some(t) = a.threads {
        // Still single-threaded here; the pool is built later from this.
        std::env::set_var(THREADS_ENV, t.to_string());
    }
    let output = run_experiment(&spec)?;
    fs::write(&a.out, &output.csv).map_err(|e| Failure::io(&a.out, e))?;
    let manifest = a.manifest.unwrap_or_else(|| a.out.with_extension("json"));
    write_json(&manifest, &output.manifest)?;
    Ok(0)
}
