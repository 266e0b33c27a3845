mod render;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pcombine::combine::{pooled, tabulate};
use pcombine::estimate::{analyze_methods, mu_ma, EstimateError};
use pcombine::simulate::{run_simulation, run_simulation_with_workers, SimError, SimScenario};
use pcombine::trial_model::{self, AnalysisRequest, Alternative, CombinedMethod, NamedTrial, TrialResult};
use pcombine::Probability;

#[derive(Parser)]
#[command(name = "pcombine", version, about = "Combine the results of two or more trials via p-value functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Median estimates, confidence intervals and p-values per method
    Analyze(AnalyzeArgs),
    /// Tabulate individual and combined p-value functions over a grid
    Curves(CurvesArgs),
    /// Monte Carlo operating characteristics of a scenario
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum AltArg {
    Greater,
    Less,
}

impl From<AltArg> for Alternative {
    fn from(a: AltArg) -> Self {
        match a {
            AltArg::Greater => Alternative::Greater,
            AltArg::Less => Alternative::Less,
        }
    }
}

#[derive(Args)]
struct TrialArgs {
    /// Estimate of trial 1
    #[arg(long, allow_hyphen_values = true)]
    t1: Option<f64>,
    /// Standard error of trial 1
    #[arg(long)]
    se1: Option<f64>,
    /// Estimate of trial 2
    #[arg(long, allow_hyphen_values = true)]
    t2: Option<f64>,
    /// Standard error of trial 2
    #[arg(long)]
    se2: Option<f64>,
    /// Trials as CSV (`trial,estimate,std_err`) or a JSON analysis request
    #[arg(long, conflicts_with_all = ["t1", "se1", "t2", "se2"])]
    input: Option<PathBuf>,
    /// Null value for the reported p-values [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    null: Option<f64>,
    /// Direction of the one-sided alternative [default: greater]
    #[arg(long, value_enum)]
    alternative: Option<AltArg>,
    /// Comma-separated methods [default: all six]
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    trials: TrialArgs,
    /// Confidence level; repeat for several [default: 0.95 and 0.99875]
    #[arg(long = "level")]
    levels: Vec<f64>,
    /// Significant digits per column in text output
    #[arg(long, default_value_t = 2)]
    digits: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Report two-sided p-values 2·min{p, 1 − p} instead of one-sided
    #[arg(long)]
    two_sided: bool,
}

#[derive(Args)]
struct CurvesArgs {
    #[command(flatten)]
    trials: TrialArgs,
    /// Grid start [default: pooled estimate − 4 pooled SEs]
    #[arg(long, allow_hyphen_values = true)]
    from: Option<f64>,
    /// Grid end [default: pooled estimate + 4 pooled SEs]
    #[arg(long, allow_hyphen_values = true)]
    to: Option<f64>,
    /// Number of grid points
    #[arg(long, default_value_t = 401)]
    points: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write to this file instead of standard output
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write to this file instead of standard output
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Numerical(String),
    Io(io::Error),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<EstimateError> for Failure {
    fn from(e: EstimateError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Invalid(_) | SimError::Pool(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Curves(a) => cmd_curves(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// A validated request plus display labels for its trials.
struct Loaded {
    request: AnalysisRequest,
    labels: Vec<String>,
    methods: Vec<CombinedMethod>,
}

fn read_to_string(path: &Path) -> Result<String, Failure> {
    let mut text = String::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_string(&mut text))
        .map_err(|e| usage(format!("--input {}: {e}", path.display())))?;
    Ok(text)
}

fn load(args: &TrialArgs, levels: &[f64]) -> Result<Loaded, Failure> {
    let (mut request, labels) = match &args.input {
        Some(path) => {
            let text = read_to_string(path)?;
            if text.trim_start().starts_with('{') {
                let request: AnalysisRequest = serde_json::from_str(&text)
                    .map_err(|e| usage(format!("--input {}: {e}", path.display())))?;
                let labels = (1..=request.trials.len()).map(|i| format!("Trial {i}")).collect();
                (request, labels)
            } else {
                let rows = trial_model::read_trials_csv(text.as_bytes())
                    .map_err(|e| usage(format!("--input {}: {e}", path.display())))?;
                let labels = rows.iter().map(|r| r.trial.clone()).collect();
                let trials = rows.iter().map(NamedTrial::result).collect();
                (AnalysisRequest::new(trials, 0.0, Alternative::Greater), labels)
            }
        }
        None => {
            let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| usage(format!("{flag} is required (or use --input)")));
            let t1 = need(args.t1, "--t1")?;
            let se1 = need(args.se1, "--se1")?;
            let t2 = need(args.t2, "--t2")?;
            let se2 = need(args.se2, "--se2")?;
            for (flag, se) in [("--se1", se1), ("--se2", se2)] {
                if !(se > 0.0 && se.is_finite()) {
                    return Err(usage(format!("{flag}: std_err must be positive, got {se}")));
                }
            }
            let trials = vec![TrialResult { estimate: t1, std_err: se1 }, TrialResult { estimate: t2, std_err: se2 }];
            (AnalysisRequest::new(trials, 0.0, Alternative::Greater), vec!["Trial 1".into(), "Trial 2".into()])
        }
    };
    if let Some(null) = args.null {
        request.null_value = null;
    }
    if let Some(alt) = args.alternative {
        request.alternative = alt.into();
    }
    if !levels.is_empty() {
        request.levels = levels.to_vec();
    }
    let request = trial_model::validate(request).map_err(|e| usage(flag_message(&e.to_string())))?;
    let methods = if args.methods.is_empty() {
        CombinedMethod::ALL.to_vec()
    } else {
        args.methods
            .iter()
            .map(|m| m.parse::<CombinedMethod>().map_err(|e| usage(format!("--methods: {e}"))))
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok(Loaded { request, labels, methods })
}

/// Names the command-line flag behind a validation message.
fn flag_message(msg: &str) -> String {
    let flag = if msg.starts_with("levels") {
        "--level"
    } else if msg.starts_with("null_value") {
        "--null"
    } else {
        "--input"
    };
    format!("{flag}: {msg}")
}

fn output_sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| usage(format!("--output {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let loaded = load(&args.trials, &args.levels)?;
    let mut result = analyze_methods(&loaded.request, &loaded.methods)?;
    for (summary, label) in result.individual.iter_mut().zip(&loaded.labels) {
        summary.label = label.clone();
    }
    let mut out = BufWriter::new(io::stdout().lock());
    match args.format {
        Format::Text => render::text(&mut out, &result, args.digits, args.two_sided)?,
        Format::Csv => render::csv(&mut out, &result, args.two_sided).map_err(|e| Failure::Io(e.into()))?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &result).map_err(io::Error::from)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_curves(args: CurvesArgs) -> Result<(), Failure> {
    let loaded = load(&args.trials, &[])?;
    let trials = &loaded.request.trials;
    let (from, to) = match (args.from, args.to) {
        (Some(f), Some(t)) => (f, t),
        (f, t) => {
            let centre = mu_ma(trials, Probability::HALF, loaded.request.alternative)?;
            let se = pooled(trials).1;
            (f.unwrap_or(centre - 4.0 * se), t.unwrap_or(centre + 4.0 * se))
        }
    };
    if !(from.is_finite() && to.is_finite() && from < to) {
        return Err(usage(format!("--from/--to: grid must satisfy from < to, got {from} and {to}")));
    }
    if args.points < 2 {
        return Err(usage(format!("--points: need at least 2 points, got {}", args.points)));
    }
    let step = (to - from) / (args.points - 1) as f64;
    let grid: Vec<f64> = (0..args.points)
        .map(|i| if i + 1 == args.points { to } else { from + step * i as f64 })
        .collect();
    let curves = tabulate(trials, loaded.request.alternative, &loaded.methods, grid)
        .map_err(|e| usage(format!("--from/--to/--points: {e}")))?;
    let mut out = output_sink(&args.output)?;
    match args.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &curves).map_err(io::Error::from)?;
            writeln!(out)?;
        }
        Format::Csv | Format::Text => curves.write_csv(&mut out).map_err(|e| Failure::Io(io::Error::other(e.to_string())))?,
    }
    out.flush()?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let text = read_to_string(&args.scenario).map_err(|_| usage(format!("--scenario {}: cannot read file", args.scenario.display())))?;
    let mut scenario: SimScenario =
        serde_json::from_str(&text).map_err(|e| usage(format!("--scenario {}: {e}", args.scenario.display())))?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let summary = match args.workers {
        Some(0) => return Err(usage("--workers must be at least 1")),
        Some(n) => run_simulation_with_workers(&scenario, n)?,
        None => run_simulation(&scenario)?,
    };
    let mut out = output_sink(&args.output)?;
    match args.format {
        Format::Csv => summary.write_csv(&mut out).map_err(|e| Failure::Io(io::Error::other(e.to_string())))?,
        Format::Json | Format::Text => {
            serde_json::to_writer_pretty(&mut out, &summary).map_err(io::Error::from)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}
