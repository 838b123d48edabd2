//! Run configuration: clap flags merged over an optional flat key-value
//! config file, over documented defaults.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use borrowlab_core::bench::BiasMode;
use borrowlab_core::estimators::Method;
use borrowlab_core::simgen::Mechanism;
use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "borrowlab",
    about = "Influence-guided borrowing of external control samples for treatment effect estimation",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandKind,
}

#[derive(Debug, Subcommand)]
pub enum CommandKind {
    /// Generate a synthetic trial/pool pair and write them as CSV.
    Simulate(CommonArgs),
    /// Point estimate for one method at one borrowed-set choice.
    Estimate(CommonArgs),
    /// Rank the pool, sweep the MSE curve, and write the selected subset.
    Borrow(CommonArgs),
    /// Monte Carlo comparison of methods across replications.
    Benchmark(CommonArgs),
}

impl CommandKind {
    pub fn args(&self) -> &CommonArgs {
        match self {
            CommandKind::Simulate(a)
            | CommandKind::Estimate(a)
            | CommandKind::Borrow(a)
            | CommandKind::Benchmark(a) => a,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Simulate(_) => "simulate",
            CommandKind::Estimate(_) => "estimate",
            CommandKind::Borrow(_) => "borrow",
            CommandKind::Benchmark(_) => "benchmark",
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Synthetic scenario: linear | nonlinear | oneD.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Trial data CSV (alternative to --scenario).
    #[arg(long)]
    pub rct: Option<PathBuf>,
    /// External-control CSV paired with --rct.
    #[arg(long)]
    pub external: Option<PathBuf>,
    /// Outcome column name for file input.
    #[arg(long)]
    pub outcome: Option<String>,
    /// Treatment column name for file input.
    #[arg(long)]
    pub treat: Option<String>,
    /// Estimator(s): aipw | full | lasso | if (comma list for benchmark).
    #[arg(long)]
    pub method: Option<String>,
    /// Borrowed-set size: a number, a comma list (benchmark), or "auto".
    #[arg(long)]
    pub topk: Option<String>,
    /// Enumerate every k in the sweep instead of the spaced grid.
    #[arg(long)]
    pub dense: bool,
    /// Monte Carlo replications.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Base seed for scenario coefficients and replication data.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pool covariate location(s); a comma list runs a shift sweep.
    #[arg(long)]
    pub mu2: Option<String>,
    /// Trial control-arm subsample size(s); a comma list runs a sweep.
    #[arg(long = "control-n")]
    pub control_n: Option<String>,
    /// Output file (estimate/benchmark) or directory (simulate/borrow).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format: csv | json.
    #[arg(long)]
    pub format: Option<String>,
    /// Bias aggregation: abs-mean (|mean − τ|) or mean-abs (mean |τ̂ − τ|).
    #[arg(long = "bias-mode")]
    pub bias_mode: Option<String>,
    /// Disable covariate standardization and outcome rescaling for file input.
    #[arg(long = "no-standardize")]
    pub no_standardize: bool,
    /// Ridge penalty for the outcome regressions.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Polynomial degree of the outcome basis (1 = linear).
    #[arg(long)]
    pub degree: Option<usize>,
    /// Also write per-k MSE curves as CSV (benchmark).
    #[arg(long = "plot-data")]
    pub plot_data: bool,
    /// Flat key = value config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Where the data for a run comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Scenario(ScenarioKind),
    Files {
        rct: PathBuf,
        external: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Linear,
    Nonlinear,
    OneD,
}

impl ScenarioKind {
    pub fn mechanism(self) -> Mechanism {
        match self {
            ScenarioKind::Linear => Mechanism::Linear,
            ScenarioKind::Nonlinear => Mechanism::Nonlinear,
            ScenarioKind::OneD => Mechanism::OneD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopK {
    Auto,
    Fixed(usize),
    List(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Fully resolved configuration for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: &'static str,
    pub source: DataSource,
    pub outcome_col: String,
    pub treat_col: String,
    pub methods: Vec<Method>,
    pub topk: Option<TopK>,
    pub dense: bool,
    pub reps: usize,
    pub seed: u64,
    pub mu2: Vec<f64>,
    pub control_n: Vec<usize>,
    pub out: PathBuf,
    pub format: Option<OutputFormat>,
    pub bias_mode: BiasMode,
    pub standardize: bool,
    pub lambda: f64,
    pub degree: Option<usize>,
    pub plot_data: bool,
}

/// Flat `key = value` file; `#` starts a comment.
fn read_config_file(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let locus = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new("io", format!("cannot read config: {e}"), &locus))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::new(
                "config",
                format!("line {}: expected key = value", i + 1),
                &locus,
            ));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_usize_list(s: &str, what: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::new("config", format!("bad {what} entry '{t}'"), "flags"))
        })
        .collect()
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::new("config", format!("bad {what} entry '{t}'"), "flags"))
        })
        .collect()
}

fn parse_methods(s: &str) -> Result<Vec<Method>, CliError> {
    s.split(',')
        .map(|t| match t.trim().to_ascii_lowercase().as_str() {
            "aipw" => Ok(Method::Aipw),
            "full" => Ok(Method::Full),
            "lasso" => Ok(Method::Lasso),
            "if" => Ok(Method::If),
            other => Err(CliError::new(
                "config",
                format!("unknown method '{other}'"),
                "flags",
            )),
        })
        .collect()
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "linear" => Ok(ScenarioKind::Linear),
        "nonlinear" => Ok(ScenarioKind::Nonlinear),
        "oned" | "one-d" | "one_d" => Ok(ScenarioKind::OneD),
        other => Err(CliError::new(
            "config",
            format!("unknown scenario '{other}'"),
            "flags",
        )),
    }
}

fn parse_topk(s: &str) -> Result<TopK, CliError> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(TopK::Auto);
    }
    let list = parse_usize_list(s, "topk")?;
    Ok(if list.len() == 1 {
        TopK::Fixed(list[0])
    } else {
        TopK::List(list)
    })
}

/// Resolve the final configuration: flags > config file > defaults.
pub fn resolve(cli: &CommandKind) -> Result<RunConfig, CliError> {
    let args = cli.args();
    let file = match &args.config {
        Some(path) => read_config_file(path)?,
        None => HashMap::new(),
    };
    let pick = |flag: Option<String>, key: &str| -> Option<String> {
        flag.or_else(|| file.get(key).cloned())
    };

    let scenario = pick(args.scenario.clone(), "scenario");
    let rct = args
        .rct
        .clone()
        .or_else(|| file.get("rct").map(PathBuf::from));
    let external = args
        .external
        .clone()
        .or_else(|| file.get("external").map(PathBuf::from));

    let source = match (&scenario, &rct) {
        (Some(_), Some(_)) => {
            return Err(CliError::new(
                "config",
                "--scenario and --rct are mutually exclusive",
                "flags",
            ))
        }
        (Some(s), None) => DataSource::Scenario(parse_scenario(s)?),
        (None, Some(path)) => DataSource::Files {
            rct: path.clone(),
            external: external.clone(),
        },
        (None, None) => {
            return Err(CliError::new(
                "config",
                "either --scenario or --rct is required",
                "flags",
            ))
        }
    };

    let methods = match pick(args.method.clone(), "method") {
        Some(s) => parse_methods(&s)?,
        None => match cli.name() {
            "benchmark" => vec![Method::Aipw, Method::Full, Method::Lasso, Method::If],
            _ => vec![Method::Aipw],
        },
    };
    let topk = pick(args.topk.clone(), "topk")
        .map(|s| parse_topk(&s))
        .transpose()?;
    let reps = match pick(args.reps.map(|r| r.to_string()), "reps") {
        Some(s) => s
            .parse()
            .map_err(|_| CliError::new("config", format!("bad reps '{s}'"), "flags"))?,
        None => 200,
    };
    let seed = match pick(args.seed.map(|s| s.to_string()), "seed") {
        Some(s) => s
            .parse()
            .map_err(|_| CliError::new("config", format!("bad seed '{s}'"), "flags"))?,
        None => 0,
    };
    let mu2 = match pick(args.mu2.clone(), "mu2") {
        Some(s) => parse_f64_list(&s, "mu2")?,
        None => Vec::new(),
    };
    let control_n = match pick(args.control_n.clone(), "control-n") {
        Some(s) => parse_usize_list(&s, "control-n")?,
        None => Vec::new(),
    };
    let format = match pick(args.format.clone(), "format") {
        Some(s) => Some(match s.to_ascii_lowercase().as_str() {
            "csv" => OutputFormat::Csv,
            "json" => OutputFormat::Json,
            other => {
                return Err(CliError::new(
                    "config",
                    format!("unknown format '{other}'"),
                    "flags",
                ))
            }
        }),
        None => None,
    };
    let bias_mode = match pick(args.bias_mode.clone(), "bias-mode") {
        Some(s) => match s.to_ascii_lowercase().as_str() {
            "abs-mean" => BiasMode::AbsMean,
            "mean-abs" => BiasMode::MeanAbs,
            other => {
                return Err(CliError::new(
                    "config",
                    format!("unknown bias-mode '{other}'"),
                    "flags",
                ))
            }
        },
        None => BiasMode::AbsMean,
    };
    let lambda = match pick(args.lambda.map(|l| l.to_string()), "lambda") {
        Some(s) => s
            .parse()
            .map_err(|_| CliError::new("config", format!("bad lambda '{s}'"), "flags"))?,
        None => 1e-4,
    };
    let degree = match pick(args.degree.map(|d| d.to_string()), "degree") {
        Some(s) => Some(
            s.parse()
                .map_err(|_| CliError::new("config", format!("bad degree '{s}'"), "flags"))?,
        ),
        None => None,
    };

    let out = args
        .out
        .clone()
        .or_else(|| file.get("out").map(PathBuf::from))
        .unwrap_or_else(|| match cli.name() {
            "simulate" => PathBuf::from("sim_out"),
            "borrow" => PathBuf::from("borrow_out"),
            "estimate" => PathBuf::from("estimate.json"),
            _ => PathBuf::from("benchmark.csv"),
        });

    let standardize = !(args.no_standardize
        || file
            .get("no-standardize")
            .map(|v| v == "true")
            .unwrap_or(false));
    let dense = args.dense || file.get("dense").map(|v| v == "true").unwrap_or(false);
    let plot_data = args.plot_data || file.get("plot-data").map(|v| v == "true").unwrap_or(false);

    Ok(RunConfig {
        command: cli.name(),
        source,
        outcome_col: pick(args.outcome.clone(), "outcome").unwrap_or_else(|| "y".into()),
        treat_col: pick(args.treat.clone(), "treat").unwrap_or_else(|| "treat".into()),
        methods,
        topk,
        dense,
        reps,
        seed,
        mu2,
        control_n,
        out,
        format,
        bias_mode,
        standardize,
        lambda,
        degree,
        plot_data,
    })
}
