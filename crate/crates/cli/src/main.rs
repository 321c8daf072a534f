use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use seqcp::sim::{self, ExperimentSpec, Scenario};
use seqcp::threshold::{bootstrap_threshold, mc_threshold};
use seqcp::{
    BandwidthRule, DetectorKind, MonitorConfig, MonitorState, MonitorStatus, MultiplierConfig,
    ObservationMatrix, ThresholdFunction,
};

const EXIT_ALARM: u8 = 10;
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "seqcp", version, about = "Closed-end sequential change-point monitoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a threshold function.
    Threshold(ThresholdArgs),
    /// Monitor a stream against a threshold function.
    Monitor(MonitorArgs),
    /// Draw a scenario and write it as CSV.
    Simulate(SimulateArgs),
    /// Run level or power studies from a JSON experiment spec.
    Experiment(ExperimentArgs),
}

/// Per-field overrides of a JSON monitoring configuration.
#[derive(Args)]
struct ConfigArgs {
    /// JSON file with the monitoring configuration
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of threshold steps
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, value_parser = parse_detector)]
    detector: Option<DetectorKind>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Mc,
    Bootstrap,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Learning sample (CSV); required for bootstrap
    #[arg(long)]
    learning: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, default_value_t = 2000)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplier bandwidth: a positive integer, `power` (m^{1/3}, the
    /// default) or `auto` (estimated from the learning sample)
    #[arg(long, value_parser = parse_bandwidth)]
    bandwidth: Option<BandwidthRule>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MonitorArgs {
    #[arg(long)]
    learning: PathBuf,
    #[arg(long)]
    stream: PathBuf,
    #[arg(long)]
    threshold: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON scenario
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment spec
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON results, one entry per table cell
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rejection percentages laid out as a table
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_bandwidth(s: &str) -> std::result::Result<BandwidthRule, String> {
    match s {
        "power" => Ok(BandwidthRule::PowerRule),
        "auto" => Ok(BandwidthRule::DataDriven),
        _ => match s.parse::<usize>() {
            Ok(ell) if ell > 0 => Ok(BandwidthRule::Fixed(ell)),
            _ => Err(format!("expected a positive integer, `power` or `auto`, got `{s}`")),
        },
    }
}

fn parse_detector(s: &str) -> std::result::Result<DetectorKind, String> {
    s.parse().map_err(|e: seqcp::Error| e.to_string())
}

impl ConfigArgs {
    /// Merges the config file, the defaults in `base` and the overrides.
    fn resolve(&self, base: Map<String, Value>) -> Result<MonitorConfig> {
        let mut obj = base;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            match serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))? {
                Value::Object(file) => obj.extend(file),
                _ => bail!("{}: configuration must be a JSON object", path.display()),
            }
        }
        let mut set = |key: &str, v: Option<Value>| {
            if let Some(v) = v {
                obj.insert(key.to_string(), v);
            }
        };
        set("m", self.m.map(Value::from));
        set("n", self.n.map(Value::from));
        set("alpha", self.alpha.map(Value::from));
        set("p", self.p.map(Value::from));
        set("detector", self.detector.map(|d| Value::from(d.to_string())));
        set("gamma", self.gamma.map(Value::from));
        set("delta", self.delta.map(Value::from));
        set("dim", self.dim.map(Value::from));
        for key in ["m", "n"] {
            if !obj.contains_key(key) {
                bail!("missing `{key}`: pass --{key} or set it in --config");
            }
        }
        let cfg: MonitorConfig = serde_json::from_value(Value::Object(obj)).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_matrix(path: &Path) -> Result<ObservationMatrix> {
    sim::read_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn threshold(args: ThresholdArgs) -> Result<()> {
    let learning = args.learning.as_deref().map(read_matrix).transpose()?;
    let mut base = Map::new();
    if let Some(x) = &learning {
        base.insert("m".into(), x.nrows().into());
        base.insert("dim".into(), x.dim().into());
    }
    let cfg = args.cfg.resolve(base)?;
    let th = match args.mode {
        Mode::Mc => mc_threshold(&cfg, args.replicates, args.seed)?,
        Mode::Bootstrap => {
            let Some(x) = &learning else {
                bail!("bootstrap thresholds need --learning");
            };
            let mut mult = MultiplierConfig::new(args.replicates, args.seed);
            if let Some(rule) = args.bandwidth {
                mult = mult.with_bandwidth(rule);
            }
            bootstrap_threshold(x, &cfg, &mult)?
        }
    };
    emit(&(th.to_json()? + "\n"), args.out.as_deref())
}

fn monitor(args: MonitorArgs) -> Result<MonitorStatus> {
    let learning = read_matrix(&args.learning)?;
    let stream = read_matrix(&args.stream)?;
    let text = fs::read_to_string(&args.threshold)
        .with_context(|| format!("reading {}", args.threshold.display()))?;
    let th = ThresholdFunction::from_json(&text)?;
    let prov = &th.provenance;
    let mut base = Map::new();
    base.insert("m".into(), th.m().into());
    base.insert("n".into(), th.n().into());
    base.insert("p".into(), th.steps().into());
    base.insert("alpha".into(), prov.alpha.into());
    base.insert("detector".into(), prov.detector.to_string().into());
    base.insert("gamma".into(), prov.gamma.into());
    base.insert("delta".into(), prov.delta.into());
    base.insert("dim".into(), learning.dim().into());
    let cfg = args.cfg.resolve(base)?;
    let rows: Vec<&[f64]> = stream.rows().collect();
    let report = MonitorState::init(&learning, th, cfg)?.run(&rows)?;
    match report.status {
        MonitorStatus::Alarmed { at, changepoint } => {
            log::info!("alarm at k = {at}, estimated change after observation {}", changepoint - 1)
        }
        status => log::info!("no alarm ({status:?})"),
    }
    emit(&(serde_json::to_string_pretty(&report)? + "\n"), args.out.as_deref())?;
    Ok(report.status)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.scenario)
        .with_context(|| format!("reading {}", args.scenario.display()))?;
    let mut scn: Scenario = serde_json::from_str(&text).context("invalid scenario")?;
    if let Some(m) = args.m {
        scn.m = m;
    }
    if let Some(n) = args.n {
        scn.n = n;
    }
    let x = sim::generate(&scn, args.seed)?;
    emit(&sim::format_csv(&x), args.out.as_deref())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let mut spec = ExperimentSpec::from_json(&text)?;
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let table = spec.run()?;
    if let Some(path) = &args.csv {
        emit(&table.to_wide_csv()?, Some(path))?;
    }
    emit(&(serde_json::to_string_pretty(&table)? + "\n"), args.out.as_deref())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Threshold(a) => threshold(a).map(|_| ExitCode::SUCCESS),
        Command::Monitor(a) => monitor(a).map(|s| match s {
            MonitorStatus::Alarmed { .. } => ExitCode::from(EXIT_ALARM),
            _ => ExitCode::SUCCESS,
        }),
        Command::Simulate(a) => simulate(a).map(|_| ExitCode::SUCCESS),
        Command::Experiment(a) => experiment(a).map(|_| ExitCode::SUCCESS),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(EXIT_ERROR)
    })
}
