use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mesomarket::config::{load_config, BiasKind, ConfigError, SimConfig};
use mesomarket::engine::{run_sweep, Simulation, SweepError};
use mesomarket::io::{self, IoError};
use mesomarket::stats::{StatsError, VolatilityLags};

const OUT_DIR_ENV: &str = "MESOMARKET_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "mesomarket",
    version,
    about = "Agent-based market simulator with biased learning investors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its series, agents and metrics.
    Run(RunArgs),
    /// Run every bias percentage in a grid, several runs each.
    Sweep(SweepArgs),
    /// Compute the metric battery for a real `date,close,volume` CSV.
    Analyze(AnalyzeArgs),
    /// Join a sweep summary with real-data metrics.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Desk,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base settings when no config file is given.
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    /// delay_discounting, fear or greed.
    #[arg(long)]
    bias: Option<BiasKind>,
    /// Output root; defaults to $MESOMARKET_OUT_DIR, then `out`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Percentage of biased agents.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 0)]
    run_index: u64,
    /// Also write both policy tables of every agent.
    #[arg(long)]
    dump_policies: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Comma-separated percentages.
    #[arg(long, value_delimiter = ',', default_value = "0,25,50,75,100")]
    p_grid: Vec<f64>,
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Metrics JSON destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    week: usize,
    #[arg(long, default_value_t = 21)]
    month: usize,
}

#[derive(Args)]
struct CompareArgs {
    /// `summary.csv` written by `sweep`.
    #[arg(long)]
    summary: PathBuf,
    /// Metrics JSON written by `analyze`.
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::Sweep(SweepError::Config(_)) => "config",
            CliError::Io(_) => "io",
            CliError::Sweep(_) | CliError::Stats(_) => "metrics",
        }
    }
}

fn resolve_config(args: &ConfigArgs) -> Result<SimConfig, CliError> {
    let mut cfg = match (&args.config, args.preset) {
        (Some(path), _) => load_config(path)?,
        (None, Preset::Default) => SimConfig::default(),
        (None, Preset::Desk) => SimConfig::desk(),
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(bias) = args.bias {
        cfg.bias_kind = bias;
    }
    Ok(cfg)
}

fn out_root(args: &ConfigArgs) -> PathBuf {
    args.out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => io::write_text(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let mut cfg = resolve_config(&args.common)?;
    if let Some(p) = args.p {
        cfg.bias_percent = p;
    }
    cfg.validate()?;
    let dir = io::run_dir(&out_root(&args.common), &cfg, args.run_index);
    let mut sim = Simulation::new(&cfg, args.run_index)?;
    while !sim.is_done() {
        sim.step();
    }
    sim.drain();
    if args.dump_policies {
        let agents = sim.agents();
        let forecast = io::policy_csv(&cfg, agents.iter().map(|a| (a.id, a.forecaster())));
        let trade = io::policy_csv(&cfg, agents.iter().map(|a| (a.id, a.trader())));
        io::write_text(&dir.join("policy_forecast.csv"), &forecast)?;
        io::write_text(&dir.join("policy_trade.csv"), &trade)?;
    }
    io::write_run(&sim.finish(), &dir)?;
    println!("{}", dir.display());
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let mut cfg = resolve_config(&args.common)?;
    if let Some(runs) = args.runs {
        cfg.runs = runs;
    }
    cfg.validate()?;
    let output = run_sweep(&cfg, &args.p_grid)?;
    let summary = io::write_sweep(&output, &cfg, &out_root(&args.common))?;
    println!("{}", summary.display());
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let records = io::ingest_real_csv(&args.input)?;
    let report = io::analyze_records(
        &records,
        VolatilityLags::from_calendar(args.week, args.month),
    )?;
    emit(args.out.as_deref(), &io::metrics_json(&[report]))
}

fn compare(args: CompareArgs) -> Result<(), CliError> {
    let summary = io::read_summary(&args.summary)?;
    let real = io::read_flat_metrics(&args.real)?;
    emit(args.out.as_deref(), &io::compare_table(&summary, &real))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Analyze(a) => analyze(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
