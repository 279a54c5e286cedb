//! Train, evaluate, compare and inspect runs from one config document.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use cavsim_core::approximator::DenseNet;
use cavsim_core::control::{build_controller, ControllerKind};
use cavsim_core::geometry::CorridorNetwork;
use cavsim_core::io::write_atomic;
use cavsim_core::learn::{run_training, N_FEATURES};
use cavsim_core::metrics::{
    compare, episode_metrics, read_metrics_csv, summarize, write_comparison_csv, write_metrics_csv, write_summary_csv,
    EpisodeMetrics,
};
use cavsim_core::sim::{Action, EpisodeLog, LogDetail, Regime, World};

pub use config::{ConfigError, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "cavsim", version, about = "Cell-reservation intersection control: train, evaluate, compare, inspect")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the shared leader network.
    Train(TrainArgs),
    /// Run one episode per seed with a controller and record logs and metrics.
    Evaluate(EvaluateArgs),
    /// Welch-test the first result directory against each of the others.
    Compare(CompareArgs),
    /// Print a step's occupancy or a vehicle's trajectory from a log.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to the config's output.dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    pub controller: Option<ControllerKind>,
    /// `3`, `1,4,9` or an inclusive range `1..20`.
    #[arg(long, value_parser = parse_seed_list)]
    pub seeds: Option<SeedList>,
    #[arg(long, value_parser = parse_regime)]
    pub regime: Option<Regime>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_detail)]
    pub log_detail: Option<LogDetail>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Result directories holding metrics.csv.
    pub dirs: Vec<PathBuf>,
    /// Report CSV path.
    #[arg(long, default_value = "comparison.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    pub log: PathBuf,
    #[arg(long, conflicts_with = "vehicle")]
    pub step: Option<u64>,
    #[arg(long)]
    pub vehicle: Option<u32>,
}

fn parse_kind(s: &str) -> Result<ControllerKind, String> {
    s.parse().map_err(|e: cavsim_core::control::ControlError| e.to_string())
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    Regime::parse(s).ok_or_else(|| format!("unknown regime {s:?}; expected moderate, high, extreme or training"))
}

fn parse_detail(s: &str) -> Result<LogDetail, String> {
    match s {
        "summary" => Ok(LogDetail::Summary),
        "grid" => Ok(LogDetail::Grid),
        "full" => Ok(LogDetail::Full),
        _ => Err(format!("unknown log detail {s:?}")),
    }
}

/// Seeds given on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

fn parse_seed_list(s: &str) -> Result<SeedList, String> {
    parse_seeds(s).map(SeedList)
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed {t:?}: {e}"));
    let seeds = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(format!("empty seed range {s}"));
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if seeds.is_empty() {
        return Err("no seeds".into());
    }
    Ok(seeds)
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<String, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(e) = args.epochs {
        cfg.trainer.epochs = e;
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&out).map_err(runtime)?;
    write_atomic(&out.join("effective_config.toml"), cfg.effective().to_toml().as_bytes()).map_err(runtime)?;
    let base = cfg.episode_config();
    let report = run_training(&base, &cfg.trainer, Some(&out), |s| {
        eprintln!("epoch {:>5}  epsilon {:.4}  reward {:>12.2}  loss {:.4}", s.epoch, s.epsilon, s.global_reward, s.mean_loss);
    })
    .map_err(runtime)?;
    let mut text = format!("trained {} epochs into {}\n", report.curve.len(), out.display());
    if let (Some(first), Some(last)) = (report.curve.first(), report.curve.last()) {
        let _ = writeln!(text, "global reward {:.2} -> {:.2}", first.global_reward, last.global_reward);
    }
    Ok(text)
}

fn load_model(path: &Path) -> Result<DenseNet, CliError> {
    DenseNet::load_expecting(path, N_FEATURES, Action::ALL.len())
        .map_err(|e| CliError::Usage(format!("cannot use model {}: {e}", path.display())))
}

/// One evaluation episode.
pub fn evaluate_seed(
    cfg: &RunConfig,
    kind: ControllerKind,
    model: Option<&DenseNet>,
    net: Arc<CorridorNetwork>,
    seed: u64,
) -> Result<(EpisodeLog, EpisodeMetrics), CliError> {
    let episode = cfg.episode_config();
    let mut controller =
        build_controller(kind, &cfg.controller.signal, model, cfg.controller.queue_cap, seed).map_err(runtime)?;
    let mut world = World::with_network(&episode, net.clone(), seed).map_err(runtime)?;
    for _ in 0..episode.steps {
        world.step(controller.as_mut()).map_err(runtime)?;
    }
    let log = world.into_log_named(&controller.name());
    let metrics = episode_metrics(&log, &net, cfg.evaluation.pet_max);
    Ok((log, metrics))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<String, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(k) = args.controller {
        cfg.controller.kind = k;
    }
    if let Some(s) = &args.seeds {
        cfg.evaluation.seeds = s.0.clone();
    }
    if let Some(r) = args.regime {
        cfg.demand = config::DemandSection { regime: Some(r), ..Default::default() };
    }
    if let Some(m) = &args.model {
        cfg.controller.model = Some(m.clone());
    }
    if let Some(d) = args.log_detail {
        cfg.evaluation.log = d;
    }
    cfg.validate()?;
    let kind = cfg.controller.kind;
    let model = match (kind, &cfg.controller.model) {
        (ControllerKind::Dscls, None) => return Err(CliError::Usage("the dscls controller needs --model".into())),
        (ControllerKind::Dscls, Some(p)) => Some(load_model(p)?),
        _ => None,
    };
    let episode = cfg.episode_config();
    let net = Arc::new(CorridorNetwork::build(&episode.network).map_err(runtime)?);
    let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let logs_dir = out.join("logs");
    std::fs::create_dir_all(&logs_dir).map_err(runtime)?;
    write_atomic(&out.join("effective_config.toml"), cfg.effective().to_toml().as_bytes()).map_err(runtime)?;

    let rows: Vec<EpisodeMetrics> = cfg
        .evaluation
        .seeds
        .par_iter()
        .map(|&seed| {
            let (log, metrics) = evaluate_seed(&cfg, kind, model.as_ref(), net.clone(), seed)?;
            let mut buf = Vec::new();
            log.write_jsonl(&mut buf).map_err(runtime)?;
            write_atomic(&logs_dir.join(format!("seed_{seed}.jsonl")), &buf).map_err(runtime)?;
            Ok(metrics)
        })
        .collect::<Result<_, CliError>>()?;

    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &rows).map_err(runtime)?;
    write_atomic(&out.join("metrics.csv"), &buf).map_err(runtime)?;
    let summary = summarize(&rows).map_err(runtime)?;
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &summary).map_err(runtime)?;
    write_atomic(&out.join("summary.csv"), &buf).map_err(runtime)?;

    let mut text = format!("{} over {} seeds into {}\n", kind, rows.len(), out.display());
    for s in &summary.stats {
        let _ = writeln!(text, "{:<18} mean {:>12.3}  sd {:>10.3}", s.metric, s.mean, s.sd);
    }
    Ok(text)
}

fn read_results(dir: &Path) -> Result<Vec<EpisodeMetrics>, CliError> {
    let path = dir.join("metrics.csv");
    let file = std::fs::File::open(&path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    read_metrics_csv(file).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn cmd_compare(args: &CompareArgs) -> Result<String, CliError> {
    if args.dirs.len() < 2 {
        return Err(CliError::Usage("compare needs at least two result directories".into()));
    }
    let base = read_results(&args.dirs[0])?;
    let mut text = String::new();
    let mut csv_out = Vec::new();
    for (n, dir) in args.dirs[1..].iter().enumerate() {
        let other = read_results(dir)?;
        let report = compare(&base, &other).map_err(|e| CliError::Usage(e.to_string()))?;
        text.push_str(&report.to_table());
        let mut buf = Vec::new();
        write_comparison_csv(&mut buf, &report).map_err(runtime)?;
        // one header for the whole file
        let body = if n == 0 { &buf[..] } else { &buf[buf.iter().position(|&b| b == b'\n').map_or(0, |i| i + 1)..] };
        csv_out.extend_from_slice(body);
    }
    write_atomic(&args.out, &csv_out).map_err(runtime)?;
    Ok(text)
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<String, CliError> {
    let file = std::fs::File::open(&args.log)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.log.display())))?;
    let log = EpisodeLog::read_jsonl(std::io::BufReader::new(file)).map_err(|e| CliError::Usage(e.to_string()))?;
    let h = &log.header;
    let mut text = String::new();
    if let Some(step) = args.step {
        if step >= h.steps.max(1) {
            return Err(CliError::Usage(format!("step {step} outside 0..{}", h.steps)));
        }
        let _ = writeln!(text, "step {step} t={:.2}", step as f64 * h.dt);
        let _ = writeln!(text, "{:>8} {:>5} {:>5} {:>9} {:>7} {:<10} cells", "vehicle", "grid", "move", "position", "speed", "action");
        for r in log.steps.iter().filter(|r| r.step == step) {
            let cells: Vec<String> = r.cells.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(
                text,
                "{:>8} {:>5} {:>5} {:>9.2} {:>7.2} {:<10} {}",
                r.id,
                r.intersection.map_or("-".into(), |i| i.to_string()),
                r.movement.map_or("-".into(), |m| m.to_string()),
                r.position,
                r.speed,
                format!("{:?}", r.action),
                cells.join(" ")
            );
        }
        if let Some(g) = log.rewards.get(step as usize) {
            let _ = writeln!(text, "global reward {g:.4}");
        }
    } else if let Some(id) = args.vehicle {
        let v = log.vehicle(id).ok_or_else(|| CliError::Usage(format!("unknown vehicle {id}")))?;
        let moves: Vec<String> = v.movements.iter().map(|m| m.to_string()).collect();
        let _ = writeln!(
            text,
            "vehicle {id} from intersection {} {:?} via {} arrival {:.2} release {:.2}",
            v.entry_intersection,
            v.entry_approach,
            moves.join(" "),
            v.arrival_time,
            v.release_time
        );
        if let Some(t) = v.insert_time {
            let _ = writeln!(text, "inserted {t:.2}");
        }
        for r in log.records_of(id) {
            let cells: Vec<String> = r.cells.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(
                text,
                "t={:>8.2} pos {:>8.2} v {:>6.2} {:<10} {}",
                r.time,
                r.position,
                r.speed,
                format!("{:?}", r.action),
                cells.join(" ")
            );
        }
        match v.exit_time {
            Some(t) => {
                let _ = writeln!(text, "exit {t:.2} delay {:.3} travel {:.2}", v.delay, t - v.release_time);
            }
            None => {
                let _ = writeln!(text, "still in network, delay so far {:.3}", v.delay);
            }
        }
    } else {
        let done = log.vehicles.iter().filter(|v| v.completed()).count();
        let _ = writeln!(
            text,
            "controller {} seed {} steps {} dt {} detail {:?}\nvehicles {} completed {} total reward {:.3}",
            h.controller,
            h.seed,
            h.steps,
            h.dt,
            h.detail,
            log.vehicles.len(),
            done,
            log.total_reward()
        );
    }
    Ok(text)
}
