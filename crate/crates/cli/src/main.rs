//! `anglesizer`: generate traces, replay them through the engine, score
//! assessments, report progress and serve live sessions.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use anglesizer_core::analytics::GroupBy;
use anglesizer_core::model::{ConfigFile, GestureKind};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "anglesizer",
    version,
    about = "Measurement and teaching toolkit for body-scale gestures"
)]
struct Cli {
    /// JSON file overriding engine settings and the device profile.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic sensor trace with known ground truth.
    GenTrace(GenTraceArgs),
    /// Run a trace through the measurement engine.
    Replay(ReplayArgs),
    /// Score one trace per task and append the records to a log.
    Assess(AssessArgs),
    /// Summarize an assessment log.
    Report(ReportArgs),
    /// Serve live sessions over a websocket.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("value").required(true).args(["value_cm", "value_deg"]))]
pub struct GenTraceArgs {
    #[arg(long, value_parser = parse_gesture)]
    pub gesture: GestureKind,
    /// Distance for finger and hand gestures.
    #[arg(long)]
    pub value_cm: Option<f64>,
    /// Angle for body rotation; negative turns the other way.
    #[arg(long, allow_negative_numbers = true)]
    pub value_deg: Option<f64>,
    /// Pixel noise for finger gestures, jitter in meters for one hand.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Starting yaw for body rotation, degrees.
    #[arg(long, default_value_t = 0.0)]
    pub start_yaw: f64,
    /// Turn per frame for body rotation, degrees.
    #[arg(long, default_value_t = 3.0)]
    pub rate: f64,
    /// Coordinate leaps injected into a one-hand path.
    #[arg(long, default_value_t = 0)]
    pub outliers: usize,
    /// Size of each leap, meters.
    #[arg(long, default_value_t = 2.0)]
    pub outlier_mag: f64,
    /// Motion samples for a one-hand path.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Move a one-hand path along a diagonal instead of one axis.
    #[arg(long)]
    pub three_axis: bool,
    /// Depth offset of one knuckle relative to palm width, for two hands.
    #[arg(long, default_value_t = 0.0)]
    pub tilt: f64,
    /// Output file; defaults to `<gesture>-<value>.trace.jsonl`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub trace: PathBuf,
    /// Defaults to the gesture recorded in the trace header.
    #[arg(long, value_parser = parse_gesture)]
    pub gesture: Option<GestureKind>,
    /// Print the measurement as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    /// JSON list of `{"gesture": ..., "value": ...}` tasks.
    pub tasks: PathBuf,
    /// Directory of `*.trace.jsonl` files, paired with tasks in name order.
    pub trace_dir: PathBuf,
    #[arg(long)]
    pub participant: String,
    #[arg(long, default_value_t = 0)]
    pub day: u32,
    /// Log to append to.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GroupByArg {
    Gesture,
    Day,
    None,
}

impl From<GroupByArg> for GroupBy {
    fn from(g: GroupByArg) -> Self {
        match g {
            GroupByArg::Gesture => GroupBy::Gesture,
            GroupByArg::Day => GroupBy::Day,
            GroupByArg::None => GroupBy::None,
        }
    }
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Log to read.
    pub log: Option<PathBuf>,
    /// Aggregate instead of the per-day table.
    #[arg(long, value_enum)]
    pub group_by: Option<GroupByArg>,
    #[arg(long)]
    pub participant: Option<String>,
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory of static assets for the browser simulator.
    #[arg(long = "static", value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

fn parse_gesture(s: &str) -> Result<GestureKind, String> {
    s.parse().map_err(|_| {
        let known: Vec<_> = GestureKind::ALL.iter().map(|g| g.label()).collect();
        format!("expected one of {}", known.join(", "))
    })
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum Failure {
    Environment(String),
    Usage(String),
    Measurement(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Environment(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Measurement(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Environment(m) | Failure::Usage(m) | Failure::Measurement(m) => m,
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<ConfigFile, Failure> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Environment(format!("cannot read config {}: {e}", path.display())))?;
    ConfigFile::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(cli.config.as_ref()).and_then(|config| match cli.command {
        Command::GenTrace(args) => commands::gen_trace(&args, &config),
        Command::Replay(args) => commands::replay(&args, &config),
        Command::Assess(args) => commands::assess(&args, &config),
        Command::Report(args) => commands::report(&args),
        Command::Serve(args) => commands::serve(&args, &config),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
