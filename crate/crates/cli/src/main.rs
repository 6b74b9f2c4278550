//! `ismtrace` command-line tool.

mod commands;
mod config;
mod error;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ismtrace::psychophysics::PsychoModel;

use commands::Settings;
use config::CliConfig;
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "ismtrace", version, about = "Vibration intensity analysis, conversion and trajectory rendering")]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Psychophysical model file (default: built-in table).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Intensity mapped to the top of the colormap.
    #[arg(long, global = true)]
    imax: Option<f64>,
    /// Carrier frequency in Hz.
    #[arg(long, global = true)]
    carrier: Option<f64>,
    #[arg(long = "buffer-ms", global = true)]
    buffer_ms: Option<f64>,
    /// `host:port`; defaults to $ISMP_ENDPOINT or 127.0.0.1:7878.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Replay speed; `inf` replays as fast as possible.
    #[arg(long, global = true, default_value_t = 1.0)]
    speed: f64,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short = 'o', global = true)]
    out: Option<PathBuf>,
    /// More log output (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Intensity profile of a WAV or session (CSV, or a session with --out x.isms).
    Analyze { input: PathBuf },
    /// Resynthesize as an amplitude-modulated carrier WAV.
    Convert { input: PathBuf },
    /// Colored tip trajectory as PLY from a session, or a pose CSV plus --profile.
    Render {
        input: PathBuf,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Replay a session's poses and intensities over the wire.
    StreamSend { session: PathBuf },
    /// Receive one stream and save it as .isms or .ply.
    StreamRecv,
    /// Generate a session from a scenario file.
    Simulate { scenario: PathBuf },
    /// Pivot calibration from a pose CSV.
    Calibrate { poses: PathBuf },
    /// Paced replay of a session to the wire (--endpoint) and/or a file (--out).
    Replay { session: PathBuf },
}

fn settings(cli: &Cli) -> CliResult<Settings> {
    let mut config = match &cli.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    if let Some(m) = &cli.model {
        config.model = Some(m.clone());
    }
    if let Some(v) = cli.imax {
        config.imax = Some(v);
    }
    if let Some(v) = cli.carrier {
        config.ism.carrier_hz = v;
    }
    if let Some(v) = cli.buffer_ms {
        config.ism.buffer_ms = v;
    }
    if let Some(e) = &cli.endpoint {
        config.endpoint = Some(e.clone());
    }
    let (model, model_id) = match &config.model {
        Some(path) => {
            let model = PsychoModel::load(path).map_err(|e| CliError::from(e).context(path.display()))?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into());
            (model, id)
        }
        None => (PsychoModel::builtin(), "builtin".to_string()),
    };
    Ok(Settings {
        config,
        model,
        model_id,
        speed: cli.speed,
        seed: cli.seed,
        out: cli.out.clone(),
    })
}

fn run(cli: &Cli) -> CliResult<()> {
    let s = settings(cli)?;
    match &cli.command {
        Command::Analyze { input } => commands::analyze_cmd(&s, input),
        Command::Convert { input } => commands::convert_cmd(&s, input),
        Command::Render {
            input,
            profile,
            calibration,
        } => commands::render_cmd(&s, input, profile.as_deref(), calibration.as_deref()),
        Command::StreamSend { session } => commands::stream_send_cmd(&s, session),
        Command::StreamRecv => commands::stream_recv_cmd(&s),
        Command::Simulate { scenario } => commands::simulate_cmd(&s, scenario),
        Command::Calibrate { poses } => commands::calibrate_cmd(&s, poses),
        Command::Replay { session } => commands::replay_cmd(&s, session),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let err = CliError::usage(first.trim_start_matches("error: "));
            eprintln!("{err}");
            return ExitCode::from(err.kind.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.kind.exit_code() as u8)
        }
    }
}
