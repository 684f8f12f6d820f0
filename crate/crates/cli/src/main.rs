//! `pingloc`: simulate recordings, localize pings, run Monte Carlo sweeps and
//! check array layouts.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 no ping found,
//! 3 at least one report did not converge, 10..=15 recording file errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pingloc::geometry::{validate_array, HydrophoneArray, Scenario, DEFAULT_SOUND_SPEED};
use pingloc::montecarlo::{monte_carlo, write_csv, EvalConfig};
use pingloc::pipeline::{localize_scenario, run_localization, LocalizationRun, PipelineError, PipelineParams};
use pingloc::recording::{read_recording, write_recording, RecordingError};
use pingloc::simulator::{render_scene, SimulationError};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "pingloc", version, about = "Hydrophone-array pinger localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scenario into a recording file.
    Simulate(SimulateArgs),
    /// Localize every ping in a scenario or a recording; NDJSON reports.
    Localize(LocalizeArgs),
    /// Randomized evaluation over range and noise cells.
    Montecarlo(MonteCarloArgs),
    /// Check an array layout against the spacing and spanning rules.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct LocalizeArgs {
    /// Scenario JSON, or with --recording an array JSON (optional).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    recording: Option<PathBuf>,
    /// Pipeline parameter JSON.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Include per-stage wall-clock timings (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
    /// NDJSON output (the default and only report format).
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MonteCarloArgs {
    /// Eval config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the summary as JSON instead of the CSV.
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    /// Write per-trial CSV (default).
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Array JSON; the default layout when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 40_000.0)]
    frequency: f64,
    #[arg(long, default_value_t = DEFAULT_SOUND_SPEED)]
    sound_speed: f64,
}

enum Failure {
    Config(String),
    NoPing,
    Recording(RecordingError),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::NoPing => Failure::NoPing,
            PipelineError::Simulation(SimulationError::Recording(r)) => Failure::Recording(r),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn simulate(args: SimulateArgs) -> Result<ExitCode, Failure> {
    let mut scenario: Scenario = load(&args.config)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let recording = render_scene(&scenario).map_err(|e| match e {
        SimulationError::Recording(r) => Failure::Recording(r),
        other => Failure::Config(other.to_string()),
    })?;
    write_recording(&recording, &args.out).map_err(Failure::Recording)?;
    Ok(ExitCode::SUCCESS)
}

fn localize(args: LocalizeArgs) -> Result<ExitCode, Failure> {
    let params: PipelineParams = match &args.params {
        Some(p) => load(p)?,
        None => PipelineParams::default(),
    };
    let run: LocalizationRun = match (&args.recording, &args.config) {
        (Some(rec), config) => {
            let array: HydrophoneArray = match config {
                Some(p) => load(p)?,
                None => HydrophoneArray::default(),
            };
            let recording = read_recording(rec).map_err(Failure::Recording)?;
            run_localization(&recording, &array, &params)?
        }
        (None, Some(config)) => {
            let mut scenario: Scenario = load(config)?;
            if let Some(seed) = args.seed {
                scenario.seed = seed;
            }
            localize_scenario(&scenario, &params)?
        }
        (None, None) => return Err(Failure::Config("localize needs --config or --recording".into())),
    };
    for s in &run.skipped {
        eprintln!("skipped ping at sample {}: {}", s.onset_sample, s.reason);
    }
    let mut out = output(args.out.as_deref())?;
    for est in &run.estimates {
        let mut report = est.report.clone();
        if !args.timing {
            report.timing = None;
        }
        serde_json::to_writer(&mut out, &report).map_err(|e| Failure::Config(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(if run.all_converged() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn montecarlo(args: MonteCarloArgs) -> Result<ExitCode, Failure> {
    let mut cfg: EvalConfig = match &args.config {
        Some(p) => load(p)?,
        None => EvalConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let result = monte_carlo(&cfg)?;
    let mut out = output(args.out.as_deref())?;
    if args.json {
        serde_json::to_writer_pretty(&mut out, &result.summary).map_err(|e| Failure::Config(e.to_string()))?;
        out.write_all(b"\n")?;
    } else {
        write_csv(&result, &mut out).map_err(|e| Failure::Config(e.to_string()))?;
    }
    out.flush()?;
    let s = &result.summary.overall;
    eprintln!(
        "trials {}  success {:.3}  octant {:.3}  az err p50 {:.3} p90 {:.3} max {:.3} deg",
        s.trials, s.success_fraction, s.octant_accuracy, s.p50, s.p90, s.max
    );
    Ok(ExitCode::SUCCESS)
}

fn validate(args: ValidateArgs) -> Result<ExitCode, Failure> {
    let array: HydrophoneArray = match &args.config {
        Some(p) => load(p)?,
        None => HydrophoneArray::default(),
    };
    let report = validate_array(&array, args.frequency, args.sound_speed);
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(|e| Failure::Config(e.to_string()))?
    );
    Ok(if report.ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Localize(a) => localize(a),
        Command::Montecarlo(a) => montecarlo(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::NoPing) => {
            eprintln!("error: no ping detected in recording");
            ExitCode::from(2)
        }
        Err(Failure::Recording(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
