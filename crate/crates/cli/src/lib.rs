//! Argument parsing and subcommand dispatch for the `eotrack` binary.
//!
//! Exit codes: 0 success, 1 usage error, 2 malformed input, 3 internal
//! invariant violation.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, Write};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, LevelFilter};

use eotrack_core::evaluation::{self, pr_sweep};
use eotrack_core::event_io::{self, EventFormat};
use eotrack_core::pipeline::{self, RunConfig};
use eotrack_core::{synth, Error, EventStream, SceneSpec, SensorGeometry};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_INVARIANT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "eotrack", version, about = "Multi-object tracking for event-camera streams")]
pub struct Cli {
    /// Print per-frame and per-tick progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    /// Print the default run configuration as JSON and exit.
    #[arg(long)]
    pub print_default_config: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Eot,
    Ceot,
}

#[derive(Debug, clap::Args)]
pub struct GeometryArgs {
    /// Sensor width; required for CSV event input.
    #[arg(long, requires = "height")]
    pub width: Option<u16>,
    /// Sensor height; required for CSV event input.
    #[arg(long, requires = "width")]
    pub height: Option<u16>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert events between CSV and binary; the format follows the extension.
    Convert {
        /// Event input (.csv or binary).
        input: PathBuf,
        /// Event output (.csv or binary).
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        geometry: GeometryArgs,
    },
    /// Generate a synthetic event stream and its ground truth.
    Synth {
        /// Scene description (JSON).
        #[arg(required_unless_present = "scene", conflicts_with = "scene")]
        spec: Option<PathBuf>,
        /// Use a built-in scene (S1..S6) instead of a file.
        #[arg(long)]
        scene: Option<String>,
        /// Event output; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Ground-truth CSV output.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Overrides the scene seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a tracker over an event stream.
    Track {
        #[arg(long, value_enum)]
        algo: Algo,
        /// Run configuration (JSON); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Event input (.csv or binary).
        input: PathBuf,
        /// Track CSV output; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Overrides the tracker seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        geometry: GeometryArgs,
    },
    /// Score tracks against ground truth over a threshold sweep.
    Eval {
        /// Track CSV.
        tracks: PathBuf,
        /// Ground-truth CSV.
        gt: PathBuf,
        /// Report CSV output; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Run configuration (JSON) supplying the eval section.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Interpolate every live track to one timestamp.
    Interp {
        /// Track CSV.
        tracks: PathBuf,
        /// Query time in microseconds.
        #[arg(long = "t")]
        t: u64,
        /// Box CSV output; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Input(anyhow::Error),
    Invariant(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Input(_) => EXIT_INPUT,
            Failure::Invariant(_) => EXIT_INVARIANT,
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        if err.is_input_error() {
            Failure::Input(err.into())
        } else {
            Failure::Invariant(err.into())
        }
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `args` (including the program name), runs the subcommand, and
/// returns the process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    let outcome = panic::catch_unwind(AssertUnwindSafe(|| dispatch(cli)));
    match outcome {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(failure)) => {
            match &failure {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Input(err) => eprintln!("error: {err:#}"),
                Failure::Invariant(err) => eprintln!("internal error: {err:#}"),
            }
            failure.code()
        }
        Err(_) => {
            eprintln!("internal error: invariant violated");
            EXIT_INVARIANT
        }
    }
}

fn init_logging(verbose: bool) {
    let level = if verbose { LevelFilter::Debug } else { LevelFilter::Warn };
    // A second init in the same process (tests) keeps the first logger.
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn dispatch(cli: Cli) -> CmdResult {
    if cli.print_default_config {
        let json = RunConfig::default().to_json()?;
        return write_output(None, format!("{json}\n").as_bytes());
    }
    let Some(command) = cli.command else {
        return Err(Failure::Usage("a subcommand or --print-default-config is required".into()));
    };
    match command {
        Command::Convert { input, output, geometry } => convert(&input, &output, &geometry),
        Command::Synth {
            spec,
            scene,
            output,
            gt,
            seed,
        } => synthesize(spec.as_deref(), scene.as_deref(), output.as_deref(), gt.as_deref(), seed),
        Command::Track {
            algo,
            config,
            input,
            output,
            seed,
            geometry,
        } => track(algo, config.as_deref(), &input, output.as_deref(), seed, &geometry),
        Command::Eval {
            tracks,
            gt,
            output,
            config,
        } => eval(&tracks, &gt, output.as_deref(), config.as_deref()),
        Command::Interp { tracks, t, output } => interp(&tracks, t, output.as_deref()),
    }
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).with_context(|| format!("cannot open {}", path.display())).map_err(Failure::Input)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Input)
}

/// Writes to `path`, or to stdout when no path is given.
fn write_output(path: Option<&Path>, bytes: &[u8]) -> CmdResult {
    let result = match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).context("cannot write to stdout")
        }
    };
    result.map_err(Failure::Input)
}

fn geometry_override(args: &GeometryArgs) -> Result<Option<SensorGeometry>, Failure> {
    match (args.width, args.height) {
        (Some(w), Some(h)) => Ok(Some(SensorGeometry::new(w, h)?)),
        _ => Ok(None),
    }
}

fn load_events(path: &Path, geometry: &GeometryArgs) -> Result<EventStream, Failure> {
    let format = EventFormat::from_path(path);
    let stream = event_io::read_events(open(path)?, format, geometry_override(geometry)?)
        .with_context(|| format!("reading {}", path.display()));
    stream.map_err(|err| match err.downcast_ref::<Error>() {
        Some(e) if !e.is_input_error() => Failure::Invariant(err),
        _ => Failure::Input(err),
    })
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => RunConfig::from_json(&read_text(p)?)
            .with_context(|| format!("config {}", p.display()))
            .map_err(Failure::Input),
        None => Ok(RunConfig::default()),
    }
}

fn convert(input: &Path, output: &Path, geometry: &GeometryArgs) -> CmdResult {
    let stream = load_events(input, geometry)?;
    let mut bytes = Vec::new();
    event_io::write_events(&stream, &mut bytes, EventFormat::from_path(output))?;
    info!("converted {} events", stream.len());
    write_output(Some(output), &bytes)
}

fn synthesize(
    spec: Option<&Path>,
    scene: Option<&str>,
    output: Option<&Path>,
    gt: Option<&Path>,
    seed: Option<u64>,
) -> CmdResult {
    let mut spec = match (spec, scene) {
        (Some(path), _) => SceneSpec::from_json(&read_text(path)?)
            .with_context(|| format!("scene {}", path.display()))
            .map_err(Failure::Input)?,
        (None, Some(name)) => synth::standard_scene(name)
            .ok_or_else(|| Failure::Usage(format!("unknown scene '{name}'; expected S1..S6")))?,
        (None, None) => return Err(Failure::Usage("a scene file or --scene is required".into())),
    };
    if let Some(seed) = seed {
        spec.rng_seed = seed;
    }
    let (stream, records) = synth::generate(&spec)?;
    info!("generated {} events, {} ground-truth rows", stream.len(), records.len());
    let format = output.map_or(EventFormat::Binary, EventFormat::from_path);
    let mut bytes = Vec::new();
    event_io::write_events(&stream, &mut bytes, format)?;
    write_output(output, &bytes)?;
    if let Some(gt) = gt {
        let mut bytes = Vec::new();
        evaluation::write_ground_truth(&records, &mut bytes)?;
        write_output(Some(gt), &bytes)?;
    }
    Ok(())
}

fn track(
    algo: Algo,
    config: Option<&Path>,
    input: &Path,
    output: Option<&Path>,
    seed: Option<u64>,
    geometry: &GeometryArgs,
) -> CmdResult {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.ceot.rng_seed = seed;
    }
    let stream = load_events(input, geometry)?;
    let snapshots = match algo {
        Algo::Eot => pipeline::track_eot(&stream, &cfg.framer, &cfg.eot)?,
        Algo::Ceot => pipeline::track_ceot(&stream, &cfg.ceot)?,
    };
    info!("{} events -> {} snapshots", stream.len(), snapshots.len());
    let mut bytes = Vec::new();
    event_io::write_tracks(&snapshots, &mut bytes)?;
    write_output(output, &bytes)
}

fn eval(tracks: &Path, gt: &Path, output: Option<&Path>, config: Option<&Path>) -> CmdResult {
    let cfg = load_config(config)?.eval;
    let pred = event_io::read_tracks(open(tracks)?)
        .with_context(|| format!("reading {}", tracks.display()))
        .map_err(Failure::Input)?;
    let truth = evaluation::read_ground_truth(open(gt)?)
        .with_context(|| format!("reading {}", gt.display()))
        .map_err(Failure::Input)?;
    let report = pr_sweep(&pred, &truth, &cfg.thresholds, cfg.include_tracking, None)?;
    info!("\n{}", report.to_table());
    write_output(output, report.to_csv().as_bytes())
}

fn interp(tracks: &Path, t: u64, output: Option<&Path>) -> CmdResult {
    let snapshots = event_io::read_tracks(open(tracks)?)
        .with_context(|| format!("reading {}", tracks.display()))
        .map_err(Failure::Input)?;
    let rows = pipeline::interpolate_tracks(&snapshots, t)?;
    if rows.is_empty() {
        info!("no track spans t={t}");
    }
    let mut bytes = Vec::new();
    event_io::write_boxes(&rows, &mut bytes)?;
    write_output(output, &bytes)
}
