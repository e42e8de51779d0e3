//! `irtcat`: calibration, adaptive-test simulation and exercise analytics from the shell.
//!
//! Every command writes its outputs plus a `manifest.json` into `--out`.
//! `irtcat verify <manifest>` reruns a command from its manifest and checks
//! that every output is byte-identical.

mod commands;
pub mod config;
mod error;
pub mod manifest;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use error::CliError;
pub use manifest::{FileDigest, Manifest, MANIFEST_FILE};

use irtcat::simulator::{ReplayMode, SweepKind};

#[derive(Debug, Clone, Parser)]
#[command(name = "irtcat", version, about = "Adaptive testing on the 3PL IRT model")]
pub struct Cli {
    /// TOML configuration for the command; unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed. Drawn from the clock and recorded in the manifest when omitted.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Outputs do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Fit item parameters from a response log.
    Calibrate(CalibrateArgs),
    /// Simulated and replayed adaptive tests.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Construct-level ability estimates from practice logs.
    #[command(subcommand)]
    Exercise(ExerciseCommand),
    /// Seeded synthetic datasets.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Rerun a command from its manifest and compare every output.
    Verify {
        manifest: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    /// CSV with columns `learner_id,item_id,correct[,timestamp]`.
    #[arg(long)]
    pub responses: PathBuf,
    /// Existing bank whose parameters seed the fit.
    #[arg(long)]
    pub init_bank: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BankArg {
    #[arg(long)]
    pub bank: PathBuf,
}

#[derive(Debug, Clone, Subcommand)]
pub enum SimulateCommand {
    /// Artificial learners at fixed abilities, traced past convergence.
    Grid(BankArg),
    /// One batch of sessions with uniformly drawn abilities.
    Batch(BankArg),
    /// Slip and exploration settings on shared seeds.
    SlipSweep(BankArg),
    /// A family of termination criteria on shared seeds.
    TermSweep {
        #[command(flatten)]
        bank: BankArg,
        #[arg(long, value_parser = parse_kind())]
        kind: SweepKind,
    },
    /// Adaptive tests replayed from recorded logs.
    Replay {
        #[command(flatten)]
        bank: BankArg,
        #[arg(long)]
        responses: PathBuf,
        #[arg(long, default_value = "adaptive-replay", value_parser = parse_mode())]
        mode: ReplayMode,
        /// item_id,level table; required for manual-difficulty.
        #[arg(long)]
        item_levels: Option<PathBuf>,
        /// learner_id,theta table added to the output.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct EventsArg {
    #[arg(long)]
    pub events: PathBuf,
}

#[derive(Debug, Clone, Subcommand)]
pub enum ExerciseCommand {
    /// Credits and penalties per student and construct.
    Ingest(EventsArg),
    /// Fit constructs and student abilities under one filter.
    Fit(EventsArg),
    /// Evaluate every filter cell against teacher levels.
    Grid {
        #[command(flatten)]
        events: EventsArg,
        #[arg(long)]
        labels: PathBuf,
    },
}

#[derive(Debug, Clone, Subcommand)]
pub enum SynthCommand {
    /// Item bank.
    Bank,
    /// Learner responses to an existing bank.
    Responses(BankArg),
    /// Practice cohort with teacher labels.
    Exercises,
}

fn parse_kind() -> impl TypedValueParser<Value = SweepKind> {
    PossibleValuesParser::new(["fixed", "sem", "earlystop", "overall"]).map(|s| s.parse().expect("listed kind"))
}

fn parse_mode() -> impl TypedValueParser<Value = ReplayMode> {
    PossibleValuesParser::new(["adaptive-replay", "full-session", "manual-difficulty"])
        .map(|s| s.parse().expect("listed mode"))
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::Calibrate(_) => "calibrate".into(),
            Command::Simulate(s) => format!(
                "simulate {}",
                match s {
                    SimulateCommand::Grid(_) => "grid",
                    SimulateCommand::Batch(_) => "batch",
                    SimulateCommand::SlipSweep(_) => "slip-sweep",
                    SimulateCommand::TermSweep { .. } => "term-sweep",
                    SimulateCommand::Replay { .. } => "replay",
                }
            ),
            Command::Exercise(e) => format!(
                "exercise {}",
                match e {
                    ExerciseCommand::Ingest(_) => "ingest",
                    ExerciseCommand::Fit(_) => "fit",
                    ExerciseCommand::Grid { .. } => "grid",
                }
            ),
            Command::Synth(s) => format!(
                "synth {}",
                match s {
                    SynthCommand::Bank => "bank",
                    SynthCommand::Responses(_) => "responses",
                    SynthCommand::Exercises => "exercises",
                }
            ),
            Command::Verify { .. } => "verify".into(),
        }
    }
}

enum ConfigSource {
    Default,
    File(PathBuf),
    Json(serde_json::Value),
}

/// State shared by a command while it runs.
pub(crate) struct Ctx {
    out: PathBuf,
    seed: u64,
    source: ConfigSource,
    resolved: serde_json::Value,
    inputs: Vec<FileDigest>,
    outputs: Vec<String>,
    quiet: bool,
}

impl Ctx {
    fn load<T: DeserializeOwned + Serialize + Default>(&mut self) -> Result<T, CliError> {
        let cfg: T = match &self.source {
            ConfigSource::Default => T::default(),
            ConfigSource::File(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                toml::from_str(&text)?
            }
            ConfigSource::Json(v) => serde_json::from_value(v.clone())?,
        };
        self.resolved = serde_json::to_value(&cfg)?;
        Ok(cfg)
    }

    /// Reads an input file and records its digest.
    fn input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: manifest::sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    /// Creates `name` in the output directory and hands a buffered writer to `f`.
    fn output<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<fs::File>) -> Result<(), CliError>,
    {
        let path = self.out.join(name);
        let file = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        std::io::Write::flush(&mut w)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

fn clock_seed() -> u64 {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    irtcat::rng::derive_seed(nanos, std::process::id() as u64)
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Parses `argv` (without the program name) and runs the command.
pub fn run_from_args<I, S>(argv: I) -> Result<Manifest, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(std::iter::once("irtcat".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| CliError::Parse(e.to_string()))?;
    run(cli, argv)
}

/// Runs a parsed command. `argv` is recorded in the manifest.
pub fn run(cli: Cli, argv: Vec<String>) -> Result<Manifest, CliError> {
    if let Command::Verify { manifest } = &cli.command {
        return verify(manifest, cli.workers);
    }
    let source = match &cli.config {
        Some(p) => ConfigSource::File(p.clone()),
        None => ConfigSource::Default,
    };
    let (manifest, deferred) = execute(cli.clone(), argv, source, cli.seed.unwrap_or_else(clock_seed), false)?;
    match deferred {
        Some(err) => Err(err),
        None => Ok(manifest),
    }
}

/// Runs a command and writes its manifest. Errors raised after the outputs
/// were written, such as non-convergence, come back alongside the manifest.
fn execute(
    cli: Cli,
    argv: Vec<String>,
    source: ConfigSource,
    seed: u64,
    quiet: bool,
) -> Result<(Manifest, Option<CliError>), CliError> {
    let workers = cli.workers.unwrap_or_else(default_workers).max(1);
    fs::create_dir_all(&cli.out).map_err(|e| CliError::Io(format!("{}: {e}", cli.out.display())))?;
    let mut ctx = Ctx {
        out: cli.out.clone(),
        seed,
        source,
        resolved: serde_json::Value::Null,
        inputs: Vec::new(),
        outputs: Vec::new(),
        quiet,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let deferred = pool.install(|| commands::dispatch(&cli.command, &mut ctx))?;

    let outputs = ctx
        .outputs
        .iter()
        .map(|name| manifest::digest_file(&ctx.out.join(name), name.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = Manifest {
        tool: "irtcat".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        argv,
        command: cli.command.name(),
        config: ctx.resolved,
        seed,
        workers,
        inputs: ctx.inputs,
        outputs,
    };
    manifest.write(&ctx.out)?;
    Ok((manifest, deferred))
}

/// Reruns the manifest's command into a scratch directory and compares digests.
fn verify(path: &Path, workers: Option<usize>) -> Result<Manifest, CliError> {
    let recorded = Manifest::read(path)?;
    for input in &recorded.inputs {
        let now = manifest::digest_file(Path::new(&input.path), input.path.clone())?;
        if now.sha256 != input.sha256 {
            return Err(CliError::Mismatch(format!("input {} changed since the run", input.path)));
        }
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    for output in &recorded.outputs {
        let now = manifest::digest_file(&dir.join(&output.path), output.path.clone())?;
        if now.sha256 != output.sha256 {
            return Err(CliError::Mismatch(format!("output {} differs from its recorded digest", output.path)));
        }
    }
    let mut cli = Cli::try_parse_from(std::iter::once("irtcat".to_string()).chain(recorded.argv.iter().cloned()))
        .map_err(|e| CliError::Parse(format!("manifest argv: {e}")))?;
    if matches!(cli.command, Command::Verify { .. }) {
        return Err(CliError::Validation("a verify manifest cannot be verified".into()));
    }
    let scratch = std::env::temp_dir().join(format!("irtcat-verify-{}-{}", std::process::id(), clock_seed()));
    cli.out = scratch.clone();
    cli.workers = workers.or(Some(recorded.workers));
    let rerun = execute(
        cli,
        recorded.argv.clone(),
        ConfigSource::Json(recorded.config.clone()),
        recorded.seed,
        true,
    );
    let _ = fs::remove_dir_all(&scratch);
    let (rerun, _) = rerun?;
    if rerun.outputs != recorded.outputs {
        let diff: Vec<&str> = recorded
            .outputs
            .iter()
            .filter(|o| !rerun.outputs.contains(o))
            .map(|o| o.path.as_str())
            .collect();
        return Err(CliError::Mismatch(format!("outputs differ: {}", diff.join(", "))));
    }
    println!("verified {} outputs of `{}`", recorded.outputs.len(), recorded.command);
    Ok(recorded)
}
