use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ioncool::diagnostics::DiagnosticsRecord;
use ioncool::error::{IoError, RunError};
use ioncool::integrator::PeriodSamples;
use ioncool::output::{analyze_directory, RunDirectory};
use ioncool::scenario::{parse_scenario, preset, preset_text, ScenarioConfig, PRESET_NAMES};
use ioncool::simulation::{run, RunObserver};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_UNSTABLE: u8 = 3;

/// Molecular dynamics of sympathetically cooled ions in a linear Paul trap.
#[derive(Parser, Debug)]
#[command(name = "ioncool", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a scenario and write a run directory.
    Run(RunArgs),
    /// Print q-parameters and secular frequencies; exit 3 if any species is untrappable.
    Stability(SourceArgs),
    /// Recompute the structure report of a finished run and write plot data.
    Analyze {
        /// Run directory written by `run`.
        dir: PathBuf,
        #[arg(long)]
        verbose: bool,
    },
    /// Print a built-in scenario (or list the names when none is given).
    Preset {
        name: Option<String>,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario file.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
}

#[derive(Args, Debug)]
struct SourceArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    verbose: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Output directory (defaults to the scenario's output_dir, then ./run).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Length of the run in rf periods.
    #[arg(long, value_name = "N_RF_PERIODS")]
    duration: Option<u64>,
    /// Threads for the Coulomb sum; results do not depend on it.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Run even when a species is outside the stability region.
    #[arg(long)]
    force: bool,
    /// Report progress every period instead of every few percent.
    #[arg(long)]
    verbose: bool,
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn load(source: &Source) -> Result<ScenarioConfig, String> {
    match (&source.scenario, &source.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            parse_scenario(&text).map_err(|e| format!("{}: {e}", path.display()))
        }
        (None, Some(name)) => preset(name).map_err(|e| e.to_string()),
        (None, None) => Err("one of --scenario or --preset is required".into()),
    }
}

/// Progress lines on stderr.
struct Progress {
    every: u64,
    started: Instant,
}

impl RunObserver for Progress {
    fn on_period(&mut self, period: u64, _samples: &PeriodSamples, record: &DiagnosticsRecord) -> Result<(), IoError> {
        if period % self.every == 0 {
            let temps: Vec<String> =
                record.species.iter().map(|s| format!("{} T_sec={:.3e} K", s.name, s.t_secular)).collect();
            eprintln!("period {period:>9}  {:8.1} s  {}", self.started.elapsed().as_secs_f64(), temps.join("  "));
        }
        Ok(())
    }
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let mut config = match load(&args.source) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    if let Some(d) = args.duration {
        config.run.duration_periods = d;
    }
    if let Some(w) = args.workers {
        config.run.workers = w;
    }
    config.run.allow_unstable |= args.force;
    if let Err(e) = config.validate() {
        return fail(EXIT_USAGE, e);
    }
    let dir = args.out.clone().or_else(|| config.run.output_dir.clone()).unwrap_or_else(|| PathBuf::from("run"));
    let out = match RunDirectory::create(&dir, &config) {
        Ok(o) => o,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let every = if args.verbose { 1 } else { (config.run.duration_periods / 20).max(1) };
    let mut observer = (out, Progress { every, started: Instant::now() });
    match run(&config, &mut observer) {
        Ok(outcome) => {
            eprintln!(
                "done: {} periods in {:.1} s, {} steps accepted, {} rejected",
                config.run.duration_periods, outcome.wall_seconds, outcome.stats.accepted, outcome.stats.rejected
            );
            match outcome.structure {
                Some(report) => println!("{}", report.summary()),
                None => eprintln!("run shorter than the averaging window; no structure report"),
            }
            ExitCode::SUCCESS
        }
        Err(RunError::Unstable(table)) => {
            eprint!("{table}");
            fail(EXIT_USAGE, "species outside the stability region (use --force to run anyway)")
        }
        Err(e @ RunError::Integrator(_)) => {
            fail(EXIT_NUMERICAL, format!("{e}; last good state in {}", dir.join(ioncool::output::LAST_GOOD_FILE).display()))
        }
        Err(e) => fail(EXIT_USAGE, e),
    }
}

fn cmd_stability(args: SourceArgs) -> ExitCode {
    let config = match load(&args.source) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let report = config.stability();
    print!("{}", report.to_table());
    if args.verbose {
        eprintln!("rf period {:.6e} s", config.trap.rf_period());
    }
    if report.all_trappable() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_UNSTABLE)
    }
}

fn cmd_analyze(dir: &Path, verbose: bool) -> ExitCode {
    match analyze_directory(dir) {
        Ok(a) => {
            if verbose {
                eprintln!("window: periods {}..={}", a.first_period, a.last_period);
            }
            println!("{}", a.report.summary());
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_USAGE, e),
    }
}

fn cmd_preset(name: Option<String>, out: Option<PathBuf>) -> ExitCode {
    let Some(name) = name else {
        for n in PRESET_NAMES {
            println!("{n}");
        }
        return ExitCode::SUCCESS;
    };
    let Some(text) = preset_text(&name) else {
        return fail(EXIT_USAGE, format!("unknown preset '{name}'; available: {}", PRESET_NAMES.join(", ")));
    };
    match out {
        Some(path) => match std::fs::write(&path, text) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(EXIT_USAGE, format!("{}: {e}", path.display())),
        },
        None => {
            print!("{text}");
            ExitCode::SUCCESS
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Stability(args) => cmd_stability(args),
        Command::Analyze { dir, verbose } => cmd_analyze(&dir, verbose),
        Command::Preset { name, out } => cmd_preset(name, out),
    }
}
