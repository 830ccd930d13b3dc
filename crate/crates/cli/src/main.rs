use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relsamp::experiment::bench::{bench_csv, run_bench};
use relsamp::experiment::config::{ConfigError, RunConfig};
use relsamp::experiment::runner::{self, RunError};
use relsamp::experiment::verify::{self, Level};

const EXIT_CONFIG: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "relsamp", version, about = "Relation-dependent neighborhood sampling for multi-relational GCNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the planted-relation synthetic task and its manifest.
    GenSynthetic(Common),
    /// Train a model and write history, checkpoint, resolved config and final report.
    Train(Common),
    /// Score the validation and test sets with a saved checkpoint.
    Eval(Common),
    /// Time full against sampled message passing on a dense graph.
    Bench(Common),
    /// Run the numerical verification suites.
    Verify(Common),
    /// Per-relation sampled fractions over training batches.
    SampleStats(Common),
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Flat `key = value` file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "runs")]
    run_dir: PathBuf,
    /// Extra `key=value` overrides applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print every accepted key with its default and exit.
    #[arg(long)]
    list_keys: bool,
}

enum Failure {
    Config(String),
    Verify,
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(common.set.iter().map(String::as_str))?;
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn threads() -> Result<usize, Failure> {
    match std::env::var("RELSAMP_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Failure::Config(format!("RELSAMP_THREADS={v:?}: expected a positive integer"))),
        },
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("plain data serializes"));
}

fn written(dir: &Path, name: &str) {
    eprintln!("wrote {}", dir.join(name).display());
}

fn run(command: Command) -> Result<(), Failure> {
    threads()?;
    let common = match &command {
        Command::GenSynthetic(c)
        | Command::Train(c)
        | Command::Eval(c)
        | Command::Bench(c)
        | Command::Verify(c)
        | Command::SampleStats(c) => c,
    };
    if common.list_keys {
        for (key, default, doc) in relsamp::experiment::config::KEYS {
            println!("{key} = {default}    # {doc}");
        }
        return Ok(());
    }
    let cfg = load(common)?;
    let dir = &common.run_dir;
    match command {
        Command::GenSynthetic(_) => {
            let synthetic = runner::gen_synthetic(&cfg, dir)?;
            written(dir, runner::SYNTHETIC_EDGES);
            written(dir, runner::MANIFEST);
            print_json(&synthetic.manifest);
        }
        Command::Train(_) => {
            let report = runner::run_train(&cfg, dir)?;
            for name in [runner::RESOLVED, runner::HISTORY, runner::CHECKPOINT, runner::FINAL] {
                written(dir, name);
            }
            print_json(&report);
        }
        Command::Eval(_) => {
            let report = runner::run_eval(&cfg, dir)?;
            written(dir, runner::EVAL);
            print_json(&report);
        }
        Command::Bench(_) => {
            let rows = run_bench(&cfg, dir)?;
            print!("{}", bench_csv(&rows));
        }
        Command::Verify(_) => {
            let level = cfg.get("verify.level");
            let level = Level::parse(level).ok_or_else(|| {
                Failure::Config(format!("`verify.level = {level}`: expected all, gradcheck, enumeration, frequency or oracle"))
            })?;
            let seeds: usize = cfg.parsed("verify.seeds")?;
            let report = verify::run(level, seeds, cfg.seed()?).map_err(|e| Failure::Runtime(e.to_string()))?;
            print!("{report}");
            let failed = report.checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {failed} failed", report.checks.len());
            if failed > 0 {
                return Err(Failure::Verify);
            }
        }
        Command::SampleStats(_) => {
            let stats = runner::run_sample_stats(&cfg, dir)?;
            written(dir, runner::SAMPLE_STATS);
            print!("{}", stats.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Verify) => ExitCode::from(EXIT_VERIFY),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
