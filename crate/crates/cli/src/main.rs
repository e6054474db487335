//! `gevit`: generate corpora, train, evaluate and compare runs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gevit::harness::{cmd_evaluate, cmd_generate, cmd_report, cmd_train, ExperimentConfig};
use gevit::par::{self, Execution};
use gevit::{Error, Result};

#[derive(Parser)]
#[command(
    name = "gevit",
    version,
    about = "Generalization-enhanced ViTs under distribution shift"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file of `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the corpus and its manifest.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        force: bool,
    },
    /// Train a model and write checkpoint, trace and run metadata.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        force: bool,
    },
    /// Score a run's checkpoint on shift suites.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated dataset names.
        #[arg(long, value_delimiter = ',')]
        suites: Option<Vec<String>>,
        /// Test-time attention radius on the patch grid.
        #[arg(long)]
        window: Option<usize>,
    },
    /// Merge the metrics of several runs into one table.
    Report {
        /// Run directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Read the metrics written with this window.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let exec = Execution::Parallel;
    match cli.command {
        Command::Generate { common, force } => {
            let m = cmd_generate(&load(&common)?, common.out.as_deref(), force, exec)?;
            for f in &m.files {
                println!("{}  {:>6}  {}", f.sha256, f.count, f.file);
            }
        }
        Command::Train { common, force } => {
            let r = cmd_train(&load(&common)?, common.out.as_deref(), force, exec)?;
            match r.final_tgt_acc {
                Some(t) => println!("src_acc {:.4}  tgt_acc {t:.4}", r.final_src_acc),
                None => println!("src_acc {:.4}", r.final_src_acc),
            }
        }
        Command::Evaluate {
            common,
            suites,
            window,
        } => {
            let recs = cmd_evaluate(
                &load(&common)?,
                common.out.as_deref(),
                suites.as_deref(),
                window,
                exec,
            )?;
            print!("{}", gevit::eval::table(&recs));
        }
        Command::Report { runs, window, out } => {
            print!("{}", cmd_report(&runs, window, out.as_deref())?.text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(v) = std::env::var("GEVIT_THREADS") {
        match v.parse() {
            Ok(n) => par::init_threads(n),
            Err(_) => log::warn!("ignoring GEVIT_THREADS={v:?}"),
        }
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Error::exit_code(&e) as u8)
        }
    }
}
