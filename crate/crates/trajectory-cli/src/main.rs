use std::path::PathBuf;

use clap::{Parser, Subcommand};

use trajectory::config::{Architecture, ExperimentConfig};
use trajectory::run;

#[derive(Parser)]
#[command(name = "trajectory", version, about = "Admission and trajectory models over longitudinal clinical records")]
struct Cli {
    /// Experiment configuration file.
    #[arg(short, long, global = true, default_value = "config/default.toml")]
    config: PathBuf,

    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for batched math; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort into the data directory.
    Synth,
    /// Turn raw tables into prepared records and vocabularies.
    Prepare,
    /// Train the configured architecture across all folds.
    Train,
    /// Export per-admission representations from trained fold checkpoints.
    ExportReprs,
    /// Train the window model, overriding the configured architecture.
    Sequence,
    /// Summarize the report file of the configured task.
    Report,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("error[{}]: {e}", e.category());
        std::process::exit(e.exit_code());
    }
}

fn execute(cli: Cli) -> trajectory::Result<()> {
    let mut config = ExperimentConfig::from_path(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.experiment.seed = seed;
    }
    if let Some(out) = cli.out {
        config.paths.out_dir = out;
    }
    if let Some(threads) = cli.threads {
        run::configure_threads(threads)?;
    }

    match cli.command {
        Command::Synth => {
            let out = run::cmd_synth(&config)?;
            println!(
                "synthesized {} patients / {} admissions ({} positive) under {}",
                out.n_patients,
                out.n_admissions,
                out.n_positive_admissions,
                config.paths.data_dir.display()
            );
        }
        Command::Prepare => {
            let s = run::cmd_prepare(&config)?;
            println!(
                "prepared {} patients / {} admissions ({} positive), {} diagnosis codes -> {}",
                s.n_patients,
                s.n_admissions,
                s.n_positive,
                s.diag_vocab_codes,
                s.records_path.display()
            );
            if s.dropped_codes + s.out_of_vocab > 0 {
                println!(
                    "dropped {} unparseable/unmapped codes, {} outside the vocabulary",
                    s.dropped_codes, s.out_of_vocab
                );
            }
        }
        Command::Train => {
            let out = run::cmd_train(&config)?;
            println!(
                "trained {} folds -> {}",
                out.reports.len(),
                out.reports_path.display()
            );
        }
        Command::ExportReprs => {
            let paths = run::cmd_export_reprs(&config)?;
            println!("exported representations for {} folds", paths.len());
        }
        Command::Sequence => {
            config.experiment.architecture = Architecture::Sequence;
            let out = run::cmd_train(&config)?;
            println!(
                "trained {} folds -> {}",
                out.reports.len(),
                out.reports_path.display()
            );
        }
        Command::Report => {
            print!("{}", run::cmd_report(&config)?);
        }
    }
    Ok(())
}
