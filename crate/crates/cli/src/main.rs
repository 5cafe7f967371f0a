use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use replaygm::{cmd_compare, cmd_ingest, cmd_run, cmd_schedule, cmd_synth, CliError, Overrides, RunConfig};
use replaygm_core::ingest::SyntheticStreamConfig;

#[derive(Parser)]
#[command(name = "replaygm", version, about = "Replay-buffer construction and replay scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ebts, random, high_unique or many_labels.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Classes per task, e.g. 40+40.
    #[arg(long)]
    split: Option<String>,
    /// ER:CER epoch split; a comma-separated list sets the sweep for `schedule`.
    #[arg(long = "er-cer")]
    er_cer: Option<String>,
}

impl RunArgs {
    fn load(self) -> Result<RunConfig, CliError> {
        let o = Overrides {
            strategy: self.strategy,
            seed: self.seed,
            out: self.out,
            split: self.split,
            er_cer: self.er_cer,
        };
        RunConfig::load(self.config.as_deref(), &o)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a COCO annotation file and write its load report.
    Ingest { input: PathBuf, output: PathBuf },
    /// Build buffers for every task and write buffers, decisions, plans and reports.
    Run(RunArgs),
    /// Compare strategies across seeds.
    Compare(RunArgs),
    /// Write replay plans for each ER:CER ratio in the sweep.
    Schedule(RunArgs),
    /// Write a synthetic long-tailed dataset as COCO JSON.
    Synth {
        output: PathBuf,
        #[arg(long, default_value_t = 80)]
        classes: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { input, output } => {
            let report = cmd_ingest(&input, &output)?;
            println!(
                "{} samples ({} dropped empty) written to {}",
                report.samples,
                report.dropped_empty,
                output.display()
            );
        }
        Command::Run(args) => {
            let cfg = args.load()?;
            let outcomes = cmd_run(&cfg)?;
            for o in &outcomes {
                println!(
                    "task {}: {} entries, {}/{} classes satisfied",
                    o.index,
                    o.buffer.len(),
                    o.report.satisfied_count,
                    o.report.total_classes
                );
            }
        }
        Command::Compare(args) => {
            let cfg = args.load()?;
            print!("{}", cmd_compare(&cfg)?.to_csv());
        }
        Command::Schedule(args) => {
            let cfg = args.load()?;
            for path in cmd_schedule(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Synth { output, classes, samples, seed } => {
            let cfg = SyntheticStreamConfig {
                n_classes: classes,
                n_samples: samples,
                seed,
                ..SyntheticStreamConfig::default()
            };
            cmd_synth(&cfg, &output)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
