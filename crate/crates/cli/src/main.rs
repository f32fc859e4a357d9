use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vigil::commands::{cmd_inspect_chunk, cmd_run_interruptible, cmd_stats, CliError, RunArgs, RunOutcome};
use vigil::config::{PipelineConfig, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "vigil", version, about = "Distributed surveillance frame filtering")]
struct Cli {
    /// Print the default configuration as JSON and exit.
    #[arg(long)]
    print_default_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline until the source is exhausted.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Validate and print the topology without running it.
        #[arg(long)]
        dry_run: bool,
        /// Use a virtual clock so that repeated runs give identical output.
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Parallelism of the scalable nodes.
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
        /// Drop this fraction of deliveries to exercise replay.
        #[arg(long, default_value_t = 0.0)]
        drop_rate: f64,
    },
    /// Summarise the output of a finished run.
    Stats {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "run")]
        label: String,
    },
    /// Print the header and frame list of a video chunk and check its CRC.
    InspectChunk { path: PathBuf },
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, dry_run, deterministic, seed, workers, drop_rate } => {
            let args = RunArgs { config, dry_run, deterministic, seed, workers, drop_rate };
            match cmd_run_interruptible(&args)? {
                RunOutcome::DryRun { edge_list } => print!("{edge_list}"),
                RunOutcome::Completed { report, out_root } => {
                    print!("{}", report.to_text());
                    log::info!("output written to {}", out_root.display());
                }
            }
        }
        Command::Stats { out, label } => print!("{}", cmd_stats(&out)?.to_text(&label)),
        Command::InspectChunk { path } => print!("{}", cmd_inspect_chunk(&path)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.print_default_config {
        println!("{}", PipelineConfig::default().to_json());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("no command given; see --help");
        return ExitCode::from(1);
    };
    match execute(command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
