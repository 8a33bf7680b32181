use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clonekd::variants::VariantKind;
use clonekd_cli::commands;
use clonekd_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "clonekd", version, about = "Teacher-reasoned distillation for cross-language clone detection")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, short, global = true, default_value = "clonekd.toml")]
    config: PathBuf,
    /// Overrides `run_id` from the config.
    #[arg(long, global = true)]
    run_id: Option<String>,
    /// Validate config and corpus, check seeding is feasible, and stop.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build balanced seed datasets and split manifests.
    Seed,
    /// Query the teacher and keep agreeing traces (resumable).
    Distill,
    /// Render the training-set variants.
    Variants,
    /// Fine-tune an adapter on one variant.
    Train {
        #[arg(long)]
        variant: Option<VariantKind>,
    },
    /// Train classification heads over the frozen backbones.
    TrainHead,
    /// Score every configured method, backbone and test set.
    Eval,
    /// Render the comparison table from eval reports.
    Report,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(run_id) = cli.run_id {
        config.run_id = run_id;
    }
    if let Command::Train { variant: Some(v) } = cli.command {
        config.train.variant = v;
    }
    config.validate()?;
    if cli.dry_run {
        let summary = commands::dry_run(&config)?;
        return Ok(format!("{summary}dry run: configuration and corpus are valid; nothing was written"));
    }
    Ok(match cli.command {
        Command::Seed => commands::cmd_seed(&config)?.to_string(),
        Command::Distill => commands::cmd_distill(&config)?.to_string(),
        Command::Variants => commands::cmd_variants(&config)?.to_string(),
        Command::Train { .. } => commands::cmd_train(&config)?.to_string(),
        Command::TrainHead => commands::cmd_train_head(&config)?.to_string(),
        Command::Eval => commands::cmd_eval(&config)?.to_string(),
        Command::Report => commands::cmd_report(&config)?.timed_table,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            if !out.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
