use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};
use prefgrad::cli::{self, Check, SweepSpec};

#[derive(Parser)]
#[command(
    name = "prefgrad",
    version,
    about = "Zeroth-order policy gradient from preference feedback"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run ZPG or ZBCPG from an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one estimator check and write report.json.
    Diagnose {
        #[arg(long, value_enum)]
        check: Check,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat a run over one axis (T, N, M or K) and several seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. 100,400,1600.
        #[arg(long)]
        values: String,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            let _ = e.print();
            let mut cmd = Args::command();
            let sub = std::env::args().nth(1).unwrap_or_default();
            let usage = match cmd.find_subcommand_mut(&sub) {
                Some(sub) => sub.render_usage(),
                None => cmd.render_usage(),
            };
            eprintln!("\n{usage}");
            return ExitCode::from(2);
        }
    };
    let outcome = match args.command {
        Command::Run { config, out } => cli::cmd_run(&config, &out).map(|r| {
            println!(
                "{}",
                std::fs::read_to_string(out.join(cli::RESOLVED_CONFIG_FILE)).unwrap_or_default()
            );
            for w in &r.warnings {
                log::warn!("{w}");
            }
            log::info!(
                "total_queries = {}, results in {}",
                r.total_queries,
                out.display()
            );
            true
        }),
        Command::Diagnose { check, config, out } => {
            cli::cmd_diagnose(check.name(), config.as_deref(), &out).map(|report| {
                for item in &report.items {
                    println!(
                        "{:<28} {} empirical = {:.6e}, bound = {:.6e}, slack = {:.3e}",
                        item.check,
                        if item.pass { "PASS" } else { "FAIL" },
                        item.empirical,
                        item.bound,
                        item.slack
                    );
                }
                report.passed()
            })
        }
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
            out,
        } => SweepSpec::parse(&axis, &values, seeds)
            .and_then(|spec| cli::cmd_sweep(&config, &spec, &out))
            .map(|rows| {
                log::info!(
                    "{} runs, summary in {}",
                    rows.len(),
                    out.join(cli::SUMMARY_FILE).display()
                );
                true
            }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
