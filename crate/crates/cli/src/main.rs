use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use specshare_cli::commands::{self, Command, RunOptions, SolverChoice};
use specshare_cli::figures::ReproduceOptions;

/// Leader/follower power allocation for OFDM spectrum sharing.
///
/// Exit codes: 0 converged or exact result, 1 configuration/usage/I/O error,
/// 2 max iterations, 3 oscillating, 4 ISR-infeasible, 5 a reproduction check
/// failed. Set SPECSHARE_THREADS to cap Monte Carlo workers.
#[derive(Parser)]
#[command(name = "specshare", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Follower equilibrium at fixed PU powers.
    Ne(RunArgs),
    /// Leader-optimal PU powers anticipating the followers.
    Se(RunArgs),
    /// Synchronous iterative scheme (one PU).
    Alg2(RunArgs),
    /// Asynchronous iterative scheme (one PU).
    Alg3(RunArgs),
    /// Iterative scheme with several PUs.
    Alg4(RunArgs),
    /// Regenerate the data behind a figure: fig1, fig2, fig3-6, fig7, fig8.
    Reproduce {
        figure: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        realizations: Option<usize>,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's `realizations` (random channels only).
    #[arg(long)]
    realizations: Option<usize>,
    /// Force the symmetric closed-form follower solution.
    #[arg(long, conflicts_with = "iterative")]
    closed_form: bool,
    /// Force best-response iteration for the followers.
    #[arg(long)]
    iterative: bool,
    /// Keep every K-th iterate in trace CSVs (the last is always kept).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    csv_decimate: u64,
}

fn threads() -> Result<Option<usize>, String> {
    match std::env::var("SPECSHARE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("SPECSHARE_THREADS must be a positive integer, got `{v}`")),
        },
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let ok = matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion);
            return ExitCode::from(if ok { 0 } else { 1 });
        }
    };
    let threads = match threads() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let run = |command: Command, a: RunArgs| {
        let opts = RunOptions {
            config: a.config,
            out: a.out,
            seed: a.seed,
            realizations: a.realizations,
            solver: match (a.closed_form, a.iterative) {
                (true, _) => SolverChoice::ClosedForm,
                (_, true) => SolverChoice::Iterative,
                _ => SolverChoice::Auto,
            },
            csv_decimate: a.csv_decimate as usize,
            threads,
        };
        commands::run(command, &opts)
    };
    let exit = match cli.command {
        Cmd::Ne(a) => run(Command::Ne, a),
        Cmd::Se(a) => run(Command::Se, a),
        Cmd::Alg2(a) => run(Command::Alg2, a),
        Cmd::Alg3(a) => run(Command::Alg3, a),
        Cmd::Alg4(a) => run(Command::Alg4, a),
        Cmd::Reproduce {
            figure,
            seed,
            out,
            realizations,
        } => commands::reproduce(
            &figure,
            &out,
            ReproduceOptions {
                seed,
                realizations,
                threads,
            },
        ),
        Cmd::Validate { config } => commands::validate(&config),
    };
    ExitCode::from(exit.code() as u8)
}
