use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use operator_root::cli::{run, RunContext, Task};

#[derive(Parser)]
#[command(name = "operator-root", version, about = "Resonances as spectra of non-selfadjoint operator roots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to OPERATOR_ROOT_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the operator root and write result.json.
    Solve(Common),
    /// Run all invariant checks and write verify.json.
    Verify(Common),
    /// Track eigenvalues over the coupling grid and write scan.csv.
    Scan(Common),
    /// Search the contour family for the smallest certified radius.
    R0(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (task, common) = match cli.command {
        Command::Solve(c) => (Task::Solve, c),
        Command::Verify(c) => (Task::Verify, c),
        Command::Scan(c) => (Task::Scan, c),
        Command::R0(c) => (Task::R0, c),
    };
    let threads = common.threads.or_else(|| {
        std::env::var("OPERATOR_ROOT_THREADS")
            .ok()
            .and_then(|s| s.trim().parse().ok())
    });
    if let Some(n) = threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not configure {n} threads: {e}");
        }
    }
    let ctx = match RunContext::new(&common.config, common.out) {
        Ok(ctx) => ctx,
        Err(e) => {
            eprintln!("error: {}", e.message);
            return ExitCode::from(e.code as u8);
        }
    };
    ExitCode::from(run(&ctx, task) as u8)
}
