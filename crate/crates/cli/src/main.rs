use std::path::PathBuf;

use clap::Parser;
use qcl_cli::{run, Command, Invocation};

/// Quantum control landscape toolkit.
#[derive(Debug, Parser)]
#[command(name = "qcl", version)]
struct Args {
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output prefix; files are <prefix>.summary.json and <prefix>.<table>.csv.
    #[arg(long)]
    out: Option<String>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    verbose: bool,
}

fn main() {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { qcl_cli::EXIT_CONFIG } else { qcl_cli::EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let inv = Invocation {
        command: args.command,
        config: args.config,
        out: args.out,
        seed: args.seed,
        verbose: args.verbose,
    };
    std::process::exit(run(&inv));
}
