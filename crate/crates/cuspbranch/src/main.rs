use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cuspbranch::config::Experiment;
use cuspbranch::run;

/// Eigenvalue-branch experiments on degenerating cusped triangles.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    /// model-asymptotics, degenerate, crossings, sweep or verify-forms.
    experiment: Experiment,
    /// Flat key = value config file.
    #[arg(long)]
    config: PathBuf,
    /// Parent directory for the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: CUSPBRANCH_THREADS, else all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cuspbranch::thread_count(cli.threads);
    cuspbranch::configure_threads(threads);
    let outcome = match std::fs::read_to_string(&cli.config) {
        Ok(text) => run::run(cli.experiment, &text, cli.out.as_deref(), threads),
        Err(e) => run::early_failure(
            cli.experiment,
            cli.out.as_deref().unwrap_or("runs".as_ref()),
            &format!("cannot read {}: {e}", cli.config.display()),
            threads,
        ),
    };
    match outcome {
        Ok(o) => {
            println!("{}", o.dir.display());
            if o.exit_code != run::EXIT_OK {
                if let Some(errs) = o.manifest.get("errors") {
                    eprintln!("{errs}");
                }
            }
            ExitCode::from(o.exit_code as u8)
        }
        Err(e) => {
            eprintln!("cannot write run directory: {e}");
            ExitCode::from(run::EXIT_NUMERICAL as u8)
        }
    }
}
