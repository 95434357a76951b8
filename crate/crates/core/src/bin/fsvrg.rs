use std::fmt::Write as _;
use std::io::{ErrorKind, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fsvrg::harness::{self, spec::ExperimentSpec};
use fsvrg::Error;

#[derive(Parser)]
#[command(name = "fsvrg", version, about = "Run and compare variance-reduced solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every solver and seed in a spec, writing one trace CSV per run.
    Run { spec: PathBuf },
    /// Compute the reference minimum for a spec's objective.
    Refmin { spec: PathBuf },
    /// Align the traces in a directory and summarize passes to tolerance.
    Compare {
        dir: PathBuf,
        /// Reference minimum; read from refmin.txt in DIR when omitted.
        #[arg(long)]
        refmin: Option<f64>,
    },
    /// Train linear SVMs on a train/test split and record accuracies.
    Svm { spec: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(text) => match std::io::stdout().lock().write_all(text.as_bytes()) {
            Err(e) if e.kind() != ErrorKind::BrokenPipe => {
                eprintln!("error kind=io: <stdout>: {e}");
                ExitCode::FAILURE
            }
            _ => ExitCode::SUCCESS,
        },
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error kind={}: {message}", e.kind());
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<String, Error> {
    let mut out = String::new();
    match command {
        Command::Run { spec } => {
            for path in harness::cmd_run(&ExperimentSpec::load(&spec)?)? {
                let _ = writeln!(out, "{}", path.display());
            }
        }
        Command::Refmin { spec } => {
            let rec = harness::cmd_refmin(&ExperimentSpec::load(&spec)?)?;
            let _ = writeln!(out, "{:?} {}", rec.value, rec.method.tag());
        }
        Command::Compare { dir, refmin } => {
            let c = harness::cmd_compare(&dir, refmin)?;
            out.push_str("solver\ttolerance\tpasses\n");
            for m in &c.summary {
                let passes = m.passes.map(|p| format!("{p:.3}")).unwrap_or_else(|| "unreached".into());
                let _ = writeln!(out, "{}\t{:e}\t{passes}", m.solver, m.tolerance);
            }
        }
        Command::Svm { spec } => {
            for path in harness::cmd_svm(&ExperimentSpec::load(&spec)?)? {
                let _ = writeln!(out, "{}", path.display());
            }
        }
    }
    Ok(out)
}
