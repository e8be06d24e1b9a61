use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isskit::builtins;
use isskit::scenario::{self, ScenarioError};

#[derive(Parser)]
#[command(name = "isskit", version, about = "Input-to-state stability toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file and write report.json, CSV traces and witnesses.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-evaluate a witness file.
    Replay { witness: PathBuf },
    /// List built-in systems, event-triggered setups and networks.
    ListBuiltins {
        #[arg(long)]
        json: bool,
    },
}

const USAGE: u8 = 3;

fn fail(e: ScenarioError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(USAGE)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.cmd {
        Cmd::Run { scenario, out, seed } => match scenario::run_file(&scenario, out.as_deref(), seed) {
            Ok((output, dir)) => {
                let r = &output.report;
                println!("{:?}: {}", r.kind, serde_json::to_string(&r.outcome).unwrap_or_default());
                for w in &r.warnings {
                    eprintln!("warning: {w}");
                }
                for w in &r.witnesses {
                    println!("witness: {}", dir.join(w).display());
                }
                println!("report: {}", dir.join("report.json").display());
                ExitCode::from(r.exit_code as u8)
            }
            Err(e) => fail(e),
        },
        Cmd::Replay { witness } => match scenario::replay_file(&witness) {
            Ok(r) => {
                println!("{}", r.detail);
                println!("observed {:e}  bound {:e}  margin {:e}", r.observed, r.bound, r.margin);
                if r.confirmed {
                    println!("confirmed");
                    ExitCode::SUCCESS
                } else {
                    println!("not reproduced");
                    ExitCode::from(1)
                }
            }
            Err(e) => fail(e),
        },
        Cmd::ListBuiltins { json } => {
            if json {
                println!("{}", serde_json::to_string_pretty(builtins::list()).expect("catalog serializes"));
            } else {
                for b in builtins::list() {
                    let params: Vec<String> = b.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    println!("{:<26} {:<8} {}  [{}]", b.name, format!("{:?}", b.family), b.summary, params.join(", "));
                }
            }
            ExitCode::SUCCESS
        }
    }
}
