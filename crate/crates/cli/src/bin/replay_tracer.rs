//! Tracer stand-in that answers from a directory of recorded documents.
//!
//! Accepts the same arguments as the real tracer plus a leading
//! `--index <dir>`, so it can be configured as
//! `tracer_command = ["opstab-replay-tracer", "--index", "<dir>"]`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use opstab::replay;
use opstab_core::sandbox::TraceMode;

#[derive(Parser)]
#[command(version, about = "Replay recorded opcode traces")]
struct Args {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    solution: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    mode: TraceMode,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long = "timeout-s")]
    timeout_s: f64,
    #[arg(long = "stdout-file")]
    stdout_file: PathBuf,
    #[arg(long = "solution-id")]
    solution_id: String,
}

fn parse_mode(s: &str) -> Result<TraceMode, String> {
    match s {
        "static" => Ok(TraceMode::Static),
        "dynamic" => Ok(TraceMode::Dynamic),
        other => Err(format!("unknown mode {other:?}")),
    }
}

fn run(args: Args) -> Result<(), String> {
    if !(args.timeout_s > 0.0) {
        return Err("--timeout-s must be positive".into());
    }
    let source = std::fs::read(&args.solution).map_err(|e| format!("{}: {e}", args.solution.display()))?;
    let input = match &args.input {
        Some(p) => std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => Vec::new(),
    };
    let entry = replay::lookup(&args.index, &source, args.mode, &input, &args.solution_id)?;
    std::fs::write(&args.stdout_file, entry.stdout.as_bytes())
        .map_err(|e| format!("{}: {e}", args.stdout_file.display()))?;
    let json = serde_json::to_string(&entry.document).map_err(|e| e.to_string())?;
    println!("{json}");
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("opstab-replay-tracer: {msg}");
            ExitCode::FAILURE
        }
    }
}
