use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use unitower::cli::{error_kind, exit_code, run, write_artifacts, Command, Outcome, COMMANDS};
use unitower::config::{parse_config, OUTPUT_DIR_ENV};

#[derive(Debug, Parser)]
#[command(name = "unitower", about = "Tower transfer operators and linear response for quadratic unimodal maps")]
struct Args {
    /// One of: analyze-map, build-tower, alpha, horizontality, density, response, validate, oracle, susceptibility.
    command: String,
    /// `density` or `average` for the oracle command.
    mode: Option<String>,
    /// Key-value configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the file.
    #[arg(short, long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; overrides the environment and the config.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn usage() -> String {
    format!("usage: unitower <COMMAND> [MODE] [--config FILE] [--set KEY=VALUE]... [--out DIR]\ncommands: {}", COMMANDS.join(", "))
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            eprintln!("{}", usage());
            return ExitCode::from(1);
        }
    };
    let Some(command) = Command::parse(&args.command, args.mode.as_deref()) else {
        eprintln!("unknown command `{}`", [Some(args.command.as_str()), args.mode.as_deref()].iter().flatten().copied().collect::<Vec<_>>().join(" "));
        eprintln!("{}", usage());
        return ExitCode::from(1);
    };
    let mut text = match &args.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("cannot read {}: {e}", p.display());
                return ExitCode::from(1);
            }
        },
        None => String::new(),
    };
    for kv in &args.set {
        text.push('\n');
        text.push_str(kv);
    }
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(errors) => {
            for e in &errors {
                eprintln!("config error: {e}");
            }
            println!("{}", serde_json::to_string_pretty(&json!({ "status": "config_error", "errors": errors })).unwrap());
            return ExitCode::from(1);
        }
    };
    let dir = args.out.clone().or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| cfg.output_dir.clone());
    let name = args.command.clone();
    let (outcome, code) = match run(command, &cfg) {
        Ok(o) => {
            let code = if o.passed { 0 } else { 1 };
            (o, code)
        }
        Err(e) => {
            let report = json!({ "status": "error", "kind": error_kind(&e), "message": e.to_string(), "command": name });
            (Outcome { report, csv: Vec::new(), passed: false }, exit_code(&e))
        }
    };
    if let Err(e) = write_artifacts(&outcome, &dir, &name) {
        eprintln!("cannot write artifacts to {}: {e}", dir.display());
        return ExitCode::from(1);
    }
    println!("{}", serde_json::to_string_pretty(&outcome.report).unwrap());
    ExitCode::from(code as u8)
}
