//! Command-line entry points: `run`, `verify-ops`, `ensemble`, `twin`.
//! Exit codes: 0 success, 1 validation/parse, 2 numerical failure, 3 i/o.

use std::path::PathBuf;
use std::process::ExitCode;

use moistpe::error::Error;
use moistpe::harness::{parse_config, run_ensemble, run_simulation, run_twin, verify_operators};

const USAGE: &str = "\
moistpe — moist primitive-equation solver on the spherical shell

USAGE:
  moistpe run --config <path> [--out <dir>]
  moistpe verify-ops [--seed <N>] [--grid <T,P,X>]
  moistpe ensemble --config <path> --members <N> --scales <a,b,...>
  moistpe twin --config <path> --epsilon <E>

Exit codes: 0 success, 1 validation/parse error, 2 numerical failure, 3 i/o error.";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("{msg}");
            eprintln!("{USAGE}");
            ExitCode::from(1)
        }
        Err(CliError::Solver(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

enum CliError {
    Usage(String),
    Solver(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Solver(e)
    }
}

fn flag_value<'a>(args: &'a [String], name: &str) -> Option<&'a str> {
    args.iter()
        .position(|a| a == name)
        .and_then(|i| args.get(i + 1))
        .map(String::as_str)
}

fn load_config(args: &[String]) -> Result<moistpe::harness::Config, CliError> {
    let path = flag_value(args, "--config")
        .ok_or_else(|| CliError::Usage("missing --config <path>".into()))?;
    let text = std::fs::read_to_string(PathBuf::from(path)).map_err(Error::Io)?;
    Ok(parse_config(&text)?)
}

fn dispatch(args: &[String]) -> Result<(), CliError> {
    let sub = args.first().map(String::as_str).unwrap_or("");
    match sub {
        "run" => {
            let mut cfg = load_config(&args[1..])?;
            if let Some(out) = flag_value(&args[1..], "--out") {
                cfg.run.out_dir = out.to_string();
            }
            let rows = run_simulation(&cfg)?;
            println!(
                "run complete: {} diagnostic rows, final t = {}, outputs in {}",
                rows.len(),
                rows.last().map(|r| r.t).unwrap_or(0.0),
                cfg.run.out_dir
            );
            Ok(())
        }
        "verify-ops" => {
            let rest = &args[1..];
            let seed: u64 = match flag_value(rest, "--seed") {
                Some(s) => s.parse().map_err(|_| CliError::Usage("bad --seed".into()))?,
                None => 0,
            };
            let (nt, np, nx) = match flag_value(rest, "--grid") {
                Some(s) => {
                    let parts: Vec<usize> = s
                        .split(',')
                        .map(|p| p.trim().parse())
                        .collect::<Result<_, _>>()
                        .map_err(|_| CliError::Usage("bad --grid, expected T,P,X".into()))?;
                    if parts.len() != 3 {
                        return Err(CliError::Usage("bad --grid, expected T,P,X".into()));
                    }
                    (parts[0], parts[1], parts[2])
                }
                None => (16, 32, 8),
            };
            let report = verify_operators(seed, nt, np, nx)?;
            println!("{report}");
            Ok(())
        }
        "ensemble" => {
            let rest = &args[1..];
            let cfg = load_config(rest)?;
            let members: usize = flag_value(rest, "--members")
                .ok_or_else(|| CliError::Usage("missing --members <N>".into()))?
                .parse()
                .map_err(|_| CliError::Usage("bad --members".into()))?;
            let scales: Vec<f64> = flag_value(rest, "--scales")
                .ok_or_else(|| CliError::Usage("missing --scales <a,b,...>".into()))?
                .split(',')
                .map(|p| p.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Usage("bad --scales".into()))?;
            let (report, _) = run_ensemble(&cfg, members, &scales)?;
            println!(
                "ensemble complete: rho_hat = {}, spread = {}, outputs in {}",
                report.rho_hat, report.spread, cfg.run.out_dir
            );
            for (m, t) in report.entry_times.iter().enumerate() {
                println!("  member {m:03} entered the ball at t = {t}");
            }
            Ok(())
        }
        "twin" => {
            let rest = &args[1..];
            let cfg = load_config(rest)?;
            let epsilon: f64 = flag_value(rest, "--epsilon")
                .ok_or_else(|| CliError::Usage("missing --epsilon <E>".into()))?
                .parse()
                .map_err(|_| CliError::Usage("bad --epsilon".into()))?;
            let samples = run_twin(&cfg, epsilon)?;
            let first = samples.first().map(|s| s.sep).unwrap_or(0.0);
            let last = samples.last().map(|s| s.sep).unwrap_or(0.0);
            println!(
                "twin complete: sep(0) = {first:.6e}, sep(end) = {last:.6e}, outputs in {}",
                cfg.run.out_dir
            );
            Ok(())
        }
        "" | "-h" | "--help" | "help" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(CliError::Usage(format!("unknown subcommand `{other}`"))),
    }
}
