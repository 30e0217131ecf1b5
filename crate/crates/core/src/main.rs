use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use wavedecay::cli::{
    cmd_certify_potential, cmd_fit, cmd_run, cmd_sweep, parse_window_arg, render_entries, RunConfig,
};

/// Local-energy decay experiments for `u_tt = ∇·(K∇u)` in the plane.
///
/// Exit status: 0 when every audit passes, 2 when one fails, 1 on errors.
#[derive(Parser)]
#[command(name = "wavedecay", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, audit, and write series.csv, audits.csv and report.txt.
    Run { config: PathBuf },
    /// One run per value of a config key, in parallel (WAVEDECAY_THREADS caps it).
    Sweep {
        config: PathBuf,
        /// Key to vary, bare or as section.key.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Potential certificates for the configured data, without a simulation.
    CertifyPotential { config: PathBuf },
    /// Decay fit of E_loc from a series.csv.
    Fit {
        series: PathBuf,
        /// Fit window `a,b` with 1 < a < b.
        #[arg(long)]
        window: String,
        /// Exponent parameter of the t^(gamma-1) sqrt(log t) model.
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
    },
}

fn read_config(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn status(all_pass: bool) -> ExitCode {
    ExitCode::from(if all_pass { 0 } else { 2 })
}

fn dispatch(args: Args) -> Result<ExitCode> {
    match args.command {
        Command::Run { config } => {
            let text = read_config(&config)?;
            let cfg = RunConfig::parse(&text).with_context(|| config.display().to_string())?;
            let summary = cmd_run(&cfg)?;
            let failed: Vec<&str> = summary
                .report
                .entries
                .iter()
                .filter(|e| !e.pass)
                .map(|e| e.name.as_str())
                .collect();
            if failed.is_empty() {
                println!("all {} audits pass", summary.report.entries.len());
            } else {
                println!("failed audits: {}", failed.join(", "));
            }
            println!("wrote {}", cfg.output.display());
            Ok(status(failed.is_empty()))
        }
        Command::Sweep {
            config,
            param,
            values,
        } => {
            let text = read_config(&config)?;
            let rows = cmd_sweep(&text, &param, &values)?;
            let mut errored = false;
            let mut all_pass = true;
            for r in &rows {
                match r.all_pass {
                    Some(p) => {
                        all_pass &= p;
                        println!("{param} = {}: {}", r.value, if p { "pass" } else { "FAIL" });
                    }
                    None => {
                        errored = true;
                        println!("{param} = {}: error: {}", r.value, r.error);
                    }
                }
            }
            if errored {
                return Ok(ExitCode::from(1));
            }
            Ok(status(all_pass))
        }
        Command::CertifyPotential { config } => {
            let text = read_config(&config)?;
            let cfg = RunConfig::parse(&text).with_context(|| config.display().to_string())?;
            let entries = cmd_certify_potential(&cfg)?;
            print!("{}", render_entries(&entries));
            Ok(status(entries.iter().all(|e| e.pass)))
        }
        Command::Fit {
            series,
            window,
            gamma,
        } => {
            let window = parse_window_arg(&window)?;
            print!("{}", cmd_fit(&series, window, gamma)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match dispatch(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
