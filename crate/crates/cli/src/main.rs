use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use svftree::pipeline::{self, PipelineConfig};
use svftree::Error;

/// Joint refinement of pairwise SVF registrations for histology stacks.
#[derive(Parser)]
#[command(name = "svftree", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Infer latent transforms and write reconstructed stacks.
    Reconstruct {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the synthetic sweep over models, couplings, P and outlier rates.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score estimated spoke latents against a truth manifest.
    Metrics {
        /// `truth.json` written by a synthetic run.
        #[arg(long)]
        truth: PathBuf,
        /// Reconstruction output (or its `latents/` directory).
        #[arg(long)]
        est: PathBuf,
        /// Write the per-slice CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the LAD programs at one control site.
    LpDump {
        #[arg(long)]
        config: PathBuf,
        /// Control-grid `row,col`.
        #[arg(long, value_parser = parse_location)]
        location: (usize, usize),
    },
}

fn parse_location(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(',').ok_or("expected row,col")?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(r)?, p(c)?))
}

const CONFIG: u8 = 2;
const DATA: u8 = 3;
const SOLVER: u8 = 4;

fn code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => CONFIG,
        _ => DATA,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Reconstruct { config } => {
            let cfg = PipelineConfig::load(&config)?;
            let out = pipeline::run_reconstruction(&cfg)?;
            let r = &out.report;
            println!(
                "{} spokes over {} slabs, {} flagged sites, LP fallback share {:.4}",
                r.spokes,
                r.slabs.len(),
                r.flagged_sites.len(),
                r.failure_fraction
            );
            for n in &r.notes {
                eprintln!("note: {n}");
            }
            println!("wrote {}", cfg.output.display());
            if out.failed() {
                eprintln!(
                    "error: LP fallback at more than {:.0}% of control sites",
                    pipeline::FAILURE_THRESHOLD * 100.0
                );
                return Ok(SOLVER);
            }
            Ok(0)
        }
        Command::Benchmark { config } => {
            let cfg = PipelineConfig::load(&config)?;
            let out = pipeline::run_benchmark(&cfg)?;
            println!(
                "{} configurations, wrote {}",
                out.report.rows.len(),
                cfg.output.display()
            );
            let sites: usize = out.report.rows.iter().map(|r| r.lp_fallback).sum();
            if sites > 0 {
                eprintln!("warning: {sites} control sites needed the LP fallback");
            }
            Ok(0)
        }
        Command::Metrics { truth, est, output } => {
            let report = pipeline::metrics_from_dir(&truth, &est)?;
            let csv = report.to_csv();
            match output {
                Some(p) => std::fs::write(&p, csv).map_err(|e| Error::Io { path: p, source: e })?,
                None => print!("{csv}"),
            }
            for g in &report.groups {
                let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or("-".into());
                eprintln!("{}: E_W {} E_B {}", g.group, f(g.e_w), f(g.e_b));
            }
            Ok(0)
        }
        Command::LpDump { config, location } => {
            let cfg = PipelineConfig::load(&config)?;
            print!("{}", pipeline::lp_dump(&cfg, location.0, location.1)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(code(&e))
        }
    }
}
