use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use scr_cli::{load_stream, load_system, save_system, write_json, write_stream, write_trace};
use scr_core::harness::{measure_closeness, random_streams, structural_audit, Architecture, ClosenessReport};
use scr_core::pipeline::{synthesize, ErrorBudget, Mode, StageCertificate, SynthesisOptions, Target};
use scr_core::reservoir::Modulus;
use scr_core::scr_construct::DEFAULT_MAX_DIM;

#[derive(Parser)]
#[command(name = "scr", version, about = "Simple-cycle reservoir approximants of linear reservoir systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a system on an input stream and write the state/output trace.
    Simulate {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write only `t` and the outputs.
        #[arg(long)]
        outputs_only: bool,
    },
    /// Synthesize an approximant and write it with its error budget.
    Build {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, value_parser = parse_target)]
        target: Target,
        #[arg(long)]
        epsilon: f64,
        /// Input bound M.
        #[arg(long = "bound")]
        bound: f64,
        #[arg(long, default_value = "analytic", value_parser = parse_mode)]
        mode: Mode,
        #[arg(long, env = "SCR_MAX_DIM", default_value_t = DEFAULT_MAX_DIM)]
        max_dim: usize,
        /// Comma-separated weights for the inexact stages.
        #[arg(long, value_delimiter = ',')]
        split: Option<Vec<f64>>,
        /// Lipschitz constant of the readout, overriding the computed one.
        #[arg(long)]
        lipschitz: Option<f64>,
        /// Seed for the empirical-mode validation streams.
        #[arg(long, default_value_t = SynthesisOptions::default().validation_seed)]
        seed: u64,
        #[arg(long)]
        out_system: PathBuf,
        #[arg(long)]
        out_budget: PathBuf,
    },
    /// Measure the output deviation between two systems on random streams.
    Verify {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long = "bound", default_value_t = 1.0)]
        bound: f64,
        #[arg(long, default_value_t = 64)]
        streams: usize,
        #[arg(long, default_value_t = 100)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a system against the structure of a reservoir architecture.
    Audit {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, value_parser = parse_architecture)]
        claim: Architecture,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded random input stream drawn from the radius-M ball.
    Streams {
        #[arg(long)]
        m: usize,
        #[arg(long = "bound")]
        bound: f64,
        #[arg(long)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_target(s: &str) -> Result<Target, String> {
    s.parse().map_err(|e: scr_core::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: scr_core::Error| e.to_string())
}

fn parse_architecture(s: &str) -> Result<Architecture, String> {
    s.parse().map_err(|e: scr_core::Error| e.to_string())
}

#[derive(Serialize)]
struct BuildReport<'a> {
    target: Target,
    mode: Mode,
    empirical: bool,
    dimension: usize,
    certified_total: f64,
    certificate: &'a [StageCertificate],
    budget: &'a ErrorBudget,
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate {
            system,
            stream,
            out,
            outputs_only,
        } => {
            let r = load_system(&system)?;
            let u = load_stream(&stream)?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_trace(&r, &u, outputs_only, BufWriter::new(file))?;
            Ok(true)
        }
        Command::Build {
            system,
            target,
            epsilon,
            bound,
            mode,
            max_dim,
            split,
            lipschitz,
            seed,
            out_system,
            out_budget,
        } => {
            let r = load_system(&system)?;
            let opts = SynthesisOptions {
                mode,
                max_dim,
                modulus: lipschitz.map(Modulus::Lipschitz),
                split,
                validation_seed: seed,
                ..SynthesisOptions::default()
            };
            let res = synthesize(&r, epsilon, bound, target, &opts).map_err(|e| anyhow!("{e}"))?;
            save_system(&res.system, &out_system)?;
            let report = BuildReport {
                target,
                mode,
                empirical: res.empirical,
                dimension: res.system.n(),
                certified_total: res.certified_total(),
                certificate: &res.certificate,
                budget: &res.budget,
            };
            write_json(&report, &out_budget)?;
            let ok = res.budget.all_checks_hold() && res.certified_total() <= epsilon;
            println!(
                "{target}: dimension {}, certified deviation {:.6e} of ε = {epsilon}{}",
                res.system.n(),
                res.certified_total(),
                if res.empirical { " (empirical)" } else { "" }
            );
            for c in res.budget.checks.iter().filter(|c| !c.holds) {
                eprintln!("check failed: {} ({} vs {})", c.name, c.lhs, c.rhs);
            }
            Ok(ok)
        }
        Command::Verify {
            a,
            b,
            epsilon,
            bound,
            streams,
            length,
            seed,
            out,
        } => {
            let ra = load_system(&a)?;
            let rb = load_system(&b)?;
            let set = random_streams(ra.m(), bound, length, streams, seed).map_err(|e| anyhow!("{e}"))?;
            let report: ClosenessReport = measure_closeness(&ra, &rb, &set, epsilon).map_err(|e| anyhow!("{e}"))?;
            write_json(&report, &out)?;
            match (report.passed(), report.argmax) {
                (true, _) => println!(
                    "pass: max deviation {:.6e} + tail {:.3e} < ε = {epsilon}",
                    report.max_deviation, report.tail_bound
                ),
                (false, Some(at)) => println!(
                    "fail: max deviation {:.6e} + tail {:.3e} ≥ ε = {epsilon} at stream {}, t = {}",
                    report.max_deviation, report.tail_bound, at.stream, at.time
                ),
                (false, None) => println!("fail: no samples compared"),
            }
            Ok(report.passed())
        }
        Command::Audit { system, claim, out } => {
            let r = load_system(&system)?;
            let report = structural_audit(&r, claim);
            if let Some(out) = out {
                write_json(&report, &out)?;
            }
            for v in &report.violations {
                println!("{v}");
            }
            println!("{}: {}", claim, if report.passed() { "pass" } else { "fail" });
            Ok(report.passed())
        }
        Command::Streams {
            m,
            bound,
            length,
            seed,
            out,
        } => {
            let u = random_streams(m, bound, length, 1, seed)
                .map_err(|e| anyhow!("{e}"))?
                .remove(0);
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_stream(&u, BufWriter::new(file))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
