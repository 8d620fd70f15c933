//! `simulate`: generate traces and run scenarios in-process or against a live service.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use proxtrace_core::geo::write_trace;
use proxtrace_core::simulator::{self, generate_trace, run_in_process, RunReport, Scenario};
use proxtrace_service::run_remote;

#[derive(Parser)]
#[command(name = "simulate", version, about = "Synthetic phone traces and lockdown scenario runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scenario's trace as JSON Lines.
    Generate {
        /// Scenario file, or the name of a built-in scenario.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario and report its assessment.
    Run {
        /// Scenario file, or the name of a built-in scenario.
        #[arg(long)]
        scenario: String,
        /// Base URL of a running service; runs in-process when omitted.
        #[arg(long)]
        service: Option<String>,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a scenario once per seed and check the verdicts agree.
    Trials {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 10)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
    },
    /// Write a scenario definition as JSON.
    Export {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    let path = PathBuf::from(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        return serde_json::from_str(&text).with_context(|| format!("parsing scenario {}", path.display()));
    }
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(arg);
    match simulator::builtin(name) {
        Some(s) => Ok(s),
        None => bail!(
            "{arg} is neither a scenario file nor a built-in scenario ({})",
            simulator::BUILTIN_NAMES.join(", ")
        ),
    }
}

fn summary(r: &RunReport, elapsed: f64) -> String {
    let notes: Vec<String> = r.notifications.iter().map(|(k, n)| format!("{}={n}", k.as_str())).collect();
    format!(
        "scenario={} seed={} target={} fixes={} aeo_total={} threshold={} verdict={} notifications=[{}] runtime={elapsed:.3}s",
        r.scenario,
        r.seed,
        r.target,
        r.fixes_ingested,
        r.aeo_total,
        r.assessment.threshold,
        r.verdict,
        notes.join(","),
    )
}

fn run_once(scenario: &Scenario, service: Option<&str>) -> Result<RunReport> {
    Ok(match service {
        Some(url) => run_remote(scenario, url)?,
        None => run_in_process(scenario)?,
    })
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { scenario, out, seed } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                s = s.with_seed(seed);
            }
            let trace = generate_trace(&s)?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_trace(BufWriter::new(file), &trace)?;
            println!("wrote {} fixes for {} agents to {}", trace.len(), s.agents.len(), out.display());
        }
        Command::Run { scenario, service, seed, report } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                s = s.with_seed(seed);
            }
            let started = Instant::now();
            let r = run_once(&s, service.as_deref())?;
            println!("{}", summary(&r, started.elapsed().as_secs_f64()));
            if let Some(path) = report {
                let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
                serde_json::to_writer_pretty(&mut w, &r)?;
                w.write_all(b"\n")?;
            }
        }
        Command::Trials { scenario, count, first_seed } => {
            let base = load_scenario(&scenario)?;
            let mut verdicts = Vec::new();
            for seed in first_seed..first_seed + count {
                let started = Instant::now();
                let r = run_in_process(&base.clone().with_seed(seed))?;
                println!("trial {}: {}", seed - first_seed + 1, summary(&r, started.elapsed().as_secs_f64()));
                verdicts.push(r.verdict);
            }
            let agree = verdicts.iter().filter(|v| Some(*v) == verdicts.first()).count();
            println!("{agree}/{} trials agree", verdicts.len());
            if agree != verdicts.len() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Export { scenario, out } => {
            let s = load_scenario(&scenario)?;
            let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            serde_json::to_writer_pretty(&mut w, &s)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
