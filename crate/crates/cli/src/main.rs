// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use avs_core::control::{parse_script, CpScript};
use avs_core::dpp::load_dpp;
use avs_core::pipeline::{run_trace, RunOptions};
use avs_core::score::FeatureMatrix;
use avs_core::trace::{read_trace, write_trace};

#[derive(Parser)]
#[command(name = "avs", version, about = "Run, check and score data-plane programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a packet trace through a program.
    Run {
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Output trace; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Statistics as JSON.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Control-plane script.
        #[arg(long)]
        cp: Option<PathBuf>,
        /// Overrides the program's link delay.
        #[arg(long)]
        link_delay_ns: Option<u64>,
        /// Reserved. Runs are deterministic and draw no random numbers.
        #[arg(long)]
        seed: Option<u64>,
        /// Writes the per-packet lifecycle event log here.
        #[arg(long)]
        log_events: Option<PathBuf>,
    },
    /// Load a program and report every problem found.
    Validate {
        #[arg(long)]
        program: PathBuf,
    },
    /// Render the programmability comparison from a feature matrix.
    Score {
        #[arg(long)]
        features: PathBuf,
        /// Emit the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

fn load_program(path: &Path) -> Result<avs_core::pipeline::Program> {
    load_dpp(path).map_err(|diags| {
        for d in &diags {
            eprintln!("{}: {d}", path.display());
        }
        anyhow::anyhow!("{} problem(s) in {}", diags.len(), path.display())
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Run {
            program,
            trace,
            out,
            stats,
            cp,
            link_delay_ns,
            seed: _,
            log_events,
        } => {
            let mut prog = load_program(&program)?;
            if let Some(d) = link_delay_ns {
                prog.config.link_delay_ns = d;
            }
            let records = read_trace(&trace)
                .map_err(|e| anyhow::anyhow!("{}: {e}", trace.display()))?;
            let script = match &cp {
                Some(p) => parse_script(&std::fs::read_to_string(p).with_context(|| p.display().to_string())?),
                None => CpScript::default(),
            };
            for e in &script.errors {
                eprintln!("warning: control script line {}: {}", e.line, e.error);
            }
            let opts = RunOptions {
                log_events: log_events.is_some(),
            };
            let res = run_trace(prog, &records, &script, &opts);
            match &out {
                Some(p) => write_trace(p, &res.output).with_context(|| p.display().to_string())?,
                None => print!("{}", avs_core::trace::format_trace(&res.output)),
            }
            if let Some(p) = &stats {
                std::fs::write(p, res.stats.to_json() + "\n").with_context(|| p.display().to_string())?;
            }
            if let Some(p) = &log_events {
                let mut text = res.events.join("\n");
                text.push('\n');
                std::fs::write(p, text).with_context(|| p.display().to_string())?;
            }
            if !res.stats.conserved() {
                bail!("packet accounting does not balance");
            }
            Ok(())
        }
        Cmd::Validate { program } => {
            let p = load_program(&program)?;
            println!("{}: ok ({} header fields, {} ports)", program.display(), p.schema.headers().len(), p.config.ports);
            Ok(())
        }
        Cmd::Score { features, json } => {
            let text = std::fs::read_to_string(&features).with_context(|| features.display().to_string())?;
            let m = FeatureMatrix::from_json(&text)?;
            let report = m.score().map_err(|errs| {
                for e in &errs {
                    eprintln!("{}: {e}", features.display());
                }
                anyhow::anyhow!("{} invalid score(s)", errs.len())
            })?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.render());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
