use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use decoyqkd::harness::{self, parse_range, run_sweep, write_csv, write_outputs, HarnessConfig, RunReport, SweepParam};

/// Decoy-state BB84 post-processing: simulate sessions, replay recorded
/// counts, sweep parameters.
#[derive(Parser)]
#[command(name = "decoyqkd", version)]
struct Cli {
    /// Worker threads for estimation, decoding and sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a session through the configured channel and post-process it.
    Simulate {
        /// TOML configuration; defaults reproduce the reference experiment.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory for report.json, timings.json and key files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Post-process recorded counts with synthetic bit payloads.
    Replay {
        /// Counts JSON (see data/reference_counts.json).
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one session per parameter value and write a CSV table.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// T, N_bar, send_prob or qber.
        #[arg(long)]
        param: String,
        /// start:stop:count, a comma list, or one value.
        #[arg(long)]
        range: String,
        /// Counts to replay instead of simulating; qber sweeps default to
        /// the reference counts.
        #[arg(long)]
        counts: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Quick internal consistency checks.
    Selftest,
}

fn load_config(path: Option<&Path>) -> Result<HarnessConfig> {
    match path {
        Some(p) => HarnessConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(HarnessConfig::default()),
    }
}

fn finish_run(report: &RunReport, out: &Path) -> Result<ExitCode> {
    let written = write_outputs(out, report).with_context(|| format!("writing to {}", out.display()))?;
    let s = &report.session;
    let mut stdout = std::io::stdout().lock();
    for b in &s.bases {
        let m_max = b.estimation.as_ref().map(|e| format!("{:.1}", e.m_max)).unwrap_or_else(|| "-".into());
        writeln!(
            stdout,
            "{:>5}: qber {:.4}  rate {:.2}  reconciled {}  m_max {}  final {}{}",
            format!("{:?}", b.basis).to_lowercase(),
            b.qber,
            b.coding_rate,
            b.reconciled_bits,
            m_max,
            b.final_bits,
            b.abort.as_ref().map(|a| format!("  ({a})")).unwrap_or_default(),
        )?;
    }
    writeln!(stdout, "total {} bits, {:.2} bit/s", s.total_final_bits, s.key_rate_bps)?;
    for path in written {
        writeln!(stdout, "wrote {}", path.display())?;
    }
    Ok(match &s.abort {
        Some(a) => {
            writeln!(stdout, "aborted: {a}")?;
            ExitCode::from(2)
        }
        None => ExitCode::SUCCESS,
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Cmd::Simulate { config, seed, out } => {
            let config = load_config(config.as_deref())?;
            finish_run(&harness::simulate(&config, seed)?, &out)
        }
        Cmd::Replay {
            counts,
            config,
            seed,
            out,
        } => {
            let config = load_config(config.as_deref())?;
            let counts =
                harness::load_counts(&counts).with_context(|| format!("reading counts {}", counts.display()))?;
            finish_run(&harness::replay(&config, &counts, seed)?, &out)
        }
        Cmd::Sweep {
            config,
            param,
            range,
            counts,
            seed,
            out,
        } => {
            let config = load_config(config.as_deref())?;
            let param: SweepParam = param.parse()?;
            let values = parse_range(&range)?;
            let counts = counts
                .map(|p| harness::load_counts(&p).with_context(|| format!("reading counts {}", p.display())))
                .transpose()?;
            let rows = run_sweep(&config, param, &values, seed, counts.as_ref())?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_csv(&rows, BufWriter::new(file))?;
            let mut stdout = std::io::stdout().lock();
            for r in &rows {
                let note = if r.aborted { " (abort)" } else { "" };
                writeln!(stdout, "{:>12} -> {} bits{note}", r.value, r.final_bits)?;
            }
            writeln!(stdout, "wrote {}", out.display())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Selftest => {
            let checks = harness::run_selftest();
            let mut stdout = std::io::stdout().lock();
            for c in &checks {
                writeln!(stdout, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            }
            Ok(if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
