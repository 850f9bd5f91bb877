//! `tizx`: design, validate and simulate TI ZX waveforms.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 infeasible design, 4 I/O error.

mod config;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use tizx::harness::{self, BerCurve};
use tizx::optimizer::{self, SolveOutcome};
use tizx::zxmap::published_table;
use tizx::CoefficientSet64;

use crate::config::RunConfig;

/// Failure carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            msg: msg.into(),
        }
    }

    pub fn infeasible(msg: impl Into<String>) -> Self {
        Self {
            code: 3,
            msg: msg.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self {
            code: 4,
            msg: format!("{}: {err}", path.display()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<tizx::Error> for Failure {
    fn from(e: tizx::Error) -> Self {
        use tizx::Error as E;
        let code = match e {
            E::Config(_) | E::Input(_) | E::Shape { .. } | E::Parse { .. } => 2,
            E::Infeasible(_) => 3,
            _ => 1,
        };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "tizx",
    version,
    about = "TI ZX waveform design for 1-bit oversampled MU-MIMO downlink"
)]
struct Cli {
    /// TOML run configuration, or a previous summary.json.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Oversampling factor (2 or 3).
    #[arg(long, global = true)]
    m_rx: Option<usize>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Design coefficients by max-min search.
    Optimize,
    /// Check the published coefficient tables against the constraints.
    ValidateTables,
    /// Monte-Carlo BER sweep.
    Ber {
        /// Override the SNR grid (dB), comma separated.
        #[arg(long, value_delimiter = ',')]
        snr: Option<Vec<f64>>,
    },
    /// Empirical versus analytic PSD.
    Psd {
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Containment report of the configured coefficients.
    Report,
}

#[derive(Serialize)]
struct Summary<'a, R: Serialize> {
    command: &'a str,
    master_seed: u64,
    runtime_s: f64,
    config: &'a RunConfig,
    result: R,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = cli.m_rx {
        cfg.system.m_rx = m;
    }
    if let Some(d) = &cli.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    match &cli.command {
        Command::Ber { snr: Some(grid) } => cfg.ber.snr_grid_db = grid.clone(),
        Command::Psd { frames: Some(n) } => cfg.psd.frames = *n,
        _ => {}
    }
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Failure::config(format!("cannot set up {j} worker threads: {e}")))?;
    }
    if matches!(cli.command, Command::ValidateTables) {
        return validate_tables(&cfg, cli.m_rx.is_none());
    }
    cfg.validate()?;

    let start = Instant::now();
    match cli.command {
        Command::Optimize => optimize(&cfg, start),
        Command::ValidateTables => unreachable!(),
        Command::Ber { .. } => ber(&cfg, start),
        Command::Psd { .. } => psd(&cfg, start),
        Command::Report => report(&cfg),
    }
}

fn optimize(cfg: &RunConfig, start: Instant) -> Result<(), Failure> {
    let problem = cfg.problem()?;
    let outcome = optimizer::solve(&problem, &cfg.search())?;
    let sol = outcome.solution();
    println!(
        "m_rx={} gamma={:.5} eta={:.5} norm_sq={:.6} evaluations={}",
        problem.params.m_rx(),
        sol.gamma,
        sol.eta,
        sol.norm_sq,
        sol.search_log.evaluations
    );
    let dir = output_dir(cfg)?;
    write_atomic(
        &dir.join(format!("coefficients_m{}.txt", problem.params.m_rx())),
        sol.coeffs.to_text().as_bytes(),
    )?;
    write_json(&dir.join("solution.json"), sol)?;
    write_summary(&dir, "optimize", cfg, start, sol)?;
    match outcome {
        SolveOutcome::Feasible(_) => Ok(()),
        SolveOutcome::Infeasible(_) => Err(Failure::infeasible(format!(
            "no coefficients reach eta >= {} at f_c = {}",
            problem.eta_min, problem.f_c
        ))),
    }
}

fn validate_tables(cfg: &RunConfig, both: bool) -> Result<(), Failure> {
    let m_list = if both { vec![2, 3] } else { vec![cfg.system.m_rx] };
    let mut all_ok = true;
    for m in m_list {
        let mut run = cfg.clone();
        run.system.m_rx = m;
        let problem = run.problem()?;
        problem.validate()?;
        let table: CoefficientSet64 = published_table(m)?;
        let r = optimizer::verify_table(&problem, &table)?;
        println!(
            "m_rx={m} gamma={:.4} norm_sq={:.6} eta={:.5} {}",
            r.gamma,
            r.norm_sq,
            r.eta,
            if r.feasible { "feasible" } else { "INFEASIBLE" }
        );
        all_ok &= r.feasible;
    }
    if all_ok {
        Ok(())
    } else {
        Err(Failure::infeasible("a published table violates the constraints"))
    }
}

fn ber(cfg: &RunConfig, start: Instant) -> Result<(), Failure> {
    let coeffs = cfg.coefficients()?;
    let curve: BerCurve = harness::ber_sweep(&cfg.sweep(), &coeffs)?;
    for p in &curve.points {
        println!(
            "snr={:>5.1} dB  ber={:.4e}  [{:.3e}, {:.3e}]  bits={} errors={}",
            p.snr_db, p.ber, p.ci_lo, p.ci_hi, p.bits, p.errors
        );
    }
    let dir = output_dir(cfg)?;
    let mut buf = Vec::new();
    harness::write_ber_csv(&mut buf, &curve).map_err(|e| Failure::io(&dir, e))?;
    write_atomic(&dir.join("ber.csv"), &buf)?;
    write_summary(&dir, "ber", cfg, start, &curve)
}

fn psd(cfg: &RunConfig, start: Instant) -> Result<(), Failure> {
    let coeffs = cfg.coefficients()?;
    let psd = harness::empirical_psd(&coeffs, cfg.psd.frames, cfg.system.n_intervals, cfg.master_seed)?;
    let dev = psd.max_deviation_db(cfg.system.f_c);
    println!(
        "frames={} max deviation over |f| <= {}: {dev:.3} dB",
        psd.frames, cfg.system.f_c
    );
    let dir = output_dir(cfg)?;
    let mut buf = Vec::new();
    harness::write_psd_csv(&mut buf, &psd).map_err(|e| Failure::io(&dir, e))?;
    write_atomic(&dir.join("psd.csv"), &buf)?;
    #[derive(Serialize)]
    struct PsdResult {
        frames: usize,
        max_deviation_db: f64,
    }
    write_summary(
        &dir,
        "psd",
        cfg,
        start,
        PsdResult {
            frames: psd.frames,
            max_deviation_db: dev,
        },
    )
}

fn report(cfg: &RunConfig) -> Result<(), Failure> {
    let coeffs = cfg.coefficients()?;
    let c = harness::containment_report(&coeffs, cfg.system.f_c, &cfg.containment())?;
    println!("m_rx={}", cfg.system.m_rx);
    println!("gamma={:.5}", coeffs.min_entry());
    println!("norm_sq={:.6}", coeffs.norm_sq());
    println!("eta={:.5}", c.eta);
    println!("inband_power={:.6}", c.inband_power);
    println!("reference_power={:.6}", c.reference_power);
    println!("total_power={:.6}", c.total_power);
    Ok(())
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Failure::io(&cfg.output_dir, e))?;
    Ok(cfg.output_dir.clone())
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| Failure::io(path, e))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure {
        code: 1,
        msg: e.to_string(),
    })?;
    write_atomic(path, text.as_bytes())
}

fn write_summary<R: Serialize>(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    start: Instant,
    result: R,
) -> Result<(), Failure> {
    let summary = Summary {
        command,
        master_seed: cfg.master_seed,
        runtime_s: start.elapsed().as_secs_f64(),
        config: cfg,
        result,
    };
    write_json(&dir.join("summary.json"), &summary)
}
