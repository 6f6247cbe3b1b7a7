//! Command-line front end: `verify`, `simulate`, `convert`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use formelast::error::Error;
use formelast::harness::{convert_files, run_identity_suite, run_simulation, ConvertRequest, ScenarioConfig, SuiteConfig};

#[derive(Parser)]
#[command(name = "formelast", version, about = "Exterior-calculus elasticity kernel: identity suite, simulations, stress conversion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Nodes per axis (verify: coarse grid, the fine grid is 2N−1).
    #[arg(long)]
    resolution: Option<usize>,
    /// Seed for random fields.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the identity suite and write report.json.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Swap the leg order of ∇v♭ (the symmetric/skew split must then fail).
        #[arg(long)]
        leg_swap: bool,
    },
    /// Integrate a scenario and write trajectory.csv and report.json.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Convert a stress field between stress-web entries.
    Convert {
        #[command(flatten)]
        common: Common,
        /// Input field file (overrides the config).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Tag of the input, e.g. `sigma_spatial`.
        #[arg(long)]
        from: Option<String>,
        /// Target tag, e.g. `sigma_material`.
        #[arg(long)]
        to: Option<String>,
        /// Context file: chart, resolution, motion, time, density.
        #[arg(long)]
        context: Option<PathBuf>,
    },
}

/// Exit status: 1 for failed checks or runtime errors, 2 for bad input.
fn fail(e: Error) -> ExitCode {
    eprintln!("error: {}", e);
    match e {
        Error::Config(_) | Error::Json(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn verify(common: Common, leg_swap: bool) -> Result<ExitCode, Error> {
    let mut cfg: SuiteConfig = match &common.config {
        Some(p) => read_config(p)?,
        None => SuiteConfig::default(),
    };
    if let Some(n) = common.resolution {
        cfg.resolutions = [n, (2 * n).saturating_sub(1)];
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.leg_swap |= leg_swap;
    let report = run_identity_suite(&cfg)?;
    fs::create_dir_all(&common.out)?;
    report.write_json(&common.out.join("report.json"))?;
    for c in &report.checks {
        let mut order = c.order.map(|o| format!("{:.2}", o)).unwrap_or_else(|| "-".into());
        if let (Some(false), Some(m)) = (c.order_ok, c.min_order) {
            order += &format!(" (below {:.2})", m);
        }
        let res = c.residuals.last().map(|r| format!("{:.2e}", r)).unwrap_or_else(|| "-".into());
        println!("{} {:<58} residual {:>9} tol {:.2e} order {}", if c.pass { "PASS" } else { "FAIL" }, c.name, res, c.tolerances[1], order);
        if let (false, Some(m)) = (c.pass, &c.message) {
            println!("     {}", m);
        }
    }
    println!("{} passed, {} failed", report.passed, report.failed);
    Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn simulate(common: Common) -> Result<ExitCode, Error> {
    let path = common.config.as_ref().ok_or_else(|| Error::Config("simulate needs --config".into()))?;
    let mut cfg: ScenarioConfig = read_config(path)?;
    if let Some(n) = common.resolution {
        cfg.resolution = n;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let summary = run_simulation(&cfg, &common.out)?;
    println!(
        "{} steps, relative energy residual {:.3e} (tolerance {:.1e}), min det F {:.4}, trajectory {}",
        summary.steps,
        summary.max_relative_energy_residual,
        summary.energy_tolerance,
        summary.min_det_f,
        summary.trajectory.display()
    );
    Ok(if summary.within_tolerance { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn convert(common: Common, input: Option<PathBuf>, from: Option<String>, to: Option<String>, context: Option<PathBuf>) -> Result<ExitCode, Error> {
    let base: Option<ConvertRequest> = common.config.as_ref().map(|p| read_config(p)).transpose()?;
    let missing = |what: &str| Error::Config(format!("convert needs --{} (or a config providing it)", what));
    let req = ConvertRequest {
        input: input.or_else(|| base.as_ref().map(|b| b.input.clone())).ok_or_else(|| missing("input"))?,
        from: from.or_else(|| base.as_ref().map(|b| b.from.clone())).ok_or_else(|| missing("from"))?,
        to: to.or_else(|| base.as_ref().map(|b| b.to.clone())).ok_or_else(|| missing("to"))?,
        context: context.or_else(|| base.as_ref().map(|b| b.context.clone())).ok_or_else(|| missing("context"))?,
        output: base.and_then(|b| b.output),
    };
    let path = convert_files(&req, &common.out)?;
    println!("{} -> {}: {}", req.from, req.to, path.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match cli.command {
        Command::Verify { common, leg_swap } => verify(common, leg_swap),
        Command::Simulate { common } => simulate(common),
        Command::Convert { common, input, from, to, context } => convert(common, input, from, to, context),
    };
    out.unwrap_or_else(fail)
}
