use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use slowfast_cli::commands::{run, Command, Failure, Output};
use slowfast_cli::config::{
    parse_ladder, parse_list, parse_param, BlowupMode, Overrides, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "slowfast",
    version,
    about = "Entry-exit maps, blow-up transitions and log-term fits for slow-fast systems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample the slow field, list turning points and check the delay conditions.
    Check(Args),
    /// Solve the entry-exit relation for the exit point p0(x0).
    P0(Args),
    /// Simulate one return to z = z0 and compare with p0.
    Return(Args),
    /// Return points along an eps ladder.
    Sweep(Args),
    /// Singular orbit through the blow-up, or the affine-chart pipeline.
    Blowup(Args),
    /// Fit p_eps - p0 on the eps log eps scale and test for a log term.
    Fit(Args),
    /// First-order coefficient of the perturbed example, closed form against finite differences.
    Example5(Args),
    /// Linear fast term against its kappa-transformed quadratic image.
    Kappa(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Primary output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the effective configuration as JSON.
    #[arg(long)]
    save_config: Option<PathBuf>,
    /// Catalog system name.
    #[arg(long)]
    system: Option<String>,
    /// System parameter, repeatable.
    #[arg(long, value_name = "KEY=VALUE")]
    param: Vec<String>,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    #[arg(long)]
    z0: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Log-spaced eps ladder.
    #[arg(long, value_name = "LO:HI:N")]
    ladder: Option<String>,
    /// Section height in the affine chart.
    #[arg(long = "E1")]
    e1: Option<f64>,
    /// Comma-separated sections for singular blow-up runs.
    #[arg(long = "E1-grid", value_name = "LIST")]
    e1_grid: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Blow-up mode.
    #[arg(long, value_name = "singular|pipeline")]
    mode: Option<BlowupMode>,
    /// Integrator relative tolerance.
    #[arg(long)]
    rel: Option<f64>,
    /// Integrator absolute tolerance.
    #[arg(long)]
    abs: Option<f64>,
}

impl Args {
    fn config(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::for_system(self.system.as_deref().unwrap_or("symmetric_quadratic")),
        };
        let overrides = Overrides {
            system: self.system.clone(),
            params: self
                .param
                .iter()
                .map(|p| parse_param(p))
                .collect::<Result<_>>()?,
            x0: self.x0,
            z0: self.z0,
            eps: self.eps,
            ladder: self.ladder.as_deref().map(parse_ladder).transpose()?,
            e1: self.e1,
            e1_grid: self.e1_grid.as_deref().map(parse_list).transpose()?,
            alpha: self.alpha,
            mode: self.mode,
            rel: self.rel,
            abs: self.abs,
            out: self.out.clone(),
        };
        Ok(overrides.apply(base))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(cfg: &RunConfig, out: &Output) -> Result<()> {
    match &cfg.out {
        Some(path) => {
            write(path, &out.primary)?;
            for (suffix, text) in &out.extra {
                write(&path.with_extension(suffix), text)?;
            }
        }
        None => print!("{}", out.primary),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (cmd, args) = match cli.cmd {
        Cmd::Check(a) => (Command::Check, a),
        Cmd::P0(a) => (Command::P0, a),
        Cmd::Return(a) => (Command::Return, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Blowup(a) => (Command::Blowup, a),
        Cmd::Fit(a) => (Command::Fit, a),
        Cmd::Example5(a) => (Command::Example5, a),
        Cmd::Kappa(a) => (Command::Kappa, a),
    };
    let result = args.config().map_err(Failure::Config).and_then(|cfg| {
        if let Some(p) = &args.save_config {
            write(p, &(cfg.to_json() + "\n")).map_err(Failure::Config)?;
        }
        let out = run(cmd, &cfg)?;
        emit(&cfg, &out).map_err(Failure::Config)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code() as u8)
        }
    }
}
