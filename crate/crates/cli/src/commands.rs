//! Subcommand bodies. Each returns the primary output as a string.

use anyhow::{anyhow, Result};
use serde_json::{json, Value};
use slowfast::asymptotics::{default_ladder, detect_log_term, kappa_transform, z_to_w, FitError};
use slowfast::blowup::{affine_pipeline, singular_composition, BlowupError};
use slowfast::entryexit::{convergence_study, exit_derivative, numerical_return, theoretical_exit};
use slowfast::example5::{c_via_finite_difference, Example5Error, PerturbationResult};
use slowfast::integrate::{fmt17, Tolerances};
use slowfast::system::SlowFastSystem;

use crate::config::{BlowupMode, RunConfig};

/// Exit code 1: the config or flags are unusable.
/// Exit code 2: the computation failed (entry condition, no balance, escape, ...).
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Compute(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Compute(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "config error: {e:#}"),
            Failure::Compute(e) => write!(f, "{e:#}"),
        }
    }
}

fn compute<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Compute(e.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    P0,
    Return,
    Sweep,
    Blowup,
    Fit,
    Example5,
    Kappa,
}

/// Primary output plus optional side artifacts `(suffix, contents)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub primary: String,
    pub extra: Vec<(String, String)>,
}

impl From<String> for Output {
    fn from(primary: String) -> Self {
        Self {
            primary,
            extra: Vec::new(),
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Output, Failure> {
    let sys = cfg.validate().map_err(Failure::Config)?;
    match cmd {
        Command::Check => check(&sys, cfg).map(Output::from),
        Command::P0 => p0(&sys, cfg).map(Output::from),
        Command::Return => sweep(&sys, cfg, &[cfg.eps]).map(Output::from),
        Command::Sweep => sweep(&sys, cfg, &cfg.ladder()).map(Output::from),
        Command::Blowup => blowup(&sys, cfg),
        Command::Fit => fit(&sys, cfg).map(Output::from),
        Command::Example5 => example5(cfg).map(Output::from),
        Command::Kappa => kappa(&sys, cfg).map(Output::from),
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn check(sys: &SlowFastSystem, cfg: &RunConfig) -> Result<String, Failure> {
    let d = sys.domain;
    let slow_positive = sys.check_slow_positive(4001);
    let turning = sys
        .turning_points(d.x_min, d.x_max, 4096)
        .map_err(compute)?;
    let exit = theoretical_exit(sys, cfg.x0).ok();
    let x_exit = exit.map_or(d.x_max, |e| e.p0);
    let conditions = if cfg.x0 < x_exit {
        Some(
            sys.check_conditions(cfg.x0, x_exit, 4096)
                .map_err(compute)?,
        )
    } else {
        None
    };
    Ok(pretty(&json!({
        "system": sys.spec(),
        "slow_positive": slow_positive.is_ok(),
        "slow_positive_error": slow_positive.err().map(|e| e.to_string()),
        "turning_points": turning,
        "conditions": conditions,
        "p0": exit.map(|e| e.p0),
    })))
}

fn p0(sys: &SlowFastSystem, cfg: &RunConfig) -> Result<String, Failure> {
    let e = theoretical_exit(sys, cfg.x0).map_err(compute)?;
    let mut v = serde_json::to_value(e).expect("exit solve serializes");
    let d = exit_derivative(sys, cfg.x0).map_err(compute)?;
    v["dp0_dx0"] = json!(d);
    Ok(pretty(&v))
}

fn sweep(sys: &SlowFastSystem, cfg: &RunConfig, ladder: &[f64]) -> Result<String, Failure> {
    let tol = cfg.tolerances_or(Tolerances::default());
    let table = convergence_study(sys, cfg.x0, cfg.z0(), ladder, &tol).map_err(compute)?;
    let escaped: Vec<String> = table
        .rows
        .iter()
        .filter_map(|r| r.escaped.map(|f| format!("eps = {} through {f:?}", r.eps)))
        .collect();
    if escaped.len() == table.rows.len() {
        return Err(compute(anyhow!(
            "every run left the domain: {}",
            escaped.join(", ")
        )));
    }
    for e in &escaped {
        eprintln!("warning: row dropped, {e}");
    }
    Ok(table.to_csv())
}

fn blowup(sys: &SlowFastSystem, cfg: &RunConfig) -> Result<Output, Failure> {
    match cfg.mode {
        BlowupMode::Singular => {
            let mut out = String::from("E1,x0,x1,x2,x3\n");
            for e1 in cfg.e1_values() {
                let o = singular_composition(sys, cfg.x0, e1).map_err(compute)?;
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt17(e1),
                    fmt17(o.x0),
                    fmt17(o.x1),
                    fmt17(o.x2),
                    fmt17(o.x3)
                ));
            }
            Ok(out.into())
        }
        BlowupMode::Pipeline => {
            let tol = cfg.tolerances_or(Tolerances::default());
            let r =
                affine_pipeline(sys, cfg.x0, cfg.z0(), cfg.eps, cfg.e1, &tol).map_err(
                    |e| match e {
                        BlowupError::EntryAboveSection { .. }
                        | BlowupError::UnsupportedExponent => Failure::Config(e.into()),
                        other => compute(other),
                    },
                )?;
            let v = serde_json::to_value(&r).expect("pipeline result serializes");
            Ok(Output {
                primary: pretty(&v),
                extra: vec![
                    ("trace.csv".into(), r.trace_csv()),
                    ("polar.csv".into(), r.polar_trace_csv()),
                ],
            })
        }
    }
}

fn fit(sys: &SlowFastSystem, cfg: &RunConfig) -> Result<String, Failure> {
    let tol = cfg.tolerances_or(Tolerances::new(1e-12, 1e-14));
    let ladder = cfg.eps_ladder.clone().unwrap_or_else(default_ladder);
    let d = detect_log_term(sys, cfg.x0, cfg.z0(), &ladder, &tol).map_err(|e| match e {
        FitError::ShortLadder { .. } => Failure::Config(e.into()),
        other => compute(other),
    })?;
    if let Some(w) = d.fit.warning() {
        eprintln!("warning: {w}");
    }
    Ok(pretty(
        &serde_json::to_value(&d).expect("detection serializes"),
    ))
}

fn example5(cfg: &RunConfig) -> Result<String, Failure> {
    let tol = cfg.tolerances_or(Tolerances::default());
    let mut out = format!("{}\n", PerturbationResult::CSV_HEADER);
    for eps in cfg.ladder() {
        let r = c_via_finite_difference(cfg.x0, eps, cfg.alpha, &tol).map_err(|e| match e {
            Example5Error::BadX0(_) => Failure::Config(e.into()),
            other => compute(other),
        })?;
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    Ok(out)
}

fn kappa(sys: &SlowFastSystem, cfg: &RunConfig) -> Result<String, Failure> {
    let k = kappa_transform(sys).map_err(|e| Failure::Config(e.into()))?;
    let z0 = cfg.z0();
    let w0 = z_to_w(z0).map_err(|e| Failure::Config(e.into()))?;
    // the linear flow drives z through hundreds of decades
    let base_tol = cfg.tolerances_or(Tolerances::relative_only(1e-10));
    let tol = cfg.tolerances_or(Tolerances::default());
    let mut out = String::from("eps,p_linear,p_kappa,diff\n");
    for eps in cfg.ladder() {
        let a = numerical_return(&k.base, cfg.x0, z0, eps, &base_tol).map_err(compute)?;
        let b = numerical_return(&k.transformed, cfg.x0, w0, eps, &tol).map_err(compute)?;
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt17(eps),
            fmt17(a.p_eps),
            fmt17(b.p_eps),
            fmt17(b.p_eps - a.p_eps)
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        assert_eq!(Failure::Config(anyhow!("x")).code(), 1);
        assert_eq!(Failure::Compute(anyhow!("x")).code(), 2);
    }

    #[test]
    fn entry_failure_is_compute() {
        let mut cfg = RunConfig::for_system("symmetric_quadratic");
        cfg.x0 = 0.5;
        let err = run(Command::P0, &cfg).unwrap_err();
        assert_eq!(err.code(), 2);
        assert!(err.to_string().contains("entry"), "{err}");
    }

    #[test]
    fn p0_json() {
        let cfg = RunConfig::for_system("symmetric_quadratic");
        let out = run(Command::P0, &cfg).unwrap().primary;
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!((v["p0"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!((v["dp0_dx0"].as_f64().unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_needs_linear_system() {
        let cfg = RunConfig::for_system("example5");
        assert_eq!(run(Command::Kappa, &cfg).unwrap_err().code(), 1);
    }
}
