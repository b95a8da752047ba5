//! Closed forms for `x' = eps`, `z' = (x + alpha z) z^2` started at `(x0, 1)`.
//!
//! For `alpha = 0` the orbit is `z0(x) = 2 eps / (2 eps + x0^2 - x^2)`, which
//! returns to `z = 1` at `-x0`. The first-order correction `z1` in `alpha`
//! moves the return point by `c(x0, eps) alpha`, and `c` carries an
//! `eps ln eps` term with coefficient `2 / x0^2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entryexit::{numerical_return, EntryExitError};
use crate::integrate::{fmt17, Tolerances};
use crate::quad::{integrate_adaptive, QuadError};
use crate::system::builtin;

pub const DEFAULT_ALPHA: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Example5Error {
    #[error("x = {x} outside the existence window of the orbit from x0 = {x0} at eps = {eps}")]
    OutsideWindow { x: f64, x0: f64, eps: f64 },
    #[error("x0 must be negative, got {0}")]
    BadX0(f64),
    #[error("eps must be positive, got {0}")]
    BadEps(f64),
    #[error("alpha must be nonzero for a difference quotient")]
    ZeroAlpha,
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    EntryExit(#[from] EntryExitError),
}

fn denominator(x: f64, x0: f64, eps: f64) -> Result<f64, Example5Error> {
    let d = 2.0 * eps + (x0 - x) * (x0 + x);
    if d > 0.0 {
        Ok(d)
    } else {
        Err(Example5Error::OutsideWindow { x, x0, eps })
    }
}

pub fn z0_exact(x: f64, x0: f64, eps: f64) -> Result<f64, Example5Error> {
    Ok(2.0 * eps / denominator(x, x0, eps)?)
}

/// `d z0 / dx = 4 eps x / D^2`.
pub fn z0_prime(x: f64, x0: f64, eps: f64) -> Result<f64, Example5Error> {
    let d = denominator(x, x0, eps)?;
    Ok(4.0 * eps * x / (d * d))
}

/// `z1(x) = 8 eps^2 / D^2 * int_{x0}^{x} ds / (2 eps + x0^2 - s^2)`.
pub fn z1_exact(x: f64, x0: f64, eps: f64) -> Result<f64, Example5Error> {
    let d = denominator(x, x0, eps)?;
    denominator(x0, x0, eps)?;
    let a2 = x0 * x0 + 2.0 * eps;
    let inner = integrate_adaptive(&|s: f64| 1.0 / (a2 - s * s), x0, x, 1e-300, 1e-13)?.value;
    Ok(8.0 * eps * eps / (d * d) * inner)
}

fn check_args(x0: f64, eps: f64) -> Result<(), Example5Error> {
    if !(x0 < 0.0 && x0.is_finite()) {
        return Err(Example5Error::BadX0(x0));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Example5Error::BadEps(eps));
    }
    Ok(())
}

/// `c(x0, eps) = (2 eps / x0) int_{x0}^{-x0} ds / (2 eps + x0^2 - s^2)`,
/// evaluated through its logarithmic antiderivative.
pub fn c_closed(x0: f64, eps: f64) -> Result<f64, Example5Error> {
    check_args(x0, eps)?;
    let et = eps / (x0 * x0);
    let a = (1.0 + 2.0 * et).sqrt();
    // ln((a + 1) / (a - 1)) with a - 1 = 2 et / (a + 1)
    let log_ratio = 2.0 * (a + 1.0).ln() - (2.0 * et).ln();
    let ct = -log_ratio / a;
    Ok(2.0 * eps * ct / (x0 * x0))
}

/// `q(x0, eps) = (2 / x0^2) (1 + 2 eps / x0^2)^(-1/2)`: one analytic choice
/// for which `c - q eps ln eps` is smooth in `eps`.
pub fn log_prefactor(x0: f64, eps: f64) -> Result<f64, Example5Error> {
    check_args(x0, eps)?;
    Ok(2.0 / (x0 * x0) / (1.0 + 2.0 * eps / (x0 * x0)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationResult {
    pub x0: f64,
    pub eps: f64,
    pub c_closed: f64,
    pub c_fd: f64,
    pub alpha_used: f64,
    /// `|c_fd - c_closed| / |c_closed|`.
    pub agreement: f64,
    pub p_plus: f64,
    pub p_minus: f64,
}

impl PerturbationResult {
    pub const CSV_HEADER: &'static str = "x0,eps,c_closed,c_fd,rel_err";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            fmt17(self.x0),
            fmt17(self.eps),
            fmt17(self.c_closed),
            fmt17(self.c_fd),
            fmt17(self.agreement)
        )
    }
}

/// Centered difference in `alpha` of the simulated return point, from `z = 1`.
pub fn c_via_finite_difference(
    x0: f64,
    eps: f64,
    alpha: f64,
    tol: &Tolerances,
) -> Result<PerturbationResult, Example5Error> {
    check_args(x0, eps)?;
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(Example5Error::ZeroAlpha);
    }
    let alpha = alpha.abs();
    let run = |a: f64| -> Result<f64, Example5Error> {
        let params = [("alpha".to_string(), a)].into_iter().collect();
        let sys = builtin("example5", &params).map_err(EntryExitError::from)?;
        Ok(numerical_return(&sys, x0, 1.0, eps, tol)?.p_eps)
    };
    let (plus, minus) = rayon::join(|| run(alpha), || run(-alpha));
    let (p_plus, p_minus) = (plus?, minus?);
    let c_fd = (p_plus - p_minus) / (2.0 * alpha);
    let c = c_closed(x0, eps)?;
    Ok(PerturbationResult {
        x0,
        eps,
        c_closed: c,
        c_fd,
        alpha_used: alpha,
        agreement: ((c_fd - c) / c).abs(),
        p_plus,
        p_minus,
    })
}
