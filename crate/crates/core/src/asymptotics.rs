//! Least-squares fitting on the asymptotic scale `eps^k (eps ln eps)^l`,
//! detection of the `eps ln eps` term in return maps, and the `kappa`
//! substitution turning a linear fast term into a quadratic one.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entryexit::{numerical_return, theoretical_exit, EntryExitError};
use crate::integrate::{fmt17, Tolerances};
use crate::system::{kappa, Domain, FastExponent, ScalarField, SlowFastSystem, SystemError};

/// Condition number above which fitted coefficients carry a warning.
pub const ILL_CONDITIONED: f64 = 1e12;

/// Absolute floor of the log-term decision rule.
pub const LOG_FLOOR: f64 = 1e-6;

/// Cap on `w` for transformed systems.
pub const W_MAX: f64 = 0.9;

pub const DEFAULT_LADDER: (f64, f64, usize) = (1e-4, 1e-2, 12);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("{samples} samples cannot determine {unknowns} coefficients (need at least {needed})")]
    Underdetermined {
        samples: usize,
        unknowns: usize,
        needed: usize,
    },
    #[error("eps = {0} outside (0, 1/e)")]
    EpsOutOfRange(f64),
    #[error("eps values are not distinct")]
    DuplicateEps,
    #[error("basis degree must be at least 1")]
    ZeroDegree,
    #[error("non-finite sample value at eps = {0}")]
    NotFinite(f64),
    #[error("ladder needs at least {min_points} points over {min_decades} decades")]
    ShortLadder { min_points: usize, min_decades: f64 },
    #[error("kappa transform needs a linear fast term")]
    NotLinear,
    #[error("z = {0} outside (0, 1)")]
    ZOutOfRange(f64),
    #[error(transparent)]
    EntryExit(#[from] EntryExitError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Exponent pairs `(k, l)` with `1 <= k + l <= degree`, ordered by total
/// degree and, within a degree, by decreasing power of the logarithm.
pub fn scale_basis(degree: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for total in 1..=degree {
        for l in (0..=total).rev() {
            out.push((total - l, l));
        }
    }
    out
}

pub fn scale_function(eps: f64, (k, l): (u32, u32)) -> f64 {
    eps.powi(k as i32) * (eps * eps.ln()).powi(l as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFit {
    pub basis: Vec<(u32, u32)>,
    pub coeffs: Vec<f64>,
    /// Euclidean norm of the fit residual.
    #[serde(rename = "residual")]
    pub residual_norm: f64,
    /// 2-norm condition number of the column-equilibrated design matrix.
    #[serde(rename = "condition")]
    pub condition_estimate: f64,
    pub ill_conditioned: bool,
}

impl AsymptoticFit {
    pub fn coeff(&self, k: u32, l: u32) -> Option<f64> {
        self.basis
            .iter()
            .position(|&b| b == (k, l))
            .map(|i| self.coeffs[i])
    }

    pub fn predict(&self, eps: f64) -> f64 {
        self.basis
            .iter()
            .zip(&self.coeffs)
            .map(|(&b, c)| c * scale_function(eps, b))
            .sum()
    }

    pub fn warning(&self) -> Option<String> {
        self.ill_conditioned.then(|| {
            format!(
                "design matrix condition {:e} exceeds {:e}; coefficients unreliable",
                self.condition_estimate, ILL_CONDITIONED
            )
        })
    }
}

/// Ordinary least squares of `y` on the scale basis of the given degree.
/// Columns are equilibrated and the system is solved through a QR factorization.
pub fn fit_scale(samples: &[(f64, f64)], degree: u32) -> Result<AsymptoticFit, FitError> {
    if degree == 0 {
        return Err(FitError::ZeroDegree);
    }
    let basis = scale_basis(degree);
    let n = samples.len();
    let p = basis.len();
    if n < p + 2 {
        return Err(FitError::Underdetermined {
            samples: n,
            unknowns: p,
            needed: p + 2,
        });
    }
    let e_max = (-1f64).exp();
    for &(eps, y) in samples {
        if !(eps > 0.0 && eps < e_max) {
            return Err(FitError::EpsOutOfRange(eps));
        }
        if !y.is_finite() {
            return Err(FitError::NotFinite(eps));
        }
    }
    let mut sorted: Vec<f64> = samples.iter().map(|s| s.0).collect();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(FitError::DuplicateEps);
    }

    let mut a = DMatrix::from_fn(n, p, |i, j| scale_function(samples[i].0, basis[j]));
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.1));
    let scales: Vec<f64> = (0..p).map(|j| a.column(j).norm()).collect();
    for (j, s) in scales.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let sv = a.clone().singular_values();
    let condition_estimate = sv.max() / sv.min();

    let qr = a.clone().qr();
    let qty = qr.q().transpose() * &y;
    let r = qr.r();
    let scaled = r
        .solve_upper_triangular(&qty)
        .unwrap_or_else(|| DVector::from_element(p, f64::NAN));
    let residual_norm = (&a * &scaled - &y).norm();
    let coeffs: Vec<f64> = scaled.iter().zip(&scales).map(|(c, s)| c / s).collect();
    Ok(AsymptoticFit {
        basis,
        coeffs,
        residual_norm,
        condition_estimate,
        ill_conditioned: !(condition_estimate <= ILL_CONDITIONED),
    })
}

/// `n` log-spaced values from `hi` down to `lo`.
pub fn log_ladder(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let (a, b) = (hi.ln(), lo.ln());
            (0..n)
                .map(|i| {
                    if i == 0 {
                        hi
                    } else if i == n - 1 {
                        lo
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

pub fn default_ladder() -> Vec<f64> {
    let (lo, hi, n) = DEFAULT_LADDER;
    log_ladder(lo, hi, n)
}

/// Decision rule: the log coefficient must clear both ten residual norms
/// and an absolute floor.
pub fn log_threshold(residual_norm: f64) -> f64 {
    (10.0 * residual_norm).max(LOG_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDetection {
    pub has_log: bool,
    pub a01: f64,
    pub threshold: f64,
    pub p0: f64,
    /// `(eps, p_eps - p0)` in ladder order.
    pub samples: Vec<(f64, f64)>,
    pub fit: AsymptoticFit,
}

impl LogDetection {
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("eps,y\n");
        for (e, y) in &self.samples {
            out.push_str(&format!("{},{}\n", fmt17(*e), fmt17(*y)));
        }
        out
    }
}

pub const MIN_LADDER_POINTS: usize = 8;
pub const MIN_LADDER_DECADES: f64 = 1.5;

/// Fits `p_eps(x0) - p0(x0)` on the degree-2 scale and reports whether the
/// `eps ln eps` coefficient is significant.
pub fn detect_log_term(
    sys: &SlowFastSystem,
    x0: f64,
    z0: f64,
    ladder: &[f64],
    tol: &Tolerances,
) -> Result<LogDetection, FitError> {
    let (lo, hi) = ladder
        .iter()
        .fold((f64::INFINITY, 0f64), |(l, h), e| (l.min(*e), h.max(*e)));
    if ladder.len() < MIN_LADDER_POINTS || !(lo > 0.0) || (hi / lo).log10() < MIN_LADDER_DECADES {
        return Err(FitError::ShortLadder {
            min_points: MIN_LADDER_POINTS,
            min_decades: MIN_LADDER_DECADES,
        });
    }
    let p0 = theoretical_exit(sys, x0)?.p0;
    let samples = ladder
        .par_iter()
        .map(|&eps| numerical_return(sys, x0, z0, eps, tol).map(|s| (eps, s.p_eps - p0)))
        .collect::<Result<Vec<_>, _>>()?;
    let fit = fit_scale(&samples, 2)?;
    let a01 = fit.coeff(0, 1).expect("degree-2 basis has the log term");
    let threshold = log_threshold(fit.residual_norm);
    Ok(LogDetection {
        has_log: a01.abs() > threshold,
        a01,
        threshold,
        p0,
        samples,
        fit,
    })
}

/// `w = -1 / ln z`, inverse of `kappa` on `(0, 1)`.
pub fn z_to_w(z: f64) -> Result<f64, FitError> {
    if z > 0.0 && z < 1.0 {
        Ok(-1.0 / z.ln())
    } else {
        Err(FitError::ZOutOfRange(z))
    }
}

pub fn w_to_z(w: f64) -> f64 {
    kappa(w)
}

/// A linear fast-term system and its image under `z = kappa(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaSystem {
    pub base: SlowFastSystem,
    pub transformed: SlowFastSystem,
}

/// `x' = eps f(x, kappa(w))`, `w' = g(x, kappa(w)) w^2`.
pub fn kappa_transform(base: &SlowFastSystem) -> Result<KappaSystem, FitError> {
    if base.m != FastExponent::Linear {
        return Err(FitError::NotLinear);
    }
    let z_max = base.domain.z_max;
    let w_max = if z_max < 1.0 {
        z_to_w(z_max)?.min(W_MAX)
    } else {
        W_MAX
    };
    let domain = Domain::new(base.domain.x_min, base.domain.x_max, w_max)?;
    let mut transformed = SlowFastSystem::new(
        &format!("kappa({})", base.name),
        ScalarField::Kappa(Box::new(base.f.clone())),
        ScalarField::Kappa(Box::new(base.g.clone())),
        2,
        domain,
    )?;
    transformed.params = base.params.clone();
    Ok(KappaSystem {
        base: base.clone(),
        transformed,
    })
}
