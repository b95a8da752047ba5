//! Planar slow-fast systems
//!
//! ```text
//!     x' = eps * f(x, z)
//!     z' = g(x, z) * z^m,      m in {1, 2}
//! ```
//!
//! The scalar fields `f` and `g` are closed forms: sums of monomials
//! `c x^i z^j`, optionally multiplied by the flat factor `exp(-1/z)`, plus the
//! substitution `z -> kappa(z)` used by the linear-to-quadratic reduction.
//! A small catalog of named systems covers every scenario the crate ships.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::bisect;

/// Below this `z` the flat factor `exp(-1/z)` is returned as exactly zero.
/// `exp(-1/z)` underflows for `z < 1/745` anyway; the cut makes it explicit.
pub const FLAT_Z_TINY: f64 = 1.0 / 745.0;

/// Roots of `g(., 0)` are refined to this width.
pub const ROOT_XTOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("state outside domain: {coordinate} = {value} not in [{lo}, {hi}]")]
    OutOfDomain {
        coordinate: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("negative eps = {0}")]
    NegativeEps(f64),
    #[error("fast exponent must be 1 or 2, got {0}")]
    BadExponent(u32),
    #[error("unknown system '{0}'")]
    UnknownSystem(String),
    #[error("unknown parameter '{param}' for system '{system}'")]
    UnknownParam { system: String, param: String },
    #[error("invalid domain: {0}")]
    BadDomain(String),
    #[error("f(x, 0) = {value} <= 0 at x = {x}")]
    SlowFieldNotPositive { x: f64, value: f64 },
    #[error("g(., 0) vanishes identically near x = {x}")]
    Degenerate { x: f64 },
    #[error("invalid interval [{0}, {1}]")]
    BadInterval(f64, f64),
    #[error("{name} = {value} is not finite at (x, z) = ({x}, {z})")]
    NotFinite {
        name: &'static str,
        value: f64,
        x: f64,
        z: f64,
    },
}

/// `exp(-1/z)` for `z > 0`, extended by 0.
pub fn flat_exp(z: f64) -> f64 {
    if z <= FLAT_Z_TINY {
        0.0
    } else {
        (-1.0 / z).exp()
    }
}

/// `kappa(w) = exp(-1/w)` for `w > 0`, `kappa(0) = 0`.
pub fn kappa(w: f64) -> f64 {
    flat_exp(w)
}

/// One monomial `coeff * x^x_pow * z^z_pow`, times `exp(-1/z)` when `flat`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub x_pow: u32,
    pub z_pow: u32,
    pub flat: bool,
}

impl Term {
    pub fn new(coeff: f64, x_pow: u32, z_pow: u32) -> Self {
        Self {
            coeff,
            x_pow,
            z_pow,
            flat: false,
        }
    }

    pub fn flat(coeff: f64, x_pow: u32, z_pow: u32) -> Self {
        Self {
            coeff,
            x_pow,
            z_pow,
            flat: true,
        }
    }

    fn eval(&self, x: f64, z: f64) -> f64 {
        if self.coeff == 0.0 {
            return 0.0;
        }
        let mut v = self.coeff * x.powi(self.x_pow as i32) * z.powi(self.z_pow as i32);
        if self.flat {
            v *= flat_exp(z);
        }
        v
    }
}

/// Closed-form scalar field on `(x, z)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarField {
    Terms(Vec<Term>),
    /// `inner(x, kappa(w))`.
    Kappa(Box<ScalarField>),
    /// `lhs(x, z) * rhs(x, z)`.
    Product(Box<ScalarField>, Box<ScalarField>),
}

impl ScalarField {
    pub fn constant(c: f64) -> Self {
        ScalarField::Terms(vec![Term::new(c, 0, 0)])
    }

    /// Polynomial in `x` alone, coefficients in ascending powers.
    pub fn poly_x(coeffs: &[f64]) -> Self {
        ScalarField::Terms(
            coeffs
                .iter()
                .enumerate()
                .map(|(i, &c)| Term::new(c, i as u32, 0))
                .collect(),
        )
    }

    pub fn eval(&self, x: f64, z: f64) -> f64 {
        match self {
            ScalarField::Terms(terms) => terms.iter().map(|t| t.eval(x, z)).sum(),
            ScalarField::Kappa(inner) => inner.eval(x, kappa(z)),
            ScalarField::Product(a, b) => a.eval(x, z) * b.eval(x, z),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FastExponent {
    Linear,
    Quadratic,
}

impl FastExponent {
    pub fn from_int(m: u32) -> Result<Self, SystemError> {
        match m {
            1 => Ok(FastExponent::Linear),
            2 => Ok(FastExponent::Quadratic),
            other => Err(SystemError::BadExponent(other)),
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            FastExponent::Linear => 1,
            FastExponent::Quadratic => 2,
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            FastExponent::Linear => z,
            FastExponent::Quadratic => z * z,
        }
    }
}

/// The closed box `[x_min, x_max] x [0, z_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub z_max: f64,
}

impl Domain {
    pub fn new(x_min: f64, x_max: f64, z_max: f64) -> Result<Self, SystemError> {
        let d = Self {
            x_min,
            x_max,
            z_max,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.z_max.is_finite()) {
            return Err(SystemError::BadDomain("non-finite bound".into()));
        }
        if self.x_min >= self.x_max {
            return Err(SystemError::BadDomain(format!(
                "x_min = {} >= x_max = {}",
                self.x_min, self.x_max
            )));
        }
        if self.z_max <= 0.0 {
            return Err(SystemError::BadDomain(format!(
                "z_max = {} <= 0",
                self.z_max
            )));
        }
        Ok(())
    }

    pub fn contains_x(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    pub fn check(&self, x: f64, z: f64) -> Result<(), SystemError> {
        if !self.contains_x(x) {
            return Err(SystemError::OutOfDomain {
                coordinate: "x",
                value: x,
                lo: self.x_min,
                hi: self.x_max,
            });
        }
        if !(0.0..=self.z_max).contains(&z) {
            return Err(SystemError::OutOfDomain {
                coordinate: "z",
                value: z,
                lo: 0.0,
                hi: self.z_max,
            });
        }
        Ok(())
    }
}

/// Serializable description of a catalog system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
}

impl SystemSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: BTreeMap::new(),
            domain: None,
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn build(&self) -> Result<SlowFastSystem, SystemError> {
        let mut sys = builtin(&self.name, &self.params)?;
        if let Some(d) = self.domain {
            d.validate()?;
            sys.domain = d;
        }
        Ok(sys)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlowFastSystem {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub f: ScalarField,
    pub g: ScalarField,
    pub m: FastExponent,
    pub domain: Domain,
}

impl SlowFastSystem {
    pub fn new(
        name: &str,
        f: ScalarField,
        g: ScalarField,
        m: u32,
        domain: Domain,
    ) -> Result<Self, SystemError> {
        domain.validate()?;
        Ok(Self {
            name: name.to_string(),
            params: BTreeMap::new(),
            f,
            g,
            m: FastExponent::from_int(m)?,
            domain,
        })
    }

    #[inline]
    pub fn f(&self, x: f64, z: f64) -> f64 {
        self.f.eval(x, z)
    }

    #[inline]
    pub fn g(&self, x: f64, z: f64) -> f64 {
        self.g.eval(x, z)
    }

    /// `g / f`, the fast rate after dividing out the slow speed.
    #[inline]
    pub fn h(&self, x: f64, z: f64) -> f64 {
        self.g(x, z) / self.f(x, z)
    }

    pub fn spec(&self) -> SystemSpec {
        SystemSpec {
            name: self.name.clone(),
            params: self.params.clone(),
            domain: Some(self.domain),
        }
    }

    /// Right-hand side `(eps f, g z^m)` with domain checking.
    pub fn rhs(&self, state: [f64; 2], eps: f64) -> Result<[f64; 2], SystemError> {
        if eps < 0.0 {
            return Err(SystemError::NegativeEps(eps));
        }
        let [x, z] = state;
        self.domain.check(x, z)?;
        let f = self.f(x, z);
        let g = self.g(x, z);
        if !f.is_finite() {
            return Err(SystemError::NotFinite {
                name: "f",
                value: f,
                x,
                z,
            });
        }
        if !g.is_finite() {
            return Err(SystemError::NotFinite {
                name: "g",
                value: g,
                x,
                z,
            });
        }
        Ok(self.rhs_unchecked(state, eps))
    }

    #[inline]
    pub fn rhs_unchecked(&self, [x, z]: [f64; 2], eps: f64) -> [f64; 2] {
        let dz = if z == 0.0 {
            0.0
        } else {
            self.g(x, z) * self.m.apply(z)
        };
        [eps * self.f(x, z), dz]
    }

    /// Time-independent vector field for the integrator.
    pub fn field(&self, eps: f64) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] + '_ {
        move |_t, y| self.rhs_unchecked(*y, eps)
    }

    /// Samples `f(x, 0)` on `grid_n` points of the domain and fails on the
    /// first non-positive value.
    pub fn check_slow_positive(&self, grid_n: usize) -> Result<(), SystemError> {
        let n = grid_n.max(2);
        let d = &self.domain;
        for i in 0..n {
            let x = d.x_min + (d.x_max - d.x_min) * i as f64 / (n - 1) as f64;
            let v = self.f(x, 0.0);
            if !(v > 0.0) {
                return Err(SystemError::SlowFieldNotPositive { x, value: v });
            }
        }
        Ok(())
    }

    /// Zeros of `g(., 0)` on `[a, b]` located by sign changes on `grid_n`
    /// samples and refined by bisection.
    pub fn turning_points(&self, a: f64, b: f64, grid_n: usize) -> Result<Vec<f64>, SystemError> {
        if !(a < b) {
            return Err(SystemError::BadInterval(a, b));
        }
        let n = grid_n.max(2);
        let g0 = |x: f64| self.g(x, 0.0);
        let mut roots = Vec::new();
        let mut last_nonzero: Option<(f64, f64)> = None;
        let mut prev_zero = false;
        for i in 0..n {
            let x = if i == n - 1 {
                b
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            };
            let v = g0(x);
            if v == 0.0 {
                if prev_zero {
                    return Err(SystemError::Degenerate { x });
                }
                prev_zero = true;
                continue;
            }
            prev_zero = false;
            if let Some((xp, vp)) = last_nonzero {
                if vp.signum() != v.signum() {
                    roots.push(bisect(&g0, xp, x, ROOT_XTOL));
                }
            }
            last_nonzero = Some((x, v));
        }
        Ok(roots)
    }

    /// Sampling-based check of the entry/exit sign conditions between
    /// `x_entry` and `x_exit`.
    pub fn check_conditions(
        &self,
        x_entry: f64,
        x_exit: f64,
        grid_n: usize,
    ) -> Result<DelayConditionReport, SystemError> {
        if !(x_entry < x_exit) {
            return Err(SystemError::BadInterval(x_entry, x_exit));
        }
        for x in [x_entry, x_exit] {
            if !self.domain.contains_x(x) {
                return Err(SystemError::OutOfDomain {
                    coordinate: "x",
                    value: x,
                    lo: self.domain.x_min,
                    hi: self.domain.x_max,
                });
            }
        }
        let entry_ok = self.g(x_entry, 0.0) < 0.0;
        let exit_ok = self.g(x_exit, 0.0) > 0.0;
        let sign_changes = self.turning_points(x_entry, x_exit, grid_n)?;
        let classical = entry_ok && exit_ok && sign_changes.len() == 1;
        Ok(DelayConditionReport {
            x_entry,
            x_exit,
            entry_ok,
            exit_ok,
            sign_changes,
            classical,
        })
    }
}

impl fmt::Display for SlowFastSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (m = {})", self.name, self.m.as_int())?;
        for (k, v) in &self.params {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayConditionReport {
    pub x_entry: f64,
    pub x_exit: f64,
    /// `g(x_entry, 0) < 0`.
    pub entry_ok: bool,
    /// `g(x_exit, 0) > 0`.
    pub exit_ok: bool,
    /// Turning points between entry and exit.
    pub sign_changes: Vec<f64>,
    /// A single `-` to `+` sign change.
    pub classical: bool,
}

pub const CATALOG: [&str; 5] = [
    "example5",
    "symmetric_quadratic",
    "linear_case",
    "flat_perturbed",
    "multi_turning",
];

/// Roots of the `multi_turning` cubic.
pub const MULTI_TURNING_ROOTS: [f64; 3] = [-0.8, 0.2, 0.9];

fn take_params(
    system: &str,
    given: &BTreeMap<String, f64>,
    defaults: &[(&str, f64)],
) -> Result<BTreeMap<String, f64>, SystemError> {
    let mut out: BTreeMap<String, f64> =
        defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in given {
        match out.get_mut(k) {
            Some(slot) => *slot = *v,
            None => {
                return Err(SystemError::UnknownParam {
                    system: system.to_string(),
                    param: k.clone(),
                })
            }
        }
    }
    Ok(out)
}

/// Catalog lookup.
///
/// | name                  | f           | g                                | m |
/// |-----------------------|-------------|----------------------------------|---|
/// | `example5`            | 1           | x + alpha z                      | 2 |
/// | `symmetric_quadratic` | 1           | x                                | 2 |
/// | `linear_case`         | 1           | x                                | 1 |
/// | `flat_perturbed`      | 1           | x + rho (1 + x^2/2) exp(-1/z)    | 2 |
/// | `multi_turning`       | 1 + beta xz | scale (x+0.8)(x-0.2)(x-0.9)      | 2 |
pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<SlowFastSystem, SystemError> {
    let (f, g, m, domain, params) = match name {
        "example5" => {
            let p = take_params(name, params, &[("alpha", 0.0)])?;
            let alpha = p["alpha"];
            let g = ScalarField::Terms(vec![Term::new(1.0, 1, 0), Term::new(alpha, 0, 1)]);
            (
                ScalarField::constant(1.0),
                g,
                2,
                Domain::new(-2.0, 2.0, 2.0)?,
                p,
            )
        }
        "symmetric_quadratic" => {
            let p = take_params(name, params, &[])?;
            let g = ScalarField::poly_x(&[0.0, 1.0]);
            (
                ScalarField::constant(1.0),
                g,
                2,
                Domain::new(-2.0, 2.0, 0.2)?,
                p,
            )
        }
        "linear_case" => {
            let p = take_params(name, params, &[])?;
            let g = ScalarField::poly_x(&[0.0, 1.0]);
            (
                ScalarField::constant(1.0),
                g,
                1,
                Domain::new(-2.0, 2.0, 0.2)?,
                p,
            )
        }
        "flat_perturbed" => {
            let p = take_params(name, params, &[("rho", 1.0)])?;
            let rho = p["rho"];
            let g = ScalarField::Terms(vec![
                Term::new(1.0, 1, 0),
                Term::flat(rho, 0, 0),
                Term::flat(0.5 * rho, 2, 0),
            ]);
            (
                ScalarField::constant(1.0),
                g,
                2,
                Domain::new(-2.0, 2.0, 0.2)?,
                p,
            )
        }
        "multi_turning" => {
            let p = take_params(name, params, &[("scale", 1.0), ("beta", 1.0)])?;
            let s = p["scale"];
            let [r1, r2, r3] = MULTI_TURNING_ROOTS;
            // (x - r1)(x - r2)(x - r3) expanded
            let c3 = 1.0;
            let c2 = -(r1 + r2 + r3);
            let c1 = r1 * r2 + r1 * r3 + r2 * r3;
            let c0 = -r1 * r2 * r3;
            let g = ScalarField::poly_x(&[s * c0, s * c1, s * c2, s * c3]);
            let f = ScalarField::Terms(vec![Term::new(1.0, 0, 0), Term::new(p["beta"], 1, 1)]);
            (f, g, 2, Domain::new(-1.5, 1.5, 0.2)?, p)
        }
        other => return Err(SystemError::UnknownSystem(other.to_string())),
    };
    let mut sys = SlowFastSystem::new(name, f, g, m, domain)?;
    sys.params = params;
    Ok(sys)
}

/// Catalog lookup with default parameters.
pub fn builtin_default(name: &str) -> Result<SlowFastSystem, SystemError> {
    builtin(name, &BTreeMap::new())
}
