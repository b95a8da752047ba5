//! Cylindrical blow-up of the `x`-axis: polar chart `(x, theta, r)` with
//! `z = r cos(theta)`, `eps = r sin(theta)`, and the affine chart `(x, z, E)`
//! with `eps = z E`.
//!
//! After division by `z f` the affine system reads
//! `x' = E`, `z' = h z`, `E' = -h E` with `h = g / f`, so `z E` is a first
//! integral. On the cylinder `z = 0` this gives `dE/dx = -h(x, 0)`, which is
//! all the singular transition maps need.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entryexit::{escape_guard, theoretical_exit, EntryExitError};
use crate::integrate::{fmt17, Direction, EventSpec, IntegrateError, Integrator, Tolerances};
use crate::quad::{CumulativeIntegral, QuadError, ScanOutcome};
use crate::system::{FastExponent, SlowFastSystem, SystemError, ROOT_XTOL};

pub const DEFAULT_E1: f64 = 0.2;

/// Relative drift of `z E` tolerated before a pipeline run is rejected.
pub const CONSERVATION_TOL: f64 = 1e-6;

/// Minimal relative gap between `E0 = eps / z0` and the section `E1`.
pub const SECTION_GAP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlowupError {
    #[error("f({x}, {z}) = {f} is not positive")]
    SlowFieldNotPositive { x: f64, z: f64, f: f64 },
    #[error("theta = {0} is on or beyond the affine chart boundary pi/2")]
    ChartBoundary(f64),
    #[error("E1 = {e1} too large: the cylinder integral saturates at {available} before the turning point")]
    ChartOverflow { e1: f64, available: f64 },
    #[error("E1 must be positive, got {0}")]
    BadE1(f64),
    #[error("pipeline needs eps / z0 = {e0} < E1 = {e1}")]
    EntryAboveSection { e0: f64, e1: f64 },
    #[error("the affine chart pipeline needs the quadratic fast term")]
    UnsupportedExponent,
    #[error("integration quality: |zE - eps| / eps reached {drift:e}")]
    Conservation { drift: f64 },
    #[error(transparent)]
    EntryExit(#[from] EntryExitError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarState {
    pub x: f64,
    pub theta: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineState {
    pub x: f64,
    pub z: f64,
    #[serde(rename = "E")]
    pub e: f64,
}

impl AffineState {
    pub fn new(x: f64, z: f64, e: f64) -> Self {
        Self { x, z, e }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.z, self.e]
    }

    pub fn from_array([x, z, e]: [f64; 3]) -> Self {
        Self { x, z, e }
    }

    pub fn to_polar(self) -> PolarState {
        PolarState {
            x: self.x,
            theta: self.e.atan(),
            r: self.z * self.e.hypot(1.0),
        }
    }
}

impl PolarState {
    pub fn to_affine(self) -> Result<AffineState, BlowupError> {
        if !(self.theta < FRAC_PI_2) {
            return Err(BlowupError::ChartBoundary(self.theta));
        }
        let (s, c) = self.theta.sin_cos();
        Ok(AffineState {
            x: self.x,
            z: self.r * c,
            e: s / c,
        })
    }
}

/// Blow-down `(x, z, E) -> (x, z, z E)`.
pub fn affine_to_original(s: AffineState) -> (f64, f64, f64) {
    (s.x, s.z, s.z * s.e)
}

pub fn polar_affine_roundtrip(s: PolarState) -> Result<PolarState, BlowupError> {
    Ok(s.to_affine()?.to_polar())
}

fn h_checked(sys: &SlowFastSystem, x: f64, z: f64) -> Result<f64, BlowupError> {
    let f = sys.f(x, z);
    if !(f > 0.0) {
        return Err(BlowupError::SlowFieldNotPositive { x, z, f });
    }
    Ok(sys.g(x, z) / f)
}

/// `(x', z', E') = (E, h z, -h E)`.
pub fn affine_rhs(sys: &SlowFastSystem, s: AffineState) -> Result<AffineState, BlowupError> {
    let h = h_checked(sys, s.x, s.z)?;
    Ok(AffineState {
        x: s.e,
        z: h * s.z,
        e: -h * s.e,
    })
}

/// `(x', theta', r') = (sin, -cos^2 sin h, r cos^3 h)` with `h` at `(x, r cos)`.
pub fn polar_rhs(sys: &SlowFastSystem, s: PolarState) -> Result<PolarState, BlowupError> {
    let (sn, cs) = s.theta.sin_cos();
    let h = h_checked(sys, s.x, s.r * cs)?;
    Ok(PolarState {
        x: sn,
        theta: -cs * cs * sn * h,
        r: s.r * cs * cs * cs * h,
    })
}

fn affine_field(sys: &SlowFastSystem) -> impl Fn(f64, &[f64; 3]) -> [f64; 3] + '_ {
    move |_t, y: &[f64; 3]| {
        let h = sys.h(y[0], y[1]);
        [y[2], h * y[1], -h * y[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct X1Solve {
    pub x1: f64,
    /// `E1` equals the whole cylinder integral up to the turning point.
    pub boundary: bool,
}

fn check_e1(e1: f64) -> Result<(), BlowupError> {
    if e1 > 0.0 && e1.is_finite() {
        Ok(())
    } else {
        Err(BlowupError::BadE1(e1))
    }
}

/// Solves `E1 = -int_{x0}^{x1} h(x, 0) dx` left of the first turning point.
pub fn transition_x1(sys: &SlowFastSystem, x0: f64, e1: f64) -> Result<X1Solve, BlowupError> {
    check_e1(e1)?;
    let g0 = sys.g(x0, 0.0);
    if !(g0 < 0.0) {
        return Err(EntryExitError::EntryCondition { x0, g: g0 }.into());
    }
    let x_max = sys.domain.x_max;
    let x_turn = sys
        .turning_points(x0, x_max, 4096)?
        .first()
        .copied()
        .unwrap_or(x_max);
    let h = |x: f64| sys.h(x, 0.0);
    let phi = CumulativeIntegral::tabulate(&h, x0, x_turn, 1024)?;
    let available = -phi.values.last().copied().unwrap_or(0.0);
    let slack = 1e-12 * available.max(1.0);
    if (available - e1).abs() <= slack {
        return Ok(X1Solve {
            x1: x_turn,
            boundary: true,
        });
    }
    if e1 > available {
        return Err(BlowupError::ChartOverflow { e1, available });
    }
    match phi.first_crossing(-e1, ROOT_XTOL)? {
        ScanOutcome::Found(c) => Ok(X1Solve {
            x1: c.x,
            boundary: false,
        }),
        ScanOutcome::NotFound { .. } => Err(BlowupError::ChartOverflow { e1, available }),
    }
}

/// Leftmost `x2 > x1` with `int_{x1}^{x2} h(x, 0) dx = 0`.
pub fn transition_x2(sys: &SlowFastSystem, x1: f64) -> Result<f64, BlowupError> {
    Ok(theoretical_exit(sys, x1)?.p0)
}

/// Solves `E1 = int_{x2}^{x3} h(x, 0) dx` for `x3 > x2`.
pub fn transition_x3(sys: &SlowFastSystem, x2: f64, e1: f64) -> Result<f64, BlowupError> {
    check_e1(e1)?;
    let h = |x: f64| sys.h(x, 0.0);
    let phi = CumulativeIntegral::tabulate(&h, x2, sys.domain.x_max, 1024)?;
    match phi.first_crossing(e1, ROOT_XTOL)? {
        ScanOutcome::Found(c) => Ok(c.x),
        ScanOutcome::NotFound { phi_max, .. } => Err(BlowupError::ChartOverflow {
            e1,
            available: phi_max,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcKind {
    /// Along the cylinder in the `z = 0` plane, `E` rising from 0 to `E1`.
    UnstableRise,
    /// Over the top of the cylinder, from `E1` back to `E1`.
    TopArc,
    /// Along the cylinder, `E` falling from `E1` to 0.
    StableDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub kind: ArcKind,
    pub x_start: f64,
    pub x_end: f64,
}

/// The `eps = 0` orbit through the corners `x0 -> x1 -> x2 -> x3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularOrbit {
    pub x0: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    #[serde(rename = "E1")]
    pub e1: f64,
}

impl SingularOrbit {
    pub fn pieces(&self) -> [Arc; 3] {
        [
            Arc {
                kind: ArcKind::UnstableRise,
                x_start: self.x0,
                x_end: self.x1,
            },
            Arc {
                kind: ArcKind::TopArc,
                x_start: self.x1,
                x_end: self.x2,
            },
            Arc {
                kind: ArcKind::StableDescent,
                x_start: self.x2,
                x_end: self.x3,
            },
        ]
    }

    /// `E(x) = -int_{x0}^{x} h(s, 0) ds` sampled along the rise and descent;
    /// the top arc leaves the affine chart and is not sampled.
    pub fn cylinder_trace(
        &self,
        sys: &SlowFastSystem,
        n: usize,
    ) -> Result<Vec<[f64; 3]>, BlowupError> {
        let h = |x: f64| sys.h(x, 0.0);
        let mut out = Vec::new();
        for (a, b, base) in [(self.x0, self.x1, 0.0), (self.x2, self.x3, self.e1)] {
            let phi = CumulativeIntegral::tabulate(&h, a, b, n.max(1))?;
            for (x, v) in phi.grid.iter().zip(&phi.values) {
                out.push([*x, 0.0, base - v]);
            }
        }
        Ok(out)
    }
}

pub fn singular_composition(
    sys: &SlowFastSystem,
    x0: f64,
    e1: f64,
) -> Result<SingularOrbit, BlowupError> {
    let x1 = transition_x1(sys, x0, e1)?.x1;
    let x2 = transition_x2(sys, x1)?;
    let x3 = transition_x3(sys, x2, e1)?;
    Ok(SingularOrbit { x0, x1, x2, x3, e1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub x0: f64,
    pub z0: f64,
    pub eps: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "E1")]
    pub e1: f64,
    /// Corner abscissas reached by the flow after each map.
    pub x1: f64,
    pub x2: f64,
    pub x_exit: f64,
    pub z1: f64,
    pub z1_rel_err: f64,
    #[serde(rename = "E3")]
    pub e3: f64,
    pub e3_rel_err: f64,
    pub max_conservation_drift: f64,
    /// `(t, [x, z, E])` across all three legs, time running on.
    #[serde(skip)]
    pub trace: Vec<(f64, [f64; 3])>,
}

impl PipelineResult {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("t,x,z,E\n");
        for (t, y) in &self.trace {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt17(*t),
                fmt17(y[0]),
                fmt17(y[1]),
                fmt17(y[2])
            ));
        }
        out
    }

    pub fn polar_trace_csv(&self) -> String {
        let mut out = String::from("t,x,theta,r\n");
        for (t, y) in &self.trace {
            let p = AffineState::from_array(*y).to_polar();
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt17(*t),
                fmt17(p.x),
                fmt17(p.theta),
                fmt17(p.r)
            ));
        }
        out
    }
}

/// Flows `(x0, z0, eps / z0)` through `P1` (to `E = E1`), `P2` (back to
/// `E = E1` with `E' < 0`) and `P3` (to `z = z0`) in the affine chart.
pub fn affine_pipeline(
    sys: &SlowFastSystem,
    x0: f64,
    z0: f64,
    eps: f64,
    e1: f64,
    tol: &Tolerances,
) -> Result<PipelineResult, BlowupError> {
    if sys.m != FastExponent::Quadratic {
        return Err(BlowupError::UnsupportedExponent);
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(EntryExitError::BadEps(eps).into());
    }
    check_e1(e1)?;
    sys.domain.check(x0, z0)?;
    let e0 = eps / z0;
    // E0 must sit clearly below the section or P1 and P3 degenerate
    if !(e0 < e1 * (1.0 - SECTION_GAP)) {
        return Err(BlowupError::EntryAboveSection { e0, e1 });
    }
    // x' = E >= E0 on every leg
    let t_leg = 2.0 * (sys.domain.x_max - x0) / e0;
    let field = affine_field(sys);
    let guard = escape_guard::<3>(sys);

    let mut trace: Vec<(f64, [f64; 3])> = Vec::new();
    let mut t_offset = 0.0;
    let mut leg = |start: [f64; 3], ev: EventSpec<'_, 3>| -> Result<[f64; 3], BlowupError> {
        let traj = Integrator::new(&field, *tol)
            .event(ev)
            .guard(&guard)
            .run(start, (0.0, t_leg))
            .map_err(|e| BlowupError::EntryExit(crate::entryexit::map_escape(e)))?;
        let skip = usize::from(!trace.is_empty());
        for (t, y) in traj.nodes.iter().skip(skip) {
            trace.push((t + t_offset, *y));
        }
        t_offset += traj.last().0;
        Ok(traj.event.expect("event run returns an event").state)
    };

    let s1 = leg(
        [x0, z0, e0],
        EventSpec::new(move |y: &[f64; 3]| y[2] - e1, Direction::Rising),
    )?;
    let s2 = leg(
        s1,
        EventSpec::new(move |y: &[f64; 3]| y[2] - e1, Direction::Falling).skip_initial(),
    )?;
    let s3 = leg(
        s2,
        EventSpec::new(move |y: &[f64; 3]| y[1] - z0, Direction::Rising),
    )?;

    let drift = trace
        .iter()
        .map(|(_, y)| ((y[1] * y[2] - eps) / eps).abs())
        .fold(0.0, f64::max);
    if drift > CONSERVATION_TOL {
        return Err(BlowupError::Conservation { drift });
    }
    let z1_expected = e0 / e1 * z0;
    Ok(PipelineResult {
        x0,
        z0,
        eps,
        e0,
        e1,
        x1: s1[0],
        x2: s2[0],
        x_exit: s3[0],
        z1: s1[1],
        z1_rel_err: ((s1[1] - z1_expected) / z1_expected).abs(),
        e3: s3[2],
        e3_rel_err: ((s3[2] - e0) / e0).abs(),
        max_conservation_drift: drift,
        trace,
    })
}
