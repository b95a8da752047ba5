//! Entry-exit function `p0(x0)` from the balance integral, and the return
//! map `p_eps(x0)` by direct simulation.

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{fmt17, Direction, EventSpec, IntegrateError, Integrator, Tolerances};
use crate::quad::{integrate_adaptive, CumulativeIntegral, QuadError, ScanOutcome};
use crate::system::{SlowFastSystem, SystemError};

/// Cells used to tabulate the cumulative integral before root refinement.
pub const SCAN_CELLS: usize = 4096;

/// Width to which the exit point is refined.
pub const EXIT_XTOL: f64 = 1e-12;

/// `|Phi|` below which a tangential touch of zero counts as a balance.
pub const PLATEAU_TOL: f64 = 1e-10;

pub const DEFAULT_Z0: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    XMin,
    XMax,
    ZMax,
}

impl Face {
    fn tag(self) -> &'static str {
        match self {
            Face::XMin => "x_min",
            Face::XMax => "x_max",
            Face::ZMax => "z_max",
        }
    }

    fn from_tag(s: &str) -> Option<Self> {
        [Face::XMin, Face::XMax, Face::ZMax]
            .into_iter()
            .find(|f| f.tag() == s)
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntryExitError {
    #[error("entry condition violated: g({x0}, 0) = {g} is not negative")]
    EntryCondition { x0: f64, g: f64 },
    #[error("no balance point in the domain for x0 = {x0}; min of the integral is {phi_min} at x = {phi_min_at}")]
    NoBalance {
        x0: f64,
        phi_min: f64,
        phi_min_at: f64,
    },
    #[error("degenerate balance near x = {x}: the integral touches zero without crossing")]
    Degenerate { x: f64 },
    #[error("trajectory escaped through {face} at (x, z) = ({x}, {z})")]
    Escape { face: Face, x: f64, z: f64 },
    #[error("eps must be positive, got {0}")]
    BadEps(f64),
    #[error("eps ladder must be positive and strictly decreasing")]
    BadLadder,
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitSolve {
    pub x0: f64,
    pub p0: f64,
    /// `int_{x0}^{p0} h(x, 0) dx`, recomputed over the whole interval.
    pub integral_residual: f64,
    pub bracket: (f64, f64),
    /// The first balance point to the right of `x0` was selected.
    pub leftmost: bool,
}

fn check_x(sys: &SlowFastSystem, x: f64) -> Result<(), SystemError> {
    let d = &sys.domain;
    if d.contains_x(x) {
        Ok(())
    } else {
        Err(SystemError::OutOfDomain {
            coordinate: "x",
            value: x,
            lo: d.x_min,
            hi: d.x_max,
        })
    }
}

/// Smallest `p > x0` with `int_{x0}^{p} h(x, 0) dx = 0` and `g(p, 0) > 0`.
pub fn theoretical_exit(sys: &SlowFastSystem, x0: f64) -> Result<ExitSolve, EntryExitError> {
    check_x(sys, x0)?;
    let g0 = sys.g(x0, 0.0);
    if !(g0 < 0.0) {
        return Err(EntryExitError::EntryCondition { x0, g: g0 });
    }
    let h = |x: f64| sys.h(x, 0.0);
    let x_max = sys.domain.x_max;
    let phi = CumulativeIntegral::tabulate(&h, x0, x_max, SCAN_CELLS)?;
    match phi.first_crossing(0.0, EXIT_XTOL)? {
        ScanOutcome::Found(c) => {
            if !(sys.g(c.x, 0.0) > 0.0) || touches_only(&phi, c.x) {
                return Err(EntryExitError::Degenerate { x: c.x });
            }
            let integral_residual = integrate_adaptive(&h, x0, c.x, 1e-14, 1e-14)?.value;
            Ok(ExitSolve {
                x0,
                p0: c.x,
                integral_residual,
                bracket: c.bracket,
                leftmost: true,
            })
        }
        ScanOutcome::NotFound {
            phi_min,
            phi_min_at,
            ..
        } => {
            // a local maximum of Phi sitting on zero is a tangential balance
            for r in sys.turning_points(x0, x_max, SCAN_CELLS)? {
                if phi.eval(r)?.abs() < PLATEAU_TOL {
                    return Err(EntryExitError::Degenerate { x: r });
                }
            }
            Err(EntryExitError::NoBalance {
                x0,
                phi_min,
                phi_min_at,
            })
        }
    }
}

/// True when `Phi` rises past zero at `p` by no more than `PLATEAU_TOL`
/// before turning negative again.
fn touches_only(phi: &CumulativeIntegral<'_>, p: f64) -> bool {
    let start = phi.grid.partition_point(|g| *g <= p);
    let mut peak: f64 = 0.0;
    for &v in &phi.values[start..] {
        if v < 0.0 {
            return peak < PLATEAU_TOL;
        }
        peak = peak.max(v);
        if peak >= PLATEAU_TOL {
            return false;
        }
    }
    false
}

/// `dp0/dx0 = h(x0, 0) / h(p0, 0)`.
pub fn exit_derivative(sys: &SlowFastSystem, x0: f64) -> Result<f64, EntryExitError> {
    let e = theoretical_exit(sys, x0)?;
    Ok(sys.h(x0, 0.0) / sys.h(e.p0, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnSample {
    pub x0: f64,
    pub z0: f64,
    pub eps: f64,
    pub p_eps: f64,
    /// `|z - z0|` at the located event.
    pub event_residual: f64,
    pub steps: usize,
    /// Seconds.
    pub wall_time: f64,
}

/// Lower bound of `f` over the domain box, sampled.
fn min_slow_speed(sys: &SlowFastSystem) -> f64 {
    let d = &sys.domain;
    let n = 201;
    let mut m = f64::INFINITY;
    for i in 0..n {
        let x = d.x_min + (d.x_max - d.x_min) * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let z = d.z_max * j as f64 / (n - 1) as f64;
            m = m.min(sys.f(x, z));
        }
    }
    m
}

/// Flags states whose `(x, z)` leave the domain box; extra components are ignored.
pub(crate) fn escape_guard<const N: usize>(
    sys: &SlowFastSystem,
) -> impl Fn(&[f64; N]) -> Option<String> + Send + Sync + '_ {
    move |y: &[f64; N]| {
        let d = &sys.domain;
        if y[0] > d.x_max {
            Some(Face::XMax.tag().into())
        } else if y[0] < d.x_min {
            Some(Face::XMin.tag().into())
        } else if y[1] > d.z_max {
            Some(Face::ZMax.tag().into())
        } else {
            None
        }
    }
}

pub(crate) fn map_escape(e: IntegrateError) -> EntryExitError {
    match e {
        IntegrateError::Guard { t, reason, state } => match Face::from_tag(&reason) {
            Some(face) => EntryExitError::Escape {
                face,
                x: state[0],
                z: state[1],
            },
            None => EntryExitError::Integrate(IntegrateError::Guard { t, state, reason }),
        },
        other => EntryExitError::Integrate(other),
    }
}

/// Flow from `(x0, z0)` to the first return to `z = z0`; returns its abscissa.
pub fn numerical_return(
    sys: &SlowFastSystem,
    x0: f64,
    z0: f64,
    eps: f64,
    tol: &Tolerances,
) -> Result<ReturnSample, EntryExitError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(EntryExitError::BadEps(eps));
    }
    sys.domain.check(x0, z0)?;
    if !(z0 > 0.0) {
        return Err(SystemError::OutOfDomain {
            coordinate: "z",
            value: z0,
            lo: 0.0,
            hi: sys.domain.z_max,
        }
        .into());
    }
    let fmin = min_slow_speed(sys);
    if !(fmin > 0.0) {
        return Err(SystemError::SlowFieldNotPositive {
            x: f64::NAN,
            value: fmin,
        }
        .into());
    }
    let t_end = 2.0 * (sys.domain.x_max - x0) / (eps * fmin);
    let started = Instant::now();
    let traj = Integrator::new(sys.field(eps), *tol)
        .event(EventSpec::new(move |y: &[f64; 2]| y[1] - z0, Direction::Rising).skip_initial())
        .guard(escape_guard(sys))
        .record(false)
        .run([x0, z0], (0.0, t_end))
        .map_err(|e| match e {
            IntegrateError::EventNotFound { .. } => {
                // only possible if the horizon is reached inside the domain
                EntryExitError::Escape {
                    face: Face::XMax,
                    x: f64::NAN,
                    z: f64::NAN,
                }
            }
            other => map_escape(other),
        })?;
    let hit = traj.event.expect("event run returns an event");
    Ok(ReturnSample {
        x0,
        z0,
        eps,
        p_eps: hit.state[0],
        event_residual: hit.residual.abs(),
        steps: traj.stats.accepted + traj.stats.rejected,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    /// `None` when the trajectory escaped the domain.
    pub p_eps: Option<f64>,
    pub err: Option<f64>,
    pub escaped: Option<Face>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub x0: f64,
    pub z0: f64,
    pub p0: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// `eps,p_eps,p0,err`; escaped rows are left out.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,p_eps,p0,err\n");
        for r in &self.rows {
            if let (Some(p), Some(e)) = (r.p_eps, r.err) {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt17(r.eps),
                    fmt17(p),
                    fmt17(self.p0),
                    fmt17(e)
                ));
            }
        }
        out
    }

    /// `|p_eps - p0|` of the rows that returned, in ladder order.
    pub fn abs_errors(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.err.map(|e| (r.eps, e.abs())))
            .collect()
    }
}

pub fn check_ladder(ladder: &[f64]) -> Result<(), EntryExitError> {
    let positive = ladder.iter().all(|e| *e > 0.0 && e.is_finite());
    let decreasing = ladder.windows(2).all(|w| w[1] < w[0]);
    if positive && decreasing {
        Ok(())
    } else {
        Err(EntryExitError::BadLadder)
    }
}

/// `p_eps - p0` along a decreasing eps ladder; rows run in parallel.
pub fn convergence_study(
    sys: &SlowFastSystem,
    x0: f64,
    z0: f64,
    ladder: &[f64],
    tol: &Tolerances,
) -> Result<ConvergenceTable, EntryExitError> {
    check_ladder(ladder)?;
    let p0 = theoretical_exit(sys, x0)?.p0;
    let rows = ladder
        .par_iter()
        .map(|&eps| match numerical_return(sys, x0, z0, eps, tol) {
            Ok(s) => Ok(ConvergenceRow {
                eps,
                p_eps: Some(s.p_eps),
                err: Some(s.p_eps - p0),
                escaped: None,
            }),
            Err(EntryExitError::Escape { face, .. }) => Ok(ConvergenceRow {
                eps,
                p_eps: None,
                err: None,
                escaped: Some(face),
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ConvergenceTable { x0, z0, p0, rows })
}
