//! Adaptive Dormand-Prince 5(4) integration with free 4th-order dense
//! output and zero-crossing event location.
//!
//! Every other module drives its flows through [`Integrator`]. The state is a
//! fixed-size array; fields are `Fn(t, &y) -> y'`.
//!
//! Event location happens in two stages: Brent's method on the dense
//! interpolant brackets the crossing inside the accepted step, then a few
//! secant iterations on genuine RK sub-steps from the left node polish the
//! event state until `|surface| <= EVENT_SURFACE_TOL`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::brent;

/// Required accuracy of the surface function at a located event.
pub const EVENT_SURFACE_TOL: f64 = 1e-12;

/// With `skip_initial`, detection arms only after `|surface|` exceeds this.
pub const SKIP_GUARD_BAND: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("invalid tolerances: {0}")]
    InvalidTolerances(String),
    #[error("maximum number of steps ({max_steps}) exceeded at t = {t}")]
    MaxSteps { max_steps: usize, t: f64 },
    #[error("step size underflow: h = {h:e} at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("event not found within t in [{t0}, {t1}]")]
    EventNotFound { t0: f64, t1: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("integration stopped by guard at t = {t}: {reason}")]
    Guard {
        t: f64,
        state: Vec<f64>,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel: 1e-10,
            abs: 1e-12,
            h_min: 1e-14,
            h_max: f64::MAX,
            max_steps: 10_000_000,
        }
    }
}

impl Tolerances {
    pub fn new(rel: f64, abs: f64) -> Self {
        Self {
            rel,
            abs,
            ..Self::default()
        }
    }

    /// Error control on the relative scale only: the absolute floor is the
    /// smallest normal float. For states spanning hundreds of decades.
    pub fn relative_only(rel: f64) -> Self {
        Self::new(rel, f64::MIN_POSITIVE)
    }

    /// Both tolerances multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rel: self.rel * factor,
            abs: self.abs * factor,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |m: String| Err(IntegrateError::InvalidTolerances(m));
        if !(self.rel > 0.0 && self.rel.is_finite()) {
            return bad(format!("rel = {}", self.rel));
        }
        if !(self.abs > 0.0 && self.abs.is_finite()) {
            return bad(format!("abs = {}", self.abs));
        }
        if !(self.h_min >= 0.0 && self.h_min < self.h_max) {
            return bad(format!("h_min = {} >= h_max = {}", self.h_min, self.h_max));
        }
        if self.max_steps < 1 {
            return bad("max_steps = 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Rising,
    Falling,
    Any,
}

pub type Surface<'a, const N: usize> = Box<dyn Fn(&[f64; N]) -> f64 + Send + Sync + 'a>;

/// Stop at the `count`-th zero crossing of `surface` in `direction`.
pub struct EventSpec<'a, const N: usize> {
    pub surface: Surface<'a, N>,
    pub direction: Direction,
    pub skip_initial: bool,
    pub count: usize,
}

impl<'a, const N: usize> EventSpec<'a, N> {
    pub fn new(
        surface: impl Fn(&[f64; N]) -> f64 + Send + Sync + 'a,
        direction: Direction,
    ) -> Self {
        Self {
            surface: Box::new(surface),
            direction,
            skip_initial: false,
            count: 1,
        }
    }

    pub fn skip_initial(mut self) -> Self {
        self.skip_initial = true;
        self
    }

    pub fn count(mut self, count: usize) -> Self {
        self.count = count.max(1);
        self
    }

    fn crosses(&self, prev: f64, next: f64) -> bool {
        let rising = prev < 0.0 && next >= 0.0;
        let falling = prev > 0.0 && next <= 0.0;
        match self.direction {
            Direction::Rising => rising,
            Direction::Falling => falling,
            Direction::Any => rising || falling,
        }
    }
}

impl<const N: usize> fmt::Debug for EventSpec<'_, N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventSpec")
            .field("direction", &self.direction)
            .field("skip_initial", &self.skip_initial)
            .field("count", &self.count)
            .finish()
    }
}

/// Abort predicate evaluated on every accepted node.
pub type Guard<'a, const N: usize> = Box<dyn Fn(&[f64; N]) -> Option<String> + Send + Sync + 'a>;

/// Hermite-type continuous extension of one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct DenseSegment<const N: usize> {
    pub t0: f64,
    pub h: f64,
    coeffs: [[f64; N]; 5],
}

impl<const N: usize> DenseSegment<N> {
    pub fn eval_theta(&self, theta: f64) -> [f64; N] {
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        let th1 = 1.0 - theta;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = r1[i] + theta * (r2[i] + th1 * (r3[i] + theta * (r4[i] + th1 * r5[i])));
        }
        out
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        self.eval_theta((t - self.t0) / self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventHit<const N: usize> {
    pub t: f64,
    pub state: [f64; N],
    /// `surface(state)` at the returned state.
    pub residual: f64,
    /// Crossing index, 1-based.
    pub index: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub h_min_used: f64,
    pub h_max_used: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    /// `(t, y)` at accepted nodes; with recording off only the endpoints.
    pub nodes: Vec<(f64, [f64; N])>,
    /// `segments[i]` spans `nodes[i].0 ..= nodes[i + 1].0` when recorded.
    pub segments: Vec<DenseSegment<N>>,
    pub event: Option<EventHit<N>>,
    pub stats: Stats,
}

impl<const N: usize> Trajectory<N> {
    pub fn t_start(&self) -> f64 {
        self.nodes[0].0
    }

    pub fn last(&self) -> (f64, [f64; N]) {
        *self.nodes.last().expect("trajectory has at least one node")
    }

    /// Dense-output state at `t`, if `t` lies inside the recorded span.
    pub fn interpolate(&self, t: f64) -> Option<[f64; N]> {
        if self.segments.is_empty() {
            return None;
        }
        let forward = self.nodes.last()?.0 >= self.t_start();
        let key = |tn: f64| if forward { tn } else { -tn };
        let k = key(t);
        let first = key(self.t_start());
        let last = key(self.last().0);
        if k < first || k > last {
            return None;
        }
        let idx = self
            .nodes
            .partition_point(|(tn, _)| key(*tn) <= k)
            .saturating_sub(1)
            .min(self.segments.len() - 1);
        Some(self.segments[idx].eval(t))
    }

    /// CSV with a header row, values printed with 17 significant digits.
    pub fn to_csv(&self, names: &[&str]) -> String {
        let mut out = String::from("t");
        for n in names.iter().take(N) {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (t, y) in &self.nodes {
            out.push_str(&fmt17(*t));
            for v in y {
                out.push(',');
                out.push_str(&fmt17(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct StepResult<const N: usize> {
    y_new: [f64; N],
    k: [[f64; N]; 7],
    err: [f64; N],
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] += h * s;
    }
    out
}

fn dp_step<const N: usize, F>(
    field: &F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
) -> StepResult<N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let k2 = field(t + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = field(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = field(
        t + C4 * h,
        &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]),
    );
    let k5 = field(
        t + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = field(
        t + h,
        &axpy(
            y,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ),
    );
    let y_new = axpy(
        y,
        h,
        &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    let k7 = field(t + h, &y_new);
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    StepResult {
        y_new,
        k: [*k1, k2, k3, k4, k5, k6, k7],
        err,
    }
}

fn dense_coeffs<const N: usize>(y: &[f64; N], s: &StepResult<N>, h: f64) -> [[f64; N]; 5] {
    let [k1, _k2, k3, k4, k5, k6, k7] = &s.k;
    let mut r = [[0.0; N]; 5];
    for i in 0..N {
        let ydiff = s.y_new[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        r[0][i] = y[i];
        r[1][i] = ydiff;
        r[2][i] = bspl;
        r[3][i] = ydiff - h * k7[i] - bspl;
        r[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    r
}

/// Single-use integrator over a fixed field.
pub struct Integrator<'a, const N: usize, F> {
    field: F,
    tol: Tolerances,
    event: Option<EventSpec<'a, N>>,
    guard: Option<Guard<'a, N>>,
    record: bool,
}

impl<'a, const N: usize, F> Integrator<'a, N, F>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    pub fn new(field: F, tol: Tolerances) -> Self {
        Self {
            field,
            tol,
            event: None,
            guard: None,
            record: true,
        }
    }

    pub fn event(mut self, event: EventSpec<'a, N>) -> Self {
        self.event = Some(event);
        self
    }

    pub fn guard(mut self, guard: impl Fn(&[f64; N]) -> Option<String> + Send + Sync + 'a) -> Self {
        self.guard = Some(Box::new(guard));
        self
    }

    /// Keep every node and dense segment (default). Off keeps endpoints only.
    pub fn record(mut self, record: bool) -> Self {
        self.record = record;
        self
    }

    fn norm(&self, y: &[f64; N], y_new: &[f64; N], err: &[f64; N]) -> f64 {
        let mut s = 0.0;
        for i in 0..N {
            let sk = self.tol.abs + self.tol.rel * y[i].abs().max(y_new[i].abs());
            let r = err[i] / sk;
            s += r * r;
        }
        (s / N as f64).sqrt()
    }

    fn initial_step(&self, t: f64, y: &[f64; N], k1: &[f64; N], dir: f64, span: f64) -> f64 {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sk = self.tol.abs + self.tol.rel * y[i].abs();
            d0 += (y[i] / sk).powi(2);
            d1 += (k1[i] / sk).powi(2);
        }
        d0 = (d0 / N as f64).sqrt();
        d1 = (d1 / N as f64).sqrt();
        let mut h0 = if d0 < 1e-10 || d1 < 1e-10 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h0 = h0.min(self.tol.h_max).min(span);
        let y1 = axpy(y, dir * h0, &[(1.0, k1)]);
        let k2 = (self.field)(t + dir * h0, &y1);
        let mut d2 = 0.0;
        for i in 0..N {
            let sk = self.tol.abs + self.tol.rel * y[i].abs();
            d2 += ((k2[i] - k1[i]) / sk).powi(2);
        }
        d2 = (d2 / N as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0)
            .min(h1)
            .min(self.tol.h_max)
            .min(span)
            .max(self.tol.h_min)
    }

    /// Integrates from `y0` over `t_span = (t0, t1)`; `t1 < t0` runs backward.
    pub fn run(&self, y0: [f64; N], t_span: (f64, f64)) -> Result<Trajectory<N>, IntegrateError> {
        self.tol.validate()?;
        let (t0, t1) = t_span;
        if !(t0.is_finite() && t1.is_finite()) {
            return Err(IntegrateError::InvalidTolerances(
                "non-finite t_span".into(),
            ));
        }
        let dir = if t1 >= t0 { 1.0 } else { -1.0 };
        let field = &self.field;

        let mut nodes = vec![(t0, y0)];
        let mut segments = Vec::new();
        let mut stats = Stats {
            h_min_used: f64::INFINITY,
            ..Stats::default()
        };
        if t0 == t1 {
            stats.h_min_used = 0.0;
            return Ok(Trajectory {
                nodes,
                segments,
                event: None,
                stats,
            });
        }

        let mut t = t0;
        // Kahan compensation for the time accumulator
        let mut t_comp = 0.0;
        let mut y = y0;
        let mut k1 = field(t, &y);
        stats.evaluations += 1;
        let mut h = self.initial_step(t, &y, &k1, dir, (t1 - t0).abs());
        stats.evaluations += 1;
        let mut facold: f64 = 1e-4;
        let mut last_rejected = false;

        // event bookkeeping
        let mut armed = false;
        let mut s_prev = 0.0;
        let mut crossings = 0usize;
        if let Some(ev) = &self.event {
            let s0 = (ev.surface)(&y);
            if ev.skip_initial {
                armed = s0.abs() > SKIP_GUARD_BAND;
            } else {
                armed = true;
            }
            s_prev = s0;
        }

        const SAFE: f64 = 0.9;
        const BETA: f64 = 0.04;
        const FAC_SHRINK: f64 = 5.0; // 1 / 0.2
        const FAC_GROW: f64 = 0.1; // 1 / 10
        let expo1 = 0.2 - BETA * 0.75;

        loop {
            let remaining = (t1 - t) * dir;
            if remaining <= 0.0 {
                break;
            }
            if stats.accepted + stats.rejected >= self.tol.max_steps {
                return Err(IntegrateError::MaxSteps {
                    max_steps: self.tol.max_steps,
                    t,
                });
            }
            let mut h_abs = h.abs().min(self.tol.h_max);
            let last_step = h_abs >= remaining * (1.0 - 1e-12);
            if last_step {
                h_abs = remaining;
            }
            let hs = dir * h_abs;
            if h_abs < self.tol.h_min.max(16.0 * f64::EPSILON * t.abs()) && !last_step {
                return Err(IntegrateError::StepUnderflow { t, h: hs });
            }

            let step = dp_step(field, t, &y, &k1, hs);
            stats.evaluations += 6;
            let err = self.norm(&y, &step.y_new, &step.err);
            if !err.is_finite() {
                // shrink hard and retry; persistent non-finite values surface as underflow
                stats.rejected += 1;
                h = hs * 0.1;
                last_rejected = true;
                if h.abs() < self.tol.h_min {
                    return Err(IntegrateError::NonFinite { t });
                }
                continue;
            }
            let fac11 = err.powf(expo1);
            if err <= 1.0 {
                stats.accepted += 1;
                stats.h_min_used = stats.h_min_used.min(h_abs);
                stats.h_max_used = stats.h_max_used.max(h_abs);
                let t_left = t;
                let t_new = if last_step {
                    t1
                } else {
                    let yk = hs - t_comp;
                    let tn = t + yk;
                    t_comp = (tn - t) - yk;
                    tn
                };
                let seg = DenseSegment {
                    t0: t_left,
                    h: t_new - t_left,
                    coeffs: dense_coeffs(&y, &step, hs),
                };

                if let Some(ev) = &self.event {
                    let s_new = (ev.surface)(&step.y_new);
                    if !armed {
                        if s_new.abs() > SKIP_GUARD_BAND {
                            armed = true;
                        }
                    } else if ev.crosses(s_prev, s_new) {
                        crossings += 1;
                        if crossings >= ev.count {
                            let hit = self.locate(ev, t_left, &y, &k1, &seg, s_prev, s_new);
                            stats.evaluations += 1;
                            let hit = EventHit {
                                index: crossings,
                                ..hit
                            };
                            if self.record {
                                segments.push(seg);
                            }
                            nodes.push((hit.t, hit.state));
                            return Ok(Trajectory {
                                nodes,
                                segments,
                                event: Some(hit),
                                stats,
                            });
                        }
                    }
                    s_prev = s_new;
                }

                if let Some(guard) = &self.guard {
                    if let Some(reason) = guard(&step.y_new) {
                        return Err(IntegrateError::Guard {
                            t: t_new,
                            state: step.y_new.to_vec(),
                            reason,
                        });
                    }
                }
                if step.y_new.iter().any(|v| !v.is_finite()) {
                    return Err(IntegrateError::NonFinite { t: t_new });
                }

                if self.record {
                    segments.push(seg);
                    nodes.push((t_new, step.y_new));
                }
                t = t_new;
                y = step.y_new;
                k1 = step.k[6];

                let mut fac = fac11 / facold.powf(BETA);
                fac = (fac / SAFE).clamp(FAC_GROW, FAC_SHRINK);
                let mut h_new = h_abs / fac;
                if last_rejected {
                    h_new = h_new.min(h_abs);
                }
                facold = err.max(1e-4);
                last_rejected = false;
                h = dir * h_new;
                if last_step {
                    break;
                }
            } else {
                stats.rejected += 1;
                last_rejected = true;
                let h_new = h_abs / (fac11 / SAFE).min(FAC_SHRINK);
                h = dir * h_new;
            }
        }

        if !self.record {
            nodes.push((t, y));
        }
        if self.event.is_some() {
            return Err(IntegrateError::EventNotFound { t0, t1 });
        }
        Ok(Trajectory {
            nodes,
            segments,
            event: None,
            stats,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn locate(
        &self,
        ev: &EventSpec<'a, N>,
        t_left: f64,
        y_left: &[f64; N],
        k1: &[f64; N],
        seg: &DenseSegment<N>,
        s_left: f64,
        s_right: f64,
    ) -> EventHit<N> {
        let surf = |theta: f64| (ev.surface)(&seg.eval_theta(theta));
        let theta = if s_right == 0.0 {
            1.0
        } else {
            match brent(surf, 0.0, 1.0, 1e-15) {
                Ok(r) => r.x,
                Err(_) => {
                    // interpolant and endpoint values disagree on the sign;
                    // fall back to linear interpolation of the endpoint values
                    s_left / (s_left - s_right)
                }
            }
        };
        let interp = seg.eval_theta(theta);
        let mut best = (theta * seg.h, interp, (ev.surface)(&interp));

        // polish on genuine sub-steps
        let sub = |tau: f64| -> ([f64; N], f64) {
            if tau == 0.0 {
                return (*y_left, (ev.surface)(y_left));
            }
            let st = dp_step(&self.field, t_left, y_left, k1, tau);
            let s = (ev.surface)(&st.y_new);
            (st.y_new, s)
        };
        let (mut tau_a, mut tau_b) = (best.0, best.0 * (1.0 - 1e-7) + 1e-7 * seg.h * 0.5);
        if tau_b == tau_a {
            tau_b = tau_a * 0.999_999;
        }
        let (ya, mut sa) = sub(tau_a);
        if sa.abs() < best.2.abs() {
            best = (tau_a, ya, sa);
        }
        let (_, mut sb) = sub(tau_b);
        for _ in 0..12 {
            if best.2.abs() <= 0.01 * EVENT_SURFACE_TOL || sa == sb {
                break;
            }
            let tau_c = tau_a - sa * (tau_a - tau_b) / (sa - sb);
            if !tau_c.is_finite() {
                break;
            }
            let (yc, sc) = sub(tau_c);
            if sc.abs() < best.2.abs() {
                best = (tau_c, yc, sc);
            }
            tau_b = tau_a;
            sb = sa;
            tau_a = tau_c;
            sa = sc;
        }
        EventHit {
            t: t_left + best.0,
            state: best.1,
            residual: best.2,
            index: 0,
        }
    }
}

/// One-shot convenience wrapper around [`Integrator`].
pub fn integrate<'a, const N: usize, F>(
    field: F,
    y0: [f64; N],
    t_span: (f64, f64),
    tol: &Tolerances,
    event: Option<EventSpec<'a, N>>,
) -> Result<Trajectory<N>, IntegrateError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut it = Integrator::new(field, *tol);
    if let Some(ev) = event {
        it = it.event(ev);
    }
    it.run(y0, t_span)
}
