//! Adaptive Gauss-Kronrod quadrature, bracketing root finders, and a scanner
//! for the first level crossing of a cumulative integral.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge: value {value}, error estimate {error} after {intervals} intervals")]
    NotConverged {
        value: f64,
        error: f64,
        intervals: usize,
    },
    #[error("integrand not finite at x = {0}")]
    NotFinite(f64),
    #[error("root not bracketed: f({a}) = {fa}, f({b}) = {fb}")]
    NotBracketed { a: f64, b: f64, fa: f64, fb: f64 },
}

// 15-point Kronrod extension of the 7-point Gauss rule, nodes on [0, 1).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss-Kronrod 7-15 panel: `(kronrod, |kronrod - gauss|)`.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = hl * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * hl, ((kron - gauss) * hl).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive GK15 integration of `f` over `[a, b]` (either order).
/// Stops once the summed error estimate is below `max(abs_tol, rel_tol |I|)`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult, QuadError> {
    const MAX_PANELS: usize = 4000;
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    let (v, e) = gk15(f, a, b);
    if !v.is_finite() {
        return Err(QuadError::NotFinite(0.5 * (a + b)));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Panel {
        a,
        b,
        value: v,
        error: e,
    });
    let mut total = v;
    let mut err = e;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_PANELS {
            return Err(QuadError::NotConverged {
                value: total,
                error: err,
                intervals: heap.len(),
            });
        }
        let p = heap.pop().expect("heap never empty");
        let m = 0.5 * (p.a + p.b);
        if m == p.a || m == p.b {
            // panel cannot be split further
            heap.push(p);
            return Err(QuadError::NotConverged {
                value: total,
                error: err,
                intervals: heap.len(),
            });
        }
        let (v1, e1) = gk15(f, p.a, m);
        let (v2, e2) = gk15(f, m, p.b);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(QuadError::NotFinite(m));
        }
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Panel {
            a: p.a,
            b: m,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: m,
            b: p.b,
            value: v2,
            error: e2,
        });
    }
    // re-sum to shed drift from the running updates
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    Ok(QuadResult {
        value,
        error,
        intervals: heap.len(),
    })
}

/// Plain bisection; `f(a)` and `f(b)` must have opposite signs (or one is 0).
pub fn bisect<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, xtol: f64) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    if f(b) == 0.0 {
        return b;
    }
    while (b - a).abs() > xtol {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    /// Final bracket, `lo <= x <= hi`.
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

/// Brent's method: inverse quadratic / secant steps safeguarded by bisection.
/// Terminates when the bracket is narrower than `xtol` (plus a few ulps).
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, xtol: f64) -> Result<Root, QuadError> {
    const MAX_ITER: usize = 200;
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(Root {
            x: a,
            fx: 0.0,
            lo: a,
            hi: a,
            iterations: 0,
        });
    }
    if fb == 0.0 {
        return Ok(Root {
            x: b,
            fx: 0.0,
            lo: b,
            hi: b,
            iterations: 0,
        });
    }
    if fa.signum() == fb.signum() {
        return Err(QuadError::NotBracketed { a, b, fa, fb });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for iter in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            let (lo, hi) = if b < c { (b, c) } else { (c, b) };
            return Ok(Root {
                x: b,
                fx: fb,
                lo,
                hi,
                iterations: iter,
            });
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    let (lo, hi) = if b < c { (b, c) } else { (c, b) };
    Ok(Root {
        x: b,
        fx: fb,
        lo,
        hi,
        iterations: MAX_ITER,
    })
}

/// Tolerance used for every cumulative-integral cell.
pub const CELL_ABS_TOL: f64 = 1e-15;

/// `Phi(p) = int_start^p h(x) dx`, tabulated on a uniform grid so that the
/// first level crossing can be bracketed and then refined.
pub struct CumulativeIntegral<'a> {
    h: &'a dyn Fn(f64) -> f64,
    pub start: f64,
    pub end: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelCrossing {
    pub x: f64,
    pub bracket: (f64, f64),
    /// Smallest tabulated value of `Phi` on `[start, x]`.
    pub phi_min: f64,
    pub phi_min_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScanOutcome {
    Found(LevelCrossing),
    /// No crossing on `[start, end]`; carries the extreme of `Phi` seen.
    NotFound {
        phi_min: f64,
        phi_min_at: f64,
        phi_max: f64,
    },
}

impl<'a> CumulativeIntegral<'a> {
    pub fn tabulate(
        h: &'a dyn Fn(f64) -> f64,
        start: f64,
        end: f64,
        cells: usize,
    ) -> Result<Self, QuadError> {
        let n = cells.max(1);
        let mut grid = Vec::with_capacity(n + 1);
        let mut values = Vec::with_capacity(n + 1);
        grid.push(start);
        values.push(0.0);
        let mut acc = 0.0;
        let mut comp = 0.0;
        for i in 1..=n {
            let x = if i == n {
                end
            } else {
                start + (end - start) * i as f64 / n as f64
            };
            let cell = integrate_adaptive(&h, grid[i - 1], x, CELL_ABS_TOL, 1e-14)?.value;
            // Kahan
            let y = cell - comp;
            let t = acc + y;
            comp = (t - acc) - y;
            acc = t;
            grid.push(x);
            values.push(acc);
        }
        Ok(Self {
            h,
            start,
            end,
            grid,
            values,
        })
    }

    /// `Phi(x)` evaluated from the nearest tabulated node at or below `x`.
    pub fn eval(&self, x: f64) -> Result<f64, QuadError> {
        let i = match self.grid.binary_search_by(|g| g.total_cmp(&x)) {
            Ok(i) => return Ok(self.values[i]),
            Err(0) => 0,
            Err(i) => i - 1,
        };
        let tail = integrate_adaptive(&self.h, self.grid[i], x, CELL_ABS_TOL, 1e-14)?.value;
        Ok(self.values[i] + tail)
    }

    /// First `x > start` where `Phi - level` changes sign, refined to `xtol`.
    /// A zero of `Phi - level` exactly at `start` is not a crossing.
    pub fn first_crossing(&self, level: f64, xtol: f64) -> Result<ScanOutcome, QuadError> {
        let mut phi_min = f64::INFINITY;
        let mut phi_min_at = self.start;
        let mut phi_max = f64::NEG_INFINITY;
        let mut prev_sign = 0.0;
        for i in 0..self.grid.len() {
            let v = self.values[i];
            if i > 0 {
                if v < phi_min {
                    phi_min = v;
                    phi_min_at = self.grid[i];
                }
                phi_max = phi_max.max(v);
            }
            let d = v - level;
            if i == 0 && d == 0.0 {
                continue;
            }
            let s = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            if prev_sign != 0.0 && s != prev_sign {
                let (a, b) = (self.grid[i - 1], self.grid[i]);
                let base = self.values[i - 1];
                let cell_start = a;
                let h = self.h;
                let root = brent(
                    |p| {
                        let tail = integrate_adaptive(&h, cell_start, p, CELL_ABS_TOL, 1e-14)
                            .map(|r| r.value)
                            .unwrap_or(f64::NAN);
                        base + tail - level
                    },
                    a,
                    b,
                    xtol,
                )?;
                return Ok(ScanOutcome::Found(LevelCrossing {
                    x: root.x,
                    bracket: (root.lo, root.hi),
                    phi_min,
                    phi_min_at,
                }));
            }
            if s != 0.0 {
                prev_sign = s;
            }
        }
        Ok(ScanOutcome::NotFound {
            phi_min,
            phi_min_at,
            phi_max,
        })
    }
}
