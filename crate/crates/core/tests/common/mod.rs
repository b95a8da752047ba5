//! Reference computations kept independent of the library's own quadrature,
//! root finding and integrator.

#![allow(dead_code)]

/// Composite Simpson rule with `panels` (rounded up to even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// First `p > a` where `int_a^p h` changes sign, from a scan on `n` uniform
/// points with Simpson cells, refined by bisection.
pub fn dense_scan_balance(h: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> Option<f64> {
    let dx = (b - a) / n as f64;
    let cell = |lo: f64, hi: f64| (hi - lo) / 6.0 * (h(lo) + 4.0 * h(0.5 * (lo + hi)) + h(hi));
    let mut phi = 0.0;
    for i in 0..n {
        let lo = a + dx * i as f64;
        let hi = lo + dx;
        let next = phi + cell(lo, hi);
        if i > 0 && phi < 0.0 && next >= 0.0 {
            let (mut l, mut r) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (l + r);
                if m == l || m == r {
                    break;
                }
                let v = phi + cell(lo, m);
                if v < 0.0 {
                    l = m;
                } else {
                    r = m;
                }
            }
            return Some(0.5 * (l + r));
        }
        phi = next;
    }
    None
}

/// Classical fixed-step RK4 for `y' = f(t, y)`.
pub fn rk4<const N: usize>(
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
    mut y: [f64; N],
    t0: f64,
    t1: f64,
    steps: usize,
) -> [f64; N] {
    let h = (t1 - t0) / steps as f64;
    let add = |y: &[f64; N], k: &[f64; N], c: f64| {
        let mut o = *y;
        for i in 0..N {
            o[i] += c * k[i];
        }
        o
    };
    for i in 0..steps {
        let t = t0 + h * i as f64;
        let k1 = f(t, &y);
        let k2 = f(t + 0.5 * h, &add(&y, &k1, 0.5 * h));
        let k3 = f(t + 0.5 * h, &add(&y, &k2, 0.5 * h));
        let k4 = f(t + h, &add(&y, &k3, h));
        for j in 0..N {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    y
}

/// `z1(x)` from `eps z1' = 2 x z0 z1 + z0^3`, `z1(x0) = 0`, integrated jointly
/// with `eps z0' = x z0^2`, `z0(x0) = 1`.
pub fn z1_variational(x: f64, x0: f64, eps: f64, steps: usize) -> f64 {
    let y = rk4(
        |s, y: &[f64; 2]| {
            let (z0, z1) = (y[0], y[1]);
            [s * z0 * z0 / eps, (2.0 * s * z0 * z1 + z0 * z0 * z0) / eps]
        },
        [1.0, 0.0],
        x0,
        x,
        steps,
    );
    y[1]
}

/// Centered difference.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, dx: f64) -> f64 {
    (f(x + dx) - f(x - dx)) / (2.0 * dx)
}

pub fn report(id: &str, pass: bool, detail: &str) {
    println!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
}
