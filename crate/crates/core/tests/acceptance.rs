#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

//! Acceptance suite. Each test prints one PASS/FAIL line and asserts it.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use common::{central_diff, dense_scan_balance, report};
use slowfast::asymptotics::{detect_log_term, fit_scale, kappa_transform, log_ladder, z_to_w};
use slowfast::blowup::{affine_pipeline, singular_composition, BlowupError};
use slowfast::entryexit::{convergence_study, exit_derivative, numerical_return, theoretical_exit};
use slowfast::example5::{c_closed, c_via_finite_difference};
use slowfast::integrate::{Direction, EventSpec, Integrator, Tolerances};
use slowfast::system::{builtin, builtin_default};

const LADDER5: [f64; 5] = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4];

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|e| format!("{e:.3e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[test]
fn criterion_1_exact_return_map() {
    let sys = builtin_default("example5").unwrap();
    let tol = Tolerances::default();
    let mut worst: f64 = 0.0;
    for x0 in [-1.0, -0.7, -0.5] {
        for eps in [1e-2, 1e-3, 1e-4] {
            let s = numerical_return(&sys, x0, 1.0, eps, &tol).unwrap();
            worst = worst.max((s.p_eps + x0).abs());
        }
    }
    let pass = worst <= 1e-6;
    report(
        "criterion 1 (exact return map)",
        pass,
        &format!("max |p_eps + x0| = {worst:.3e} (limit 1e-6)"),
    );
    assert!(pass);
}

#[test]
fn criterion_2_entry_exit_limit() {
    let sys = builtin_default("symmetric_quadratic").unwrap();
    let exit = theoretical_exit(&sys, -1.0).unwrap();
    let table = convergence_study(&sys, -1.0, 0.1, &LADDER5, &Tolerances::default()).unwrap();
    let errs: Vec<f64> = table.abs_errors().iter().map(|e| e.1).collect();
    let complete = errs.len() == LADDER5.len();
    let monotone = complete && strictly_decreasing(&errs);
    let last_ok = complete && errs[errs.len() - 1] <= 5e-3;
    let p0_ok = (exit.p0 - 1.0).abs() <= 1e-12 && exit.integral_residual.abs() <= 1e-10;
    let pass = monotone && last_ok && p0_ok;
    report(
        "criterion 2 (entry-exit limit)",
        pass,
        &format!(
            "p0 = {:.17} residual = {:.2e}; |p_eps - p0| = [{}]; strictly decreasing: {monotone}",
            exit.p0,
            exit.integral_residual,
            fmt_list(&errs)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_first_order_coefficient() {
    let tol = Tolerances::new(1e-12, 1e-14);
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for eps in [1e-2, 5e-3, 2e-3, 1e-3] {
        let r = c_via_finite_difference(-1.0, eps, 1e-3, &tol).unwrap();
        worst = worst.max(r.agreement);
        lines.push(format!("eps={eps:e}: {:.3e}", r.agreement));
    }
    let pass = worst <= 1e-3;
    report(
        "criterion 3 (first-order coefficient)",
        pass,
        &format!("rel err [{}] (limit 1e-3)", lines.join(", ")),
    );
    assert!(pass);
}

#[test]
fn criterion_4_logarithmic_term() {
    let ladder = log_ladder(1e-4, 1e-2, 12);
    let samples: Vec<_> = ladder
        .iter()
        .map(|&e| (e, c_closed(-1.0, e).unwrap()))
        .collect();
    let fit = fit_scale(&samples, 2).unwrap();
    let a01 = fit.coeff(0, 1).unwrap();
    let coeff_ok = ((a01 - 2.0) / 2.0).abs() <= 0.05;

    let tol = Tolerances::new(1e-12, 1e-14);
    let params = [("alpha".to_string(), 0.1)].into_iter().collect();
    let ex = builtin("example5", &params).unwrap();
    let with_log = detect_log_term(&ex, -1.0, 1.0, &ladder, &tol).unwrap();
    let flat = builtin_default("flat_perturbed").unwrap();
    let without = detect_log_term(&flat, -1.0, 0.1, &ladder, &tol).unwrap();
    let pass = coeff_ok && with_log.has_log && !without.has_log;
    report(
        "criterion 4 (logarithmic term)",
        pass,
        &format!(
            "fitted eps ln eps coefficient of c = {a01:.6}; example5 alpha=0.1: has_log={} a01={:.3e}; flat_perturbed: has_log={} a01={:.3e}",
            with_log.has_log, with_log.a01, without.has_log, without.a01
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_blowup_composition() {
    let sys = builtin_default("symmetric_quadratic").unwrap();
    let p0 = theoretical_exit(&sys, -1.0).unwrap().p0;
    let x3: Vec<f64> = [0.1, 0.2, 0.3]
        .iter()
        .map(|&e1| singular_composition(&sys, -1.0, e1).unwrap().x3)
        .collect();
    let spread = x3
        .iter()
        .fold(0f64, |m, a| x3.iter().fold(m, |m, b| m.max((a - b).abs())));
    let dist = x3.iter().map(|x| (x - p0).abs()).fold(0.0, f64::max);
    let pass = spread <= 1e-8 && dist <= 1e-9;
    report(
        "criterion 5 (blow-up composition)",
        pass,
        &format!(
            "x3 = [{}]; pairwise spread {spread:.2e}; max |x3 - p0| = {dist:.2e}",
            fmt_list(&x3)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_chart_invariants() {
    let sys = builtin_default("symmetric_quadratic").unwrap();
    let z0 = 0.1;
    let tol = Tolerances::new(1e-12, 1e-15);
    let (mut drift, mut z1_err, mut e3_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut runs = 0;
    for eps in LADDER5 {
        for e1 in [0.1, 0.2, 0.3] {
            let r = match affine_pipeline(&sys, -1.0, z0, eps, e1, &tol) {
                Err(BlowupError::EntryAboveSection { .. }) => continue,
                other => other.unwrap(),
            };
            drift = drift.max(r.max_conservation_drift);
            z1_err = z1_err.max(r.z1_rel_err);
            e3_err = e3_err.max(r.e3_rel_err);
            runs += 1;
        }
    }
    let pass = drift <= 1e-6 && z1_err <= 1e-8 && e3_err <= 1e-8;
    report(
        "criterion 6 (chart invariants)",
        pass,
        &format!(
            "{runs} pipeline runs: max |zE - eps|/eps = {drift:.2e}, z1 rel = {z1_err:.2e}, E3 rel = {e3_err:.2e}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_kappa_reduction() {
    let base = builtin_default("linear_case").unwrap();
    let k = kappa_transform(&base).unwrap();
    let (x0, z0) = (-1.0, 0.1);
    let w0 = z_to_w(z0).unwrap();
    let p0 = theoretical_exit(&base, x0).unwrap().p0;
    let direct_tol = Tolerances::relative_only(1e-10);
    let tol = Tolerances::default();

    let direct = numerical_return(&base, x0, z0, 1e-3, &direct_tol)
        .unwrap()
        .p_eps;
    let via_kappa = numerical_return(&k.transformed, x0, w0, 1e-3, &tol)
        .unwrap()
        .p_eps;
    let agree = (direct - via_kappa).abs();

    let ladder = [1e-2, 3e-3, 1e-3];
    let mut errs_direct = Vec::new();
    let mut errs_kappa = Vec::new();
    for eps in ladder {
        errs_direct.push(
            (numerical_return(&base, x0, z0, eps, &direct_tol)
                .unwrap()
                .p_eps
                - p0)
                .abs(),
        );
        errs_kappa.push(
            (numerical_return(&k.transformed, x0, w0, eps, &tol)
                .unwrap()
                .p_eps
                - p0)
                .abs(),
        );
    }
    let converged = errs_direct.iter().chain(&errs_kappa).all(|e| *e <= 1e-6);
    let pass = agree <= 1e-5 && converged;
    report(
        "criterion 7 (kappa reduction)",
        pass,
        &format!(
            "eps=1e-3: direct {direct:.12} vs kappa {via_kappa:.12} (diff {agree:.2e}); |p - p0| direct [{}], kappa [{}]",
            fmt_list(&errs_direct),
            fmt_list(&errs_kappa)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_multi_turning() {
    let sys = builtin_default("multi_turning").unwrap();
    let x0 = -1.0;
    let exit = theoretical_exit(&sys, x0).unwrap();
    let oracle = dense_scan_balance(|x| sys.h(x, 0.0), x0, sys.domain.x_max, 1_000_000).unwrap();
    let oracle_diff = (exit.p0 - oracle).abs();
    let table = convergence_study(&sys, x0, 0.1, &LADDER5, &Tolerances::default()).unwrap();
    let errs: Vec<f64> = table.abs_errors().iter().map(|e| e.1).collect();
    let monotone = errs.len() == LADDER5.len() && strictly_decreasing(&errs);
    let pass = oracle_diff <= 1e-8 && monotone;
    report(
        "criterion 8 (multiple turning points)",
        pass,
        &format!(
            "p0 = {:.12}, dense-scan oracle diff {oracle_diff:.2e}; |p_eps - p0| = [{}]",
            exit.p0,
            fmt_list(&errs)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_9_property_suites() {
    let mut failures = Vec::new();

    // integrator self-consistency ladder on an event run
    let sys = builtin_default("example5").unwrap();
    let event_x = |tol: Tolerances| {
        Integrator::new(sys.field(1e-2), tol)
            .event(EventSpec::new(|y: &[f64; 2]| y[1] - 1.0, Direction::Rising).skip_initial())
            .record(false)
            .run([-1.0, 1.0], (0.0, 1e3))
            .unwrap()
            .event
            .unwrap()
            .state
    };
    for (rel, abs) in [(1e-6, 1e-8), (1e-8, 1e-10), (1e-10, 1e-12)] {
        let coarse = event_x(Tolerances::new(rel, abs));
        let fine = event_x(Tolerances::new(rel / 2.0, abs / 2.0));
        let d = (coarse[0] - fine[0]).abs().max((coarse[1] - fine[1]).abs());
        if !(d < rel) {
            failures.push(format!("self-consistency at rel {rel:e}: {d:.2e}"));
        }
    }

    // forward to the event, then backward for the same duration
    let tol = Tolerances::default();
    let limit = 10.0 * tol.rel.max(tol.abs);
    let osc = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
    let runs: [(
        &str,
        Box<dyn Fn(f64, &[f64; 2]) -> [f64; 2]>,
        [f64; 2],
        EventSpec<2>,
    ); 2] = [
        (
            "oscillator",
            Box::new(osc),
            [1.0, 0.0],
            EventSpec::new(|y: &[f64; 2]| y[0], Direction::Any).count(3),
        ),
        (
            "example5 eps=0.1",
            Box::new(sys.field(0.1)),
            [-1.0, 1.0],
            EventSpec::new(|y: &[f64; 2]| y[1] - 1.0, Direction::Rising).skip_initial(),
        ),
    ];
    for (name, field, start, ev) in runs {
        let hit = Integrator::new(&field, tol)
            .event(ev)
            .run(start, (0.0, 1e3))
            .unwrap()
            .event
            .unwrap();
        let back = Integrator::new(&field, tol)
            .run(hit.state, (hit.t, 0.0))
            .unwrap()
            .last()
            .1;
        let d = (back[0] - start[0]).abs().max((back[1] - start[1]).abs());
        if !(d <= limit) {
            failures.push(format!("reversibility ({name}): {d:.2e}"));
        }
    }

    // fit exactness on synthetic basis data
    let ladder = log_ladder(1e-5, 1e-2, 12);
    let coeffs = [2.0, 5.0, -1.5, 0.75, 3.0];
    let y: Vec<(f64, f64)> = ladder
        .iter()
        .map(|&e| {
            let l = e * e.ln();
            (
                e,
                coeffs[0] * l
                    + coeffs[1] * e
                    + coeffs[2] * l * l
                    + coeffs[3] * e * l
                    + coeffs[4] * e * e,
            )
        })
        .collect();
    let fit = fit_scale(&y, 2).unwrap();
    let ynorm = y.iter().map(|s| s.1 * s.1).sum::<f64>().sqrt();
    if !(fit.residual_norm <= 1e-9 * ynorm) {
        failures.push(format!("fit residual {:.2e}", fit.residual_norm));
    }
    for (c, want) in fit.coeffs.iter().zip(coeffs) {
        if ((c - want) / want).abs() > 1e-6 {
            failures.push(format!("fit coefficient {c} vs {want}"));
        }
    }

    // exit derivative against finite differences
    let multi = builtin_default("multi_turning").unwrap();
    for x0 in [-1.0, -0.95, -0.9] {
        let d = exit_derivative(&multi, x0).unwrap();
        let fd = central_diff(|x| theoretical_exit(&multi, x).unwrap().p0, x0, 1e-6);
        if !(((d - fd) / d).abs() <= 1e-6) {
            failures.push(format!("exit derivative at {x0}: {d} vs {fd}"));
        }
    }

    let pass = failures.is_empty();
    report(
        "criterion 9 (property suites)",
        pass,
        &if pass {
            "integrator ladder, reversibility, fit exactness, exit derivative".to_string()
        } else {
            failures.join("; ")
        },
    );
    assert!(pass);
}
