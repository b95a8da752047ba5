mod common;

use common::{simpson, z1_variational};
use slowfast::asymptotics::{fit_scale, log_ladder};
use slowfast::example5::{
    c_closed, c_via_finite_difference, log_prefactor, z0_exact, z0_prime, z1_exact, Example5Error,
    PerturbationResult,
};
use slowfast::integrate::{Direction, EventSpec, Integrator, Tolerances};
use slowfast::system::builtin_default;

/// Five-point derivative.
fn d5(f: impl Fn(f64) -> f64, x: f64, dx: f64) -> f64 {
    (f(x - 2.0 * dx) - 8.0 * f(x - dx) + 8.0 * f(x + dx) - f(x + 2.0 * dx)) / (12.0 * dx)
}

#[test]
fn z1_matches_variational_equation() {
    let eps = 1e-2;
    for i in 1..=10 {
        let x = -1.0 + 2.0 * i as f64 / 11.0;
        let exact = z1_exact(x, -1.0, eps).unwrap();
        let oracle = z1_variational(x, -1.0, eps, 200_000);
        assert!(
            (exact - oracle).abs() <= 1e-6 * oracle.abs(),
            "x = {x}: {exact} vs {oracle}"
        );
    }
}

#[test]
fn z1_solves_its_ode() {
    for (x0, eps) in [(-1.0, 1e-2), (-0.8, 3e-3)] {
        for i in 1..=20 {
            let x = x0 - 2.0 * x0 * i as f64 / 21.0;
            let z0 = z0_exact(x, x0, eps).unwrap();
            let z1 = z1_exact(x, x0, eps).unwrap();
            let lhs = eps * d5(|s| z1_exact(s, x0, eps).unwrap(), x, 1e-4);
            let rhs = 2.0 * x * z0 * z1 + z0 * z0 * z0;
            let scale = (2.0 * x * z0 * z1).abs() + z0 * z0 * z0;
            assert!((lhs - rhs).abs() <= 1e-8 * scale, "x = {x}: {lhs} vs {rhs}");

            let lhs0 = eps * d5(|s| z0_exact(s, x0, eps).unwrap(), x, 1e-4);
            assert!((lhs0 - x * z0 * z0).abs() <= 1e-8 * z0 * z0);
            assert!((z0_prime(x, x0, eps).unwrap() * eps - x * z0 * z0).abs() <= 1e-14);
        }
    }
}

#[test]
fn coefficient_over_eps_log_eps_tends_to_two() {
    let ladder = log_ladder(1e-6, 1e-2, 12);
    let ratios: Vec<f64> = ladder
        .iter()
        .map(|&e| c_closed(-1.0, e).unwrap() / (e * e.ln()))
        .collect();
    assert!(
        ratios
            .windows(2)
            .all(|w| (w[1] - 2.0).abs() < (w[0] - 2.0).abs()),
        "{ratios:?}"
    );
    let samples: Vec<_> = ladder
        .iter()
        .map(|&e| (e, c_closed(-1.0, e).unwrap()))
        .collect();
    let fit = fit_scale(&samples, 2).unwrap();
    assert!((fit.coeff(0, 1).unwrap() - 2.0).abs() < 1e-4, "{fit:?}");
    assert!(
        (fit.coeff(1, 0).unwrap() + 2.0 * 2f64.ln()).abs() < 1e-3,
        "{fit:?}"
    );
}

#[test]
fn scaling_by_two_matches_quadrature() {
    let direct = |x0: f64, eps: f64| {
        let a2 = 2.0 * eps + x0 * x0;
        2.0 * eps / x0 * simpson(|s| 1.0 / (a2 - s * s), x0, -x0, 2_000_000)
    };
    for (x0, eps) in [(-1.0, 1e-2), (-0.6, 4e-3), (-1.2, 5e-2)] {
        let c = c_closed(x0, eps).unwrap();
        let scaled = c_closed(2.0 * x0, 4.0 * eps).unwrap();
        assert!((scaled - c).abs() <= 1e-13 * c.abs());
        let oracle = direct(2.0 * x0, 4.0 * eps);
        assert!(
            (scaled - oracle).abs() <= 1e-10 * oracle.abs(),
            "{scaled} vs {oracle}"
        );
    }
}

#[test]
fn remainder_after_prefactor_has_no_log() {
    let ladder = log_ladder(1e-6, 1e-2, 12);
    for x0 in [-1.0, -0.7, -1.4] {
        let q0 = log_prefactor(x0, 0.0);
        assert!(matches!(q0, Err(Example5Error::BadEps(_))));
        let lead = 2.0 / (x0 * x0);
        let samples: Vec<_> = ladder
            .iter()
            .map(|&e| {
                let q = log_prefactor(x0, e).unwrap();
                (e, c_closed(x0, e).unwrap() - q * e * e.ln())
            })
            .collect();
        let a01 = fit_scale(&samples, 2).unwrap().coeff(0, 1).unwrap();
        assert!(a01.abs() <= 1e-4 * lead, "x0 = {x0}: {a01}");
    }
}

#[test]
fn finite_difference_converges_over_alpha() {
    let tol = Tolerances::new(1e-12, 1e-14);
    let rows: Vec<PerturbationResult> = [1e-2, 1e-3]
        .iter()
        .map(|&a| c_via_finite_difference(-1.0, 1e-2, a, &tol).unwrap())
        .collect();
    assert!(rows.iter().all(|r| r.agreement < 1e-4), "{rows:?}");
    assert!(rows[1].agreement < rows[0].agreement);
    assert_eq!(rows[0].c_closed, rows[1].c_closed);
    assert!(
        rows[0].csv_row().split(',').count() == PerturbationResult::CSV_HEADER.split(',').count()
    );
    assert!(matches!(
        c_via_finite_difference(-1.0, 1e-2, 0.0, &tol),
        Err(Example5Error::ZeroAlpha)
    ));
}

#[test]
fn exact_family_on_grid() {
    let sys = builtin_default("example5").unwrap();
    let tol = Tolerances::new(1e-12, 1e-15);
    for eps in [1e-1, 1e-2, 1e-3] {
        for i in 1..10 {
            let xk = -1.0 + 0.2 * i as f64;
            let hit = Integrator::new(sys.field(eps), tol)
                .event(EventSpec::new(
                    move |y: &[f64; 2]| y[0] - xk,
                    Direction::Rising,
                ))
                .record(false)
                .run([-1.0, 1.0], (0.0, 10.0 / eps))
                .unwrap()
                .event
                .unwrap();
            let z = z0_exact(hit.state[0], -1.0, eps).unwrap();
            assert!(
                (hit.state[1] - z).abs() <= 1e-8 * z,
                "eps = {eps}, x = {xk}"
            );
        }
    }
}
