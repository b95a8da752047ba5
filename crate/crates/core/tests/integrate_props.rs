use proptest::prelude::*;
use slowfast::integrate::{Direction, EventSpec, Integrator, Tolerances, EVENT_SURFACE_TOL};
use slowfast::system::builtin_default;

fn osc(_t: f64, y: &[f64; 2]) -> [f64; 2] {
    [y[1], -y[0]]
}

#[test]
fn example5_event_lands_on_mirror_point() {
    let sys = builtin_default("example5").unwrap();
    let traj = Integrator::new(sys.field(1e-2), Tolerances::default())
        .event(EventSpec::new(|y: &[f64; 2]| y[1] - 1.0, Direction::Rising).skip_initial())
        .run([-1.0, 1.0], (0.0, 1e3))
        .unwrap();
    let hit = traj.event.unwrap();
    assert!((hit.state[0] - 1.0).abs() < 1e-6);
    assert!(hit.residual.abs() <= EVENT_SURFACE_TOL);
    assert!(traj.nodes.windows(2).all(|w| w[1].0 > w[0].0));
}

#[test]
fn affine_chart_conserves_eps() {
    let sys = builtin_default("symmetric_quadratic").unwrap();
    let field = |_t: f64, y: &[f64; 3]| {
        let h = sys.h(y[0], y[1]);
        [y[2], h * y[1], -h * y[2]]
    };
    let traj = Integrator::new(field, Tolerances::default())
        .event(EventSpec::new(|y: &[f64; 3]| y[2] - 0.2, Direction::Rising))
        .run([-1.0, 1.0, 0.01], (0.0, 1e4))
        .unwrap();
    for (_, y) in &traj.nodes {
        assert!((y[1] * y[2] - 0.01).abs() / 0.01 < 1e-9);
    }
    let csv = traj.to_csv(&["x", "z", "E"]);
    assert!(csv.starts_with("t,x,z,E\n"));
}

#[test]
fn halving_tolerance_moves_event_less_than_coarse_tolerance() {
    let sys = builtin_default("multi_turning").unwrap();
    let run = |tol: Tolerances| {
        Integrator::new(sys.field(1e-3), tol)
            .event(EventSpec::new(|y: &[f64; 2]| y[1] - 0.1, Direction::Rising).skip_initial())
            .record(false)
            .run([-1.0, 0.1], (0.0, 1e5))
            .unwrap()
            .event
            .unwrap()
            .state
    };
    for rel in [1e-7, 1e-9, 1e-11] {
        let coarse = Tolerances::new(rel, rel * 1e-2);
        let a = run(coarse);
        let b = run(coarse.scaled(0.5));
        assert!(
            (a[0] - b[0]).abs() < rel && (a[1] - b[1]).abs() < rel,
            "{rel}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dense_output_matches_half_step_reintegration(
        times in prop::collection::vec(0.0f64..1.0, 20),
        phase in 0.0f64..6.0,
    ) {
        let tol = Tolerances::default();
        let start = [phase.cos(), -phase.sin()];
        let traj = Integrator::new(osc, tol).run(start, (0.0, 12.0)).unwrap();
        let fine = tol.scaled(0.5);
        for u in times {
            let t = 12.0 * u;
            let dense = traj.interpolate(t).unwrap();
            let direct = Integrator::new(osc, fine).record(false).run(start, (0.0, t)).unwrap().last().1;
            for k in 0..2 {
                prop_assert!((dense[k] - direct[k]).abs() <= 10.0 * tol.rel, "t = {}", t);
            }
        }
    }

    #[test]
    fn interpolant_reproduces_nodes(eps in 1e-2f64..1e-1) {
        let sys = builtin_default("example5").unwrap();
        let tol = Tolerances::default();
        let traj = Integrator::new(sys.field(eps), tol).run([-1.0, 1.0], (0.0, 1.0 / eps)).unwrap();
        for (t, y) in &traj.nodes {
            let v = traj.interpolate(*t).unwrap();
            prop_assert!((v[0] - y[0]).abs() <= tol.abs && (v[1] - y[1]).abs() <= tol.abs);
        }
    }

    #[test]
    fn forward_backward_returns(phase in 0.0f64..6.0, count in 1usize..6) {
        let tol = Tolerances::default();
        let start = [phase.cos(), phase.sin()];
        let hit = Integrator::new(osc, tol)
            .event(EventSpec::new(|y: &[f64; 2]| y[0], Direction::Any).count(count))
            .run(start, (0.0, 100.0))
            .unwrap()
            .event
            .unwrap();
        prop_assert_eq!(hit.index, count);
        let back = Integrator::new(osc, tol).run(hit.state, (hit.t, 0.0)).unwrap().last().1;
        prop_assert!((back[0] - start[0]).abs() <= 10.0 * tol.rel);
        prop_assert!((back[1] - start[1]).abs() <= 10.0 * tol.rel);
    }
}
