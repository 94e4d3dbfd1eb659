use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use svo_platoon::gradcheck::random_problem;
use svo_platoon::objective::{
    av_free_accel, av_spacing, payoff_follower, payoff_self, social_utility, trapezoid,
    FollowerPayoff, Horizon, ObjectiveParams, SvoAngle,
};
use svo_platoon::pmp::{
    discrete_adjoint, solve, ControlGrid, OcpState, PairModel, PairProblem, SolverConfig,
};
use svo_platoon::scenario::integrate_lead;
use svo_platoon::vehicle::{ControlBounds, IdmParams, OvrvParams};

/// Lead easing from 14 to 10 m/s, AV and follower at 14 m/s.
fn smooth_problem(dt: f64, tf: f64, phi: SvoAngle, payoff: FollowerPayoff) -> PairProblem {
    let h = Horizon::new(0.0, tf, dt).unwrap();
    let speeds: Vec<f64> = h
        .times()
        .iter()
        .map(|t| 12.0 + 2.0 * (0.2 * t).cos())
        .collect();
    let exo = integrate_lead(&speeds, 0.0, dt, 5.0).unwrap();
    let model = PairModel {
        ovrv: OvrvParams::default(),
        idm: IdmParams::default(),
        av_length: 5.0,
        objective: ObjectiveParams {
            phi,
            follower_payoff: payoff,
            ..Default::default()
        },
    };
    PairProblem::new(
        OcpState::new(-40.0, 14.0, -75.0, 14.0),
        exo,
        model,
        ControlBounds::default(),
        h,
    )
    .unwrap()
}

#[test]
fn objective_converges_under_refinement() {
    // Constant control: the hold is exact, so only quadrature and RK4 error remain.
    let j = |dt: f64| {
        let p = smooth_problem(dt, 20.0, SvoAngle::PROSOCIAL, FollowerPayoff::DesiredSpeed);
        p.cost(&vec![0.2; p.horizon.nodes()]).unwrap()
    };
    let (coarse, fine) = (j(0.1), j(0.05));
    assert!(
        (coarse - fine).abs() <= 1e-3 * fine.abs(),
        "{coarse} vs {fine}"
    );
}

#[test]
fn objective_is_negated_social_utility_plus_spacing_penalty() {
    // Sign-flip equivalence on a 3-interval toy: argmin J3 over a grid is the
    // argmax of the SVO utility minus the spacing penalty.
    let p = smooth_problem(1.0, 3.0, SvoAngle::PROSOCIAL, FollowerPayoff::DesiredSpeed);
    let levels = [-0.6, -0.3, 0.0, 0.3, 0.6];
    let mut best_j = (f64::INFINITY, [0.0; 4]);
    let mut best_w = (f64::NEG_INFINITY, [0.0; 4]);
    for a in levels {
        for b in levels {
            for c in levels {
                for d in levels {
                    let u = [a, b, c, d];
                    let states = p.forward(&u).unwrap();
                    let j = p.objective(&states, &u).unwrap();
                    let accel: Vec<f64> = states
                        .iter()
                        .enumerate()
                        .map(|(k, y)| av_free_accel(y, &p.exo.sample(k), &p.model.ovrv) + u[k])
                        .collect();
                    let vf: Vec<f64> = states.iter().map(OcpState::follower_speed).collect();
                    let va: Vec<f64> = states.iter().map(OcpState::av_speed).collect();
                    let spacing: Vec<f64> = states
                        .iter()
                        .enumerate()
                        .map(|(k, y)| {
                            let e =
                                av_spacing(y, &p.exo.sample(k)) - p.model.objective.desired_spacing;
                            0.5 * p.model.objective.lambda * e * e
                        })
                        .collect();
                    let w = social_utility(
                        p.model.objective.phi,
                        payoff_self(&accel, 1.0),
                        payoff_follower(&vf, &va, &p.model.objective, 1.0).unwrap(),
                    ) - trapezoid(&spacing, 1.0);
                    assert!((j + w).abs() <= 1e-9 * j.abs().max(1.0), "{j} vs {w}");
                    if j < best_j.0 {
                        best_j = (j, u);
                    }
                    if w > best_w.0 {
                        best_w = (w, u);
                    }
                }
            }
        }
    }
    assert_eq!(best_j.1, best_w.1);
}

#[test]
fn projected_step_descends_for_small_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let (p, u) = random_problem(&mut rng, 8.0, 0.1).unwrap();
        let Ok(states) = p.forward(&u) else { continue };
        let j0 = p.objective(&states, &u).unwrap();
        let dir = discrete_adjoint(&p, &states, &u).unwrap().direction;
        let stepped = |eps: f64| -> Vec<f64> {
            u.iter()
                .zip(&dir)
                .map(|(ui, di)| p.bounds.clamp(ui - eps * di))
                .collect()
        };
        if stepped(1e-6) == u {
            continue;
        }
        let decreased = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
            .iter()
            .any(|&eps| p.cost(&stepped(eps)).unwrap() < j0);
        assert!(decreased, "no backtracking step decreased J3 from {j0}");
    }
}

#[test]
fn returned_control_is_the_history_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..4 {
        let (p, _) = random_problem(&mut rng, 10.0, 0.1).unwrap();
        let init = ControlGrid::zeros(p.horizon.nodes(), p.bounds);
        let cfg = SolverConfig {
            max_iterations: 60,
            ..Default::default()
        };
        let Ok(sol) = solve(&p, &cfg, &init) else {
            continue;
        };
        let h = &sol.report.history;
        assert_eq!(h.len(), sol.report.iterations);
        let min = h.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(sol.objective, min);
        assert_eq!(h[sol.report.best_iteration - 1], min);
        assert!(sol.objective <= h[0]);
        assert_eq!(p.cost(sol.controls.values()).unwrap(), sol.objective);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn objective_non_negative_for_penalty_payoffs(seed in any::<u64>(), smooth in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut p, u) = random_problem(&mut rng, 5.0, 0.1).unwrap();
        p.model.objective.follower_payoff =
            if smooth { FollowerPayoff::Smoothness } else { FollowerPayoff::DesiredSpeed };
        if let Ok(j) = p.cost(&u) {
            prop_assert!(j >= 0.0);
        }
    }

    #[test]
    fn running_minimum_never_increases(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, _) = random_problem(&mut rng, 5.0, 0.1).unwrap();
        let init = ControlGrid::zeros(p.horizon.nodes(), p.bounds);
        let cfg = SolverConfig { max_iterations: 25, ..Default::default() };
        if let Ok(sol) = solve(&p, &cfg, &init) {
            let mut best = f64::INFINITY;
            for j in &sol.report.history {
                let next = best.min(*j);
                prop_assert!(next <= best);
                best = next;
            }
            prop_assert_eq!(best, sol.objective);
            prop_assert!(sol.controls.values().iter().all(|u| p.bounds.contains(*u)));
        }
    }
}
