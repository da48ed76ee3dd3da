use proptest::prelude::*;
use znd_core::front_tracking::{approximate_initial_data, conservation_step, front_between, Crossing};
use znd_core::functionals::{interaction_Q, interaction_q_pairwise, lyapunov_phi, PhiContext};
use znd_core::gas_dynamics::{
    compose, decompose_q, eigenvalues, hugoniot_curve, pressure, reaction_rate, solve_riemann,
};
use znd_core::reaction_scheme::evolve;
use znd_core::{Family, Front, FrontSolution, GasParams, GasState, Profile, SchemeConfig};

fn gas() -> GasParams {
    GasParams::default()
}

fn state() -> impl Strategy<Value = GasState> {
    (0.9f64..1.1, -0.05f64..0.05, 2.3f64..2.7, 0.0f64..0.01)
        .prop_map(|(v, u, e, y)| GasState::new(v, u, e + 0.5 * u * u, y))
}

fn near(base: GasState) -> impl Strategy<Value = GasState> {
    (-0.01f64..0.01, -0.01f64..0.01, -0.01f64..0.01, 0.0f64..0.01)
        .prop_map(move |(dv, du, de, y)| GasState::new(base.v + dv, base.u + du, base.energy + de, y))
}

fn config(eps: f64) -> SchemeConfig {
    SchemeConfig::new(eps, gas()).with_lambda_hat_from(&[GasState::new(0.95, 0.0, 2.7, 0.0)]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn array_round_trip(s in state()) {
        prop_assert_eq!(GasState::from_array(s.to_array()), s);
    }

    #[test]
    fn pressure_round_trip(s in state()) {
        let p = pressure(&s, &gas()).unwrap();
        let back = GasState::from_pressure(s.v, s.u, p, s.y, &gas());
        prop_assert!((back.energy - s.energy).abs() <= 1e-14 * s.energy);
    }

    #[test]
    fn acoustic_speeds_are_symmetric(s in state()) {
        let l = eigenvalues(&s, &gas()).unwrap();
        prop_assert!(l[0] < 0.0);
        prop_assert_eq!(l[0], -l[2]);
        prop_assert_eq!((l[1], l[3]), (0.0, 0.0));
    }

    #[test]
    fn rate_is_monotone_in_temperature(t in 0.1f64..10.0, dt in 1e-6f64..1.0) {
        let g = gas();
        prop_assert!(reaction_rate(t + dt, &g).unwrap() > reaction_rate(t, &g).unwrap());
    }

    #[test]
    fn pressure_is_galilean_invariant(s in state(), w in -0.5f64..0.5) {
        let moved = GasState::new(s.v, s.u + w, s.energy + s.u * w + 0.5 * w * w, s.y);
        let (p0, p1) = (pressure(&s, &gas()).unwrap(), pressure(&moved, &gas()).unwrap());
        prop_assert!((p0 - p1).abs() <= 1e-12 * p0);
    }

    #[test]
    fn riemann_fan_recomposes_the_right_state(l in state(), r in state()) {
        let fan = solve_riemann(&l, &r, &gas()).unwrap();
        let back = compose(fan.q, &l.with_y(r.y), &gas()).unwrap();
        prop_assert!(back.gas_distance(&r) <= 1e-10 * (1.0 + r.gas_distance(&GasState::new(0.0, 0.0, 0.0, 0.0))));
    }

    #[test]
    fn decomposition_recovers_curve_parameters(s in state(), q in prop::array::uniform3(-0.01f64..0.01)) {
        let target = compose(q, &s, &gas()).unwrap();
        let back = decompose_q(&s, &target, &gas()).unwrap();
        for k in 0..3 {
            prop_assert!((back[k] - q[k]).abs() <= 1e-8, "{:?} vs {:?}", back, q);
        }
    }

    #[test]
    fn sweep_and_pairwise_potentials_agree(
        spec in prop::collection::vec((0usize..5, -0.02f64..0.02), 1..12),
        tags in prop::collection::vec((0usize..12, 0usize..12), 0..6),
    ) {
        let cfg = config(0.02);
        let mut s = GasState::new(1.0, 0.0, 2.5, 0.004);
        let mut fronts: Vec<Front> = Vec::new();
        for (k, (fam, q)) in spec.iter().enumerate() {
            let x = k as f64 * 0.5;
            let right = match fam {
                0..=2 => hugoniot_curve(fam + 1, *q, &s, &cfg.gas).unwrap(),
                3 => s.with_y((s.y + q.abs() * 0.1).min(1.0)),
                _ => GasState::new(s.v + q.abs() * 0.01, s.u, s.energy, s.y),
            };
            let family = [Family::One, Family::Two, Family::Three, Family::Y, Family::Np][*fam];
            let f = front_between(k as u64, family, x, s, right, &cfg).unwrap();
            fronts.push(f);
            s = right;
        }
        let mut sol = FrontSolution::constant(fronts[0].left);
        sol.right_background = s;
        sol.fronts = fronts;
        for (y, f) in tags {
            if y < sol.fronts.len() && f < sol.fronts.len() && sol.fronts[y].family == Family::Y {
                sol.crossing_registry.entry(y as u64).or_default().push(Crossing { front_id: f as u64, strength: 0.0, time: 0.0 });
            }
        }
        let (q, fast) = interaction_Q(&sol, &cfg);
        let slow = interaction_q_pairwise(&sol, &cfg);
        prop_assert_eq!(fast.pairs, slow.pairs);
        prop_assert_eq!(fast.np_pairs, slow.np_pairs);
        prop_assert!((fast.total() - slow.total()).abs() <= 1e-14 * (1.0 + slow.total()));
        prop_assert!(q >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tracking_keeps_invariants(l in state(), m in near(GasState::new(1.0, 0.0, 2.5, 0.0)), r in state(), dt in 0.0f64..2.0) {
        let eps = 0.05;
        let cfg = config(eps);
        let profile = Profile::PiecewiseConstant { breaks: vec![-0.5, 0.5], states: vec![l, m, r] };
        let sol = approximate_initial_data(&profile, eps, &cfg).unwrap();
        let out = conservation_step(&sol, dt, &cfg).unwrap();
        prop_assert!(out.check_invariants().is_ok());
        prop_assert_eq!(out.left_background, l);
        prop_assert_eq!(out.right_background, r);
        prop_assert!(out.total_np_strength() <= eps);
    }

    #[test]
    fn lyapunov_is_nonnegative_and_vanishes_on_the_diagonal(m1 in near(GasState::new(1.0, 0.0, 2.5, 0.0)), m2 in near(GasState::new(1.0, 0.0, 2.5, 0.0))) {
        let eps = 0.05;
        let cfg = config(eps);
        let b = GasState::new(1.0, 0.0, 2.5, 0.0);
        let u0 = approximate_initial_data(&Profile::PiecewiseConstant { breaks: vec![-0.5, 0.5], states: vec![b, m1, b] }, eps, &cfg).unwrap();
        let v0 = approximate_initial_data(&Profile::PiecewiseConstant { breaks: vec![-0.3, 0.6], states: vec![b, m2, b] }, eps, &cfg).unwrap();
        let u = evolve(&u0, 0.3, &cfg).unwrap();
        let v = evolve(&v0, 0.3, &cfg).unwrap();
        let ctx = PhiContext::new(m1.y, m2.y);
        let (phi, _) = lyapunov_phi(&u, &v, &cfg, &ctx).unwrap();
        prop_assert!(phi >= 0.0);
        prop_assert_eq!(lyapunov_phi(&u, &u, &cfg, &ctx).unwrap().0, 0.0);
    }
}
