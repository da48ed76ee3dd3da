use approx::assert_relative_eq;
use znd_core::front_tracking::{
    approximate_initial_data, conservation_step, front_between, merged_pieces, next_collision, resolve_interaction,
    InteractionMode,
};
use znd_core::functionals::glimm_f;
use znd_core::gas_dynamics::{hugoniot_curve, pressure, solve_riemann};
use znd_core::{Error, Family, Front, FrontSolution, GasParams, GasState, Profile, SchemeConfig};

fn gas() -> GasParams {
    GasParams::default()
}

fn background() -> GasState {
    GasState::new(1.0, 0.0, 2.5, 0.0)
}

fn config(eps: f64) -> SchemeConfig {
    let b = background();
    SchemeConfig::new(eps, gas()).with_lambda_hat_from(&[b, GasState::new(0.9, 0.0, 2.6, 0.0)]).unwrap()
}

fn solution(left: GasState, fronts: Vec<Front>) -> FrontSolution {
    let mut sol = FrontSolution::constant(left);
    sol.right_background = fronts.last().map_or(left, |f| f.right);
    sol.next_id = fronts.iter().map(|f| f.id + 1).max().unwrap_or(0);
    sol.fronts = fronts;
    sol.check_invariants().unwrap();
    sol
}

fn shock(id: u64, family: usize, q: f64, x: f64, base: GasState, cfg: &SchemeConfig) -> Front {
    let right = hugoniot_curve(family, q, &base, &cfg.gas).unwrap();
    let fam = if family == 1 { Family::One } else { Family::Three };
    front_between(id, fam, x, base, right, cfg).unwrap()
}

/// Flux `(-u, p, p u, 0)` of the homogeneous system.
fn flux(s: &GasState) -> [f64; 4] {
    let p = pressure(s, &gas()).unwrap();
    [-s.u, p, p * s.u, 0.0]
}

fn integral(sol: &FrontSolution, a: f64, b: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (lo, hi, s) in sol.pieces() {
        let (lo, hi) = (lo.max(a), hi.min(b));
        if hi > lo {
            let arr = s.to_array();
            for k in 0..4 {
                out[k] += arr[k] * (hi - lo);
            }
        }
    }
    out
}

#[test]
fn next_collision_of_converging_pair() {
    let cfg = config(0.05);
    let s = background();
    let mut a = front_between(0, Family::Np, 0.0, s, s, &cfg).unwrap();
    let mut b = front_between(1, Family::Np, 1.0, s, s, &cfg).unwrap();
    a.speed = 1.0;
    b.speed = -1.0;
    let sol = solution(s, vec![a, b]);
    let (t, ids) = next_collision(&sol).unwrap();
    assert_relative_eq!(t, 0.5);
    assert_eq!(ids, vec![0, 1]);
}

#[test]
fn next_collision_none_for_diverging_fronts() {
    let cfg = config(0.05);
    let b = background();
    let l = shock(0, 1, -0.01, 0.0, b, &cfg);
    let r = shock(1, 3, -0.01, 1.0, l.right, &cfg);
    assert!(next_collision(&solution(b, vec![l, r])).is_none());
}

#[test]
fn zero_step_is_identity() {
    let cfg = config(0.05);
    let b = background();
    let f = shock(0, 3, -0.02, 0.0, b, &cfg);
    let sol = solution(b, vec![f]);
    assert_eq!(conservation_step(&sol, 0.0, &cfg).unwrap(), sol);
}

#[test]
fn single_shock_translates() {
    let cfg = config(0.05);
    let b = background();
    let f = shock(0, 1, -0.02, 0.3, b, &cfg);
    let sol = solution(b, vec![f]);
    let out = conservation_step(&sol, 1.0, &cfg).unwrap();
    assert_eq!(out.fronts.len(), 1);
    assert_relative_eq!(out.fronts[0].position, 0.3 + f.speed, max_relative = 1e-14);
    assert_eq!(out.fronts[0].left, f.left);
    assert_eq!(out.fronts[0].right, f.right);
    assert_relative_eq!(out.time, 1.0);
}

#[test]
fn shock_speed_satisfies_rankine_hugoniot() {
    let cfg = config(0.05);
    let f = shock(0, 3, -0.05, 0.0, background(), &cfg);
    let (fl, fr) = (flux(&f.left), flux(&f.right));
    let (ul, ur) = (f.left.to_array(), f.right.to_array());
    for k in 0..3 {
        assert_relative_eq!(fr[k] - fl[k], f.speed * (ur[k] - ul[k]), epsilon = 1e-12);
    }
}

#[test]
fn collision_matches_interaction_at_meeting_point() {
    let cfg = config(0.05);
    let b = background();
    let a = shock(0, 3, -0.08, 0.0, b, &cfg);
    let c = shock(1, 1, -0.08, 1.0, a.right, &cfg);
    let sol = solution(b, vec![a, c]);
    let t_star = 1.0 / (a.speed - c.speed);
    let x_star = a.speed * t_star;
    let dt = t_star + 0.25;
    let out = conservation_step(&sol, dt, &cfg).unwrap();

    let mut moved = [a, c];
    for f in &mut moved {
        f.position = x_star;
    }
    let mut next = 2;
    let inter = resolve_interaction(&moved, x_star, t_star, &cfg, &mut next, false).unwrap();
    assert_eq!(inter.mode, InteractionMode::Accurate);
    assert_eq!(out.fronts.len(), inter.outgoing.len());
    for (o, e) in out.fronts.iter().zip(&inter.outgoing) {
        assert_eq!(o.family, e.family);
        assert_eq!(o.left, e.left);
        assert_eq!(o.right, e.right);
        assert_relative_eq!(o.position, x_star + e.speed * 0.25, max_relative = 1e-12, epsilon = 1e-12);
    }
}

#[test]
fn accurate_interaction_is_the_riemann_fan_of_the_outer_states() {
    let cfg = config(0.05);
    let b = background();
    let a = shock(0, 3, -0.1, 0.0, b, &cfg);
    let c = shock(1, 1, -0.1, 0.0, a.right, &cfg);
    let mut next = 2;
    let inter = resolve_interaction(&[a, c], 0.0, 0.0, &cfg, &mut next, false).unwrap();
    let fan = solve_riemann(&b, &c.right, &cfg.gas).unwrap();
    let out1 = inter.outgoing.iter().find(|f| f.family == Family::One).unwrap();
    let out3 = inter.outgoing.iter().find(|f| f.family == Family::Three).unwrap();
    assert_relative_eq!(out1.q, fan.q[0], max_relative = 1e-12);
    assert_relative_eq!(out3.q, fan.q[2], max_relative = 1e-12);
    // Ids of the single incoming front of each family survive.
    assert_eq!(out1.id, c.id);
    assert_eq!(out3.id, a.id);
    assert!(inter.outgoing.iter().all(|f| f.generation == 1));
}

#[test]
fn head_on_shock_strengths_change_quadratically() {
    let cfg = config(0.01);
    let b = background();
    let mut ratios = Vec::new();
    for s in [0.04, 0.02, 0.01] {
        let a = shock(0, 3, -s, 0.0, b, &cfg);
        let c = shock(1, 1, -s, 0.0, a.right, &cfg);
        let fan = solve_riemann(&b, &c.right, &cfg.gas).unwrap();
        let change = (fan.q[0] - c.q).abs() + (fan.q[2] - a.q).abs();
        ratios.push(change / (s * s));
    }
    for r in &ratios {
        assert!(*r < 5.0, "interaction constant {r}");
    }
    assert_relative_eq!(ratios[2], ratios[1], max_relative = 0.2);
}

#[test]
fn simplified_interaction_nearly_keeps_strengths_and_emits_small_np() {
    let mut cfg = config(0.05);
    cfg.np_floor = 0.0;
    let b = background();
    let s = 0.01;
    let a = shock(0, 3, -s, 0.0, b, &cfg);
    let c = shock(1, 1, -s, 0.0, a.right, &cfg);
    assert!(s * s < cfg.rho);
    let mut next = 2;
    let inter = resolve_interaction(&[a, c], 0.0, 0.0, &cfg, &mut next, false).unwrap();
    assert_eq!(inter.mode, InteractionMode::Simplified);
    let q1: f64 = inter.outgoing.iter().filter(|f| f.family == Family::One).map(|f| f.q).sum();
    let q3: f64 = inter.outgoing.iter().filter(|f| f.family == Family::Three).map(|f| f.q).sum();
    assert!((q1 - c.q).abs() <= s * s);
    assert!((q3 - a.q).abs() <= s * s);
    let np: Vec<&Front> = inter.outgoing.iter().filter(|f| f.family == Family::Np).collect();
    assert_eq!(np.len(), 1);
    assert_eq!(np[0].speed, cfg.lambda_hat);
    // Residual against the exact fan, which is the accurate-mode oracle.
    let fan = solve_riemann(&b, &c.right, &cfg.gas).unwrap();
    let gap = (fan.q[0] - c.q).abs() + (fan.q[2] - a.q).abs();
    assert!(np[0].q <= 10.0 * s * s, "np {} vs {}", np[0].q, s * s);
    assert!(np[0].q <= 10.0 * gap.max(1e-16));
    assert_eq!(inter.outgoing.last().unwrap().right, c.right);
}

#[test]
fn acoustic_front_crosses_reactant_front() {
    let cfg = config(0.05);
    let a = background().with_y(0.0);
    let b = a.with_y(0.008);
    let y = front_between(0, Family::Y, 0.0, a, b, &cfg).unwrap();
    let s = shock(1, 1, -0.02, 0.5, b, &cfg);
    assert!(s.speed < 0.0);
    let sol = solution(a, vec![y, s]);
    let out = conservation_step(&sol, 1.0, &cfg).unwrap();
    assert_eq!(out.fronts.len(), 2);
    let (moved, yf) = (&out.fronts[0], &out.fronts[1]);
    assert_eq!(moved.id, s.id);
    assert_eq!(moved.family, Family::One);
    assert_eq!(moved.q, s.q);
    assert_eq!(moved.left.gas_part(), s.left.gas_part());
    assert_eq!(moved.right.gas_part(), s.right.gas_part());
    assert_eq!(moved.left.y, moved.right.y);
    assert_eq!(yf.id, y.id);
    assert_eq!(yf.position, 0.0);
    assert_relative_eq!(yf.q, y.q, epsilon = 1e-15);
    let reg = &out.crossing_registry[&y.id];
    assert_eq!(reg.len(), 1);
    assert_eq!(reg[0].front_id, s.id);
    assert_eq!(out.stats.pass_through, 1);
}

#[test]
fn glimm_functional_decreases_across_accurate_interactions() {
    let cfg = config(0.05);
    let b = background();
    for s in [0.1, 0.06] {
        let a = shock(0, 3, -s, 0.0, b, &cfg);
        let c = shock(1, 1, -s, 1.0, a.right, &cfg);
        let sol = solution(b, vec![a, c]);
        let out = conservation_step(&sol, 2.0, &cfg).unwrap();
        assert_eq!(out.stats.accurate, 1);
        assert!(glimm_f(&out, &cfg) <= glimm_f(&sol, &cfg), "F grew at strength {s}");
    }
}

#[test]
fn conservation_error_is_bounded_by_rarefaction_and_np_error() {
    let eps = 0.02;
    let cfg = config(eps);
    let b = background();
    let r3 = hugoniot_curve(3, 0.05, &b, &cfg.gas).unwrap();
    let s1 = hugoniot_curve(1, -0.03, &r3, &cfg.gas).unwrap();
    let profile = Profile::PiecewiseConstant { breaks: vec![-0.5, 0.5], states: vec![b, r3, s1] };
    let sol = approximate_initial_data(&profile, eps, &cfg).unwrap();
    let (a, z) = (-4.0, 4.0);
    let dt = 1.0;
    let out = conservation_step(&sol, dt, &cfg).unwrap();
    assert!(out.fronts.iter().all(|f| f.position > a && f.position < z));
    let before = integral(&sol, a, z);
    let after = integral(&out, a, z);
    let (fl, fr) = (flux(&sol.left_background), flux(&sol.right_background));
    for k in 0..4 {
        let err = (after[k] - before[k] + (fr[k] - fl[k]) * dt).abs();
        assert!(err <= 2.0 * (cfg.delta_r + eps) * dt, "component {k}: {err}");
    }
}

#[test]
fn constant_profile_has_no_fronts() {
    let cfg = config(0.05);
    let b = background();
    let sol =
        approximate_initial_data(&Profile::PiecewiseConstant { breaks: vec![], states: vec![b] }, 0.05, &cfg).unwrap();
    assert!(sol.fronts.is_empty());
    assert_eq!(sol.left_background, sol.right_background);
}

#[test]
fn riemann_profile_is_reproduced_exactly() {
    let cfg = config(0.05);
    let l = background();
    let r = GasState::new(1.02, 0.01, 2.52, 0.004);
    let profile = Profile::PiecewiseConstant { breaks: vec![0.0], states: vec![l, r] };
    let sol = approximate_initial_data(&profile, 0.05, &cfg).unwrap();
    assert!(sol.fronts.iter().all(|f| f.position == 0.0));
    assert_eq!(sol.left_background, l);
    assert_eq!(sol.right_background, r);
    let exact = FrontSolution { fronts: vec![], ..FrontSolution::constant(l) };
    let mut jump = exact.clone();
    jump.right_background = r;
    jump.fronts = vec![Front { right: r, ..front_between(0, Family::Np, 0.0, l, r, &cfg).unwrap() }];
    assert_eq!(sol.l1_distance(&jump), 0.0);
}

#[test]
fn smooth_bump_approximation_meets_all_three_bounds() {
    let eps = 0.05;
    let cfg = config(eps);
    let n = 400;
    let bump = |x: f64| {
        let w = (-4.0 * x * x).exp();
        GasState::new(1.0 + 0.01 * w, 0.004 * w, 2.5 + 0.01 * w, 0.005 * w)
    };
    let xs: Vec<f64> = (0..=n).map(|k| -3.0 + 6.0 * k as f64 / n as f64).collect();
    let states: Vec<GasState> = xs.iter().map(|x| bump(*x)).collect();
    let profile = Profile::Sampled { x: xs, states };
    let sol = approximate_initial_data(&profile, eps, &cfg).unwrap();
    assert!(sol.fronts.iter().all(|f| f.position.abs() <= 1.0 / eps));

    let pieces = sol.pieces();
    let tv_out: f64 = pieces.windows(2).map(|w| w[0].2.distance(&w[1].2)).sum();
    assert!(tv_out <= profile.total_variation() + 1e-15);

    // Trapezoid rule on a grid much finer than the samples.
    let m = 60_000;
    let (a, b) = (-1.0 / eps, 1.0 / eps);
    let h = (b - a) / m as f64;
    let f = |x: f64| profile.eval(x).distance(&sol.state_at(x));
    let l1: f64 = (0..m).map(|k| 0.5 * h * (f(a + k as f64 * h) + f(a + (k + 1) as f64 * h))).sum();
    assert!(l1 < eps, "L1 error {l1}");
}

#[test]
fn large_total_variation_is_rejected() {
    let cfg = config(0.05);
    let l = background();
    let r = GasState::new(3.0, 1.0, 6.0, 0.0);
    let profile = Profile::PiecewiseConstant { breaks: vec![0.0], states: vec![l, r] };
    assert!(matches!(approximate_initial_data(&profile, 0.05, &cfg), Err(Error::Invalid(_))));
}

#[test]
fn event_budget_raises_collision_cascade() {
    let mut cfg = config(0.05);
    cfg.event_budget = 0;
    let b = background();
    let a = shock(0, 3, -0.1, 0.0, b, &cfg);
    let c = shock(1, 1, -0.1, 1.0, a.right, &cfg);
    let sol = solution(b, vec![a, c]);
    assert_eq!(conservation_step(&sol, 2.0, &cfg), Err(Error::CollisionCascade(0)));
}

#[test]
fn merged_partition_counts_shared_breakpoints_once() {
    let cfg = config(0.05);
    let b = background();
    let f1 = shock(0, 1, -0.01, 0.0, b, &cfg);
    let f2 = shock(1, 3, -0.01, 1.0, f1.right, &cfg);
    let g1 = shock(0, 3, -0.01, 1.0, b, &cfg);
    let g2 = shock(1, 3, -0.01, 2.0, g1.right, &cfg);
    let u = solution(b, vec![f1, f2]);
    let v = solution(b, vec![g1, g2]);
    // Breakpoints {0, 1} and {1, 2}: three distinct points, four intervals.
    assert_eq!(merged_pieces(&u, &v).len(), 4);
}
