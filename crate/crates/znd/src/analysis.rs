//! Experiment drivers: paired stability runs, splitting and semigroup
//! errors, convergence in `eps`, local characterisation of the limit and
//! the per-step reaction estimates.

use rayon::prelude::*;
use serde::Serialize;
use znd_core::front_tracking::{approximate_initial_data, conservation_step, merged_pieces, refresh};
use znd_core::functionals::{glimm_f, lyapunov_phi, q_field, EventTag, PhiContext};
use znd_core::gas_dynamics::{
    characteristic_speed, left_eigenvectors, reaction_rate, right_eigenvectors, solve_riemann, source, temperature,
};
use znd_core::reaction_scheme::{evolve, evolve_with, reaction_step, step_count, Stage};
use znd_core::{Family, FrontSolution, FunctionalReport, GasState, Profile, SchemeConfig};

use crate::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Least-squares line through `(ln scale, ln error)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

impl ScalingFit {
    pub fn fit(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Validation("a scaling fit needs at least two points".into()));
        }
        if points.iter().any(|&(s, e)| !(s > 0.0) || !(e > 0.0)) {
            return Err(Error::Validation("scaling fit needs positive scales and errors".into()));
        }
        let n = points.len() as f64;
        let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / n).sqrt();
        Ok(Self { points: points.to_vec(), slope, intercept, residual })
    }
}

/// Per-piece reaction estimates at one reaction step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TkStep {
    pub k: u64,
    /// Smallest `K` satisfying the `q` jump bound on every piece.
    pub k_q: f64,
    /// Smallest `K` satisfying the reactant-gap bound on every piece.
    pub k_y: f64,
    /// Largest excess of the reactant-gap bound on pieces where its right side vanishes.
    pub y_violation: f64,
}

/// Output of [`paired_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRun {
    pub epsilon: f64,
    /// Initial report, then `t_k-` and `t_k` for every reaction step, then the final time.
    pub reports: Vec<FunctionalReport>,
    pub tk: Vec<TkStep>,
    pub final_u: FrontSolution,
    pub final_v: FrontSolution,
}

impl PairedRun {
    /// Pairs `(Phi(t_k-), Phi(t_k))`.
    pub fn reaction_pairs(&self) -> Vec<(f64, f64)> {
        self.reports
            .windows(2)
            .filter_map(|w| match (w[0].event, w[1].event) {
                (EventTag::Reaction { before: true, .. }, EventTag::Reaction { before: false, .. }) => {
                    Some((w[0].phi, w[1].phi))
                }
                _ => None,
            })
            .collect()
    }

    /// Reaction steps where `Phi` increased beyond round-off.
    pub fn reaction_increases(&self) -> usize {
        self.reaction_pairs().iter().filter(|(b, a)| *a > *b * (1.0 + 1e-12) + 1e-300).count()
    }

    /// Total increase of `Phi` over the conservation intervals.
    pub fn conservation_growth(&self) -> f64 {
        self.reports
            .windows(2)
            .filter(|w| !matches!(w[1].event, EventTag::Reaction { before: false, .. }))
            .map(|w| (w[1].phi - w[0].phi).max(0.0))
            .sum()
    }

    /// Measured rate `C eps` in `Phi(t) - Phi(s) <= C eps (t - s)`: the
    /// positive variation of `Phi` between reaction steps per unit time.
    pub fn phi_growth_rate(&self) -> f64 {
        let t0 = self.reports.first().map_or(0.0, |r| r.time);
        let t1 = self.reports.last().map_or(0.0, |r| r.time);
        if t1 > t0 {
            self.conservation_growth() / (t1 - t0)
        } else {
            0.0
        }
    }

    /// Smallest `C1` with `L1 / C1 <= Phi <= C1 L1` over all reports.
    pub fn equivalence_constant(&self) -> f64 {
        equivalence_constant(&self.reports)
    }
}

pub fn equivalence_constant(reports: &[FunctionalReport]) -> f64 {
    reports
        .iter()
        .filter(|r| r.l1 > 0.0 || r.phi > 0.0)
        .map(|r| if r.l1 == 0.0 || r.phi == 0.0 { f64::INFINITY } else { (r.phi / r.l1).max(r.l1 / r.phi) })
        .fold(1.0, f64::max)
}

/// Evolves `u0` and `v0` in lockstep to `t`, evaluating `Phi` and the
/// Glimm functionals just before and after every reaction step.
pub fn paired_run(u0: &FrontSolution, v0: &FrontSolution, t: f64, cfg: &SchemeConfig) -> Result<PairedRun> {
    let ctx = PhiContext::new(u0.y_sup(), v0.y_sup());
    let (_, first) = lyapunov_phi(u0, v0, cfg, &ctx)?;
    let mut reports = vec![first];
    let mut tk = Vec::new();
    let mut u = u0.clone();
    let mut v = v0.clone();
    let start = u.time;
    for k in 1..=step_count(t, cfg) {
        let target = start + k as f64 * cfg.epsilon;
        u.advance(target - u.time, cfg)?;
        v.advance(target - v.time, cfg)?;
        let (_, before) = lyapunov_phi(&u, &v, cfg, &ctx.at(EventTag::Reaction { k, before: true }))?;
        let u_after = reaction_step(&u, cfg.epsilon, cfg)?;
        let v_after = reaction_step(&v, cfg.epsilon, cfg)?;
        tk.push(reaction_estimates(k, (&u, &v), (&u_after, &v_after), cfg)?);
        u = u_after;
        v = v_after;
        refresh(&mut u, cfg)?;
        refresh(&mut v, cfg)?;
        let (_, after) = lyapunov_phi(&u, &v, cfg, &ctx.at(EventTag::Reaction { k, before: false }))?;
        reports.push(before);
        reports.push(after);
    }
    let rest = start + t - u.time;
    if rest > 0.0 {
        u.advance(rest, cfg)?;
        v.advance(rest, cfg)?;
        let (_, last) = lyapunov_phi(&u, &v, cfg, &ctx)?;
        reports.push(last);
    }
    Ok(PairedRun { epsilon: cfg.epsilon, reports, tk, final_u: u, final_v: v })
}

/// Reaction-step estimates on the common refinement of the two solutions:
/// `|q_i+ - q_i-| <= K (|Y1 - Y2| eps + sum |q_j| (Y1 + Y2) eps)` and
/// `|Y1+ - Y2+| - |Y1- - Y2-| <= -phi eps |Y1- - Y2-| + K sum |q_j| Y2 eps`.
pub fn reaction_estimates(
    k: u64,
    before: (&FrontSolution, &FrontSolution),
    after: (&FrontSolution, &FrontSolution),
    cfg: &SchemeConfig,
) -> Result<TkStep> {
    let eps = cfg.epsilon;
    let qb = q_field(before.0, before.1, &cfg.gas)?;
    let qa = q_field(after.0, after.1, &cfg.gas)?;
    let mut step = TkStep { k, k_q: 0.0, k_y: 0.0, y_violation: 0.0 };
    for (b, a) in qb.iter().zip(&qa) {
        debug_assert!(b.a == a.a && b.b == a.b);
        let qsum: f64 = b.q.iter().map(|q| q.abs()).sum();
        let gap_b = (b.u.y - b.v.y).abs();
        let gap_a = (a.u.y - a.v.y).abs();
        let rhs_q = gap_b * eps + qsum * (b.u.y + b.v.y) * eps;
        let dq = (0..3).map(|i| (a.q[i] - b.q[i]).abs()).fold(0.0, f64::max);
        if dq > 1e-14 {
            step.k_q = step.k_q.max(if rhs_q > 0.0 { dq / rhs_q } else { f64::INFINITY });
        }
        let lhs_y = gap_a - gap_b + cfg.phi_lower * eps * gap_b;
        let rhs_y = qsum * b.v.y * eps;
        if lhs_y > 1e-15 {
            if rhs_y > 0.0 {
                step.k_y = step.k_y.max(lhs_y / rhs_y);
            } else {
                step.y_violation = step.y_violation.max(lhs_y);
            }
        }
    }
    Ok(step)
}

/// Summary of the per-step reaction estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TkSummary {
    pub k_q_max: f64,
    pub k_q_min: f64,
    pub k_y_max: f64,
    pub y_violation: f64,
}

impl TkSummary {
    pub fn from_steps(steps: &[TkStep]) -> Self {
        let kq: Vec<f64> = steps.iter().map(|s| s.k_q).filter(|k| *k > 0.0).collect();
        Self {
            k_q_max: kq.iter().copied().fold(0.0, f64::max),
            k_q_min: kq.iter().copied().fold(f64::INFINITY, f64::min),
            k_y_max: steps.iter().map(|s| s.k_y).fold(0.0, f64::max),
            y_violation: steps.iter().map(|s| s.y_violation).fold(0.0, f64::max),
        }
    }

    /// Spread `max / min` of the fitted `K` of the `q` estimate.
    pub fn spread(&self) -> f64 {
        if self.k_q_min.is_finite() && self.k_q_min > 0.0 {
            self.k_q_max / self.k_q_min
        } else {
            1.0
        }
    }
}

/// Result of [`stability_experiment`] at one `eps`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub epsilon: f64,
    pub reaction_steps: usize,
    pub reaction_increases: usize,
    pub growth_rate: f64,
    pub c2: f64,
    pub c1: f64,
    pub l1_initial: f64,
    pub l1_max: f64,
    pub l1_bound_holds: bool,
    pub tk: TkSummary,
}

/// Paired run plus the measured constants of the stability estimate.
pub fn stability_experiment(
    u0: &Profile,
    v0: &Profile,
    t: f64,
    cfg: &SchemeConfig,
) -> Result<(StabilityReport, PairedRun)> {
    let u = approximate_initial_data(u0, cfg.epsilon, cfg)?;
    let v = approximate_initial_data(v0, cfg.epsilon, cfg)?;
    let run = paired_run(&u, &v, t, cfg)?;
    let growth_rate = run.phi_growth_rate();
    let c1 = run.equivalence_constant();
    let c2 = growth_rate / cfg.epsilon;
    let l1_initial = run.reports[0].l1;
    let l1_max = run.reports.iter().map(|r| r.l1).fold(0.0, f64::max);
    let bound = |time: f64| c1 * c1 * l1_initial + c1 * c2 * cfg.epsilon * time;
    let l1_bound_holds = run.reports.iter().all(|r| r.l1 <= bound(r.time) * (1.0 + 1e-9) + 1e-15);
    let report = StabilityReport {
        epsilon: cfg.epsilon,
        reaction_steps: run.reaction_pairs().len(),
        reaction_increases: run.reaction_increases(),
        growth_rate,
        c2,
        c1,
        l1_initial,
        l1_max,
        l1_bound_holds,
        tk: TkSummary::from_steps(&run.tk),
    };
    Ok((report, run))
}

/// `||S_t T_t U - T_t S_t U||_L1`.
pub fn commutator(u: &FrontSolution, t: f64, cfg: &SchemeConfig) -> Result<f64> {
    let a = conservation_step(&reaction_step(u, t, cfg)?, t, cfg)?;
    let b = reaction_step(&conservation_step(u, t, cfg)?, t, cfg)?;
    Ok(a.l1_distance(&b))
}

/// Commutator norms over `ts`, fitted against `t`.
pub fn commutation_check(u: &FrontSolution, ts: &[f64], cfg: &SchemeConfig) -> Result<(Vec<f64>, Option<ScalingFit>)> {
    let errs = ts.par_iter().map(|&t| commutator(u, t, cfg)).collect::<Result<Vec<_>>>()?;
    let points: Vec<(f64, f64)> = ts.iter().copied().zip(errs.iter().copied()).collect();
    let fit = if errs.iter().all(|e| *e > 0.0) { Some(ScalingFit::fit(&points)?) } else { None };
    Ok((errs, fit))
}

/// `||P_t U - S_t T_t U||_L1`.
pub fn splitting_gap(u: &FrontSolution, t: f64, cfg: &SchemeConfig) -> Result<f64> {
    let p = evolve(u, t, cfg)?;
    let s = conservation_step(&reaction_step(u, t, cfg)?, t, cfg)?;
    Ok(p.l1_distance(&s))
}

/// `||P_t2 P_t1 U - P_{t1 + t2} U||_L1`.
pub fn semigroup_check(u: &FrontSolution, t1: f64, t2: f64, cfg: &SchemeConfig) -> Result<f64> {
    let once = evolve(u, t1 + t2, cfg)?;
    let twice = evolve(&evolve(u, t1, cfg)?, t2, cfg)?;
    Ok(once.l1_distance(&twice))
}

/// Semigroup gaps for each `eps`, each run from its own approximation of `profile`.
pub fn semigroup_study(profile: &Profile, t1: f64, t2: f64, eps: &[f64], base: &SchemeConfig) -> Result<Vec<f64>> {
    eps.par_iter()
        .map(|&e| {
            let cfg = with_epsilon(base, e);
            let u = approximate_initial_data(profile, e, &cfg)?;
            semigroup_check(&u, t1, t2, &cfg)
        })
        .collect()
}

/// Distances between trajectories at consecutive `eps`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub epsilons: Vec<f64>,
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    pub fit: Option<ScalingFit>,
}

pub fn convergence_study(profile: &Profile, eps: &[f64], t: f64, base: &SchemeConfig) -> Result<ConvergenceReport> {
    if eps.len() < 4 {
        return Err(Error::Validation(format!("convergence study needs at least four eps values, got {}", eps.len())));
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Validation("eps values must be positive and strictly decreasing".into()));
    }
    let sols = eps
        .par_iter()
        .map(|&e| {
            let cfg = with_epsilon(base, e);
            let u = approximate_initial_data(profile, e, &cfg)?;
            Ok(evolve(&u, t, &cfg)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let distances: Vec<f64> = sols.windows(2).map(|w| w[0].l1_distance(&w[1])).collect();
    let ratios = distances.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect();
    let points: Vec<(f64, f64)> = eps.iter().copied().zip(distances.iter().copied()).collect();
    let fit = if distances.iter().all(|d| *d > 0.0) { Some(ScalingFit::fit(&points)?) } else { None };
    Ok(ConvergenceReport { epsilons: eps.to_vec(), distances, ratios, fit })
}

/// `(1/theta) int_{xi - theta lh}^{xi + theta lh} |U(s + theta, x) - U_C(theta, x)| dx`
/// where `U_C` is the self-similar solution of the Riemann problem at `xi`.
pub fn local_char_riemann(sol: &FrontSolution, xi: f64, thetas: &[f64], cfg: &SchemeConfig) -> Result<Vec<f64>> {
    let left = sol.state_at(xi);
    let right = sol.state_at(next_up(xi));
    let fan = solve_riemann(&left, &right, &cfg.gas)?;
    thetas
        .par_iter()
        .map(|&theta| {
            let later = evolve(sol, theta, cfg)?;
            let half = theta * cfg.lambda_hat;
            let (lo, hi) = (xi - half, xi + half);
            let mut marks: Vec<f64> = later.fronts.iter().map(|f| f.position).filter(|x| *x > lo && *x < hi).collect();
            for w in fan.waves.iter() {
                for s in [w.speed.0, w.speed.1] {
                    let x = xi + s * theta;
                    if x > lo && x < hi {
                        marks.push(x);
                    }
                }
            }
            marks.push(lo);
            marks.push(hi);
            marks.sort_by(f64::total_cmp);
            let f = |x: f64| later.state_at(x).distance(&fan.sample((x - xi) / theta, &cfg.gas));
            Ok(gauss_between(&marks, f) / theta)
        })
        .collect()
}

/// Integral of `f` over `[marks[0], marks[last]]`, with `f` smooth between
/// consecutive sorted marks. Open Gauss nodes never sit on a jump.
fn gauss_between(marks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut sum = 0.0;
    for w in marks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let n = 4;
        let h = (b - a) / n as f64;
        let g = 0.5 * h * 0.6f64.sqrt();
        for j in 0..n {
            let c = a + (j as f64 + 0.5) * h;
            sum += h / 18.0 * (5.0 * f(c - g) + 8.0 * f(c) + 5.0 * f(c + g));
        }
    }
    sum
}

fn next_up(x: f64) -> f64 {
    x + 1e-12 * (1.0 + x.abs())
}

/// Position of the strongest shock of `sol`.
pub fn strongest_shock(sol: &FrontSolution) -> Option<f64> {
    sol.fronts.iter().filter(|f| f.is_shock()).max_by(|a, b| a.strength().total_cmp(&b.strength())).map(|f| f.position)
}

/// The linearised transport solution `U_1 + U_2` frozen at `U(s, xi)`.
pub struct TransportModel<'a> {
    sol: &'a FrontSolution,
    l: [[f64; 4]; 4],
    r: [[f64; 4]; 4],
    speeds: [f64; 4],
    /// Breakpoints and per-piece projections `l_i . U` and `l_i . G(U)`.
    pieces: Vec<(f64, f64, [f64; 4], [f64; 4])>,
}

impl<'a> TransportModel<'a> {
    pub fn new(sol: &'a FrontSolution, xi: f64, cfg: &SchemeConfig) -> Result<Self> {
        let base = sol.state_at(xi);
        let r3 = right_eigenvectors(&base, &cfg.gas)?;
        let l3 = left_eigenvectors(&base, &cfg.gas)?;
        let mut l = [[0.0; 4]; 4];
        let mut r = [[0.0; 4]; 4];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = r3[i][j];
                l[i][j] = l3[i][j];
            }
        }
        l[3][3] = 1.0;
        r[3][3] = 1.0;
        let mut speeds = [0.0; 4];
        for i in 0..3 {
            speeds[i] = characteristic_speed(i + 1, &base, &cfg.gas)?;
        }
        let mut pieces = Vec::new();
        for (a, b, s) in sol.pieces() {
            let u = s.to_array();
            let g = source(&s, &cfg.gas)?;
            let mut pu = [0.0; 4];
            let mut pg = [0.0; 4];
            for i in 0..4 {
                pu[i] = (0..4).map(|j| l[i][j] * u[j]).sum();
                pg[i] = (0..4).map(|j| l[i][j] * g[j]).sum();
            }
            pieces.push((a, b, pu, pg));
        }
        Ok(Self { sol, l, r, speeds, pieces })
    }

    fn piece(&self, x: f64) -> usize {
        let k = self.sol.fronts.partition_point(|f| f.position < x);
        let p = self.pieces.partition_point(|p| p.1 < x);
        debug_assert!(p <= k + 1);
        p.min(self.pieces.len() - 1)
    }

    /// `int_lo^hi (l_i . G)(y) dy`.
    fn g_integral(&self, i: usize, lo: f64, hi: f64) -> f64 {
        let mut s = 0.0;
        let start = self.piece(lo);
        for p in &self.pieces[start..] {
            if p.0 >= hi {
                break;
            }
            let a = p.0.max(lo);
            let b = p.1.min(hi);
            if b > a {
                s += p.3[i] * (b - a);
            }
        }
        s
    }

    pub fn eval(&self, theta: f64, x: f64) -> GasState {
        let mut w = [0.0; 4];
        for i in 0..4 {
            let lam = self.speeds[i];
            let c1 = self.pieces[self.piece(x - lam * theta)].2[i];
            let c2 = if lam == 0.0 {
                theta * self.pieces[self.piece(x)].3[i]
            } else {
                let (lo, hi) = if lam > 0.0 { (x - lam * theta, x) } else { (x, x - lam * theta) };
                self.g_integral(i, lo, hi) / lam.abs()
            };
            for j in 0..4 {
                w[j] += (c1 + c2) * self.r[i][j];
            }
        }
        let _ = &self.l;
        GasState::from_array(w)
    }
}

/// `(1/theta) int_{a + theta lh}^{b - theta lh} |U(s + theta) - U_T(theta)| dx`
/// for each `theta`; `U(s + theta)` is computed with step `theta / refine`.
pub fn local_char_transport(
    sol: &FrontSolution,
    interval: (f64, f64),
    xi: f64,
    thetas: &[f64],
    refine: f64,
    base: &SchemeConfig,
) -> Result<Vec<f64>> {
    let (a, b) = interval;
    if !(a < xi && xi < b) {
        return Err(Error::Validation("transport comparison needs a < xi < b".into()));
    }
    let model = TransportModel::new(sol, xi, base)?;
    thetas
        .par_iter()
        .map(|&theta| {
            let cfg = with_epsilon(base, theta / refine);
            let later = evolve(sol, theta, &cfg)?;
            let lo = a + theta * base.lambda_hat;
            let hi = b - theta * base.lambda_hat;
            if hi <= lo {
                return Ok(0.0);
            }
            let mut marks: Vec<f64> = later.fronts.iter().map(|f| f.position).collect();
            for (a, _, _, _) in model.pieces.iter().skip(1) {
                marks.push(*a);
                marks.extend(model.speeds.iter().map(|l| a + l * theta));
            }
            marks.retain(|x| *x > lo && *x < hi);
            marks.push(lo);
            marks.push(hi);
            marks.sort_by(f64::total_cmp);
            let f = |x: f64| later.state_at(x).distance(&model.eval(theta, x));
            Ok(gauss_between(&marks, f) / theta)
        })
        .collect()
}

/// Total variation of `sol` on `(a, b)` in the Euclidean state norm.
pub fn total_variation_on(sol: &FrontSolution, a: f64, b: f64) -> f64 {
    sol.fronts.iter().filter(|f| f.position > a && f.position < b).map(|f| f.left.distance(&f.right)).sum()
}

/// Intercept `c0` of `avg(theta) = c0 + c1 theta`.
pub fn extrapolate_to_zero(thetas: &[f64], avgs: &[f64]) -> f64 {
    let n = thetas.len() as f64;
    let mx = thetas.iter().sum::<f64>() / n;
    let my = avgs.iter().sum::<f64>() / n;
    let sxx: f64 = thetas.iter().map(|t| (t - mx) * (t - mx)).sum();
    if sxx == 0.0 {
        return my;
    }
    let sxy: f64 = thetas.iter().zip(avgs).map(|(t, a)| (t - mx) * (a - my)).sum();
    my - sxy / sxx * mx
}

/// Growth constant `B` of the Glimm functional: the smallest `B` with
/// `F(t) <= F(t_k-) exp{B |Y0|_inf e^{-phi k eps} eps}` for `t_k <= t <= t_{k+1}-`,
/// where `t_0- = 0`. Also returns the supremum of `F` over the run.
pub fn fit_glimm_growth(u0: &FrontSolution, t: f64, cfg: &SchemeConfig) -> Result<(f64, f64)> {
    let y0 = u0.y_sup();
    let mut sup = glimm_f(u0, cfg);
    let mut anchor = (0u64, sup);
    let mut b_fit: f64 = 0.0;
    let mut sol = u0.clone();
    evolve_with(&mut sol, t, cfg, |s, stage, cfg| {
        let f = glimm_f(s, cfg);
        sup = sup.max(f);
        let (k, base) = anchor;
        let scale = y0 * (-cfg.phi_lower * k as f64 * cfg.epsilon).exp() * cfg.epsilon;
        if f > base && scale > 0.0 && base > 0.0 {
            b_fit = b_fit.max((f / base).ln() / scale);
        }
        if let Stage::BeforeReaction(j) = stage {
            anchor = (j, f);
        }
        Ok(())
    })?;
    Ok((b_fit, sup))
}

/// Per-piece reactant decay: the largest ratio `Y(t_k) / (|Y0|_inf e^{-phi k eps})`
/// over all pieces and steps, and the pointwise ratio `Y(t_k, x) / (Y0(x) e^{-phi k eps})`.
pub fn y_decay(u0: &FrontSolution, t: f64, cfg: &SchemeConfig) -> Result<(f64, f64)> {
    let y0 = u0.y_sup();
    let init = u0.clone();
    let mut worst: f64 = 0.0;
    let mut pointwise: f64 = 0.0;
    let mut sol = u0.clone();
    evolve_with(&mut sol, t, cfg, |s, stage, cfg| {
        if let Stage::AfterReaction(k) = stage {
            let decay = (-cfg.phi_lower * k as f64 * cfg.epsilon).exp();
            if y0 > 0.0 {
                worst = worst.max(s.y_sup() / (y0 * decay));
            }
            for (_, _, now, then) in merged_pieces(s, &init) {
                if now.y > 0.0 {
                    let r = if then.y > 0.0 { now.y / (then.y * decay) } else { f64::INFINITY };
                    pointwise = pointwise.max(r);
                }
            }
        }
        Ok(())
    })?;
    Ok((worst, pointwise))
}

/// Lipschitz constant of `G` over pairs of the given states, by finite differences.
pub fn source_lipschitz(states: &[GasState], cfg: &SchemeConfig) -> Result<f64> {
    let mut l: f64 = 0.0;
    let g: Vec<[f64; 4]> = states.iter().map(|s| source(s, &cfg.gas)).collect::<znd_core::Result<_>>()?;
    for i in 0..states.len() {
        for j in 0..i {
            let d = states[i].distance(&states[j]);
            if d > 1e-12 {
                let dg = (0..4).map(|k| (g[i][k] - g[j][k]).powi(2)).sum::<f64>().sqrt();
                l = l.max(dg / d);
            }
        }
    }
    Ok(l)
}

/// Checks `||T^k U - U_inf|| <= e^{k eps L'} ||U - U_inf||` for `k = 1..=steps`
/// where `U_inf` is the constant background. Returns `(L', worst ratio)`.
pub fn reaction_lipschitz_check(u: &FrontSolution, steps: u64, cfg: &SchemeConfig) -> Result<(f64, f64)> {
    let background = FrontSolution::constant(u.left_background);
    let mut hull: Vec<GasState> = u.pieces().into_iter().map(|p| p.2).collect();
    hull.push(u.left_background);
    let mut cur = u.clone();
    let mut later = Vec::new();
    for _ in 0..steps {
        cur = reaction_step(&cur, cfg.epsilon, cfg)?;
        later.push(cur.clone());
        hull.extend(cur.pieces().into_iter().map(|p| p.2));
    }
    hull.sort_by(|a, b| a.to_array().partial_cmp(&b.to_array()).unwrap_or(std::cmp::Ordering::Equal));
    hull.dedup();
    let lip = source_lipschitz(&hull, cfg)?;
    let d0 = u.l1_distance(&background);
    let mut worst: f64 = 0.0;
    for (k, s) in later.iter().enumerate() {
        let bound = ((k + 1) as f64 * cfg.epsilon * lip).exp() * d0;
        if bound > 0.0 {
            worst = worst.max(s.l1_distance(&background) / bound);
        }
    }
    Ok((lip, worst))
}

/// Lowest rate `phi(T)` seen over the pieces of a run.
pub fn min_rate(sol: &FrontSolution, cfg: &SchemeConfig) -> Result<f64> {
    let mut m = f64::INFINITY;
    for (_, _, s) in sol.pieces() {
        m = m.min(reaction_rate(temperature(&s, &cfg.gas)?, &cfg.gas)?);
    }
    Ok(m)
}

/// Copy of `base` with step `eps` and the step-dependent defaults rescaled.
pub fn with_epsilon(base: &SchemeConfig, eps: f64) -> SchemeConfig {
    let fresh = SchemeConfig::new(eps, base.gas);
    SchemeConfig {
        epsilon: eps,
        rho: fresh.rho,
        delta_r: fresh.delta_r,
        generation_cap: fresh.generation_cap,
        refresh_tol: fresh.refresh_tol,
        np_floor: fresh.np_floor,
        ..*base
    }
}

/// Number of non-physical fronts.
pub fn np_count(sol: &FrontSolution) -> usize {
    sol.fronts.iter().filter(|f| f.family == Family::Np).count()
}
