//! Source operator `T_eps`, the fractional-step scheme
//! `P_t = S_{t - k eps} (T_eps S_eps)^k` and the bookkeeping of the
//! admissible domains `D_t`.

use libm::{ceil, exp, floor, log2};

use crate::front_tracking::{refit_front, refresh, FrontSolution};
use crate::functionals::glimm_f;
use crate::gas_dynamics::{reaction_rate, sound_speed, temperature, GasParams, GasState};
use crate::{Error, Result};

/// All scheme parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    /// Step and accuracy parameter `eps`.
    pub epsilon: f64,
    /// Speed of non-physical fronts.
    pub lambda_hat: f64,
    /// Simplified solver is used below this product of incoming strengths.
    pub rho: f64,
    /// Largest curve-parameter jump of one rarefaction front.
    pub delta_r: f64,
    /// Interactions deeper than this use the simplified solver.
    pub generation_cap: u32,
    /// Fronts whose side states drift further than this from an exact wave are re-solved.
    pub refresh_tol: f64,
    /// Simplified-solver residuals below this ride on the last outgoing front
    /// instead of creating a non-physical front.
    pub np_floor: f64,
    /// Weight `M` of reactant jumps.
    pub m_weight: f64,
    /// Quadratic coefficient `C` of the Glimm functional.
    pub c_glimm: f64,
    /// Lyapunov constants `(k1, k2, k3, k4)` with `k3 = C k2`.
    pub kappa: [f64; 4],
    /// Lower rate bound.
    pub phi_lower: f64,
    /// Upper rate bound.
    pub phi_upper: f64,
    /// Growth constant of the Glimm functional across reaction steps.
    pub b_const: f64,
    /// Reactant budget constant.
    pub b_star: f64,
    /// Domain size.
    pub epsilon_cap: f64,
    /// Interactions allowed per conservation step.
    pub event_budget: usize,
    /// Largest total variation accepted for initial data.
    pub tv_limit: f64,
    pub gas: GasParams,
}

impl SchemeConfig {
    pub fn new(epsilon: f64, gas: GasParams) -> Self {
        let c_glimm = 10.0;
        let k2 = 1.0;
        Self {
            epsilon,
            lambda_hat: 0.0,
            rho: epsilon * epsilon,
            delta_r: epsilon,
            generation_cap: ceil(log2(1.0 / epsilon)).max(1.0) as u32,
            refresh_tol: 0.1 * epsilon * epsilon,
            np_floor: epsilon * epsilon * epsilon,
            m_weight: 10.0,
            c_glimm,
            kappa: [1.0, k2, c_glimm * k2, 10.0],
            phi_lower: 0.5,
            phi_upper: 2.0,
            b_const: 1.0,
            b_star: 10.0,
            epsilon_cap: 0.1,
            event_budget: 2_000_000,
            tv_limit: 1.0,
            gas,
        }
    }

    /// Sets `lambda_hat = 1.1 max |lambda_1|` over `states`.
    pub fn with_lambda_hat_from(mut self, states: &[GasState]) -> Result<Self> {
        let mut m: f64 = 0.0;
        for s in states {
            m = m.max(sound_speed(s, &self.gas)?);
        }
        self.lambda_hat = 1.1 * m;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.gas.validate()?;
        if !(self.epsilon > 0.0) {
            return Err(Error::Invalid("epsilon must be positive"));
        }
        if !(self.lambda_hat > 0.0) {
            return Err(Error::Invalid("lambda_hat must be positive"));
        }
        if !(self.delta_r > 0.0) || !(self.rho >= 0.0) {
            return Err(Error::Invalid("rarefaction step and threshold must be positive"));
        }
        if self.kappa[2] != self.c_glimm * self.kappa[1] {
            return Err(Error::Invalid("kappa3 must equal C * kappa2"));
        }
        if !(self.m_weight >= 1.0) {
            return Err(Error::Invalid("M must be at least 1"));
        }
        if !(self.phi_lower > 0.0) || self.phi_lower > self.phi_upper {
            return Err(Error::Invalid("rate bounds must satisfy 0 < phi_lower <= phi_upper"));
        }
        Ok(())
    }

    /// Number of reaction steps `N = ceil(1 / eps^2)`.
    pub fn reaction_cutoff(&self) -> u64 {
        ceil(1.0 / (self.epsilon * self.epsilon)) as u64
    }
}

/// Background and domain size of the admissible sets `D_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub background: (GasState, GasState),
    pub epsilon_cap: f64,
}

impl DomainSpec {
    /// `eps(t) = eps_cap exp{(B B* eps_cap / phi)(1 - e^{-phi t})}`.
    pub fn epsilon_t(&self, t: f64, cfg: &SchemeConfig) -> f64 {
        let a = cfg.b_const * cfg.b_star * self.epsilon_cap / cfg.phi_lower;
        self.epsilon_cap * exp(a * (1.0 - exp(-cfg.phi_lower * t)))
    }

    pub fn epsilon_inf(&self, cfg: &SchemeConfig) -> f64 {
        self.epsilon_cap * exp(cfg.b_const * cfg.b_star * self.epsilon_cap / cfg.phi_lower)
    }

    /// Reactant budget `B* eps_cap e^{-phi t}`.
    pub fn y_budget(&self, t: f64, cfg: &SchemeConfig) -> f64 {
        cfg.b_star * self.epsilon_cap * exp(-cfg.phi_lower * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainReport {
    pub f_value: f64,
    pub y_inf: f64,
    pub epsilon_budget: f64,
    pub y_budget: f64,
    pub member: bool,
}

/// Membership of a snapshot in `D_t`.
pub fn domain_check(sol: &FrontSolution, t: f64, spec: &DomainSpec, cfg: &SchemeConfig) -> DomainReport {
    let f_value = glimm_f(sol, cfg);
    let y_inf = sol.y_sup();
    let epsilon_budget = spec.epsilon_t(t, cfg);
    let y_budget = spec.y_budget(t, cfg);
    DomainReport { f_value, y_inf, epsilon_budget, y_budget, member: f_value < epsilon_budget && y_inf < y_budget }
}

/// Explicit Euler update of one constant state over `dt`.
pub fn react_state(s: &GasState, dt: f64, gas: &GasParams) -> Result<GasState> {
    let rate = reaction_rate(temperature(s, gas)?, gas)?;
    if dt * rate >= 0.5 {
        return Err(Error::StepTooLarge(dt * rate));
    }
    if s.y == 0.0 {
        return Ok(*s);
    }
    Ok(GasState { energy: s.energy + gas.q_heat * s.y * rate * dt, y: s.y * (1.0 - rate * dt), ..*s })
}

/// `T_dt`: applies [`react_state`] to every constant piece and refits the
/// fronts whose side states changed. Positions do not move.
pub fn reaction_step(sol: &FrontSolution, dt: f64, cfg: &SchemeConfig) -> Result<FrontSolution> {
    let mut out = sol.clone();
    apply_reaction(&mut out, dt, cfg)?;
    Ok(out)
}

pub fn apply_reaction(sol: &mut FrontSolution, dt: f64, cfg: &SchemeConfig) -> Result<()> {
    let gas = &cfg.gas;
    sol.left_background = react_state(&sol.left_background, dt, gas)?;
    let mut prev = sol.left_background;
    for k in 0..sol.fronts.len() {
        let old_right = sol.fronts[k].right;
        let new_right = if k + 1 == sol.fronts.len() {
            sol.right_background = react_state(&sol.right_background, dt, gas)?;
            sol.right_background
        } else {
            react_state(&old_right, dt, gas)?
        };
        let f = &mut sol.fronts[k];
        let changed = f.left != prev || f.right != new_right;
        f.left = prev;
        f.right = new_right;
        if changed {
            refit_front(f, cfg)?;
        }
        prev = new_right;
    }
    if sol.fronts.is_empty() {
        sol.right_background = react_state(&sol.right_background, dt, gas)?;
    }
    Ok(())
}

/// Number of full steps `k = min(floor(t / eps), N)` taken by [`evolve`].
pub fn step_count(t: f64, cfg: &SchemeConfig) -> u64 {
    let k = floor(t / cfg.epsilon * (1.0 + 1e-12)) as u64;
    k.min(cfg.reaction_cutoff())
}

/// `P_t`: `k` alternations of a conservation step of length `eps` and a
/// reaction step, then a final conservation step of length `t - k eps`.
pub fn evolve(initial: &FrontSolution, t: f64, cfg: &SchemeConfig) -> Result<FrontSolution> {
    let mut sol = initial.clone();
    evolve_with(&mut sol, t, cfg, |_, _, _| Ok(()))?;
    Ok(sol)
}

/// Scheme stage reported to [`evolve_with`] observers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Just before the `k`-th reaction step (time `t_k-`).
    BeforeReaction(u64),
    /// Just after the `k`-th reaction step (time `t_k`).
    AfterReaction(u64),
    /// End of the run.
    Final,
}

/// [`evolve`] in place, calling `observe` around every reaction step and at the end.
pub fn evolve_with<F>(sol: &mut FrontSolution, t: f64, cfg: &SchemeConfig, mut observe: F) -> Result<()>
where
    F: FnMut(&FrontSolution, Stage, &SchemeConfig) -> Result<()>,
{
    if t < 0.0 {
        return Err(Error::Invalid("evolution time must be nonnegative"));
    }
    let start = sol.time;
    let k = step_count(t, cfg);
    for j in 1..=k {
        let target = start + j as f64 * cfg.epsilon;
        sol.advance(target - sol.time, cfg)?;
        observe(sol, Stage::BeforeReaction(j), cfg)?;
        apply_reaction(sol, cfg.epsilon, cfg)?;
        refresh(sol, cfg)?;
        observe(sol, Stage::AfterReaction(j), cfg)?;
    }
    let rest = start + t - sol.time;
    if rest > 0.0 {
        sol.advance(rest, cfg)?;
    }
    observe(sol, Stage::Final, cfg)
}
