//! JSON run configuration, schema version 1.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use znd_core::{GasParams, GasState, Profile, SchemeConfig};

use crate::presets::{self, pulse};
use crate::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spec: u32,
    #[serde(default)]
    pub scheme: SchemeSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Overrides of [`SchemeConfig`]; absent fields keep the defaults for `epsilon`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub epsilon: Option<f64>,
    pub lambda_hat: Option<f64>,
    pub rho: Option<f64>,
    pub delta_r: Option<f64>,
    pub generation_cap: Option<u32>,
    pub refresh_tol: Option<f64>,
    pub np_floor: Option<f64>,
    pub m_weight: Option<f64>,
    pub c_glimm: Option<f64>,
    pub kappa: Option<[f64; 4]>,
    pub phi_lower: Option<f64>,
    pub phi_upper: Option<f64>,
    pub b_const: Option<f64>,
    pub b_star: Option<f64>,
    pub epsilon_cap: Option<f64>,
    pub event_budget: Option<usize>,
    pub tv_limit: Option<f64>,
    pub gas: Option<GasSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSpec {
    pub gamma: f64,
    pub c: f64,
    pub q_heat: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Either a named preset or piecewise-constant segments with states `[v, u, E, Y]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub preset: Option<String>,
    pub breaks: Option<Vec<f64>>,
    pub states: Option<Vec<[f64; 4]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Adds `magnitude * pulse` to `Y`.
    YPulse,
    /// Adds `magnitude * pulse` to `v`.
    GasPulse,
    /// Adds seeded uniform noise in `[0, magnitude)` to `Y` on 16 cells of the pulse window.
    RandomY,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub magnitude: f64,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "one")]
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalKind {
    Riemann,
    Transport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalSpec {
    pub kind: LocalKind,
    /// Time at which the comparison starts.
    pub s: f64,
    pub thetas: Vec<f64>,
    /// Comparison point; the strongest shock when absent.
    pub xi: Option<f64>,
    /// Interval `(a, b)` of the transport comparison.
    pub interval: Option<(f64, f64)>,
    /// Transport runs use step `theta / refine`.
    pub refine: f64,
    /// Amplitude factors about the left background for the transport scaling.
    pub scales: Vec<f64>,
}

impl Default for LocalSpec {
    fn default() -> Self {
        Self {
            kind: LocalKind::Riemann,
            s: 0.2,
            thetas: vec![0.08, 0.04, 0.02, 0.01, 0.005],
            xi: None,
            interval: None,
            refine: 8.0,
            scales: vec![1.0, 0.5, 0.25],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub slope_min: f64,
    pub slope_max: f64,
    /// Relative band around one half for halving checks.
    pub halving: f64,
    pub ratio_max: f64,
    pub final_fraction: f64,
    pub transport_min: f64,
    pub transport_max: f64,
    pub c1_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            slope_min: 1.7,
            slope_max: 2.3,
            halving: 0.3,
            ratio_max: 0.7,
            final_fraction: 0.2,
            transport_min: 2.4,
            transport_max: 5.6,
            c1_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub perturbation: Option<Perturbation>,
    pub epsilons: Vec<f64>,
    pub horizon: f64,
    /// Commutation times.
    pub times: Vec<f64>,
    pub t1: f64,
    pub t2: f64,
    pub local: LocalSpec,
    pub tolerances: Tolerances,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            perturbation: None,
            epsilons: Vec::new(),
            horizon: 1.0,
            times: vec![0.02, 0.04, 0.08, 0.16],
            t1: 0.3185,
            t2: 0.4185,
            local: LocalSpec::default(),
            tolerances: Tolerances::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    /// Snapshot times of `run`; the horizon alone when empty.
    pub sample_times: Vec<f64>,
    /// Subset of `["csv", "json"]`; both when empty.
    pub formats: Vec<String>,
}

impl OutputSpec {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.is_empty() || self.formats.iter().any(|f| f == format)
    }
}

fn one() -> f64 {
    1.0
}

impl RunConfig {
    pub fn from_json(text: &str, path: &str) -> Result<Self, Error> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Json { path: path.to_string(), source: e })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: shown.clone(), source: e })?;
        Self::from_json(&text, &shown)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.spec != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported config version {}, expected {SCHEMA_VERSION}",
                self.spec
            )));
        }
        self.initial.validate()?;
        let e = &self.experiment;
        if e.epsilons.iter().any(|x| !(*x > 0.0)) || e.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Validation("experiment.epsilons must be positive and strictly decreasing".into()));
        }
        if !(e.horizon >= 0.0) {
            return Err(Error::Validation("experiment.horizon must be nonnegative".into()));
        }
        let min_eps = e.epsilons.iter().copied().chain(self.scheme.epsilon).fold(f64::INFINITY, f64::min);
        if min_eps.is_finite() && e.horizon > 1.0 / min_eps {
            return Err(Error::Validation("experiment.horizon exceeds 1 / min(eps)".into()));
        }
        if e.times.iter().any(|t| !(*t > 0.0)) || !(e.t1 >= 0.0) || !(e.t2 >= 0.0) {
            return Err(Error::Validation("experiment times must be nonnegative".into()));
        }
        if e.local.thetas.iter().any(|t| !(*t > 0.0)) || !(e.local.refine >= 1.0) || !(e.local.s >= 0.0) {
            return Err(Error::Validation("experiment.local needs positive thetas, s >= 0 and refine >= 1".into()));
        }
        if let Some(p) = &e.perturbation {
            if !p.magnitude.is_finite() || !(p.width > 0.0) {
                return Err(Error::Validation("perturbation needs a finite magnitude and positive width".into()));
            }
        }
        if self.output.sample_times.iter().any(|t| !(*t >= 0.0))
            || self.output.sample_times.windows(2).any(|w| w[1] < w[0])
        {
            return Err(Error::Validation("output.sample_times must be nonnegative and sorted".into()));
        }
        if let Some(f) = self.output.formats.iter().find(|f| *f != "csv" && *f != "json") {
            return Err(Error::Validation(format!("unknown output format {f:?}")));
        }
        self.scheme_config()?;
        Ok(())
    }

    pub fn gas(&self) -> GasParams {
        match self.scheme.gas {
            Some(g) => GasParams { gamma: g.gamma, c: g.c, q_heat: g.q_heat, alpha: g.alpha, beta: g.beta },
            None => GasParams::default(),
        }
    }

    /// The scheme at `scheme.epsilon` (default 0.02).
    pub fn scheme_config(&self) -> Result<SchemeConfig, Error> {
        let s = &self.scheme;
        let eps = s.epsilon.unwrap_or(0.02);
        let gas = self.gas();
        let mut cfg = SchemeConfig::new(eps, gas);
        let profile = self.initial_profile()?;
        cfg = match s.lambda_hat {
            Some(l) => {
                cfg.lambda_hat = l;
                cfg
            }
            None => cfg.with_lambda_hat_from(&profile_states(&profile))?,
        };
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = s.$f { cfg.$f = v; })*};
        }
        set!(rho, delta_r, generation_cap, refresh_tol, np_floor, m_weight, phi_lower, phi_upper, b_const, b_star);
        set!(epsilon_cap, event_budget, tv_limit);
        if let Some(c) = s.c_glimm {
            cfg.c_glimm = c;
            cfg.kappa[2] = c * cfg.kappa[1];
        }
        if let Some(k) = s.kappa {
            cfg.kappa = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn initial_profile(&self) -> Result<Profile, Error> {
        self.initial.profile(&self.gas())
    }

    /// Initial data of the second trajectory: the first one plus the perturbation.
    pub fn perturbed_profile(&self, seed: u64) -> Result<Profile, Error> {
        let base = self.initial_profile()?;
        match &self.experiment.perturbation {
            None => Ok(base),
            Some(p) => Ok(perturb(&base, p, seed)),
        }
    }
}

impl InitialSpec {
    pub fn preset(name: &str) -> Self {
        Self { preset: Some(name.to_string()), ..Self::default() }
    }

    fn validate(&self) -> Result<(), Error> {
        match (&self.preset, &self.breaks, &self.states) {
            (Some(name), None, None) => {
                if presets::NAMES.contains(&name.as_str()) {
                    Ok(())
                } else {
                    Err(Error::Validation(format!("unknown preset {name:?}; known: {}", presets::NAMES.join(", "))))
                }
            }
            (None, Some(b), Some(s)) => {
                if s.len() != b.len() + 1 {
                    return Err(Error::Validation("initial.states needs one more entry than initial.breaks".into()));
                }
                if b.windows(2).any(|w| !(w[0] < w[1])) || b.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Validation("initial.breaks must be finite and strictly increasing".into()));
                }
                Ok(())
            }
            _ => Err(Error::Validation("initial needs either a preset or both breaks and states".into())),
        }
    }

    pub fn profile(&self, gas: &GasParams) -> Result<Profile, Error> {
        self.validate()?;
        if let Some(name) = &self.preset {
            return presets::by_name(name, gas).ok_or_else(|| Error::Validation(format!("unknown preset {name:?}")));
        }
        let breaks = self.breaks.clone().unwrap_or_default();
        let states = self.states.iter().flatten().map(|a| GasState::from_array(*a)).collect();
        let p = Profile::PiecewiseConstant { breaks, states };
        p.validate()?;
        Ok(p)
    }
}

pub fn profile_states(p: &Profile) -> Vec<GasState> {
    match p {
        Profile::PiecewiseConstant { states, .. } | Profile::Sampled { states, .. } => states.clone(),
    }
}

/// Adds the perturbation at the samples of `base`; piecewise-constant data
/// are first refined on a grid over the pulse window.
pub fn perturb(base: &Profile, p: &Perturbation, seed: u64) -> Profile {
    let (lo, hi) = (p.center - p.width, p.center + p.width);
    let xs: Vec<f64> = match base {
        Profile::PiecewiseConstant { breaks, .. } => {
            let n = 160;
            let mut xs = breaks.clone();
            xs.extend((0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64));
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            xs
        }
        Profile::Sampled { x, .. } => x.clone(),
    };
    let cells = 16;
    let noise: Vec<f64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..cells).map(|_| rng.gen::<f64>()).collect()
    };
    // Piecewise-constant bases are sampled just right of each break so that jumps survive.
    let eval = |x: f64| match base {
        Profile::PiecewiseConstant { breaks, states } => states[breaks.partition_point(|b| *b <= x)],
        Profile::Sampled { .. } => base.eval(x),
    };
    let bump = |x: f64| pulse(x, p.center, p.width);
    let states = xs
        .iter()
        .map(|&x| {
            let s = eval(x);
            match p.kind {
                PerturbationKind::YPulse => s.with_y(s.y + p.magnitude * bump(x)),
                PerturbationKind::GasPulse => GasState::new(s.v + p.magnitude * bump(x), s.u, s.energy, s.y),
                PerturbationKind::RandomY => {
                    if x <= lo || x >= hi {
                        s
                    } else {
                        let k = (((x - lo) / (hi - lo)) * cells as f64) as usize;
                        s.with_y(s.y + p.magnitude * noise[k.min(cells - 1)])
                    }
                }
            }
        })
        .collect();
    match base {
        Profile::Sampled { .. } => Profile::Sampled { x: xs, states },
        Profile::PiecewiseConstant { .. } => {
            let states_pc: Vec<GasState> = core::iter::once(eval(f64::NEG_INFINITY)).chain(states).collect();
            Profile::PiecewiseConstant { breaks: xs, states: states_pc }
        }
    }
}

/// Same deviation from the left background scaled by `factor`.
pub fn scale_about_left(p: &Profile, factor: f64) -> Profile {
    let base = profile_states(p)[0];
    let scale = |s: &GasState| {
        let (a, b) = (s.to_array(), base.to_array());
        GasState::from_array(core::array::from_fn(|i| b[i] + factor * (a[i] - b[i])))
    };
    match p {
        Profile::PiecewiseConstant { breaks, states } => {
            Profile::PiecewiseConstant { breaks: breaks.clone(), states: states.iter().map(scale).collect() }
        }
        Profile::Sampled { x, states } => Profile::Sampled { x: x.clone(), states: states.iter().map(scale).collect() },
    }
}
