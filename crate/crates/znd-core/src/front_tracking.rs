//! Event-driven front tracking for the homogeneous system (the operator
//! `S_t`): piecewise-constant snapshots, the collision queue, accurate and
//! simplified interaction solvers, non-physical fronts and rarefaction
//! splitting.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};
use libm::{ceil, sqrt};

use crate::gas_dynamics::{
    characteristic_speed, check_admissible, curve_parameter, hugoniot_curve, pressure, solve_riemann, GasState,
    WaveFan, WaveKind, NEGLIGIBLE_STRENGTH,
};
use crate::reaction_scheme::SchemeConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    One,
    Two,
    Three,
    Y,
    Np,
}

impl Family {
    pub fn from_index(i: usize) -> Option<Family> {
        match i {
            1 => Some(Family::One),
            2 => Some(Family::Two),
            3 => Some(Family::Three),
            _ => None,
        }
    }

    /// Gas family index `1..=3`, `None` for reactant and non-physical fronts.
    pub fn index(self) -> Option<usize> {
        match self {
            Family::One => Some(1),
            Family::Two => Some(2),
            Family::Three => Some(3),
            _ => None,
        }
    }

    pub fn is_physical(self) -> bool {
        self.index().is_some()
    }

    pub fn label(self) -> &'static str {
        match self {
            Family::One => "1",
            Family::Two => "2",
            Family::Three => "3",
            Family::Y => "Y",
            Family::Np => "NP",
        }
    }

    pub fn from_label(s: &str) -> Option<Family> {
        match s {
            "1" => Some(Family::One),
            "2" => Some(Family::Two),
            "3" => Some(Family::Three),
            "Y" => Some(Family::Y),
            "NP" => Some(Family::Np),
            _ => None,
        }
    }
}

/// One travelling discontinuity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Front {
    pub id: u64,
    pub family: Family,
    pub position: f64,
    pub speed: f64,
    pub left: GasState,
    pub right: GasState,
    /// Signed curve parameter for gas families, signed `Y` jump for reactant
    /// fronts, jump norm for non-physical fronts.
    pub q: f64,
    pub generation: u32,
    /// Curve-parameter mass of the waves the side states would emit besides
    /// this front's own family.
    pub defect: f64,
}

impl Front {
    pub fn strength(&self) -> f64 {
        self.q.abs()
    }

    pub fn is_shock(&self) -> bool {
        matches!(self.family, Family::One | Family::Three) && self.q < 0.0
    }
}

/// A front that crossed a reactant front, with its strength at the crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub front_id: u64,
    pub strength: f64,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrackingStats {
    pub interactions: u64,
    pub accurate: u64,
    pub simplified: u64,
    pub pass_through: u64,
    pub refreshes: u64,
    pub np_created: u64,
}

/// Piecewise-constant snapshot: fronts sorted by position between two
/// background states.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontSolution {
    pub time: f64,
    pub fronts: Vec<Front>,
    pub left_background: GasState,
    pub right_background: GasState,
    /// Reactant-front id to the fronts that crossed it.
    pub crossing_registry: BTreeMap<u64, Vec<Crossing>>,
    pub next_id: u64,
    pub stats: TrackingStats,
}

impl FrontSolution {
    pub fn constant(state: GasState) -> Self {
        Self {
            time: 0.0,
            fronts: Vec::new(),
            left_background: state,
            right_background: state,
            crossing_registry: BTreeMap::new(),
            next_id: 0,
            stats: TrackingStats::default(),
        }
    }

    /// Left-continuous evaluation: the state just left of `x` when `x` is a front position.
    pub fn state_at(&self, x: f64) -> GasState {
        let k = self.fronts.partition_point(|f| f.position < x);
        if k == 0 {
            self.left_background
        } else {
            self.fronts[k - 1].right
        }
    }

    /// Constant pieces `(a, b, state)` from `-inf` to `+inf`, skipping empty ones.
    pub fn pieces(&self) -> Vec<(f64, f64, GasState)> {
        let mut out = Vec::with_capacity(self.fronts.len() + 1);
        let mut a = f64::NEG_INFINITY;
        let mut s = self.left_background;
        for f in &self.fronts {
            if f.position > a {
                out.push((a, f.position, s));
            }
            a = a.max(f.position);
            s = f.right;
        }
        out.push((a, f64::INFINITY, s));
        out
    }

    /// Supremum of `Y` over all pieces.
    pub fn y_sup(&self) -> f64 {
        self.fronts.iter().fold(self.left_background.y.max(self.right_background.y), |m, f| m.max(f.right.y))
    }

    pub fn total_np_strength(&self) -> f64 {
        self.fronts.iter().filter(|f| f.family == Family::Np).map(|f| f.strength()).sum()
    }

    pub fn front(&self, id: u64) -> Option<&Front> {
        self.fronts.iter().find(|f| f.id == id)
    }

    /// Sortedness, state continuity and background consistency.
    pub fn check_invariants(&self) -> Result<()> {
        let mut prev = self.left_background;
        let mut x = f64::NEG_INFINITY;
        for f in &self.fronts {
            if f.position < x {
                return Err(Error::Invalid("fronts out of order"));
            }
            if f.left != prev {
                return Err(Error::Invalid("state continuity broken"));
            }
            x = f.position;
            prev = f.right;
        }
        if prev != self.right_background {
            return Err(Error::Invalid("right background mismatch"));
        }
        Ok(())
    }

    /// `L1` distance in the Euclidean state norm; infinite when the backgrounds differ.
    pub fn l1_distance(&self, other: &FrontSolution) -> f64 {
        merged_pieces(self, other)
            .iter()
            .map(|(a, b, u, v)| {
                let d = u.distance(v);
                if d == 0.0 {
                    0.0
                } else {
                    d * (b - a)
                }
            })
            .sum()
    }

    /// `S_dt` in place.
    pub fn advance(&mut self, dt: f64, cfg: &SchemeConfig) -> Result<()> {
        conservation_in_place(self, dt, cfg)
    }
}

/// Common refinement of two snapshots: `(a, b, u, v)` per interval.
pub fn merged_pieces(a: &FrontSolution, b: &FrontSolution) -> Vec<(f64, f64, GasState, GasState)> {
    let pa = a.pieces();
    let pb = b.pieces();
    let mut out = Vec::with_capacity(pa.len() + pb.len());
    let (mut i, mut j) = (0, 0);
    let mut lo = f64::NEG_INFINITY;
    while i < pa.len() && j < pb.len() {
        let hi = pa[i].1.min(pb[j].1);
        if hi > lo {
            out.push((lo, hi, pa[i].2, pb[j].2));
        }
        lo = hi;
        if pa[i].1 <= hi {
            i += 1;
        }
        if pb[j].1 <= hi {
            j += 1;
        }
    }
    out
}

/// Initial profile.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `states[k]` on `(breaks[k-1], breaks[k])`; `states.len() == breaks.len() + 1`.
    PiecewiseConstant { breaks: Vec<f64>, states: Vec<GasState> },
    /// Linear interpolation between samples, constant outside.
    Sampled { x: Vec<f64>, states: Vec<GasState> },
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        let (xs, states, n_expected) = match self {
            Profile::PiecewiseConstant { breaks, states } => (breaks, states, breaks.len() + 1),
            Profile::Sampled { x, states } => (x, states, x.len()),
        };
        if states.len() != n_expected || states.is_empty() {
            return Err(Error::Invalid("profile breakpoints and states disagree"));
        }
        if xs.windows(2).any(|w| !(w[0] <= w[1])) || xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("profile abscissae must be sorted and finite"));
        }
        for s in states {
            check_admissible(s)?;
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> GasState {
        match self {
            Profile::PiecewiseConstant { breaks, states } => states[breaks.partition_point(|b| *b < x)],
            Profile::Sampled { x: xs, states } => {
                let k = xs.partition_point(|b| *b < x);
                if k == 0 {
                    return states[0];
                }
                if k == xs.len() {
                    return states[k - 1];
                }
                let (x0, x1) = (xs[k - 1], xs[k]);
                if x1 == x0 {
                    return states[k];
                }
                let w = (x - x0) / (x1 - x0);
                let a = states[k - 1].to_array();
                let b = states[k].to_array();
                GasState::from_array([0, 1, 2, 3].map(|i| a[i] + w * (b[i] - a[i])))
            }
        }
    }

    pub fn total_variation(&self) -> f64 {
        let states = match self {
            Profile::PiecewiseConstant { states, .. } | Profile::Sampled { states, .. } => states,
        };
        states.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    pub fn far_left(&self) -> GasState {
        match self {
            Profile::PiecewiseConstant { states, .. } | Profile::Sampled { states, .. } => states[0],
        }
    }

    pub fn far_right(&self) -> GasState {
        match self {
            Profile::PiecewiseConstant { states, .. } | Profile::Sampled { states, .. } => states[states.len() - 1],
        }
    }
}

/// Piecewise-constant approximation of `profile` with all jumps in
/// `[-1/eps, 1/eps]`, total variation not above that of the profile and
/// `L1` error below `eps`; every jump is resolved into its Riemann fan.
pub fn approximate_initial_data(profile: &Profile, eps: f64, cfg: &SchemeConfig) -> Result<FrontSolution> {
    profile.validate()?;
    if !(eps > 0.0) {
        return Err(Error::Invalid("epsilon must be positive"));
    }
    if profile.total_variation() > cfg.tv_limit {
        return Err(Error::Invalid("total variation above the configured limit"));
    }
    let bound = 1.0 / eps;
    let (breaks, states) = match profile {
        Profile::PiecewiseConstant { breaks, states } => {
            let mut bs = Vec::new();
            let mut ss = Vec::new();
            for (k, b) in breaks.iter().enumerate() {
                if *b < -bound {
                    continue;
                }
                if *b > bound {
                    break;
                }
                if ss.is_empty() {
                    ss.push(states[k]);
                }
                bs.push(*b);
                ss.push(states[k + 1]);
            }
            if ss.is_empty() {
                ss.push(profile.eval(0.0));
            }
            (bs, ss)
        }
        Profile::Sampled { x, states } => quantize(x, states, eps, bound),
    };
    let mut sol = FrontSolution::constant(states[0]);
    sol.right_background = states[states.len() - 1];
    let mut fronts = Vec::new();
    for (k, b) in breaks.iter().enumerate() {
        if states[k] == states[k + 1] {
            continue;
        }
        let fan = solve_riemann(&states[k], &states[k + 1], &cfg.gas)?;
        fronts.extend(fronts_from_fan(&fan, *b, 0, &Keep::default(), &mut sol.next_id, cfg)?);
    }
    sol.fronts = fronts;
    Ok(sol)
}

/// Greedy level quantisation: a new constant piece starts whenever the
/// profile drifts more than `eps / (2 width)` from the current value.
fn quantize(x: &[f64], states: &[GasState], eps: f64, bound: f64) -> (Vec<f64>, Vec<GasState>) {
    let lo = x[0].max(-bound);
    let hi = x[x.len() - 1].min(bound);
    let tol = 0.5 * eps / (hi - lo).max(1.0);
    let first = x.partition_point(|v| *v <= lo).saturating_sub(1);
    let mut breaks = Vec::new();
    let mut out = alloc::vec![states[first]];
    for k in first + 1..x.len() {
        if x[k] > hi {
            break;
        }
        let current = out[out.len() - 1];
        if states[k].distance(&current) <= tol {
            continue;
        }
        // A sharp step jumps halfway between samples, a smooth drift at the previous sample.
        let at = if states[k].distance(&states[k - 1]) > tol { 0.5 * (x[k - 1] + x[k]) } else { x[k - 1] };
        if breaks.last().is_some_and(|b| *b >= at) {
            let n = out.len();
            out[n - 1] = states[k];
        } else {
            breaks.push(at);
            out.push(states[k]);
        }
    }
    // The last piece carries the far-field state exactly.
    let last = x.partition_point(|v| *v <= hi).saturating_sub(1).max(first);
    let n = out.len();
    if out[n - 1] != states[last] {
        if breaks.last().is_some_and(|b| *b >= x[last]) || last == first {
            out[n - 1] = states[last];
        } else {
            breaks.push(x[last]);
            out.push(states[last]);
        }
    }
    (breaks, out)
}

/// Ids that outgoing fronts should inherit, per family.
#[derive(Debug, Clone, Default)]
pub(crate) struct Keep {
    ids: [Option<(u64, u32)>; 5],
}

impl Keep {
    fn slot(f: Family) -> usize {
        match f {
            Family::One => 0,
            Family::Two => 1,
            Family::Three => 2,
            Family::Y => 3,
            Family::Np => 4,
        }
    }

    fn set(&mut self, f: Family, id: u64, generation: u32) {
        self.ids[Self::slot(f)] = Some((id, generation));
    }

    fn get(&self, f: Family) -> Option<(u64, u32)> {
        self.ids[Self::slot(f)]
    }
}

/// Speed of a front from its side states.
pub fn front_speed(family: Family, left: &GasState, right: &GasState, q: f64, cfg: &SchemeConfig) -> Result<f64> {
    let gas = &cfg.gas;
    let g = gas.gamma;
    Ok(match family {
        Family::One | Family::Three if q < 0.0 => {
            let pl = pressure(left, gas)?;
            let pr = pressure(right, gas)?;
            if family == Family::One {
                -sqrt(((g + 1.0) * pr + (g - 1.0) * pl) / (2.0 * left.v))
            } else {
                sqrt(((g + 1.0) * pl + (g - 1.0) * pr) / (2.0 * right.v))
            }
        }
        Family::One | Family::Three => {
            let i = family.index().unwrap_or(1);
            0.5 * (characteristic_speed(i, left, gas)? + characteristic_speed(i, right, gas)?)
        }
        Family::Two | Family::Y => 0.0,
        Family::Np => cfg.lambda_hat,
    })
}

/// Recomputes strength, speed and defect of a front from its side states.
pub fn refit_front(f: &mut Front, cfg: &SchemeConfig) -> Result<()> {
    match f.family {
        Family::Np => {
            f.q = f.left.distance(&f.right);
            f.defect = 0.0;
        }
        Family::Y => {
            f.q = f.right.y - f.left.y;
            f.defect = if f.left.same_gas(&f.right) {
                0.0
            } else {
                let fan = solve_riemann(&f.left.with_y(0.0), &f.right.with_y(0.0), &cfg.gas)?;
                fan.q.iter().map(|q| q.abs()).sum()
            };
        }
        fam => {
            let i = fam.index().unwrap_or(1);
            let fan = solve_riemann(&f.left.with_y(0.0), &f.right.with_y(0.0), &cfg.gas)?;
            f.q = fan.q[i - 1];
            f.defect =
                (0..3).filter(|k| *k != i - 1).map(|k| fan.q[k].abs()).sum::<f64>() + (f.right.y - f.left.y).abs();
            f.speed = front_speed(fam, &f.left, &f.right, f.q, cfg)?;
        }
    }
    Ok(())
}

/// Turns a Riemann fan into fronts at `x`, splitting rarefactions into
/// jumps of at most `delta_r` in the curve parameter.
pub(crate) fn fronts_from_fan(
    fan: &WaveFan,
    x: f64,
    generation: u32,
    keep: &Keep,
    next_id: &mut u64,
    cfg: &SchemeConfig,
) -> Result<Vec<Front>> {
    let gas = &cfg.gas;
    let mut raw: Vec<(Family, GasState, GasState, f64, f64)> = Vec::new();
    for w in &fan.waves {
        match w.family {
            2 => {
                let mid = w.right.with_y(w.left.y);
                if w.q.abs() > NEGLIGIBLE_STRENGTH {
                    raw.push((Family::Two, w.left, mid, w.q, 0.0));
                    if w.left.y != w.right.y {
                        raw.push((Family::Y, mid, w.right, w.right.y - w.left.y, 0.0));
                    }
                } else if w.left.y != w.right.y {
                    raw.push((Family::Y, w.left, w.right, w.right.y - w.left.y, 0.0));
                } else {
                    raw.push((Family::Two, w.left, w.right, w.q, 0.0));
                }
            }
            i => {
                let fam = if i == 1 { Family::One } else { Family::Three };
                if w.kind == WaveKind::Rarefaction && w.q > cfg.delta_r {
                    let m = ceil(w.q / cfg.delta_r) as usize;
                    let mut prev = w.left;
                    for k in 1..=m {
                        let next =
                            if k == m { w.right } else { hugoniot_curve(i, w.q * k as f64 / m as f64, &w.left, gas)? };
                        let q = curve_parameter(i, &prev, &next, gas)?;
                        let s = front_speed(fam, &prev, &next, q, cfg)?;
                        raw.push((fam, prev, next, q, s));
                        prev = next;
                    }
                } else {
                    let s = if w.kind == WaveKind::Shock { w.speed.0 } else { 0.5 * (w.speed.0 + w.speed.1) };
                    raw.push((fam, w.left, w.right, w.q, s));
                }
            }
        }
    }
    let mut out = Vec::with_capacity(raw.len());
    for (fam, left, right, q, speed) in raw.iter().copied() {
        let single = raw.iter().filter(|r| r.0 == fam).count() == 1;
        let (id, gen) = match keep.get(fam) {
            Some((id, _)) if single => (id, generation),
            _ => {
                let id = *next_id;
                *next_id += 1;
                (id, generation)
            }
        };
        out.push(Front { id, family: fam, position: x, speed, left, right, q, generation: gen, defect: 0.0 });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionMode {
    /// Exact exchange of one moving front with reactant fronts.
    PassThrough,
    Accurate,
    Simplified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub outgoing: Vec<Front>,
    pub mode: InteractionMode,
    /// `(reactant front id, crossing)` pairs produced by this interaction.
    pub crossings: Vec<(u64, Crossing)>,
    pub np_created: bool,
}

/// Resolves fronts meeting at `x` (sorted left to right, at least two unless
/// `force_accurate`).
pub fn resolve_interaction(
    incoming: &[Front],
    x: f64,
    time: f64,
    cfg: &SchemeConfig,
    next_id: &mut u64,
    force_accurate: bool,
) -> Result<Interaction> {
    if incoming.is_empty() || (incoming.len() < 2 && !force_accurate) {
        return Err(Error::Invalid("an interaction needs at least two fronts"));
    }
    let left = incoming[0].left;
    let right = incoming[incoming.len() - 1].right;
    let phys: Vec<&Front> = incoming.iter().filter(|f| f.family.is_physical()).collect();
    let n_np = incoming.iter().filter(|f| f.family == Family::Np).count();
    let gen_max = incoming.iter().map(|f| f.generation).max().unwrap_or(0);
    let mut product = 0.0;
    for a in 0..phys.len() {
        for b in a + 1..phys.len() {
            product += phys[a].strength() * phys[b].strength();
        }
    }
    let movers = phys.len() + n_np;
    let mut result = if force_accurate {
        accurate(incoming, left, right, x, gen_max, cfg, next_id)?
    } else if movers == 1 {
        pass_through(incoming, x)
    } else if n_np > 0 || product < cfg.rho || gen_max >= cfg.generation_cap {
        match simplified(incoming, left, right, x, cfg, next_id) {
            Ok(r) => r,
            Err(_) => accurate(incoming, left, right, x, gen_max, cfg, next_id)?,
        }
    } else {
        accurate(incoming, left, right, x, gen_max, cfg, next_id)?
    };
    result.crossings = crossings(incoming, &result.outgoing, time);
    Ok(result)
}

fn pass_through(incoming: &[Front], x: f64) -> Interaction {
    let mover = incoming.iter().copied().find(|f| f.family != Family::Y).unwrap_or(incoming[0]);
    let left = incoming[0].left;
    let right = incoming[incoming.len() - 1].right;
    let ys: Vec<Front> = incoming.iter().filter(|f| f.family == Family::Y).copied().collect();
    let carried: f64 = ys.iter().map(|y| y.defect).sum();
    let mover = Front { defect: mover.defect + carried, position: x, ..mover };
    let mut outgoing = Vec::with_capacity(incoming.len());
    if mover.speed > 0.0 {
        // Reactant jumps end up behind the mover, on the left gas state.
        let mut s = left;
        for y in &ys {
            let next = s.with_y(y.right.y);
            outgoing.push(Front { left: s, right: next, position: x, defect: 0.0, ..*y });
            s = next;
        }
        outgoing.push(Front { left: s, right, ..mover });
    } else {
        let mid = right.with_y(left.y);
        outgoing.push(Front { left, right: mid, ..mover });
        let mut s = mid;
        for y in &ys {
            let next = s.with_y(y.right.y);
            outgoing.push(Front { left: s, right: next, position: x, defect: 0.0, ..*y });
            s = next;
        }
    }
    let n = outgoing.len();
    outgoing[n - 1].right = right;
    Interaction { outgoing, mode: InteractionMode::PassThrough, crossings: Vec::new(), np_created: false }
}

fn accurate(
    incoming: &[Front],
    left: GasState,
    right: GasState,
    x: f64,
    gen_max: u32,
    cfg: &SchemeConfig,
    next_id: &mut u64,
) -> Result<Interaction> {
    let fan = solve_riemann(&left, &right, &cfg.gas)?;
    let mut keep = Keep::default();
    for fam in [Family::One, Family::Two, Family::Three, Family::Y] {
        let mut it = incoming.iter().filter(|f| f.family == fam);
        if let (Some(f), None) = (it.next(), it.next()) {
            keep.set(fam, f.id, f.generation);
        }
    }
    let generation = if incoming.len() == 1 { gen_max } else { gen_max + 1 };
    let mut outgoing = fronts_from_fan(&fan, x, generation, &keep, next_id, cfg)?;
    if outgoing.is_empty() && left != right {
        return Err(Error::Invalid("nonempty jump produced an empty fan"));
    }
    // Reactant fronts are passive: they keep their generation.
    for f in outgoing.iter_mut().filter(|f| f.family == Family::Y) {
        if let Some(y) = incoming.iter().find(|y| y.id == f.id) {
            f.generation = y.generation;
        }
    }
    Ok(Interaction { outgoing, mode: InteractionMode::Accurate, crossings: Vec::new(), np_created: false })
}

fn simplified(
    incoming: &[Front],
    left: GasState,
    right: GasState,
    x: f64,
    cfg: &SchemeConfig,
    next_id: &mut u64,
) -> Result<Interaction> {
    let gas = &cfg.gas;
    let n_phys = incoming.iter().filter(|f| f.family.is_physical()).count();
    if n_phys == 1 && incoming.iter().any(|f| f.family == Family::Np) {
        return translate(incoming, left, right, x, cfg, next_id);
    }
    let mut qsum = [0.0f64; 3];
    let mut count = [0usize; 3];
    let mut ids = [(0u64, 0u32, 0.0f64); 3];
    for f in incoming {
        if let Some(i) = f.family.index() {
            qsum[i - 1] += f.q;
            count[i - 1] += 1;
            ids[i - 1] = (f.id, ids[i - 1].1.max(f.generation), ids[i - 1].2 + f.defect);
        }
    }
    let take_id = |k: usize, next_id: &mut u64| -> (u64, u32, f64) {
        if count[k] == 1 {
            ids[k]
        } else {
            let id = *next_id;
            *next_id += 1;
            (id, ids[k].1, ids[k].2)
        }
    };
    let mut outgoing = Vec::new();
    let mut s = left;
    for k in 0..3 {
        if k == 2 {
            let ys: Vec<&Front> = incoming.iter().filter(|f| f.family == Family::Y).collect();
            if !ys.is_empty() || (right.y - left.y).abs() > cfg.refresh_tol {
                let next = s.with_y(right.y);
                let (id, generation) = match ys.first() {
                    Some(y) => (y.id, y.generation),
                    None => {
                        let id = *next_id;
                        *next_id += 1;
                        (id, 0)
                    }
                };
                outgoing.push(Front {
                    id,
                    family: Family::Y,
                    position: x,
                    speed: 0.0,
                    left: s,
                    right: next,
                    q: next.y - s.y,
                    generation,
                    defect: 0.0,
                });
                s = next;
            }
        }
        if count[k] == 0 {
            continue;
        }
        let fam = Family::from_index(k + 1).unwrap_or(Family::One);
        let next = hugoniot_curve(k + 1, qsum[k], &s, gas)?;
        let (id, generation, defect) = take_id(k, next_id);
        let speed = front_speed(fam, &s, &next, qsum[k], cfg)?;
        outgoing.push(Front {
            id,
            family: fam,
            position: x,
            speed,
            left: s,
            right: next,
            q: qsum[k],
            generation,
            defect,
        });
        s = next;
    }
    // Where the incoming waves would lead without their defects; the gap to
    // `s` is the interaction error, the gap to `right` the carried defects.
    let mut ideal = left;
    for f in incoming {
        if let Some(i) = f.family.index() {
            ideal = hugoniot_curve(i, f.q, &ideal, gas)?;
        }
    }
    let residual = s.gas_distance(&ideal);
    let y_left_over = (right.y - s.y).abs();
    let nps: Vec<&Front> = incoming.iter().filter(|f| f.family == Family::Np).collect();
    let mut np_created = false;
    if (!nps.is_empty() && residual + y_left_over > 0.0) || residual > cfg.np_floor {
        let (id, generation) = if nps.len() == 1 {
            (nps[0].id, nps[0].generation)
        } else {
            let id = *next_id;
            *next_id += 1;
            np_created = nps.is_empty();
            (id, incoming.iter().map(|f| f.generation).max().unwrap_or(0))
        };
        if let Some(last) = outgoing.last_mut() {
            let shifted = GasState::new(
                last.right.v + right.v - ideal.v,
                last.right.u + right.u - ideal.u,
                last.right.energy + right.energy - ideal.energy,
                last.right.y,
            );
            if shifted != last.right {
                last.right = shifted;
                refit_front(last, cfg)?;
            }
            s = shifted;
        }
        outgoing.push(Front {
            id,
            family: Family::Np,
            position: x,
            speed: cfg.lambda_hat,
            left: s,
            right,
            q: s.distance(&right),
            generation,
            defect: 0.0,
        });
    } else if let Some(last) = outgoing.last_mut() {
        last.right = right;
        last.defect += s.gas_distance(&right) + y_left_over;
    } else if s != right {
        return Err(Error::Invalid("simplified solver produced no front to carry the residual"));
    }
    Ok(Interaction { outgoing, mode: InteractionMode::Simplified, crossings: Vec::new(), np_created })
}

/// Non-physical fronts crossing a single physical front: every front keeps
/// its jump vector and the non-physical fronts merge on the right.
fn translate(
    incoming: &[Front],
    left: GasState,
    right: GasState,
    x: f64,
    cfg: &SchemeConfig,
    next_id: &mut u64,
) -> Result<Interaction> {
    let mover = incoming.iter().find(|f| f.family.is_physical()).copied().ok_or(Error::Invalid("no physical front"))?;
    let ys = incoming.iter().filter(|f| f.family == Family::Y);
    let mut order: Vec<Front> = Vec::with_capacity(incoming.len());
    if mover.speed > 0.0 {
        order.extend(ys.copied());
        order.push(mover);
    } else {
        order.push(mover);
        order.extend(ys.copied());
    }
    let mut outgoing = Vec::with_capacity(order.len() + 1);
    let mut s = left;
    for f in order {
        let a = f.left.to_array();
        let b = f.right.to_array();
        let s0 = s.to_array();
        let next =
            GasState::from_array([s0[0] + b[0] - a[0], s0[1] + b[1] - a[1], s0[2] + b[2] - a[2], s0[3] + b[3] - a[3]]);
        let mut g = Front { left: s, right: next, position: x, ..f };
        refit_front(&mut g, cfg)?;
        outgoing.push(g);
        s = next;
    }
    let nps: Vec<&Front> = incoming.iter().filter(|f| f.family == Family::Np).collect();
    let (id, generation) = if nps.len() == 1 {
        (nps[0].id, nps[0].generation)
    } else {
        let id = *next_id;
        *next_id += 1;
        (id, nps.iter().map(|f| f.generation).max().unwrap_or(0))
    };
    let mut np = Front {
        id,
        family: Family::Np,
        position: x,
        speed: cfg.lambda_hat,
        left: s,
        right,
        q: 0.0,
        generation,
        defect: 0.0,
    };
    refit_front(&mut np, cfg)?;
    outgoing.push(np);
    Ok(Interaction { outgoing, mode: InteractionMode::Simplified, crossings: Vec::new(), np_created: false })
}

/// Outgoing fronts that ended on the other side of a reactant front than the
/// incoming fronts of their family.
fn crossings(incoming: &[Front], outgoing: &[Front], time: f64) -> Vec<(u64, Crossing)> {
    let mut out = Vec::new();
    for (yi, y) in incoming.iter().enumerate().filter(|(_, f)| f.family == Family::Y) {
        let Some(yo) = outgoing.iter().position(|f| f.id == y.id) else { continue };
        for (oi, o) in outgoing.iter().enumerate() {
            if o.family == Family::Y {
                continue;
            }
            let crossed = incoming.iter().enumerate().any(|(ii, f)| f.family == o.family && ((ii < yi) != (oi < yo)));
            if crossed {
                out.push((y.id, Crossing { front_id: o.id, strength: o.strength(), time }));
            }
        }
    }
    out
}

fn apply_crossings(sol: &mut FrontSolution, crossings: &[(u64, Crossing)], dead: &[u64]) {
    for (yid, c) in crossings {
        let list = sol.crossing_registry.entry(*yid).or_default();
        list.retain(|e| e.front_id != c.front_id);
        list.push(*c);
    }
    if !dead.is_empty() {
        for list in sol.crossing_registry.values_mut() {
            list.retain(|e| !dead.contains(&e.front_id));
        }
        sol.crossing_registry.retain(|yid, list| !list.is_empty() && !dead.contains(yid));
    }
}

/// Earliest future meeting of two adjacent fronts, by brute-force scan.
pub fn next_collision(sol: &FrontSolution) -> Option<(f64, Vec<u64>)> {
    let mut best: Option<(f64, f64, u64, u64)> = None;
    for w in sol.fronts.windows(2) {
        if let Some(t) = meeting_time(&w[0], &w[1], sol.time) {
            let x = w[0].position + w[0].speed * (t - sol.time);
            let cand = (t, x, w[0].id, w[1].id);
            let better = match best {
                None => true,
                Some(b) => (cand.0, cand.1, cand.2).partial_cmp(&(b.0, b.1, b.2)) == Some(Ordering::Less),
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best.map(|(t, _, a, b)| (t, alloc::vec![a, b]))
}

fn meeting_time(a: &Front, b: &Front, now: f64) -> Option<f64> {
    if a.speed > b.speed {
        Some(now + (b.position - a.position).max(0.0) / (a.speed - b.speed))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    position: f64,
    left: u64,
    right: u64,
    left_speed: f64,
    right_speed: f64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.position.total_cmp(&other.position))
            .then(self.left.cmp(&other.left))
            .then(self.right.cmp(&other.right))
    }
}

fn push_pair(heap: &mut BinaryHeap<Reverse<Event>>, fronts: &[Front], k: usize, now: f64, t_end: f64) {
    if k + 1 >= fronts.len() {
        return;
    }
    let (a, b) = (&fronts[k], &fronts[k + 1]);
    if let Some(t) = meeting_time(a, b, now) {
        if t <= t_end {
            heap.push(Reverse(Event {
                time: t,
                position: a.position + a.speed * (t - now),
                left: a.id,
                right: b.id,
                left_speed: a.speed,
                right_speed: b.speed,
            }));
        }
    }
}

fn same_point_tolerance(x: f64) -> f64 {
    1e-10 * (1.0 + x.abs())
}

fn move_all(sol: &mut FrontSolution, t: f64) {
    let dt = t - sol.time;
    if dt != 0.0 {
        for f in &mut sol.fronts {
            f.position += f.speed * dt;
        }
    }
    sol.time = t;
}

fn group_around(fronts: &[Front], a: usize, b: usize, x: f64) -> (usize, usize) {
    let tol = same_point_tolerance(x);
    let (mut lo, mut hi) = (a, b);
    while lo > 0 && (fronts[lo - 1].position - x).abs() <= tol {
        lo -= 1;
    }
    while hi + 1 < fronts.len() && (fronts[hi + 1].position - x).abs() <= tol {
        hi += 1;
    }
    (lo, hi)
}

fn splice_interaction(sol: &mut FrontSolution, lo: usize, hi: usize, inter: Interaction) -> usize {
    let dead: Vec<u64> =
        sol.fronts[lo..=hi].iter().map(|f| f.id).filter(|id| !inter.outgoing.iter().any(|o| o.id == *id)).collect();
    apply_crossings(sol, &inter.crossings, &dead);
    let n = inter.outgoing.len();
    sol.stats.interactions += 1;
    match inter.mode {
        InteractionMode::Accurate => sol.stats.accurate += 1,
        InteractionMode::Simplified => sol.stats.simplified += 1,
        InteractionMode::PassThrough => sol.stats.pass_through += 1,
    }
    if inter.np_created {
        sol.stats.np_created += 1;
    }
    sol.fronts.splice(lo..=hi, inter.outgoing);
    n
}

/// Sortedness and continuity around the `n` fronts spliced in at `lo`.
fn locally_consistent(sol: &FrontSolution, lo: usize, n: usize) -> bool {
    let from = lo.saturating_sub(1);
    let to = (lo + n + 1).min(sol.fronts.len());
    let mut ok = sol.fronts[from..to].windows(2).all(|w| w[0].position <= w[1].position && w[0].right == w[1].left);
    if from == 0 {
        ok &= sol.fronts.first().is_none_or(|f| f.left == sol.left_background);
    }
    if to == sol.fronts.len() {
        ok &= sol.fronts.last().is_none_or(|f| f.right == sol.right_background);
    }
    ok
}

/// Re-solves every physical front whose defect exceeds `refresh_tol`.
/// The new fronts share the old position, so the represented function is unchanged.
pub fn refresh(sol: &mut FrontSolution, cfg: &SchemeConfig) -> Result<()> {
    let mut k = 0;
    while k < sol.fronts.len() {
        let f = &sol.fronts[k];
        if f.family != Family::Np && f.defect > cfg.refresh_tol {
            let x = f.position;
            let (lo, hi) = group_around(&sol.fronts, k, k, x);
            let mut next_id = sol.next_id;
            let inter = resolve_interaction(&sol.fronts[lo..=hi], x, sol.time, cfg, &mut next_id, true)?;
            sol.next_id = next_id;
            sol.stats.refreshes += 1;
            let n = splice_interaction(sol, lo, hi, inter);
            sol.stats.interactions -= 1;
            sol.stats.accurate -= 1;
            k = lo + n;
        } else {
            k += 1;
        }
    }
    Ok(())
}

fn conservation_in_place(sol: &mut FrontSolution, dt: f64, cfg: &SchemeConfig) -> Result<()> {
    if !(dt >= 0.0) {
        return Err(Error::Invalid("time step must be nonnegative"));
    }
    if dt == 0.0 {
        return Ok(());
    }
    let t_end = sol.time + dt;
    refresh(sol, cfg)?;
    let mut heap = BinaryHeap::new();
    for k in 0..sol.fronts.len().saturating_sub(1) {
        push_pair(&mut heap, &sol.fronts, k, sol.time, t_end);
    }
    let mut events = 0usize;
    while let Some(Reverse(ev)) = heap.pop() {
        let Some(k) = sol.fronts.iter().position(|f| f.id == ev.left) else { continue };
        if k + 1 >= sol.fronts.len()
            || sol.fronts[k + 1].id != ev.right
            || sol.fronts[k].speed != ev.left_speed
            || sol.fronts[k + 1].speed != ev.right_speed
        {
            continue;
        }
        let t = ev.time.max(sol.time);
        move_all(sol, t);
        let x = sol.fronts[k].position;
        let (lo, hi) = group_around(&sol.fronts, k, k + 1, x);
        let mut next_id = sol.next_id;
        let mut inter = resolve_interaction(&sol.fronts[lo..=hi], x, t, cfg, &mut next_id, false)?;
        sol.next_id = next_id;
        for f in &mut inter.outgoing {
            f.position = x;
        }
        let n = splice_interaction(sol, lo, hi, inter);
        debug_assert!(locally_consistent(sol, lo, n), "invariants broken at t = {t}");
        events += 1;
        if events > cfg.event_budget {
            return Err(Error::CollisionCascade(cfg.event_budget));
        }
        let from = lo.saturating_sub(1);
        for j in from..(lo + n).min(sol.fronts.len()) {
            push_pair(&mut heap, &sol.fronts, j, sol.time, t_end);
        }
    }
    move_all(sol, t_end);
    Ok(())
}

/// `S_dt` as a pure function.
pub fn conservation_step(sol: &FrontSolution, dt: f64, cfg: &SchemeConfig) -> Result<FrontSolution> {
    let mut out = sol.clone();
    conservation_in_place(&mut out, dt, cfg)?;
    Ok(out)
}

/// Builds a front from its side states, with strength, speed and defect refitted.
pub fn front_between(
    id: u64,
    family: Family,
    position: f64,
    left: GasState,
    right: GasState,
    cfg: &SchemeConfig,
) -> Result<Front> {
    let mut f = Front { id, family, position, speed: 0.0, left, right, q: 0.0, generation: 0, defect: 0.0 };
    refit_front(&mut f, cfg)?;
    if family == Family::Np {
        f.speed = cfg.lambda_hat;
    }
    Ok(f)
}
