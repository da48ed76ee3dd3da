//! Gas core of the model: equation of state, Arrhenius rate, eigenstructure,
//! wave curves, the exact Lagrangian Riemann solver and the decomposition of
//! a state jump into wave-curve coordinates.
//!
//! Closure: `e = E - u^2/2`, `p = (gamma - 1) e / v`, `T = e / c`.
//! The reactant fraction `Y` is passive for the gas part and only jumps
//! across the stationary wave.

use alloc::vec::Vec;
use libm::{exp, expm1, log, log1p, pow, sqrt};

use crate::{Error, Result};

/// One constant state `U = (v, u, E, Y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasState {
    /// Specific volume.
    pub v: f64,
    /// Velocity.
    pub u: f64,
    /// Total energy per unit mass `E`.
    pub energy: f64,
    /// Reactant mass fraction `Y`.
    pub y: f64,
}

impl GasState {
    pub const fn new(v: f64, u: f64, energy: f64, y: f64) -> Self {
        Self { v, u, energy, y }
    }

    /// Builds the state with given specific volume, velocity and pressure.
    pub fn from_pressure(v: f64, u: f64, p: f64, y: f64, gas: &GasParams) -> Self {
        Self { v, u, energy: p * v / (gas.gamma - 1.0) + 0.5 * u * u, y }
    }

    pub fn internal_energy(&self) -> f64 {
        self.energy - 0.5 * self.u * self.u
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.v, self.u, self.energy, self.y]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self { v: a[0], u: a[1], energy: a[2], y: a[3] }
    }

    /// `(v, u, E)` part.
    pub fn gas_part(&self) -> [f64; 3] {
        [self.v, self.u, self.energy]
    }

    /// Same `(v, u, E)` with reactant fraction `y`.
    pub fn with_y(&self, y: f64) -> Self {
        Self { y, ..*self }
    }

    /// Euclidean distance over all four components.
    pub fn distance(&self, other: &GasState) -> f64 {
        let a = self.to_array();
        let b = other.to_array();
        sqrt((0..4).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum())
    }

    /// Euclidean distance over `(v, u, E)`.
    pub fn gas_distance(&self, other: &GasState) -> f64 {
        let a = self.gas_part();
        let b = other.gas_part();
        sqrt((0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum())
    }

    pub fn same_gas(&self, other: &GasState) -> bool {
        self.v == other.v && self.u == other.u && self.energy == other.energy
    }
}

/// Material constants of the mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasParams {
    /// Adiabatic exponent `gamma > 1`.
    pub gamma: f64,
    /// Specific heat `c > 0`.
    pub c: f64,
    /// Binding energy `q > 0`.
    pub q_heat: f64,
    /// Rate exponent `alpha`.
    pub alpha: f64,
    /// Activation constant `beta`.
    pub beta: f64,
}

impl Default for GasParams {
    fn default() -> Self {
        Self { gamma: 1.4, c: 1.0, q_heat: 1.0, alpha: 1.0, beta: 2.0 }
    }
}

impl GasParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) {
            return Err(Error::Invalid("gamma must exceed 1"));
        }
        if !(self.c > 0.0) {
            return Err(Error::Invalid("specific heat must be positive"));
        }
        if !(self.q_heat > 0.0) {
            return Err(Error::Invalid("binding energy must be positive"));
        }
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::Invalid("rate constants must be positive"));
        }
        Ok(())
    }
}

pub fn check_admissible(s: &GasState) -> Result<()> {
    if !(s.v > 0.0) || !s.v.is_finite() {
        return Err(Error::Domain("specific volume must be positive"));
    }
    if !(s.internal_energy() > 0.0) || !s.energy.is_finite() || !s.u.is_finite() {
        return Err(Error::Domain("internal energy must be positive"));
    }
    if !(0.0..=1.0).contains(&s.y) {
        return Err(Error::Domain("reactant fraction outside [0, 1]"));
    }
    Ok(())
}

fn gas_admissible(s: &GasState) -> Result<()> {
    if !(s.v > 0.0) || !s.v.is_finite() {
        return Err(Error::Domain("specific volume must be positive"));
    }
    if !(s.internal_energy() > 0.0) || !s.energy.is_finite() || !s.u.is_finite() {
        return Err(Error::Domain("internal energy must be positive"));
    }
    Ok(())
}

pub fn pressure(s: &GasState, gas: &GasParams) -> Result<f64> {
    gas_admissible(s)?;
    Ok(raw_pressure(s, gas))
}

fn raw_pressure(s: &GasState, gas: &GasParams) -> f64 {
    (gas.gamma - 1.0) * s.internal_energy() / s.v
}

pub fn temperature(s: &GasState, gas: &GasParams) -> Result<f64> {
    let e = s.internal_energy();
    if !(e > 0.0) {
        return Err(Error::Domain("internal energy must be positive"));
    }
    Ok(e / gas.c)
}

/// Arrhenius rate `phi(T) = T^alpha exp(-beta / T)`.
pub fn reaction_rate(t: f64, gas: &GasParams) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain("temperature must be positive"));
    }
    Ok(pow(t, gas.alpha) * exp(-gas.beta / t))
}

/// Lagrangian sound speed `sqrt(gamma p / v)`.
pub fn sound_speed(s: &GasState, gas: &GasParams) -> Result<f64> {
    let p = pressure(s, gas)?;
    Ok(sqrt(gas.gamma * p / s.v))
}

pub fn eigenvalues(s: &GasState, gas: &GasParams) -> Result<[f64; 4]> {
    let c = sound_speed(s, gas)?;
    Ok([-c, 0.0, c, 0.0])
}

/// Characteristic speed of family 1 or 3; zero for the contact.
pub fn characteristic_speed(family: usize, s: &GasState, gas: &GasParams) -> Result<f64> {
    match family {
        1 => Ok(-sound_speed(s, gas)?),
        2 => Ok(0.0),
        3 => sound_speed(s, gas),
        _ => Err(Error::Invalid("wave family must be 1, 2 or 3")),
    }
}

/// Source term `G(U) = (0, 0, q Y phi(T), -Y phi(T))`.
pub fn source(s: &GasState, gas: &GasParams) -> Result<[f64; 4]> {
    let rate = reaction_rate(temperature(s, gas)?, gas)?;
    Ok([0.0, 0.0, gas.q_heat * s.y * rate, -s.y * rate])
}

/// Unit right eigenvectors of the `(v, u, E)` system, `r[i]` for family `i + 1`.
///
/// Families 1 and 3 are oriented so that the characteristic speed increases
/// along `r`; the contact vector points towards increasing `v`.
pub fn right_eigenvectors(s: &GasState, gas: &GasParams) -> Result<[[f64; 3]; 3]> {
    let p = pressure(s, gas)?;
    let c = sqrt(gas.gamma * p / s.v);
    let r1 = [1.0, c, s.u * c - p];
    let r2 = [1.0, 0.0, p / (gas.gamma - 1.0)];
    let r3 = [-1.0, c, p + s.u * c];
    Ok([unit(r1), unit(r2), unit(r3)])
}

/// Left eigenvectors normalised against [`right_eigenvectors`]: `l[i] . r[j] = delta_ij`.
pub fn left_eigenvectors(s: &GasState, gas: &GasParams) -> Result<[[f64; 3]; 3]> {
    let r = right_eigenvectors(s, gas)?;
    let m = [[r[0][0], r[1][0], r[2][0]], [r[0][1], r[1][1], r[2][1]], [r[0][2], r[1][2], r[2][2]]];
    invert3(&m).ok_or(Error::Domain("degenerate eigenvector basis"))
}

fn unit(a: [f64; 3]) -> [f64; 3] {
    let n = sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    [a[0] / n, a[1] / n, a[2] / n]
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub(crate) fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let d = det3(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, e) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (m[a][c] * m[b][e] - m[a][e] * m[b][c]) / d;
        }
    }
    Some(inv)
}

/// Norm of the unnormalised family-1/3 eigenvector, i.e. the factor linking
/// the curve parameter to the pressure change: `dp/dq = -/+ C^2 / N`.
fn acoustic_norm(family: usize, s: &GasState, p: f64, c: f64) -> f64 {
    let e = if family == 1 { s.u * c - p } else { p + s.u * c };
    sqrt(1.0 + c * c + e * e)
}

fn contact_norm(p: f64, gas: &GasParams) -> f64 {
    let e = p / (gas.gamma - 1.0);
    sqrt(1.0 + e * e)
}

/// Ratio `v_post / v_pre` across a shock on the Hugoniot locus.
fn hugoniot_volume_ratio(p_pre: f64, p_post: f64, gamma: f64) -> f64 {
    ((gamma + 1.0) * p_pre + (gamma - 1.0) * p_post) / ((gamma + 1.0) * p_post + (gamma - 1.0) * p_pre)
}

/// State reached from `base` (the left state of the wave) along the full
/// family-1 or family-3 wave curve at pressure `p`.
pub fn wave_curve_at_pressure(family: usize, base: &GasState, p: f64, gas: &GasParams) -> Result<GasState> {
    if family != 1 && family != 3 {
        return Err(Error::Invalid("acoustic wave family must be 1 or 3"));
    }
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Domain("wave curve left the admissible region"));
    }
    let g = gas.gamma;
    let pb = pressure(base, gas)?;
    let vb = base.v;
    let dp = p - pb;
    let rarefaction = if family == 1 { p <= pb } else { p >= pb };
    let (v, u) = if rarefaction {
        let l = log1p(dp / pb);
        let v = vb * exp(-l / g);
        let ab = sqrt(g * pb * vb);
        let da = ab * expm1(l * (g - 1.0) / (2.0 * g));
        let du = 2.0 * da / (g - 1.0);
        (v, if family == 1 { base.u - du } else { base.u + du })
    } else {
        let denom = (g + 1.0) * p + (g - 1.0) * pb;
        let v = vb * hugoniot_volume_ratio(pb, p, g);
        (v, base.u - dp.abs() * sqrt(2.0 * vb / denom))
    };
    Ok(GasState::from_pressure(v, u, p, base.y, gas))
}

/// Wave curve `H_i(q)(base)`.
///
/// Families 1 and 3 follow the full wave curve (rarefaction for `q > 0`,
/// shock for `q < 0`) with the pressure linear in `q`; family 2 moves `v`
/// linearly at fixed `p` and `u`. In every case the tangent at `q = 0` is the
/// unit right eigenvector. `Y` is carried unchanged.
pub fn hugoniot_curve(family: usize, q: f64, base: &GasState, gas: &GasParams) -> Result<GasState> {
    let p = pressure(base, gas)?;
    if q == 0.0 {
        if family == 0 || family > 3 {
            return Err(Error::Invalid("wave family must be 1, 2 or 3"));
        }
        return Ok(*base);
    }
    match family {
        1 | 3 => {
            let c = sqrt(gas.gamma * p / base.v);
            let slope = c * c / acoustic_norm(family, base, p, c);
            let target = if family == 1 { p - q * slope } else { p + q * slope };
            wave_curve_at_pressure(family, base, target, gas)
        }
        2 => {
            let v = base.v + q / contact_norm(p, gas);
            if !(v > 0.0) {
                return Err(Error::Domain("contact curve left the admissible region"));
            }
            Ok(GasState::from_pressure(v, base.u, p, base.y, gas))
        }
        _ => Err(Error::Invalid("wave family must be 1, 2 or 3")),
    }
}

/// Curve parameter of the family-`family` wave joining `left` to `right`,
/// read off the pressure (families 1, 3) or the volume (family 2).
///
/// Exact when `right` lies on the curve through `left`.
pub fn curve_parameter(family: usize, left: &GasState, right: &GasState, gas: &GasParams) -> Result<f64> {
    let pl = pressure(left, gas)?;
    match family {
        1 | 3 => {
            let pr = pressure(right, gas)?;
            let c = sqrt(gas.gamma * pl / left.v);
            let n = acoustic_norm(family, left, pl, c);
            let dp = if family == 1 { pl - pr } else { pr - pl };
            Ok(dp * n / (c * c))
        }
        2 => Ok((right.v - left.v) * contact_norm(pl, gas)),
        _ => Err(Error::Invalid("wave family must be 1, 2 or 3")),
    }
}

/// `H_3(q_3) o H_2(q_2) o H_1(q_1)(base)`.
pub fn compose(q: [f64; 3], base: &GasState, gas: &GasParams) -> Result<GasState> {
    let s1 = hugoniot_curve(1, q[0], base, gas)?;
    let s2 = hugoniot_curve(2, q[1], &s1, gas)?;
    hugoniot_curve(3, q[2], &s2, gas)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveKind {
    Shock,
    Rarefaction,
    Contact,
}

/// One elementary wave of a Riemann fan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub family: usize,
    pub kind: WaveKind,
    pub left: GasState,
    pub right: GasState,
    /// Signed curve parameter, `right = H_family(q)(left)`.
    pub q: f64,
    /// `(lowest, highest)` self-similar speed occupied by the wave.
    pub speed: (f64, f64),
}

/// Self-similar solution of a Riemann problem.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFan {
    pub left: GasState,
    pub right: GasState,
    pub waves: Vec<Wave>,
    pub p_star: f64,
    pub u_star: f64,
    /// Curve parameters of all three families, including those too weak to
    /// be emitted as waves.
    pub q: [f64; 3],
}

/// Waves whose curve parameter is below this are not emitted.
pub const NEGLIGIBLE_STRENGTH: f64 = 1e-14;

impl WaveFan {
    /// State at self-similar coordinate `xi = x / t`.
    pub fn sample(&self, xi: f64, gas: &GasParams) -> GasState {
        let mut current = self.left;
        for w in &self.waves {
            if xi < w.speed.0 {
                return current;
            }
            if xi < w.speed.1 {
                return rarefaction_interior(w, xi, gas);
            }
            current = w.right;
        }
        current
    }

    pub fn is_empty(&self) -> bool {
        self.waves.is_empty()
    }

    pub fn wave(&self, family: usize) -> Option<&Wave> {
        self.waves.iter().find(|w| w.family == family)
    }
}

fn rarefaction_interior(w: &Wave, xi: f64, gas: &GasParams) -> GasState {
    let g = gas.gamma;
    let base = &w.left;
    let pb = raw_pressure(base, gas);
    let k = pb * pow(base.v, g);
    let c = xi.abs();
    let v = pow(g * k / (c * c), 1.0 / (g + 1.0));
    let p = k * pow(v, -g);
    let da = 2.0 * (sqrt(g * p * v) - sqrt(g * pb * base.v)) / (g - 1.0);
    let u = if w.family == 1 { base.u - da } else { base.u + da };
    GasState::from_pressure(v, u, p, base.y, gas)
}

/// Velocity jump function of the pressure for the side state `s` and its derivative.
fn velocity_jump(s: &GasState, ps: f64, p: f64, gas: &GasParams) -> (f64, f64) {
    let g = gas.gamma;
    if p > ps {
        let a = 2.0 * s.v / (g + 1.0);
        let b = (g - 1.0) / (g + 1.0) * ps;
        let root = sqrt(a / (p + b));
        ((p - ps) * root, root * (1.0 - 0.5 * (p - ps) / (p + b)))
    } else {
        let a = sqrt(g * ps * s.v);
        let z = (g - 1.0) / (2.0 * g);
        let l = log(p / ps);
        let f = 2.0 * a / (g - 1.0) * expm1(z * l);
        let df = s.v / a * exp(-(g + 1.0) / (2.0 * g) * l);
        (f, df)
    }
}

const RIEMANN_TOL: f64 = 1e-12;
const RIEMANN_MAX_ITER: usize = 200;

/// Middle pressure of the Riemann problem: Newton with a maintained bracket,
/// falling back to bisection whenever the Newton step leaves the bracket.
fn star_pressure(l: &GasState, pl: f64, r: &GasState, pr: f64, gas: &GasParams) -> Result<f64> {
    let g = gas.gamma;
    let du = r.u - l.u;
    if pl == pr && du == 0.0 {
        return Ok(pl);
    }
    let al = sqrt(g * pl * l.v);
    let ar = sqrt(g * pr * r.v);
    if du >= 2.0 * (al + ar) / (g - 1.0) {
        return Err(Error::NoSolution);
    }
    let f = |p: f64| {
        let (fl, dl) = velocity_jump(l, pl, p, gas);
        let (fr, dr) = velocity_jump(r, pr, p, gas);
        (fl + fr + du, dl + dr)
    };
    let mut lo = 0.0_f64;
    let mut hi = pl.max(pr);
    let mut guard = 0;
    while f(hi).0 < 0.0 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::NoSolution);
        }
    }
    // Acoustic (linearised) initial guess.
    let zl = al / l.v;
    let zr = ar / r.v;
    let mut p = (zr * pl + zl * pr - zl * zr * du) / (zl + zr);
    if !(p > lo && p < hi) {
        p = 0.5 * (lo + hi);
    }
    for _ in 0..RIEMANN_MAX_ITER {
        let (fp, dfp) = f(p);
        if fp == 0.0 {
            return Ok(p);
        }
        if fp < 0.0 {
            lo = lo.max(p);
        } else {
            hi = hi.min(p);
        }
        let mut next = p - fp / dfp;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - p).abs() <= RIEMANN_TOL * p {
            // One extra Newton step drives the error well below the tolerance.
            let (fn_, dfn) = f(next);
            let polished = next - fn_ / dfn;
            return Ok(if polished > lo && polished < hi { polished } else { next });
        }
        p = next;
        if hi - lo <= RIEMANN_TOL * 1e-3 * hi {
            return Ok(p);
        }
    }
    Err(Error::NoSolution)
}

/// Exact solution of the Lagrangian Riemann problem for the `(v, u, E)`
/// system with `Y` jumping only across the stationary wave.
pub fn solve_riemann(left: &GasState, right: &GasState, gas: &GasParams) -> Result<WaveFan> {
    gas_admissible(left)?;
    gas_admissible(right)?;
    let mut fan = WaveFan { left: *left, right: *right, waves: Vec::new(), p_star: 0.0, u_star: 0.0, q: [0.0; 3] };
    let pl = raw_pressure(left, gas);
    let pr = raw_pressure(right, gas);
    if left == right {
        fan.p_star = pl;
        fan.u_star = left.u;
        return Ok(fan);
    }
    let g = gas.gamma;
    let ps = star_pressure(left, pl, right, pr, gas)?;
    let (fl, _) = velocity_jump(left, pl, ps, gas);
    let (fr, _) = velocity_jump(right, pr, ps, gas);
    let us = 0.5 * (left.u + right.u) + 0.5 * (fr - fl);
    fan.p_star = ps;
    fan.u_star = us;

    let vl_star = if ps > pl { left.v * hugoniot_volume_ratio(pl, ps, g) } else { left.v * exp(-log(ps / pl) / g) };
    let vr_star = if ps > pr { right.v * hugoniot_volume_ratio(pr, ps, g) } else { right.v * exp(-log(ps / pr) / g) };
    let s1 = GasState::from_pressure(vl_star, us, ps, left.y, gas);
    let s2 = GasState::from_pressure(vr_star, us, ps, right.y, gas);

    let cl = sqrt(g * pl / left.v);
    let q1 = (pl - ps) * acoustic_norm(1, left, pl, cl) / (cl * cl);
    let q2 = (vr_star - vl_star) * contact_norm(ps, gas);
    let c2 = sqrt(g * ps / vr_star);
    let q3 = (pr - ps) * acoustic_norm(3, &s2, ps, c2) / (c2 * c2);
    fan.q = [q1, q2, q3];

    let present = [
        q1.abs() > NEGLIGIBLE_STRENGTH,
        q2.abs() > NEGLIGIBLE_STRENGTH || left.y != right.y,
        q3.abs() > NEGLIGIBLE_STRENGTH,
    ];
    let mut present = present;
    if present.iter().all(|p| !p) {
        let k = (0..3).fold(0, |m, k| if fan.q[k].abs() > fan.q[m].abs() { k } else { m });
        present[k] = true;
    }
    let targets = [s1, s2, *right];
    let last = (0..3).rev().find(|&k| present[k]);
    let mut current = *left;
    for k in 0..3 {
        if !present[k] {
            continue;
        }
        let target = if Some(k) == last { *right } else { targets[k] };
        let family = k + 1;
        let (kind, speed) = match family {
            1 if q1 > 0.0 => (WaveKind::Rarefaction, (-cl, -sqrt(g * ps / vl_star))),
            1 => {
                let s = -sqrt(((g + 1.0) * ps + (g - 1.0) * pl) / (2.0 * left.v));
                (WaveKind::Shock, (s, s))
            }
            2 => (WaveKind::Contact, (0.0, 0.0)),
            _ if q3 > 0.0 => (WaveKind::Rarefaction, (c2, sqrt(g * pr / right.v))),
            _ => {
                let s = sqrt(((g + 1.0) * ps + (g - 1.0) * pr) / (2.0 * right.v));
                (WaveKind::Shock, (s, s))
            }
        };
        fan.waves.push(Wave { family, kind, left: current, right: target, q: fan.q[k], speed });
        current = target;
    }
    Ok(fan)
}

const DECOMPOSE_TOL: f64 = 1e-12;
const DECOMPOSE_MAX_ITER: usize = 50;

fn residual(q: [f64; 3], base: &GasState, target: &[f64; 3], gas: &GasParams) -> Result<[f64; 3]> {
    let s = compose(q, base, gas)?.gas_part();
    Ok([s[0] - target[0], s[1] - target[1], s[2] - target[2]])
}

fn norm3(a: &[f64; 3]) -> f64 {
    sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
}

/// Curve coordinates `q` with `H_3(q_3) o H_2(q_2) o H_1(q_1)(u1) = u2` on `(v, u, E)`.
///
/// Newton iteration started from the projection of `u2 - u1` on the left
/// eigenvectors at `u1`, with a forward-difference Jacobian and step halving.
pub fn decompose_q(u1: &GasState, u2: &GasState, gas: &GasParams) -> Result<[f64; 3]> {
    gas_admissible(u1)?;
    gas_admissible(u2)?;
    if u1.same_gas(u2) {
        return Ok([0.0; 3]);
    }
    let target = u2.gas_part();
    let base = u1.gas_part();
    let tol = DECOMPOSE_TOL * (1.0 + norm3(&target));
    let l = left_eigenvectors(u1, gas)?;
    let d = [target[0] - base[0], target[1] - base[1], target[2] - base[2]];
    let mut q = [0.0; 3];
    for i in 0..3 {
        q[i] = l[i][0] * d[0] + l[i][1] * d[1] + l[i][2] * d[2];
    }
    let mut r = match residual(q, u1, &target, gas) {
        Ok(r) => r,
        Err(_) => {
            q = [0.0; 3];
            residual(q, u1, &target, gas)?
        }
    };
    let mut rn = norm3(&r);
    for it in 0..DECOMPOSE_MAX_ITER {
        if rn <= tol {
            return Ok(q);
        }
        let mut jac = [[0.0; 3]; 3];
        for j in 0..3 {
            let h = 1e-7 * (1.0 + q[j].abs());
            let mut qh = q;
            qh[j] += h;
            let (rh, step) = match residual(qh, u1, &target, gas) {
                Ok(x) => (x, h),
                Err(_) => {
                    qh[j] = q[j] - h;
                    (residual(qh, u1, &target, gas)?, -h)
                }
            };
            for i in 0..3 {
                jac[i][j] = (rh[i] - r[i]) / step;
            }
        }
        let inv = invert3(&jac).ok_or(Error::NoConvergence { iterations: it, residual: rn })?;
        let step = [
            -(inv[0][0] * r[0] + inv[0][1] * r[1] + inv[0][2] * r[2]),
            -(inv[1][0] * r[0] + inv[1][1] * r[1] + inv[1][2] * r[2]),
            -(inv[2][0] * r[0] + inv[2][1] * r[1] + inv[2][2] * r[2]),
        ];
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = [q[0] + lambda * step[0], q[1] + lambda * step[1], q[2] + lambda * step[2]];
            if let Ok(rt) = residual(trial, u1, &target, gas) {
                let rtn = norm3(&rt);
                if rtn < rn || rtn <= tol {
                    q = trial;
                    r = rt;
                    rn = rtn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return if rn <= 1e3 * tol { Ok(q) } else { Err(Error::NoConvergence { iterations: it, residual: rn }) };
        }
    }
    if rn <= tol {
        Ok(q)
    } else {
        Err(Error::NoConvergence { iterations: DECOMPOSE_MAX_ITER, residual: rn })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gas() -> GasParams {
        GasParams::default()
    }

    #[test]
    fn pressure_examples() {
        let g = gas();
        assert_relative_eq!(pressure(&GasState::new(1.0, 0.0, 2.5, 0.0), &g).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(pressure(&GasState::new(2.0, 0.0, 2.5, 0.0), &g).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(pressure(&GasState::new(1.0, 1.0, 3.0, 0.0), &g).unwrap(), 1.0, epsilon = 1e-15);
        assert!(pressure(&GasState::new(1.0, 3.0, 2.5, 0.0), &g).is_err());
        assert!(pressure(&GasState::new(-1.0, 0.0, 2.5, 0.0), &g).is_err());
    }

    #[test]
    fn temperature_examples() {
        let mut g = gas();
        assert_eq!(temperature(&GasState::new(1.0, 0.0, 2.5, 0.0), &g).unwrap(), 2.5);
        assert_eq!(temperature(&GasState::new(5.0, 0.0, 2.5, 0.0), &g).unwrap(), 2.5);
        g.c = 2.0;
        assert_eq!(temperature(&GasState::new(1.0, 0.0, 2.5, 0.0), &g).unwrap(), 1.25);
    }

    #[test]
    fn rate_examples() {
        let mut g = gas();
        assert_relative_eq!(reaction_rate(2.5, &g).unwrap(), 2.5 * (-0.8f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(reaction_rate(2.5, &g).unwrap(), 1.12332, max_relative = 1e-5);
        assert!(reaction_rate(1e-3, &g).unwrap() < 1e-300);
        assert!(reaction_rate(0.0, &g).is_err());
        g.alpha = 2.0;
        g.beta = 1.0;
        assert_relative_eq!(reaction_rate(1.0, &g).unwrap(), 0.367879, max_relative = 1e-5);
    }

    #[test]
    fn eigenvalue_examples() {
        let g = gas();
        let l = eigenvalues(&GasState::new(1.0, 0.0, 2.5, 0.0), &g).unwrap();
        assert_relative_eq!(l[0], -(1.4f64).sqrt(), max_relative = 1e-15);
        assert_relative_eq!(l[2], 1.18322, max_relative = 1e-5);
        assert_eq!((l[1], l[3]), (0.0, 0.0));
        let l = eigenvalues(&GasState::new(4.0, 0.0, 2.5, 0.0), &g).unwrap();
        assert_relative_eq!(l[2], 0.29580, max_relative = 1e-4);
    }

    #[test]
    fn eigenvectors_diagonalise_flux_jacobian() {
        let g = gas();
        let s = GasState::new(0.9, 0.3, 2.8, 0.0);
        let r = right_eigenvectors(&s, &g).unwrap();
        let lam = eigenvalues(&s, &g).unwrap();
        // Flux (-u, p, p u), Jacobian by central differences.
        let flux = |a: [f64; 3]| {
            let st = GasState::new(a[0], a[1], a[2], 0.0);
            let p = pressure(&st, &g).unwrap();
            [-a[1], p, p * a[1]]
        };
        for (i, ri) in r.iter().enumerate() {
            let h = 1e-6;
            let base = s.gas_part();
            let plus = flux([base[0] + h * ri[0], base[1] + h * ri[1], base[2] + h * ri[2]]);
            let minus = flux([base[0] - h * ri[0], base[1] - h * ri[1], base[2] - h * ri[2]]);
            for k in 0..3 {
                let jr = (plus[k] - minus[k]) / (2.0 * h);
                assert!((jr - lam[i] * ri[k]).abs() < 1e-8, "family {} component {}", i + 1, k);
            }
        }
        let l = left_eigenvectors(&s, &g).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| l[i][k] * r[j][k]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn curves_start_at_base_with_eigenvector_tangent() {
        let g = gas();
        let base = GasState::new(1.1, -0.2, 2.6, 0.004);
        let r = right_eigenvectors(&base, &g).unwrap();
        for i in 1..=3 {
            assert_eq!(hugoniot_curve(i, 0.0, &base, &g).unwrap(), base);
            let h = 1e-5;
            let plus = hugoniot_curve(i, h, &base, &g).unwrap().gas_part();
            let minus = hugoniot_curve(i, -h, &base, &g).unwrap().gas_part();
            for k in 0..3 {
                let d = (plus[k] - minus[k]) / (2.0 * h);
                assert!((d - r[i - 1][k]).abs() < 1e-6 * (1.0 + r[i - 1][k].abs()), "family {i} component {k}");
            }
        }
    }

    #[test]
    fn contact_curve_keeps_pressure_and_velocity() {
        let g = gas();
        let base = GasState::new(1.0, 0.1, 2.6, 0.0);
        for q in [-0.05, 0.01, 0.2] {
            let s = hugoniot_curve(2, q, &base, &g).unwrap();
            assert!((pressure(&s, &g).unwrap() - pressure(&base, &g).unwrap()).abs() < 1e-12);
            assert_eq!(s.u, base.u);
        }
    }

    #[test]
    fn curve_parameter_inverts_curves() {
        let g = gas();
        let base = GasState::new(1.0, 0.05, 2.5, 0.0);
        for i in 1..=3 {
            for q in [-0.03, -1e-4, 2e-3, 0.04] {
                let s = hugoniot_curve(i, q, &base, &g).unwrap();
                assert_relative_eq!(curve_parameter(i, &base, &s, &g).unwrap(), q, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn shocks_satisfy_rankine_hugoniot() {
        let g = gas();
        let l = GasState::new(1.0, 0.0, 2.5, 0.0);
        let r = GasState::new(1.2, 0.0, 2.2, 0.0);
        for (a, b) in [(l, r), (r, l), (l, GasState::new(0.8, 0.0, 2.5, 0.0))] {
            let fan = solve_riemann(&a, &b, &g).unwrap();
            for w in fan.waves.iter().filter(|w| w.kind == WaveKind::Shock) {
                let s = w.speed.0;
                let pl = pressure(&w.left, &g).unwrap();
                let pr = pressure(&w.right, &g).unwrap();
                let jump = [w.right.v - w.left.v, w.right.u - w.left.u, w.right.energy - w.left.energy];
                let fjump = [-(w.right.u - w.left.u), pr - pl, pr * w.right.u - pl * w.left.u];
                for k in 0..3 {
                    assert!((s * jump[k] - fjump[k]).abs() <= 1e-10 * (1.0 + fjump[k].abs()));
                }
            }
        }
    }

    #[test]
    fn riemann_matches_bisection_oracle() {
        let g = gas();
        let l = GasState::new(1.0, 0.0, 2.5, 0.0);
        let r = GasState::new(1.2, 0.0, 2.2, 0.0);
        let pl = pressure(&l, &g).unwrap();
        let pr = pressure(&r, &g).unwrap();
        // Independent bisection on the textbook pressure function.
        let side = |s: &GasState, ps: f64, p: f64| {
            let gm = g.gamma;
            if p > ps {
                (p - ps) * (2.0 * s.v / (gm + 1.0) / (p + (gm - 1.0) / (gm + 1.0) * ps)).sqrt()
            } else {
                2.0 * (gm * ps * s.v).sqrt() / (gm - 1.0) * ((p / ps).powf((gm - 1.0) / (2.0 * gm)) - 1.0)
            }
        };
        let (mut lo, mut hi) = (1e-6, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if side(&l, pl, mid) + side(&r, pr, mid) + (r.u - l.u) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let fan = solve_riemann(&l, &r, &g).unwrap();
        assert_relative_eq!(fan.p_star, 0.5 * (lo + hi), max_relative = 1e-12);
        let last = fan.waves.last().unwrap();
        assert_eq!(last.right, r);
        // Recompose the right state from the middle state along the 3-curve.
        let w3 = fan.wave(3).unwrap();
        let rebuilt = hugoniot_curve(3, w3.q, &fan.wave(2).unwrap().right, &g).unwrap();
        assert!(rebuilt.distance(&r) < 1e-10);
    }

    #[test]
    fn riemann_trivial_cases() {
        let g = gas();
        let s = GasState::new(1.0, 0.0, 2.5, 0.01);
        assert!(solve_riemann(&s, &s, &g).unwrap().is_empty());
        let u = 0.02;
        let l = GasState::new(1.0, -u, 2.5 + 0.5 * u * u, 0.0);
        let r = GasState::new(1.0, u, 2.5 + 0.5 * u * u, 0.0);
        let fan = solve_riemann(&l, &r, &g).unwrap();
        assert_eq!(fan.waves.len(), 2);
        assert!(fan.waves.iter().all(|w| w.kind == WaveKind::Rarefaction));
        assert!(fan.u_star.abs() < 1e-15);
        let drop = |w: &Wave| (pressure(&w.left, &g).unwrap() - pressure(&w.right, &g).unwrap()).abs();
        assert_relative_eq!(drop(&fan.waves[0]), drop(&fan.waves[1]), max_relative = 1e-10);
        assert_eq!(fan.sample(-1e9, &g), l);
        assert_eq!(fan.sample(1e9, &g), r);
    }

    #[test]
    fn rarefaction_interior_is_continuous() {
        let g = gas();
        let l = GasState::new(1.0, -0.05, 2.5 + 0.00125, 0.0);
        let r = GasState::new(1.0, 0.05, 2.5 + 0.00125, 0.0);
        let fan = solve_riemann(&l, &r, &g).unwrap();
        let w = fan.waves[0];
        let inside_lo = fan.sample(w.speed.0 + 1e-12, &g);
        let inside_hi = fan.sample(w.speed.1 - 1e-12, &g);
        assert!(inside_lo.gas_distance(&w.left) < 1e-9);
        assert!(inside_hi.gas_distance(&w.right) < 1e-9);
    }

    #[test]
    fn vacuum_data_has_no_solution() {
        let g = gas();
        let l = GasState::new(1.0, -10.0, 2.5 + 50.0, 0.0);
        let r = GasState::new(1.0, 10.0, 2.5 + 50.0, 0.0);
        assert_eq!(solve_riemann(&l, &r, &g), Err(Error::NoSolution));
    }

    #[test]
    fn decompose_examples() {
        let g = gas();
        let u1 = GasState::new(1.0, 0.0, 2.5, 0.0);
        assert_eq!(decompose_q(&u1, &u1, &g).unwrap(), [0.0; 3]);
        let u2 = hugoniot_curve(1, 0.01, &u1, &g).unwrap();
        let q = decompose_q(&u1, &u2, &g).unwrap();
        assert!((q[0] - 0.01).abs() < 1e-10 && q[1].abs() < 1e-10 && q[2].abs() < 1e-10);
    }

    #[test]
    fn decomposition_agrees_with_riemann_fan() {
        let g = gas();
        let l = GasState::new(1.0, 0.01, 2.5, 0.0);
        let r = GasState::new(1.03, -0.02, 2.46, 0.0);
        let fan = solve_riemann(&l, &r, &g).unwrap();
        let q = decompose_q(&l, &r, &g).unwrap();
        for k in 0..3 {
            assert!((q[k] - fan.q[k]).abs() < 1e-9);
        }
    }
}
