//! Wave-strength functional `V`, interaction potential `Q`, the modified
//! Glimm functional `F = V + C Q`, and the weighted `L1` functional `Phi`
//! between two approximate solutions.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use libm::{exp, floor};

use crate::front_tracking::{merged_pieces, Family, Front, FrontSolution};
use crate::gas_dynamics::{decompose_q, GasParams, GasState};
use crate::reaction_scheme::SchemeConfig;
use crate::Result;

/// What triggered a functional evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventTag {
    Interaction,
    /// Reaction step `k`; `before` marks the state at `t_k-`.
    Reaction {
        k: u64,
        before: bool,
    },
    Free,
}

impl EventTag {
    pub fn label(&self) -> &'static str {
        match self {
            EventTag::Interaction => "interaction",
            EventTag::Reaction { before: true, .. } => "reaction-",
            EventTag::Reaction { before: false, .. } => "reaction+",
            EventTag::Free => "free",
        }
    }
}

/// Functionals of a pair of snapshots at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalReport {
    pub time: f64,
    pub event: EventTag,
    pub v_u: f64,
    pub q_u: f64,
    pub f_u: f64,
    pub v_v: f64,
    pub q_v: f64,
    pub f_v: f64,
    pub phi: f64,
    pub l1: f64,
    pub y_inf_u: f64,
    pub y_inf_v: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub b: f64,
}

/// The six term groups of `Q` and the number of approaching pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QPairLedger {
    /// `|alpha| |beta|` over approaching physical pairs.
    pub physical: f64,
    /// `|alpha| M|delta_beta| + |beta| M|delta_alpha|`.
    pub physical_tagged: f64,
    /// `M|delta_alpha| M|delta_beta|`.
    pub tagged_tagged: f64,
    /// `|sigma| |beta|` over non-physical fronts left of physical fronts.
    pub np: f64,
    /// `|sigma| M|delta_beta|`.
    pub np_tagged: f64,
    /// `M|delta_sigma| M|delta_beta|`.
    pub np_tagged_tagged: f64,
    pub pairs: u64,
    pub np_pairs: u64,
}

impl QPairLedger {
    pub fn total(&self) -> f64 {
        self.physical + self.physical_tagged + self.tagged_tagged + self.np + self.np_tagged + self.np_tagged_tagged
    }
}

/// `V = sum |alpha| + sum |sigma| + M sum |delta|`.
#[allow(non_snake_case)]
pub fn wave_strength_V(sol: &FrontSolution, cfg: &SchemeConfig) -> f64 {
    sol.fronts
        .iter()
        .map(|f| match f.family {
            Family::Y => cfg.m_weight * f.strength(),
            _ => f.strength(),
        })
        .sum()
}

fn rank(f: Family) -> u8 {
    match f {
        Family::One => 0,
        Family::Two | Family::Y => 1,
        Family::Three => 2,
        Family::Np => 3,
    }
}

/// Approaching rule for `a` left of `b`.
pub fn approaching(a: &Front, b: &Front) -> bool {
    match (a.family, b.family) {
        (Family::Np, Family::Y) | (Family::Y, Family::Np) => false,
        (Family::Np, fb) => fb.is_physical(),
        (_, Family::Np) => false,
        (Family::Y, Family::Two) | (Family::Two, Family::Y) => false,
        (fa, fb) if fa == fb => fa != Family::Two && (a.is_shock() || b.is_shock()),
        (fa, fb) => rank(fa) > rank(fb),
    }
}

/// `M |delta|` of every reactant front, attributed to the strongest live
/// front that has crossed it.
pub fn tagged_strengths(sol: &FrontSolution, cfg: &SchemeConfig) -> BTreeMap<u64, f64> {
    let alive: BTreeMap<u64, &Front> = sol.fronts.iter().map(|f| (f.id, f)).collect();
    let mut out = BTreeMap::new();
    for (yid, list) in &sol.crossing_registry {
        let Some(y) = alive.get(yid).filter(|y| y.family == Family::Y) else { continue };
        let owner = list.iter().filter_map(|c| alive.get(&c.front_id).filter(|f| f.family != Family::Y)).fold(
            None::<&Front>,
            |best, f| match best {
                Some(b) if b.strength() >= f.strength() => Some(b),
                _ => Some(f),
            },
        );
        if let Some(f) = owner {
            *out.entry(f.id).or_insert(0.0) += cfg.m_weight * y.strength();
        }
    }
    out
}

#[derive(Clone, Copy, Default)]
struct Acc {
    abs: f64,
    tag: f64,
    n: u64,
}

impl Acc {
    fn add(&mut self, s: f64, d: f64) {
        self.abs += s;
        self.tag += d;
        self.n += 1;
    }

    fn plus(self, o: Acc) -> Acc {
        Acc { abs: self.abs + o.abs, tag: self.tag + o.tag, n: self.n + o.n }
    }
}

/// `Q` and its term groups, by a single left-to-right sweep.
#[allow(non_snake_case)]
pub fn interaction_Q(sol: &FrontSolution, cfg: &SchemeConfig) -> (f64, QPairLedger) {
    let tags = tagged_strengths(sol, cfg);
    let mut l = QPairLedger::default();
    // Running sums of fronts already passed: 1-shock, 1-rarefaction, 2, 3-shock, 3-rarefaction, NP.
    let mut seen = [Acc::default(); 6];
    for f in &sol.fronts {
        let s = f.strength();
        let d = tags.get(&f.id).copied().unwrap_or(0.0);
        let left = match f.family {
            Family::One if f.is_shock() => seen[0].plus(seen[1]).plus(seen[2]).plus(seen[3]).plus(seen[4]),
            Family::One => seen[0].plus(seen[2]).plus(seen[3]).plus(seen[4]),
            Family::Two => seen[3].plus(seen[4]),
            Family::Three if f.is_shock() => seen[3].plus(seen[4]),
            Family::Three => seen[3],
            Family::Y | Family::Np => Acc::default(),
        };
        if f.family.is_physical() {
            l.physical += left.abs * s;
            l.physical_tagged += left.abs * d + left.tag * s;
            l.tagged_tagged += left.tag * d;
            l.pairs += left.n;
            let np = seen[5];
            l.np += np.abs * s;
            l.np_tagged += np.abs * d;
            l.np_tagged_tagged += np.tag * d;
            l.np_pairs += np.n;
        }
        let slot = match f.family {
            Family::One if f.is_shock() => Some(0),
            Family::One => Some(1),
            Family::Two => Some(2),
            Family::Three if f.is_shock() => Some(3),
            Family::Three => Some(4),
            Family::Np => Some(5),
            Family::Y => None,
        };
        if let Some(k) = slot {
            seen[k].add(s, d);
        }
    }
    (l.total(), l)
}

/// Direct double sum over all pairs; reference for [`interaction_Q`].
pub fn interaction_q_pairwise(sol: &FrontSolution, cfg: &SchemeConfig) -> QPairLedger {
    let tags = tagged_strengths(sol, cfg);
    let d = |f: &Front| tags.get(&f.id).copied().unwrap_or(0.0);
    let mut l = QPairLedger::default();
    for (i, a) in sol.fronts.iter().enumerate() {
        for b in &sol.fronts[i + 1..] {
            if !approaching(a, b) || a.family == Family::Y || b.family == Family::Y {
                continue;
            }
            let (sa, sb) = (a.strength(), b.strength());
            if a.family == Family::Np {
                l.np += sa * sb;
                l.np_tagged += sa * d(b);
                l.np_tagged_tagged += d(a) * d(b);
                l.np_pairs += 1;
            } else {
                l.physical += sa * sb;
                l.physical_tagged += sa * d(b) + sb * d(a);
                l.tagged_tagged += d(a) * d(b);
                l.pairs += 1;
            }
        }
    }
    l
}

/// `F = V + C Q`.
pub fn glimm_f(sol: &FrontSolution, cfg: &SchemeConfig) -> f64 {
    wave_strength_V(sol, cfg) + cfg.c_glimm * interaction_Q(sol, cfg).0
}

/// Piecewise-constant shock-curve coordinates between two snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct QPiece {
    pub a: f64,
    pub b: f64,
    pub u: GasState,
    pub v: GasState,
    pub q: [f64; 3],
}

/// `q(x)` with `V(x) = H(q(x)) U(x)` on every piece of the merged partition.
pub fn q_field(sol_u: &FrontSolution, sol_v: &FrontSolution, gas: &GasParams) -> Result<Vec<QPiece>> {
    merged_pieces(sol_u, sol_v)
        .into_iter()
        .map(|(a, b, u, v)| {
            let q = if u.same_gas(&v) { [0.0; 3] } else { decompose_q(&u, &v, gas)? };
            Ok(QPiece { a, b, u, v, q })
        })
        .collect()
}

/// `B(t) = sum_{j eps > t, j <= N} (|Y1(0)| + |Y2(0)|) e^{-phi j eps} eps`.
pub fn weight_b(t: f64, y1_init: f64, y2_init: f64, eps: f64, phi_lower: f64) -> f64 {
    let n = libm::ceil(1.0 / (eps * eps)) as i64;
    let first = (floor(t / eps + 1e-9) as i64 + 1).max(1);
    let y = y1_init + y2_init;
    if y == 0.0 || first > n {
        return 0.0;
    }
    // Geometric tail summed in closed form.
    let r = exp(-phi_lower * eps);
    let count = (n - first + 1) as f64;
    y * eps * exp(-phi_lower * eps * first as f64) * (1.0 - libm::pow(r, count)) / (1.0 - r)
}

/// Per-family strength totals of one snapshot, split at an evaluation point.
struct FamilySums {
    /// `(position, family index, strength)` of physical fronts, sorted.
    fronts: Vec<(f64, usize, f64)>,
    y_total: f64,
}

impl FamilySums {
    fn new(sol: &FrontSolution) -> Self {
        let fronts =
            sol.fronts.iter().filter_map(|f| f.family.index().map(|i| (f.position, i, f.strength()))).collect();
        let y_total = sol.fronts.iter().filter(|f| f.family == Family::Y).map(|f| f.strength()).sum();
        Self { fronts, y_total }
    }
}

/// `A_i(x)` evaluated by direct summation.
pub fn weight_a(i: usize, x: f64, sol_u: &FrontSolution, sol_v: &FrontSolution, q_i: f64, cfg: &SchemeConfig) -> f64 {
    let mut a = 0.0;
    for (src, sol) in [(0, sol_u), (1, sol_v)] {
        for f in &sol.fronts {
            match f.family {
                Family::Y => a += cfg.m_weight * f.strength(),
                Family::Np => {}
                fam => {
                    let k = fam.index().unwrap_or(1);
                    let behind = f.position < x;
                    let counted = if i == 2 {
                        (behind && k == 3) || (!behind && k == 1)
                    } else if k != i {
                        (behind && k > i) || (!behind && k < i)
                    } else if q_i < 0.0 {
                        (behind && src == 0) || (!behind && src == 1)
                    } else if q_i > 0.0 {
                        (behind && src == 1) || (!behind && src == 0)
                    } else {
                        false
                    };
                    if counted {
                        a += f.strength();
                    }
                }
            }
        }
    }
    a
}

/// Reactant sup-norms of the two initial data, entering `B(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiContext {
    pub y1_init: f64,
    pub y2_init: f64,
    pub event: EventTag,
}

impl PhiContext {
    pub fn new(y1_init: f64, y2_init: f64) -> Self {
        Self { y1_init, y2_init, event: EventTag::Free }
    }

    pub fn at(self, event: EventTag) -> Self {
        Self { event, ..self }
    }

    /// `B` at time `t`; just before a reaction step the current term is still included.
    pub fn b(&self, t: f64, cfg: &SchemeConfig) -> f64 {
        let t = match self.event {
            EventTag::Reaction { before: true, .. } => t - 0.5 * cfg.epsilon,
            _ => t,
        };
        weight_b(t, self.y1_init, self.y2_init, cfg.epsilon, cfg.phi_lower)
    }
}

/// `Phi(U, V) = sum_i int (|q_i| + k1 |Y1 - Y2|) W_i dx` with
/// `W_i = 1 + k2 A_i + k3 (Q(U) + Q(V)) + k4 B(t)`.
pub fn lyapunov_phi(
    sol_u: &FrontSolution,
    sol_v: &FrontSolution,
    cfg: &SchemeConfig,
    ctx: &PhiContext,
) -> Result<(f64, FunctionalReport)> {
    let [k1, k2, k3, k4] = cfg.kappa;
    let (q_u, _) = interaction_Q(sol_u, cfg);
    let (q_v, _) = interaction_Q(sol_v, cfg);
    let v_u = wave_strength_V(sol_u, cfg);
    let v_v = wave_strength_V(sol_v, cfg);
    let b = ctx.b(sol_u.time, cfg);
    let base = 1.0 + k3 * (q_u + q_v) + k4 * b;

    let su = FamilySums::new(sol_u);
    let sv = FamilySums::new(sol_v);
    let y_all = cfg.m_weight * (su.y_total + sv.y_total);
    // behind[src][k]: strength of family k+1 fronts of source src left of the sweep point.
    let mut behind = [[0.0f64; 3]; 2];
    let mut total = [[0.0f64; 3]; 2];
    for (src, s) in [(0, &su), (1, &sv)] {
        for (_, k, st) in &s.fronts {
            total[src][k - 1] += st;
        }
    }
    let (mut iu, mut iv) = (0usize, 0usize);

    let mut phi = 0.0;
    let mut l1 = 0.0;
    let mut w_min = f64::INFINITY;
    let mut w_max = f64::NEG_INFINITY;
    for piece in q_field(sol_u, sol_v, &cfg.gas)? {
        let x = match (piece.a.is_finite(), piece.b.is_finite()) {
            (true, true) => 0.5 * (piece.a + piece.b),
            (false, true) => piece.b - 1.0,
            (true, false) => piece.a + 1.0,
            (false, false) => 0.0,
        };
        while iu < su.fronts.len() && su.fronts[iu].0 < x {
            behind[0][su.fronts[iu].1 - 1] += su.fronts[iu].2;
            iu += 1;
        }
        while iv < sv.fronts.len() && sv.fronts[iv].0 < x {
            behind[1][sv.fronts[iv].1 - 1] += sv.fronts[iv].2;
            iv += 1;
        }
        let bh = |k: usize| behind[0][k - 1] + behind[1][k - 1];
        let ah = |k: usize| total[0][k - 1] + total[1][k - 1] - bh(k);
        let dy = (piece.u.y - piece.v.y).abs();
        let mut integrand = 0.0;
        for i in 1..=3 {
            let qi = piece.q[i - 1];
            let mut a = y_all;
            match i {
                1 => a += bh(2) + bh(3),
                2 => a += bh(3) + ah(1),
                _ => a += ah(1) + ah(2),
            }
            if i != 2 {
                let (lsrc, rsrc) = if qi < 0.0 { (0, 1) } else { (1, 0) };
                if qi != 0.0 {
                    a += behind[lsrc][i - 1] + (total[rsrc][i - 1] - behind[rsrc][i - 1]);
                }
            }
            let w = base + k2 * a;
            w_min = w_min.min(w);
            w_max = w_max.max(w);
            integrand += (qi.abs() + k1 * dy) * w;
        }
        let dist = piece.u.distance(&piece.v);
        if integrand != 0.0 || dist != 0.0 {
            let len = piece.b - piece.a;
            phi += integrand * len;
            l1 += dist * len;
        }
    }
    let report = FunctionalReport {
        time: sol_u.time,
        event: ctx.event,
        v_u,
        q_u,
        f_u: v_u + cfg.c_glimm * q_u,
        v_v,
        q_v,
        f_v: v_v + cfg.c_glimm * q_v,
        phi,
        l1,
        y_inf_u: sol_u.y_sup(),
        y_inf_v: sol_v.y_sup(),
        w_min,
        w_max,
        b,
    };
    Ok((phi, report))
}
