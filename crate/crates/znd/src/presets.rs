//! Named initial data in the standard small-amplitude regime.

use znd_core::gas_dynamics::hugoniot_curve;
use znd_core::{GasParams, GasState, Profile};

/// Quiescent state `(v, u, E) = (1, 0, 2.5)`: `p = 1`, `T = 2.5`.
pub const BACKGROUND: GasState = GasState::new(1.0, 0.0, 2.5, 0.0);

pub const NAMES: [&str; 3] = ["riemann", "bump", "sod_reactive"];

/// Smooth pulse supported in `[-1.5, 1.5]`: a 3-family compression of
/// strength `gas_amplitude` and a reactant hump of height `y_amplitude`.
pub fn bump(gas_amplitude: f64, y_amplitude: f64, gas: &GasParams) -> Profile {
    let n = 160;
    let x: Vec<f64> = (0..=n).map(|k| -2.0 + 4.0 * k as f64 / n as f64).collect();
    let states = x
        .iter()
        .map(|x| {
            let w = pulse(*x, 0.0, 1.5);
            let s = hugoniot_curve(3, -gas_amplitude * w, &BACKGROUND, gas).unwrap_or(BACKGROUND);
            s.with_y(y_amplitude * w)
        })
        .collect();
    Profile::Sampled { x, states }
}

/// Two constant states joined at `x = 0`: a reacting region on the left
/// and a slightly denser inert region on the right.
pub fn riemann(gas: &GasParams) -> Profile {
    let left = BACKGROUND.with_y(0.008);
    let right = GasState::from_pressure(1.01, 0.0, 0.99, 0.0, gas);
    Profile::PiecewiseConstant { breaks: vec![0.0], states: vec![left, right] }
}

/// Shock-tube slab on `[-1, 1]`: compressed reacting gas inside a
/// quiescent background, total variation about 0.05.
pub fn sod_reactive(gas: &GasParams) -> Profile {
    let inside = GasState::from_pressure(0.99, 0.0, 1.01, 0.006, gas);
    Profile::PiecewiseConstant { breaks: vec![-1.0, 1.0], states: vec![BACKGROUND, inside, BACKGROUND] }
}

pub fn by_name(name: &str, gas: &GasParams) -> Option<Profile> {
    match name {
        "riemann" => Some(riemann(gas)),
        "bump" => Some(bump(0.02, 0.005, gas)),
        "sod_reactive" => Some(sod_reactive(gas)),
        _ => None,
    }
}

/// `cos^2` pulse of half-width `h` centred at `c`, exactly zero outside.
pub fn pulse(x: f64, c: f64, h: f64) -> f64 {
    let z = (x - c) / h;
    if z.abs() >= 1.0 {
        0.0
    } else {
        (0.5 * std::f64::consts::PI * z).cos().powi(2)
    }
}
