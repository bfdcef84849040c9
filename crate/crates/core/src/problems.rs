//! Concrete reaction–diffusion test problems.

use crate::fem::{BcMode, Reaction};

/// `v_t = v_xx + g(v)` on `[a, b] × [t0, t_end]` with a given initial profile.
#[derive(Debug, Clone)]
pub struct ReactionDiffusionSpec {
    pub a: f64,
    pub b: f64,
    pub t0: f64,
    pub t_end: f64,
    pub reaction: Reaction,
    pub initial_profile: fn(f64) -> f64,
    pub bc: BcMode,
}

/// Zeldovich-type flame front: `g(v) = v²(1 − v)` on `[-20, 20] × [0, 2]`.
pub fn zeldovich() -> ReactionDiffusionSpec {
    ReactionDiffusionSpec {
        a: -20.0,
        b: 20.0,
        t0: 0.0,
        t_end: 2.0,
        reaction: Reaction::new(|v| v * v * (1.0 - v), |v| 2.0 * v - 3.0 * v * v),
        initial_profile,
        bc: BcMode::Natural,
    }
}

/// Monotone front `(1 + (√2 − 1) e^{−x/√6})^{−2}`, equal to 1/2 at the origin.
pub fn initial_profile(x: f64) -> f64 {
    let s = 1.0 + (std::f64::consts::SQRT_2 - 1.0) * (-(6f64.sqrt() / 6.0) * x).exp();
    1.0 / (s * s)
}
