//! The two worked single-state loops used across the test suite and the
//! CLI.
//!
//! Both run the default horizon `t_end = 10`, `dt = 1e-3`, a chain of two
//! integrators, the unity plant, and an absolute decay tolerance of 0.15
//! (the finite-horizon tails here decay algebraically, so the dynamic
//! `1e-3·sup` default would demand asymptotics a 10-second window cannot
//! show; 0.15 sits between the slowest decaying head integral, ≈ 0.121,
//! and the smallest non-decaying tail, ≈ 0.352).
//!
//! - **ex1** — controller `ẋ = −t²·x + u_c`, `u_q = x`, whose impulse
//!   response `e^{−(t³−τ³)/3}` is positive: the non-negative-kernel case.
//!   Attack `a = 2, h = 1`; stealth threshold ε = 0.4.
//! - **ex2** — controller `ẋ = −(3t²+0.5)·x + u_c`, `u_q = −x`, whose
//!   impulse response `−e^{−(t³−τ³)−(t−τ)/2}` is non-positive: the
//!   absolute-value-mode case. Attack `a = 1, h = 0.1`; threshold ε = 3.

use crate::config::{AttackSpec, LtvStateSpace, PlantSpec, SystemConfig, Tolerances};
use crate::grid::TimeGrid;

/// Absolute tail tolerance both presets pin. See the module docs for the
/// margins it was placed between.
pub const PRESET_DECAY_TOL: f64 = 0.15;

/// A named ready-to-run configuration plus the stealth threshold its
/// analysis is quoted at (ε is a verdict parameter, not part of the loop,
/// so it lives here and not in the config schema).
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub config: SystemConfig,
    pub epsilon: f64,
}

fn base_tolerances() -> Tolerances {
    Tolerances { decay_tol: Some(PRESET_DECAY_TOL), ..Tolerances::default() }
}

/// Positive-kernel loop: `ẋ = −t²x + u_c`, `u_q = x`, unity plant, `q = 2`,
/// attack `y_a = t²/2` (a = 2, h = 1), ε = 0.4.
pub fn ex1() -> Preset {
    Preset {
        name: "ex1",
        epsilon: 0.4,
        config: SystemConfig {
            plant: PlantSpec::unity(),
            controller: LtvStateSpace::from_strs(&[&["-t^2"]], &["1"], &["1"])
                .expect("static coefficients parse"),
            q: 2,
            attack: AttackSpec { a: 2, h: 1.0 },
            grid: TimeGrid::new(10.0, 1e-3).expect("static grid is valid"),
            tolerances: base_tolerances(),
        },
    }
}

/// Negative-kernel loop: `ẋ = −(3t²+0.5)x + u_c`, `u_q = −x`, unity plant,
/// `q = 2`, attack `y_a = 0.1·t` (a = 1, h = 0.1), ε = 3.
pub fn ex2() -> Preset {
    Preset {
        name: "ex2",
        epsilon: 3.0,
        config: SystemConfig {
            plant: PlantSpec::unity(),
            controller: LtvStateSpace::from_strs(&[&["-(3*t^2+0.5)"]], &["1"], &["-1"])
                .expect("static coefficients parse"),
            q: 2,
            attack: AttackSpec { a: 1, h: 0.1 },
            grid: TimeGrid::new(10.0, 1e-3).expect("static grid is valid"),
            tolerances: base_tolerances(),
        },
    }
}

/// Lookup by CLI name.
pub fn by_name(name: &str) -> Option<Preset> {
    match name {
        "ex1" => Some(ex1()),
        "ex2" => Some(ex2()),
        _ => None,
    }
}
