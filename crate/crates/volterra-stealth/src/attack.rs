//! Monomial injection signals, the forcing term they induce at the
//! quantity-of-interest, admissible-weight bounds, and the stealth verdict.
//!
//! The injected measurement is `y_a(t) = h·t^a/a!`. Feeding it through the
//! controller-side kernel produces the forcing term
//! `φ(t) = ∫₀ᵗ g_c(t,τ)·y_a(τ) dτ` of the closed-loop integral equation for
//! the quantity of interest `u_q`. Stealth is then a statement about `u_q`
//! alone: bounded by `ε` over the horizon (ε-stealth), and additionally
//! decaying toward zero (untraceability). Both are *finite-horizon* verdicts
//! — evidence over `[0, t_end]`, not an asymptotic proof — which is why
//! [`StealthVerdict::horizon_limited`] is always `true`.

use serde::Serialize;

use crate::config::AttackSpec;
use crate::error::Error;
use crate::grid::{decay_metric, sup_norm, Signal, TimeGrid};
use crate::lvie::trapz;
use crate::stm::KernelTable;
use crate::Result;

/// Largest attack degree for which `a!` is representable in f64.
const MAX_FACTORIAL_A: u32 = 170;

fn factorial(a: u32) -> Result<f64> {
    if a > MAX_FACTORIAL_A {
        return Err(Error::Domain(format!(
            "attack degree {a} overflows a! in f64 (max {MAX_FACTORIAL_A})"
        )));
    }
    Ok((1..=a).map(|k| k as f64).product())
}

/// The injected signal `y_a(t) = h·t^a/a!` sampled on `grid`.
pub fn attack_signal(attack: &AttackSpec, grid: &TimeGrid) -> Result<Signal> {
    let fact = factorial(attack.a)?;
    let h = attack.h;
    let a = attack.a as i32;
    Signal::from_fn(grid.clone(), |t| h * t.powi(a) / fact)
}

/// Forcing term `φ(t_i) = ∫₀^{t_i} g_c(t_i,τ)·h·τ^a/a! dτ` by row-wise
/// trapezoid. A delta kernel short-circuits to the attack signal itself.
pub fn forcing_term(g_c: &KernelTable, attack: &AttackSpec) -> Result<Signal> {
    if g_c.is_delta() {
        return attack_signal(attack, g_c.grid());
    }
    let fact = factorial(attack.a)?;
    let scale = attack.h / fact;
    let n = g_c.n();
    let grid = g_c.grid();
    let a = attack.a as i32;
    let tau_pow: Vec<f64> = (0..n).map(|j| grid.node(j).powi(a)).collect();
    let mut w = vec![0.0f64; n];
    let mut phi = vec![0.0f64; n];
    for i in 0..n {
        let row = g_c.row(i);
        for j in 0..=i {
            w[j] = row[j] * tau_pow[j];
        }
        phi[i] = scale * trapz(&w[..=i], grid.dt());
    }
    Signal::new(grid.clone(), phi)
}

/// Largest attack weight `|h| ≤ a!·δ/M` that keeps the forcing term within
/// `δ` in sup norm, given the moment bound
/// `M ≥ sup_t ∫₀ᵗ |g_c(t,τ)|·τ^a dτ`. Returns `+∞` when `M = 0` (a dead
/// channel admits any weight).
pub fn admissible_weight(moment_sup: f64, a: u32, delta: f64) -> Result<f64> {
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::Domain(format!("forcing budget δ must be positive, got {delta}")));
    }
    if !moment_sup.is_finite() || moment_sup < 0.0 {
        return Err(Error::Domain(format!(
            "moment bound must be finite and non-negative, got {moment_sup}"
        )));
    }
    let fact = factorial(a)?;
    if moment_sup == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(fact * delta / moment_sup)
}

/// Finite-horizon verdict on a quantity-of-interest trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StealthVerdict {
    /// `sup_{[0,t_end]} |u_q|`.
    pub sup_uq: f64,
    /// The threshold the sup was compared against.
    pub epsilon: f64,
    /// `sup |u_q| ≤ ε` over the horizon.
    pub is_epsilon_stealthy: bool,
    /// Largest `|u_q|` in the final tail window.
    pub tail_max: f64,
    /// ε-stealthy *and* the tail-window maxima are non-increasing with the
    /// last one below the decay tolerance.
    pub is_untraceable: bool,
    /// Always `true`: every verdict is evidence over `[0, t_end]`, not an
    /// asymptotic statement.
    pub horizon_limited: bool,
    /// Per-window maxima of `|u_q|` over the four trailing windows.
    pub tail_windows: [f64; 4],
    /// The decay tolerance actually applied to `tail_max`.
    pub decay_tol_used: f64,
    /// Width of each trailing window as a fraction of the horizon.
    pub tail_fraction: f64,
}

/// Classifies a quantity-of-interest trajectory: ε-stealth is
/// `sup |u_q| ≤ ε`; untraceability additionally requires the tail of
/// `|u_q|` to decay per [`decay_metric`].
pub fn stealth_verdict(
    u_q: &Signal,
    epsilon: f64,
    tail_fraction: f64,
    decay_tol: Option<f64>,
) -> Result<StealthVerdict> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::Domain(format!("stealth threshold ε must be positive, got {epsilon}")));
    }
    let sup = sup_norm(u_q);
    let metric = decay_metric(u_q, tail_fraction, decay_tol)?;
    let is_eps = sup <= epsilon;
    Ok(StealthVerdict {
        sup_uq: sup,
        epsilon,
        is_epsilon_stealthy: is_eps,
        tail_max: metric.tail_max,
        is_untraceable: is_eps && metric.is_decaying,
        horizon_limited: true,
        tail_windows: metric.windows,
        decay_tol_used: metric.decay_tol_used,
        tail_fraction: metric.tail_fraction,
    })
}
