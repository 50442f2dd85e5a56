//! Stealth analysis of false-data-injection attacks (FDIAs) on linear
//! time-varying feedback loops, via linear Volterra integral equations.
//!
//! The library models the classic attacked loop
//!
//! ```text
//!              y_a(t) = (h/a!) t^a
//!                │
//!   ┌─────┐ u_q  ▼  ┌───────────┐ u_p ┌───────┐ y_p
//!   │  C  │───►(Q)──│ 1/s chain │────►│ plant │──┬──►
//!   └─────┘         └───────────┘     └───────┘  │
//!      ▲                                         │
//!      └──────────────  u_c = y_a − y_p  ◄───────┘
//! ```
//!
//! where `C` is an LTV controller, `Q` a chain of `q` pure integrators, and
//! the attacker injects a polynomial signal into the sensor path. The signal
//! entering the integrator chain satisfies a second-kind linear Volterra
//! integral equation (LVIE)
//!
//! ```text
//! u_q(t) = ∫₀ᵗ G_{c,p,q}(t,τ) u_q(τ) dτ + φ_{c,a}(t)
//! ```
//!
//! with a kernel composed from the controller, plant, and chain impulse
//! responses. The crate provides:
//!
//! - [`stm`]: state-transition matrices and impulse-response kernels for LTV
//!   state-space systems, plus the integrator-chain kernel;
//! - [`lvie`]: the product-trapezoidal LVIE solver, kernel composition, and
//!   iterated kernels;
//! - [`attack`]: polynomial attack signals, the forcing term `φ_{c,a}`,
//!   admissible-weight bounds, and stealth verdicts (ε-stealthy /
//!   untraceable);
//! - [`conditions`]: machine checks for the non-negative-kernel stability
//!   conditions (bounded row integrals, iterated-kernel contraction,
//!   vanishing head), the two structural assumption groups behind the
//!   boundedness and decay theorems, and the uniform-convergence probe;
//! - [`closedloop`]: a cascaded-ODE simulation of the loop (the physical
//!   oracle) and the independent LVIE route, with cross-validation;
//! - [`presets`]: the two worked examples (`ex1`, `ex2`) used throughout the
//!   test suite;
//! - [`config`] / [`expr`]: serializable system descriptions with a small
//!   coefficient-expression language (`-t^2`, `exp(-0.5*t)`, …).
//!
//! # Sign convention
//!
//! The summing junction is pinned to **negative feedback**,
//! `u_c(t) = y_a(t) − y_p(t)`, so the LVIE reads
//! `u_q = φ_{c,a} − G_{c,p,q} ∘ u_q`. See [`closedloop`] for the
//! quantitative rationale and the internal switch used to study the
//! alternative convention.
//!
//! # Finite-horizon semantics
//!
//! Every asymptotic notion (sup over `t ≥ 0`, `t → ∞` limits) is replaced by
//! a finite-horizon surrogate with explicit tail-window diagnostics; all
//! verdicts carry a `horizon_limited` marker. Grids are uniform; non-finite
//! values abort construction instead of propagating.

pub mod attack;
pub mod closedloop;
pub mod conditions;
pub mod config;
pub mod error;
pub mod expr;
pub mod grid;
pub mod lvie;
pub mod presets;
pub mod stm;

pub use attack::{attack_signal, admissible_weight, forcing_term, stealth_verdict, StealthVerdict};
pub use closedloop::{cross_validate, simulate, uq_via_lvie, KernelBundle, TrajectoryBundle};
pub use config::{AttackSpec, LtvStateSpace, PlantSpec, SystemConfig, Tolerances};
pub use error::Error;
pub use grid::{decay_metric, sup_norm, DecayMetric, Signal, TimeGrid};
pub use lvie::{compose_kernels, iterate_kernel, row_integral, solve_lvie};
pub use stm::{impulse_kernel, integrator_kernel, transition_matrix, KernelTable};

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
