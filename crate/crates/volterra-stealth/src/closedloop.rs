//! The attacked loop, twice: as one cascaded ODE (the physical oracle) and
//! through its integral-equation representation; plus the cross-check that
//! keeps the two honest.
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
//! # Sign of the summing junction
//!
//! The junction is pinned to negative feedback, `u_c = y_a − y_p`, so the
//! quantity of interest satisfies `u_q = φ_{c,a} − G_{c,p,q} ∘ u_q`. The
//! positive-sum variant `u_c = y_a + y_p` exists as an internal switch
//! because the difference is not cosmetic: for the worked single-state
//! example at `q = 2`, `a = 2`, `h = 1` the loop's composed row integrals
//! approach 1/2, so a constant forcing plateau of 1/2 settles at
//! `(1/2)/(1 + 1/2) = 1/3` under negative feedback but at
//! `(1/2)/(1 − 1/2) = 1` under the positive sum — measured sups 0.444
//! against 0.734-and-climbing. Only the negative junction produces the
//! bounded, plateauing responses the rest of the crate documents, and a
//! unit test keeps the comparison executable.
//!
//! # Two routes to `u_q`
//!
//! [`simulate`] integrates the stacked state `[controller; chain; plant]`
//! with classical RK4 and zero initial conditions — no integral equation
//! involved. [`uq_via_lvie`] builds `g_c`, composes it with the plant and
//! the integrator chain into `G_{c,p,q}`, forms the forcing `φ_{c,a}`, and
//! marches the Volterra equation. The derivations connecting the two
//! involve repeated interchanges of integration order; [`cross_validate`]
//! runs both routes at `dt` and `dt/2` and demands the sup-norm gap be
//! small *and* shrink under refinement, which catches transcription and
//! discretization bugs alike.

use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::attack::forcing_term;
use crate::conditions::CheckStatus;
use crate::config::{LtvStateSpace, SystemConfig};
use crate::error::Error;
use crate::grid::{Signal, TimeGrid};
use crate::lvie::{compose_kernels, compose_with_integrator, solve_lvie, MAX_FAST_Q};
use crate::stm::{impulse_kernel, integrator_kernel, KernelTable, DEFAULT_DT_ODE};
use crate::Result;

/// Default sup-norm tolerance for the ODE-vs-integral-equation cross-check
/// (calibrated at `dt = 1e-3`; both routes are second order, so the
/// observed gaps sit one to two decades below this).
pub const XVAL_TOL: f64 = 5e-3;

/// Summing-junction convention. Only `Negative` is reachable from configs;
/// `Positive` exists so tests can document what the alternative does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FeedbackSign {
    Negative,
    /// Reachable only from tests; see the module docs for what it changes.
    #[cfg_attr(not(test), allow(dead_code))]
    Positive,
}

/// Everything the loop's integral-equation route tabulates.
pub struct KernelBundle {
    /// Controller impulse response `g_c(t,τ)`.
    pub g_c: KernelTable,
    /// `G_{c,p} = g_c ∘ g_p`; `None` for the unity plant, where
    /// `G_{c,p} = g_c`.
    pub g_cp: Option<KernelTable>,
    /// The loop kernel `G_{c,p,q} = G_{c,p} ∘ g_q`.
    pub g_cpq: KernelTable,
    /// Chain length the bundle was composed with.
    pub q: u32,
}

impl KernelBundle {
    /// Tabulates `g_c`, `G_{c,p}`, and `G_{c,p,q}` for `config`. Memory
    /// scales as 3·n²/2 doubles — about 1.2 GB at n = 10001 with a
    /// state-space plant, 0.8 GB with the unity plant.
    pub fn build(config: &SystemConfig) -> Result<Self> {
        config.validate()?;
        let g_c = impulse_kernel(&config.controller, &config.grid)?;
        let g_cp = match config.plant.as_state_space() {
            None => None,
            Some(plant) => {
                let g_p = impulse_kernel(plant, &config.grid)?;
                Some(compose_kernels(&g_c, &g_p)?)
            }
        };
        let g_cpq = compose_chain(g_cp.as_ref().unwrap_or(&g_c), config.q)?;
        Ok(KernelBundle { g_c, g_cp, g_cpq, q: config.q })
    }

    /// The effective `G_{c,p}`: the composed table, or `g_c` itself for the
    /// unity plant.
    pub fn loop_gain(&self) -> &KernelTable {
        self.g_cp.as_ref().unwrap_or(&self.g_c)
    }
}

/// `K ∘ g_q` via the O(q·n²) fast path where it is well-conditioned,
/// falling back to the generic composition against a tabulated integrator
/// kernel for deep chains.
pub(crate) fn compose_chain(k: &KernelTable, q: u32) -> Result<KernelTable> {
    if q <= MAX_FAST_Q {
        compose_with_integrator(k, q)
    } else {
        compose_kernels(k, &integrator_kernel(q, k.grid())?)
    }
}

/// Sampled trajectories of one run. When the magnitude guard trips the
/// signals are truncated to the last valid node and [`diverged_at`]
/// records the first time a sample could not be produced — a diverging
/// plant output is a *result* here, not an error.
///
/// [`diverged_at`]: TrajectoryBundle::diverged_at
#[derive(Debug, Clone)]
pub struct TrajectoryBundle {
    /// Controller output — the quantity of interest.
    pub u_q: Signal,
    /// Controller input, `y_a − y_p`.
    pub u_c: Signal,
    /// Integrator-chain output (first chain state).
    pub u_p: Signal,
    /// Plant output (`u_p` itself for the unity plant).
    pub y_p: Signal,
    /// Injected signal.
    pub y_a: Signal,
    /// First grid time at which a state or output exceeded the magnitude
    /// guard or stopped being finite.
    pub diverged_at: Option<f64>,
}

impl TrajectoryBundle {
    pub fn grid(&self) -> &TimeGrid {
        self.u_q.grid()
    }

    /// CSV export with columns `t,u_q,u_c,u_p,y_p,y_a`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,u_q,u_c,u_p,y_p,y_a")?;
        let g = self.grid();
        for k in 0..g.n() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                g.node(k),
                self.u_q.values()[k],
                self.u_c.values()[k],
                self.u_p.values()[k],
                self.y_p.values()[k],
                self.y_a.values()[k],
            )?;
        }
        Ok(())
    }
}

/// Integrates the loop as one stacked ODE `[controller; chain; plant]` with
/// zero initial state, classical RK4 at sub-step `min(dt, 1e-3)`, sampling
/// onto the config's grid. See the module docs for the junction sign.
pub fn simulate(config: &SystemConfig) -> Result<TrajectoryBundle> {
    simulate_with_sign(config, FeedbackSign::Negative)
}

pub(crate) fn simulate_with_sign(
    config: &SystemConfig,
    sign: FeedbackSign,
) -> Result<TrajectoryBundle> {
    config.validate()?;
    let grid = &config.grid;
    let ctrl = &config.controller;
    let plant = config.plant.as_state_space();
    let nc = ctrl.n_states();
    let q = config.q as usize;
    let np = plant.map_or(0, LtvStateSpace::n_states);
    let dim = nc + q + np;
    let guard = config.tolerances.sup_guard;

    let a_deg = config.attack.a as i32;
    let a_fact: f64 = (1..=config.attack.a).map(|k| k as f64).product();
    let weight = config.attack.h;
    let y_a_at = |t: f64| weight * t.powi(a_deg) / a_fact;

    // outputs from the current state
    let outputs = |t: f64, x: &DVector<f64>| -> (f64, f64, f64, f64) {
        let u_p = x[nc];
        let y_p = match plant {
            None => u_p,
            Some(p) => (p.eval_c(t) * x.rows(nc + q, np))[0],
        };
        let u_c = match sign {
            FeedbackSign::Negative => y_a_at(t) - y_p,
            FeedbackSign::Positive => y_a_at(t) + y_p,
        };
        let u_q = (ctrl.eval_c(t) * x.rows(0, nc))[0];
        (u_q, u_c, u_p, y_p)
    };

    let deriv = |t: f64, x: &DVector<f64>| -> DVector<f64> {
        let (u_q, u_c, u_p, _) = outputs(t, x);
        let mut dx = DVector::zeros(dim);
        let dxc = ctrl.eval_a(t) * x.rows(0, nc) + ctrl.eval_b(t).scale(u_c);
        dx.rows_mut(0, nc).copy_from(&dxc);
        for k in 0..q - 1 {
            dx[nc + k] = x[nc + k + 1];
        }
        dx[nc + q - 1] = u_q;
        if let Some(p) = plant {
            let dxp = p.eval_a(t) * x.rows(nc + q, np) + p.eval_b(t).scale(u_p);
            dx.rows_mut(nc + q, np).copy_from(&dxp);
        }
        dx
    };

    let n = grid.n();
    let dt = grid.dt();
    let substeps = (dt / DEFAULT_DT_ODE - 1e-9).ceil().max(1.0) as usize;
    let h = dt / substeps as f64;

    let mut u_q_v = Vec::with_capacity(n);
    let mut u_c_v = Vec::with_capacity(n);
    let mut u_p_v = Vec::with_capacity(n);
    let mut y_p_v = Vec::with_capacity(n);
    let mut y_a_v = Vec::with_capacity(n);
    let mut diverged_at = None;

    let mut x = DVector::zeros(dim);
    'march: for k in 0..n {
        let t_k = grid.node(k);
        let (u_q, u_c, u_p, y_p) = outputs(t_k, &x);
        let y_a = y_a_at(t_k);
        let sample_ok = x.iter().all(|v| v.is_finite())
            && [u_q, u_c, u_p, y_p, y_a]
                .iter()
                .all(|v| v.is_finite() && v.abs() <= guard);
        if !sample_ok {
            diverged_at = Some(t_k);
            break 'march;
        }
        u_q_v.push(u_q);
        u_c_v.push(u_c);
        u_p_v.push(u_p);
        y_p_v.push(y_p);
        y_a_v.push(y_a);
        if k + 1 == n {
            break;
        }
        for s in 0..substeps {
            let t = t_k + s as f64 * h;
            let k1 = deriv(t, &x);
            let k2 = deriv(t + 0.5 * h, &(&x + &k1 * (0.5 * h)));
            let k3 = deriv(t + 0.5 * h, &(&x + &k2 * (0.5 * h)));
            let k4 = deriv(t + h, &(&x + &k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
    }

    let out_grid = if diverged_at.is_some() {
        if u_q_v.len() < 2 {
            return Err(Error::NonFinite(format!(
                "unbounded growth detected at t = {} before two valid samples existed",
                diverged_at.expect("set on the truncation path")
            )));
        }
        TimeGrid::from_steps(u_q_v.len(), dt)?
    } else {
        grid.clone()
    };
    Ok(TrajectoryBundle {
        u_q: Signal::new(out_grid.clone(), u_q_v)?,
        u_c: Signal::new(out_grid.clone(), u_c_v)?,
        u_p: Signal::new(out_grid.clone(), u_p_v)?,
        y_p: Signal::new(out_grid.clone(), y_p_v)?,
        y_a: Signal::new(out_grid, y_a_v)?,
        diverged_at,
    })
}

/// The quantity of interest by the integral-equation route:
/// `u_q = φ_{c,a} − G_{c,p,q} ∘ u_q`, marched by the product-trapezoidal
/// solver.
///
/// Tables are built and dropped in sequence so at most two full-horizon
/// kernels are alive at once (the compose step), which keeps the halved-dt
/// cross-check leg inside a few gigabytes at n = 20001.
pub fn uq_via_lvie(config: &SystemConfig) -> Result<Signal> {
    config.validate()?;
    let g_c = impulse_kernel(&config.controller, &config.grid)?;
    let phi = forcing_term(&g_c, &config.attack)?;
    let g_cp = match config.plant.as_state_space() {
        None => g_c,
        Some(plant) => {
            let g_p = impulse_kernel(plant, &config.grid)?;
            let composed = compose_kernels(&g_c, &g_p)?;
            drop(g_p);
            drop(g_c);
            composed
        }
    };
    let g_cpq = compose_chain(&g_cp, config.q)?;
    drop(g_cp);
    let kernel = g_cpq.negated()?; // negative junction: u_q = φ − G∘u_q
    solve_lvie(&kernel, &phi)
}

/// Outcome of the two-route consistency check.
#[derive(Debug, Clone, Serialize)]
pub struct CrossReport {
    /// `sup |u_q^{ODE} − u_q^{LVIE}|` at the config's `dt`.
    pub sup_diff: f64,
    /// The same gap with the grid step halved.
    pub sup_diff_halved: f64,
    /// `sup_diff / sup_diff_halved`; ≈ 4 when both routes converge at
    /// second order.
    pub shrink_factor: f64,
    pub tol: f64,
    pub status: CheckStatus,
}

fn sup_diff_between_routes(config: &SystemConfig) -> Result<f64> {
    let sim = simulate(config)?;
    let lvie = uq_via_lvie(config)?;
    // a truncated (diverged) simulation is compared over its valid prefix
    let m = sim.u_q.len().min(lvie.len());
    if m < 2 {
        return Err(Error::NonFinite(
            "simulation diverged too early to cross-validate".into(),
        ));
    }
    Ok(sim.u_q.values()[..m]
        .iter()
        .zip(&lvie.values()[..m])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max))
}

/// Runs both routes at `dt` and `dt/2`. Passes when the gap is below
/// [`XVAL_TOL`] *and* halving the step at least halves the gap (it shrinks
/// ≈ 4× in practice); a gap already at rounding level passes outright.
pub fn cross_validate(config: &SystemConfig) -> Result<CrossReport> {
    let sup_diff = sup_diff_between_routes(config)?;
    let halved = config.with_grid(config.grid.t_end(), config.grid.dt() / 2.0)?;
    let sup_diff_halved = sup_diff_between_routes(&halved)?;
    let shrink_factor =
        if sup_diff_halved > 0.0 { sup_diff / sup_diff_halved } else { f64::INFINITY };
    let pass = sup_diff <= XVAL_TOL && (sup_diff <= 1e-12 || sup_diff_halved <= 0.5 * sup_diff);
    Ok(CrossReport {
        sup_diff,
        sup_diff_halved,
        shrink_factor,
        tol: XVAL_TOL,
        status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{AttackSpec, PlantSpec, Tolerances};
    use crate::grid::sup_norm;

    /// Single-state controller `ẋ = −t²x + u_c`, `u_q = x`, unity plant.
    fn loop_config(q: u32, a: u32, h: f64, t_end: f64, dt: f64) -> SystemConfig {
        SystemConfig {
            plant: PlantSpec::unity(),
            controller: LtvStateSpace::from_strs(&[&["-t^2"]], &["1"], &["1"]).unwrap(),
            q,
            attack: AttackSpec { a, h },
            grid: TimeGrid::new(t_end, dt).unwrap(),
            tolerances: Tolerances::default(),
        }
    }

    #[test]
    fn no_attack_means_identically_zero_signals() {
        let cfg = loop_config(2, 2, 0.0, 5.0, 1e-2);
        let sim = simulate(&cfg).unwrap();
        assert!(sim.diverged_at.is_none());
        for s in [&sim.u_q, &sim.u_c, &sim.u_p, &sim.y_p, &sim.y_a] {
            assert!(s.values().iter().all(|&v| v == 0.0), "a zeroed loop stays exactly zero");
        }
        let lvie = uq_via_lvie(&cfg).unwrap();
        assert!(lvie.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trajectories_are_linear_in_the_attack_weight() {
        let one = simulate(&loop_config(2, 1, 1.0, 5.0, 1e-2)).unwrap();
        let three = simulate(&loop_config(2, 1, 3.0, 5.0, 1e-2)).unwrap();
        for (a, b) in [
            (&one.u_q, &three.u_q),
            (&one.u_c, &three.u_c),
            (&one.y_p, &three.y_p),
        ] {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!(
                    (3.0 * x - y).abs() <= 1e-9 * y.abs().max(1e-12),
                    "linearity violated: 3·{x} vs {y}"
                );
            }
        }
    }

    #[test]
    fn chain_output_is_the_iterated_integral_of_uq() {
        let cfg = loop_config(2, 2, 1.0, 5.0, 1e-3);
        let sim = simulate(&cfg).unwrap();
        // q-fold cumulative trapezoid of u_q
        let dt = cfg.grid.dt();
        let mut acc: Vec<f64> = sim.u_q.values().to_vec();
        for _ in 0..cfg.q {
            let mut run = vec![0.0f64; acc.len()];
            for k in 1..acc.len() {
                run[k] = run[k - 1] + 0.5 * dt * (acc[k - 1] + acc[k]);
            }
            acc = run;
        }
        let worst = acc
            .iter()
            .zip(sim.u_p.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-4, "u_p deviates from the q-fold integral by {worst}");
    }

    #[test]
    fn magnitude_guard_truncates_diverging_runs() {
        // ẋ = +x + u_c with a unit step input: e^t growth crosses the guard
        let cfg = SystemConfig {
            plant: PlantSpec::unity(),
            controller: LtvStateSpace::from_strs(&[&["1"]], &["1"], &["1"]).unwrap(),
            q: 1,
            attack: AttackSpec { a: 0, h: 1.0 },
            grid: TimeGrid::new(20.0, 1e-2).unwrap(),
            tolerances: Tolerances { sup_guard: 1e3, ..Tolerances::default() },
        };
        let sim = simulate(&cfg).unwrap();
        let t_div = sim.diverged_at.expect("guard must trip");
        assert!(t_div < 20.0, "tripped inside the horizon, at {t_div}");
        assert!(sim.grid().n() < cfg.grid.n(), "trajectories are truncated");
        assert!(sim.u_q.values().iter().all(|v| v.abs() <= 1e3));
        assert_eq!(sim.grid().n(), sim.y_a.len(), "all six columns share the truncated grid");
    }

    #[test]
    fn junction_sign_is_not_cosmetic() {
        // Negative feedback peaks near 0.444 and plateaus; the positive sum
        // climbs through 0.73 toward 1. Run both and keep the gap on record.
        let cfg = loop_config(2, 2, 1.0, 10.0, 1e-2);
        let neg = simulate_with_sign(&cfg, FeedbackSign::Negative).unwrap();
        let pos = simulate_with_sign(&cfg, FeedbackSign::Positive).unwrap();
        let sup_neg = sup_norm(&neg.u_q);
        let sup_pos = sup_norm(&pos.u_q);
        assert!(
            (0.40..0.50).contains(&sup_neg),
            "negative junction peak moved: {sup_neg}"
        );
        assert!(sup_pos > 0.6, "positive junction should overshoot 0.6, got {sup_pos}");
        let tail_neg = *neg.u_q.values().last().unwrap();
        let tail_pos = *pos.u_q.values().last().unwrap();
        assert!(tail_neg < 0.45 && tail_pos > tail_neg);
    }

    #[test]
    fn the_two_routes_agree_and_tighten_under_refinement() {
        let cfg = loop_config(2, 1, 1.0, 5.0, 2e-2);
        let rep = cross_validate(&cfg).unwrap();
        assert_eq!(rep.status, CheckStatus::Pass, "{rep:?}");
        assert!(rep.sup_diff < XVAL_TOL);
        assert!(rep.shrink_factor >= 2.0, "expected ≈4× shrink, got {}", rep.shrink_factor);
    }

    #[test]
    fn state_space_plant_roundtrips_between_routes() {
        // integrator plant ẋ = u_p, y_p = x behind the chain
        let cfg = SystemConfig {
            plant: PlantSpec::state_space(
                LtvStateSpace::from_strs(&[&["0"]], &["1"], &["1"]).unwrap(),
            ),
            controller: LtvStateSpace::from_strs(&[&["-t^2"]], &["1"], &["1"]).unwrap(),
            q: 1,
            attack: AttackSpec { a: 1, h: 1.0 },
            grid: TimeGrid::new(4.0, 2e-2).unwrap(),
            tolerances: Tolerances::default(),
        };
        let rep = cross_validate(&cfg).unwrap();
        assert_eq!(rep.status, CheckStatus::Pass, "{rep:?}");
        let bundle = KernelBundle::build(&cfg).unwrap();
        assert!(bundle.g_cp.is_some(), "state-space plant composes a distinct G_cp");
        assert!(!std::ptr::eq(bundle.loop_gain(), &bundle.g_c));
    }

    #[test]
    fn kernel_bundle_for_the_unity_plant_reuses_gc() {
        let cfg = loop_config(2, 2, 1.0, 2.0, 1e-2);
        let bundle = KernelBundle::build(&cfg).unwrap();
        assert!(bundle.g_cp.is_none());
        assert!(std::ptr::eq(bundle.loop_gain(), &bundle.g_c));
        assert_eq!(bundle.g_cpq.grid(), &cfg.grid);
        assert_eq!(bundle.q, 2);
    }

    #[test]
    fn csv_export_has_the_documented_columns() {
        let cfg = loop_config(1, 0, 1.0, 1.0, 0.5);
        let sim = simulate(&cfg).unwrap();
        let mut buf = Vec::new();
        sim.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,u_q,u_c,u_p,y_p,y_a"));
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,0,1,0,0,1"), "step attack enters at t = 0: {first}");
        assert_eq!(text.lines().count(), 1 + cfg.grid.n());
    }
}
