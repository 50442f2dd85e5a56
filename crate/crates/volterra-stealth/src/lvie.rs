//! Second-kind linear Volterra integral equations: solver, kernel
//! composition, iterated kernels.
//!
//! The governing equation is
//!
//! ```text
//! x(t) = ∫₀ᵗ G(t,τ) x(τ) dτ + φ(t)
//! ```
//!
//! solved by the product trapezoidal method: second-order accurate,
//! unconditionally usable for continuous kernels, and simple enough that its
//! convergence order is verified by the test suite. Kernels here are
//! continuous (piecewise smooth), so the first step needs no weakly-singular
//! starting procedure — the `i = 1` step is the plain trapezoid over a
//! single interval.
//!
//! Composition `(K₁ ∘ K₂)(t,τ) = ∫_τ^t K₁(t,σ) K₂(σ,τ) dσ` is evaluated by
//! the same trapezoid rule over the grid nodes `σ ∈ [τ_j, t_i]`; composed
//! diagonals are zero by construction (integral over an empty interval).
//! The generic algorithm is O(n³) — fine at desk scale, but noticeably slow
//! above n ≈ 5 000; for the ubiquitous "kernel ∘ integrator chain" case
//! [`compose_with_integrator`] evaluates the *same* quadrature rule in
//! O(q·n²) via a binomial split, and the suite checks the two paths agree to
//! rounding.

use crate::error::Error;
use crate::grid::Signal;
use crate::stm::{integrator_kernel, KernelTable};
use crate::Result;

/// The implicit-step guard of the marching scheme: the denominator
/// `1 − dt/2·G(t_i,t_i)` must stay at least this large in magnitude.
pub const SINGULAR_STEP_TOL: f64 = 1e-12;

/// Exponent beyond which [`compose_with_integrator`]'s binomial split loses
/// too much precision to alternating-sign cancellation and callers should
/// compose against a tabulated [`integrator_kernel`] instead.
pub const MAX_FAST_Q: u32 = 8;

/// Plain trapezoid of uniformly sampled values.
pub(crate) fn trapz(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        _ => {
            let sum: f64 = values.iter().sum();
            dt * (sum - 0.5 * (values[0] + values[values.len() - 1]))
        }
    }
}

/// Solves `x = ∫ G x + φ` by product-trapezoidal marching:
///
/// ```text
/// x_0 = φ_0
/// x_i = (φ_i + dt·[½ G(t_i,t_0) x_0 + Σ_{j=1}^{i−1} G(t_i,t_j) x_j])
///       / (1 − dt·½·G(t_i,t_i))
/// ```
///
/// Fails with "implicit step singular" when `|1 − dt/2·G(t_i,t_i)|`
/// drops below 1e-12, and with a grid mismatch when `G` and `φ` disagree.
pub fn solve_lvie(g: &KernelTable, phi: &Signal) -> Result<Signal> {
    g.grid().ensure_same(phi.grid(), "solve_lvie kernel vs forcing")?;
    if g.is_delta() {
        return Err(Error::Domain(
            "solve_lvie needs a tabulated kernel, not the symbolic delta".into(),
        ));
    }
    let n = g.n();
    let dt = g.grid().dt();
    let phi_v = phi.values();
    let mut x = vec![0.0f64; n];
    x[0] = phi_v[0];
    for i in 1..n {
        let row = g.row(i);
        let mut acc = 0.5 * row[0] * x[0];
        for j in 1..i {
            acc += row[j] * x[j];
        }
        let denom = 1.0 - 0.5 * dt * row[i];
        if denom.abs() < SINGULAR_STEP_TOL {
            return Err(Error::SingularStep { t: g.grid().node(i), magnitude: denom.abs() });
        }
        let xi = (phi_v[i] + dt * acc) / denom;
        if !xi.is_finite() {
            return Err(Error::NonFinite(format!(
                "LVIE solution overflowed at t = {}",
                g.grid().node(i)
            )));
        }
        x[i] = xi;
    }
    Signal::new(g.grid().clone(), x)
}

/// Trapezoidal composition `(K₁ ∘ K₂)(t_i, τ_j) = ∫_{τ_j}^{t_i} K₁(t_i,σ)
/// K₂(σ,τ_j) dσ`; composed diagonals are zero. Either operand may be the
/// symbolic delta kernel, which acts as the identity (the other operand is
/// returned unchanged; delta ∘ delta stays delta).
pub fn compose_kernels(k1: &KernelTable, k2: &KernelTable) -> Result<KernelTable> {
    k1.grid().ensure_same(k2.grid(), "compose_kernels operands")?;
    match (k1.is_delta(), k2.is_delta()) {
        (true, _) => return Ok(k2.clone()),
        (_, true) => return Ok(k1.clone()),
        _ => {}
    }
    let n = k1.n();
    let dt = k1.grid().dt();
    let mut packed: Vec<f64> = Vec::with_capacity(n * (n + 1) / 2);
    let mut out_row = vec![0.0f64; n];
    for i in 0..n {
        let row1 = k1.row(i);
        out_row[..=i].fill(0.0);
        // full-weight accumulation: out[j] += K1(i,σ)·K2(σ,j) for σ ≥ j …
        for sigma in 0..=i {
            let coef = row1[sigma];
            if coef == 0.0 {
                continue;
            }
            let row2 = k2.row(sigma);
            for (o, r2) in out_row[..=sigma].iter_mut().zip(row2) {
                *o += coef * r2;
            }
        }
        // … then correct the trapezoid's half-weight endpoints σ = j, σ = i
        let row2i = k2.row(i);
        for j in 0..=i {
            let v = dt * (out_row[j] - 0.5 * row1[j] * k2.entry(j, j) - 0.5 * row1[i] * row2i[j]);
            packed.push(v);
        }
        // the diagonal is an integral over an empty interval
        let last = packed.len() - 1;
        packed[last] = 0.0;
    }
    KernelTable::from_packed(k1.grid().clone(), packed)
}

/// `K ∘ g_q` — the same quadrature as
/// `compose_kernels(K, integrator_kernel(q))` evaluated in O(q·n²) instead
/// of O(n³), without materializing the integrator table.
///
/// Splits `(σ−τ)^{q−1}` binomially into powers of `σ`, reducing each row to
/// `q` reverse cumulative trapezoids `S_m(j) = ∫_{τ_j}^{t_i} K(t_i,σ) σ^m dσ`
/// recombined as `Σ_m C(q−1,m) (−τ_j)^{q−1−m} S_m(j) / (q−1)!`. Agreement
/// with the generic path is limited only by floating-point associativity
/// (verified to ~1e-13 relative); the alternating-sign recombination loses
/// precision as `q` grows, so `q > `[`MAX_FAST_Q`] is refused — compose
/// against the tabulated kernel instead.
pub fn compose_with_integrator(k: &KernelTable, q: u32) -> Result<KernelTable> {
    if q < 1 {
        return Err(Error::Domain("integrator count q must be at least 1".into()));
    }
    if q > MAX_FAST_Q {
        return Err(Error::ResourceGuard(format!(
            "binomial fast path is ill-conditioned for q = {q} > {MAX_FAST_Q}; \
             use compose_kernels with integrator_kernel({q})"
        )));
    }
    if k.is_delta() {
        // δ ∘ g_q = g_q
        return integrator_kernel(q, k.grid());
    }
    let n = k.n();
    let dt = k.grid().dt();
    let fact: f64 = (1..q).map(|x| x as f64).product();
    let deg = (q - 1) as usize;
    // binomial coefficients C(q−1, m)
    let mut binom = vec![1.0f64; deg + 1];
    for m in 1..=deg {
        binom[m] = binom[m - 1] * (deg - m + 1) as f64 / m as f64;
    }
    // node powers σ^m
    let mut pow: Vec<Vec<f64>> = Vec::with_capacity(deg + 1);
    pow.push(vec![1.0; n]);
    for m in 1..=deg {
        let prev = &pow[m - 1];
        pow.push((0..n).map(|j| prev[j] * k.grid().node(j)).collect());
    }
    let mut packed: Vec<f64> = Vec::with_capacity(n * (n + 1) / 2);
    let mut s = vec![vec![0.0f64; n]; deg + 1];
    let mut w = vec![0.0f64; n];
    for i in 0..n {
        let row = k.row(i);
        for (m, s_m) in s.iter_mut().enumerate() {
            // w[σ] = K(t_i,σ)·σ^m; S_m[j] = reverse cumulative trapezoid
            for sigma in 0..=i {
                w[sigma] = row[sigma] * pow[m][sigma];
            }
            s_m[i] = 0.0;
            for j in (0..i).rev() {
                s_m[j] = s_m[j + 1] + 0.5 * dt * (w[j] + w[j + 1]);
            }
        }
        for j in 0..=i {
            let tau = k.grid().node(j);
            let mut acc = 0.0;
            let mut tau_pow = 1.0; // (−τ)^{deg−m} built from m = deg down
            for m in (0..=deg).rev() {
                acc += binom[m] * tau_pow * s[m][j];
                tau_pow *= -tau;
            }
            packed.push(acc / fact);
        }
        let last = packed.len() - 1;
        packed[last] = 0.0;
    }
    KernelTable::from_packed(k.grid().clone(), packed)
}

/// Iterated kernels `G_1 = G`, `G_m = G ∘ G_{m−1}`: [`compose_kernels`]
/// applied `v−1` times. `v = 1` returns `G` unchanged.
pub fn iterate_kernel(g: &KernelTable, v: u32) -> Result<KernelTable> {
    if v < 1 {
        return Err(Error::Domain("iteration count v must be at least 1".into()));
    }
    let mut acc = g.clone();
    for _ in 1..v {
        acc = compose_kernels(g, &acc)?;
    }
    Ok(acc)
}

/// Trapezoidal `∫₀^{t_i} G(t_i, τ) dτ` over row `i`.
///
/// # Panics
/// On the symbolic delta kernel (no tabulated rows).
pub fn row_integral(g: &KernelTable, i: usize) -> f64 {
    trapz(g.row(i), g.grid().dt())
}

/// Trapezoidal `∫_{τ_{j0}}^{t_i} G(t_i, τ) dτ` over the tail of row `i`.
pub(crate) fn partial_row_integral(g: &KernelTable, i: usize, j0: usize) -> f64 {
    trapz(&g.row(i)[j0..], g.grid().dt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    fn constant_kernel(grid: &TimeGrid, lambda: f64) -> KernelTable {
        KernelTable::from_fn(grid.clone(), |_, _| lambda).unwrap()
    }

    #[test]
    fn zero_kernel_returns_the_forcing() {
        let grid = TimeGrid::new(2.0, 1e-2).unwrap();
        let g = constant_kernel(&grid, 0.0);
        let phi = Signal::from_fn(grid, |t| (1.0 + t).sin()).unwrap();
        let x = solve_lvie(&g, &phi).unwrap();
        assert_eq!(x, phi);
    }

    #[test]
    fn zero_forcing_returns_the_zero_solution_exactly() {
        let grid = TimeGrid::new(2.0, 1e-2).unwrap();
        let g = constant_kernel(&grid, 0.7);
        let x = solve_lvie(&g, &Signal::zero(grid.clone())).unwrap();
        assert_eq!(x, Signal::zero(grid));
    }

    #[test]
    fn constant_kernel_resolvent_is_exponential() {
        // x = λ∫x + 1 ⇒ x' = λx, x(0)=1 ⇒ x = e^{λt}
        let grid = TimeGrid::new(1.0, 1e-3).unwrap();
        let g = constant_kernel(&grid, -1.0);
        let phi = Signal::from_fn(grid.clone(), |_| 1.0).unwrap();
        let x = solve_lvie(&g, &phi).unwrap();
        let err = (0..grid.n())
            .map(|k| (x.values()[k] - (-grid.node(k)).exp()).abs())
            .fold(0.0f64, f64::max);
        assert!(err <= 1e-5, "sup error vs e^(-t) is {err}");
    }

    #[test]
    fn quadrature_error_drops_fourfold_per_dt_halving() {
        let sup_err = |dt: f64| {
            let grid = TimeGrid::new(1.0, dt).unwrap();
            let g = constant_kernel(&grid, -1.0);
            let phi = Signal::from_fn(grid.clone(), |_| 1.0).unwrap();
            let x = solve_lvie(&g, &phi).unwrap();
            (0..grid.n())
                .map(|k| (x.values()[k] - (-grid.node(k)).exp()).abs())
                .fold(0.0f64, f64::max)
        };
        let ratio = sup_err(2e-3) / sup_err(1e-3);
        assert!(
            (3.5..=4.5).contains(&ratio),
            "order-2 convergence expected (ratio ≈ 4), got {ratio}"
        );
    }

    #[test]
    fn near_singular_diagonal_is_rejected() {
        let grid = TimeGrid::new(1.0, 1e-2).unwrap();
        let g = constant_kernel(&grid, 2.0 / 1e-2); // 1 − dt/2·G(t,t) = 0
        let phi = Signal::from_fn(grid, |_| 1.0).unwrap();
        let err = solve_lvie(&g, &phi).unwrap_err();
        assert!(matches!(err, Error::SingularStep { .. }), "{err}");
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let g = constant_kernel(&TimeGrid::new(1.0, 1e-2).unwrap(), 1.0);
        let phi = Signal::zero(TimeGrid::new(1.0, 2e-2).unwrap());
        assert!(solve_lvie(&g, &phi).is_err());
    }

    #[test]
    fn delta_kernel_cannot_be_solved_against() {
        let grid = TimeGrid::new(1.0, 1e-2).unwrap();
        let d = KernelTable::delta(grid.clone());
        assert!(solve_lvie(&d, &Signal::zero(grid)).is_err());
    }

    #[test]
    fn delta_is_the_identity_of_composition() {
        let grid = TimeGrid::new(1.0, 1e-2).unwrap();
        let g = constant_kernel(&grid, 0.3);
        let d = KernelTable::delta(grid.clone());
        assert_eq!(compose_kernels(&d, &g).unwrap(), g);
        assert_eq!(compose_kernels(&g, &d).unwrap(), g);
        assert!(compose_kernels(&d, &d).unwrap().is_delta());
    }

    #[test]
    fn composing_two_single_integrators_gives_the_double_integrator() {
        // ∫_τ^t 1·1 dσ = t−τ, exactly (trapezoid is exact on constants)
        let grid = TimeGrid::new(2.0, 1e-2).unwrap();
        let g1 = integrator_kernel(1, &grid).unwrap();
        let got = compose_kernels(&g1, &g1).unwrap();
        for i in (0..grid.n()).step_by(17) {
            for j in (0..=i).step_by(13) {
                let exact = grid.node(i) - grid.node(j);
                assert!(
                    (got.entry(i, j) - exact).abs() < 1e-13,
                    "({i},{j}): {} vs {exact}",
                    got.entry(i, j)
                );
            }
        }
    }

    #[test]
    fn composed_diagonals_are_zero() {
        let grid = TimeGrid::new(1.0, 5e-2).unwrap();
        let g = constant_kernel(&grid, 1.7);
        let gg = compose_kernels(&g, &g).unwrap();
        for i in 0..grid.n() {
            assert_eq!(gg.entry(i, i), 0.0);
        }
    }

    #[test]
    fn iterated_constant_kernels_match_the_closed_form() {
        // G_v(t,τ) = λ^v (t−τ)^{v−1}/(v−1)! — trapezoid is exact for the
        // constant and linear integrands that arise at v = 2, 3
        let grid = TimeGrid::new(1.0, 1e-2).unwrap();
        let lambda = 0.5;
        let g = constant_kernel(&grid, lambda);
        assert_eq!(iterate_kernel(&g, 1).unwrap(), g, "v = 1 returns G unchanged");
        let g2 = iterate_kernel(&g, 2).unwrap();
        let g3 = iterate_kernel(&g, 3).unwrap();
        for i in (1..grid.n()).step_by(7) {
            for j in (0..i).step_by(5) {
                let d = grid.node(i) - grid.node(j);
                let e2 = lambda * lambda * d;
                let e3 = lambda.powi(3) * d * d / 2.0;
                assert!((g2.entry(i, j) - e2).abs() < 1e-12 * e2.max(1.0));
                assert!((g3.entry(i, j) - e3).abs() < 1e-12 * e3.max(1.0));
            }
        }
    }

    #[test]
    fn fast_integrator_composition_matches_the_generic_path() {
        let grid = TimeGrid::new(1.0, 1e-2).unwrap();
        let k = KernelTable::from_fn(grid.clone(), |t, tau| {
            (-(t.powi(3) - tau.powi(3)) / 3.0).exp()
        })
        .unwrap();
        for q in 1..=3u32 {
            let generic = compose_kernels(&k, &integrator_kernel(q, &grid).unwrap()).unwrap();
            let fast = compose_with_integrator(&k, q).unwrap();
            let mut worst = 0.0f64;
            for i in 0..grid.n() {
                for j in 0..=i {
                    worst = worst.max((generic.entry(i, j) - fast.entry(i, j)).abs());
                }
            }
            let scale = generic.max_abs_entry().unwrap().max(1e-300);
            assert!(
                worst / scale < 1e-12,
                "q = {q}: fast path deviates by {worst} (scale {scale})"
            );
        }
        assert!(compose_with_integrator(&k, MAX_FAST_Q + 1).is_err());
    }

    #[test]
    fn delta_composed_with_integrator_is_the_integrator() {
        let grid = TimeGrid::new(1.0, 1e-1).unwrap();
        let d = KernelTable::delta(grid.clone());
        let got = compose_with_integrator(&d, 2).unwrap();
        assert_eq!(got, integrator_kernel(2, &grid).unwrap());
    }

    #[test]
    fn row_integral_basics() {
        let grid = TimeGrid::new(2.0, 1e-2).unwrap();
        let zero = constant_kernel(&grid, 0.0);
        let ones = constant_kernel(&grid, 1.0);
        for i in (0..grid.n()).step_by(23) {
            assert_eq!(row_integral(&zero, i), 0.0);
            // exact for the trapezoid on constants
            assert!((row_integral(&ones, i) - grid.node(i)).abs() < 1e-12);
        }
    }
}
