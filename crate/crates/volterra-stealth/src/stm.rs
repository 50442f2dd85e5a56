//! State-transition matrices and impulse-response kernels.
//!
//! For an LTV system `ẋ = A(t)x + B(t)u`, `y = C(t)x`, the state-transition
//! matrix solves
//!
//! ```text
//! ∂Φ(t,τ)/∂t = A(t) Φ(t,τ),   Φ(τ,τ) = I
//! ```
//!
//! and the impulse-response kernel is `g(t,τ) = C(t) Φ(t,τ) B(τ)`. Φ is
//! computed by forward ODE integration (fixed-step classical RK4), not by
//! truncating a Peano–Baker series: the series matters for continuity
//! arguments, while ODE sweeps are cheaper and better conditioned
//! numerically. Kernels are assumed piecewise smooth — true for every system
//! in scope; quadrature order claims in the tests rely on it.
//!
//! Kernel tables store the lower triangle `{(i,j): j ≤ i}` of `G(t_i, τ_j)`
//! in packed row-major form (row `i` starts at offset `i(i+1)/2`), so the
//! upper triangle that no algorithm ever reads also costs no memory: an
//! `n = 10 001` table is ~400 MB instead of ~800 MB dense. Grids beyond
//! `n ≈ 20 001` are rejected upstream (desk-scale tool); composed-kernel
//! workflows get noticeably slow above `n ≈ 5 000` when the generic O(n³)
//! composition is involved (see `lvie`).

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::config::LtvStateSpace;
use crate::error::Error;
use crate::grid::TimeGrid;
use crate::Result;

/// Default RK4 sub-step for transition-matrix integration when no grid
/// context dictates one. Grid-driven sweeps use `min(grid.dt, 1e-3)`.
pub const DEFAULT_DT_ODE: f64 = 1e-3;

/// Largest integrator count accepted (`(q−1)!` must stay exactly
/// representable; anything near this limit is far outside the paper's q=1..3
/// territory anyway).
pub const MAX_Q: u32 = 20;

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    /// Packed lower triangle: row `i` occupies `[i(i+1)/2, i(i+1)/2 + i]`.
    Dense(Vec<f64>),
    /// Symbolic Dirac delta `δ(t−τ)` (unity-gain plant). Never tabulated —
    /// a delta cannot live on a quadrature grid without smearing error —
    /// and treated as the identity by composition.
    Delta,
}

/// A sampled two-variable kernel `G(t_i, τ_j)` on the lower triangle of a
/// uniform grid, or the symbolic delta kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    grid: TimeGrid,
    repr: Repr,
}

#[inline]
fn row_offset(i: usize) -> usize {
    i * (i + 1) / 2
}

impl KernelTable {
    /// Tabulates `f(t_i, τ_j)` over the lower triangle; rejects non-finite
    /// entries with their location.
    pub fn from_fn(grid: TimeGrid, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let n = grid.n();
        let mut values = vec![0.0; row_offset(n - 1) + n];
        for i in 0..n {
            let t = grid.node(i);
            let row = &mut values[row_offset(i)..row_offset(i) + i + 1];
            for (j, slot) in row.iter_mut().enumerate() {
                let v = f(t, grid.node(j));
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "kernel entry at (t, tau) = ({t}, {}) is {v}",
                        grid.node(j)
                    )));
                }
                *slot = v;
            }
        }
        Ok(KernelTable { grid, repr: Repr::Dense(values) })
    }

    /// Wraps an already-packed lower triangle (row `i` at offset
    /// `i(i+1)/2`). Length must be `n(n+1)/2`; entries must be finite.
    pub fn from_packed(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        let n = grid.n();
        let want = row_offset(n - 1) + n;
        if values.len() != want {
            return Err(Error::GridMismatch(format!(
                "packed kernel has {} entries but the grid needs {want}",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "packed kernel entry #{k} is {}",
                values[k]
            )));
        }
        Ok(KernelTable { grid, repr: Repr::Dense(values) })
    }

    /// The symbolic Dirac-delta kernel (identity under composition).
    pub fn delta(grid: TimeGrid) -> Self {
        KernelTable { grid, repr: Repr::Delta }
    }

    pub fn is_delta(&self) -> bool {
        matches!(self.repr, Repr::Delta)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// Entry `G(t_i, τ_j)`, `j ≤ i`.
    ///
    /// # Panics
    /// On upper-triangle access (`j > i`) and on the symbolic delta kernel,
    /// which has no pointwise values.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        assert!(j <= i, "upper-triangle access ({i}, {j}): entries with j > i do not exist");
        match &self.repr {
            Repr::Dense(v) => v[row_offset(i) + j],
            Repr::Delta => panic!("the delta kernel has no pointwise entries"),
        }
    }

    /// Row `i` as a slice of `i+1` entries `G(t_i, τ_0..=τ_i)`.
    ///
    /// # Panics
    /// On the symbolic delta kernel.
    pub fn row(&self, i: usize) -> &[f64] {
        match &self.repr {
            Repr::Dense(v) => &v[row_offset(i)..row_offset(i) + i + 1],
            Repr::Delta => panic!("the delta kernel has no pointwise entries"),
        }
    }

    /// Smallest tabulated entry (`None` for the delta kernel).
    pub fn min_entry(&self) -> Option<f64> {
        match &self.repr {
            Repr::Dense(v) => Some(v.iter().cloned().fold(f64::INFINITY, f64::min)),
            Repr::Delta => None,
        }
    }

    /// Largest |entry| (`None` for the delta kernel).
    pub fn max_abs_entry(&self) -> Option<f64> {
        match &self.repr {
            Repr::Dense(v) => Some(v.iter().fold(0.0f64, |m, x| m.max(x.abs()))),
            Repr::Delta => None,
        }
    }

    /// A table with every entry replaced by its absolute value.
    pub fn abs(&self) -> Result<Self> {
        match &self.repr {
            Repr::Dense(v) => Ok(KernelTable {
                grid: self.grid.clone(),
                repr: Repr::Dense(v.iter().map(|x| x.abs()).collect()),
            }),
            Repr::Delta => Err(Error::Domain(
                "|G| of the symbolic delta kernel is not tabulated".into(),
            )),
        }
    }

    /// The table with every entry negated, in place (no second allocation —
    /// full-horizon tables are hundreds of megabytes).
    pub fn negated(self) -> Result<Self> {
        match self.repr {
            Repr::Dense(mut v) => {
                for x in &mut v {
                    *x = -*x;
                }
                Ok(KernelTable { grid: self.grid, repr: Repr::Dense(v) })
            }
            Repr::Delta => {
                Err(Error::Domain("the symbolic delta kernel cannot be negated".into()))
            }
        }
    }

    /// Writes the lower triangle as CSV with columns `t,tau,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        if self.is_delta() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                "the delta kernel has no tabulated entries to export",
            ));
        }
        writeln!(w, "t,tau,value")?;
        for i in 0..self.n() {
            let t = self.grid.node(i);
            for (j, v) in self.row(i).iter().enumerate() {
                writeln!(w, "{t},{},{v}", self.grid.node(j))?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// State-transition matrices
// ---------------------------------------------------------------------------

/// `Φ(t,τ)` by forward RK4 integration of `∂Φ/∂t = A(s)Φ` from `τ` to `t`
/// at the default sub-step [`DEFAULT_DT_ODE`]. `Φ(τ,τ) = I` exactly.
pub fn transition_matrix(sys: &LtvStateSpace, t: f64, tau: f64) -> Result<DMatrix<f64>> {
    transition_matrix_with_step(sys, t, tau, DEFAULT_DT_ODE)
}

/// [`transition_matrix`] with an explicit RK4 sub-step (grid-driven callers
/// pass `min(grid.dt, 1e-3)`; the convergence tests vary it).
pub fn transition_matrix_with_step(
    sys: &LtvStateSpace,
    t: f64,
    tau: f64,
    dt_ode: f64,
) -> Result<DMatrix<f64>> {
    if !(t.is_finite() && tau.is_finite()) || tau < 0.0 || tau > t {
        return Err(Error::Domain(format!(
            "transition matrix needs 0 <= tau <= t, got tau = {tau}, t = {t}"
        )));
    }
    if !(dt_ode.is_finite() && dt_ode > 0.0) {
        return Err(Error::Domain(format!("dt_ode must be > 0, got {dt_ode}")));
    }
    let ns = sys.n_states();
    let mut phi = DMatrix::<f64>::identity(ns, ns);
    let span = t - tau;
    if span == 0.0 {
        return Ok(phi);
    }
    let steps = (span / dt_ode).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let eval = |s: f64| -> Result<DMatrix<f64>> {
        let a = sys.eval_a(s);
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("A(t) is non-finite at t = {s}")));
        }
        Ok(a)
    };
    for m in 0..steps {
        let s = tau + m as f64 * h;
        let k1 = eval(s)? * &phi;
        let k2 = eval(s + h / 2.0)? * (&phi + (h / 2.0) * &k1);
        let k3 = eval(s + h / 2.0)? * (&phi + (h / 2.0) * &k2);
        let k4 = eval(s + h)? * (&phi + h * &k3);
        phi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "transition matrix diverged while integrating from {tau} to {t}"
        )));
    }
    Ok(phi)
}

// ---------------------------------------------------------------------------
// Impulse-response kernels
// ---------------------------------------------------------------------------

/// Coefficient caches for one sweep: `A` on the half-sub-step lattice
/// (RK4 stages live at `s`, `s+h/2`, `s+h`), `B`/`C` at the grid nodes.
struct CoeffCache {
    /// `A(k·h/2)` for `k = 0..=2·(n−1)·s_sub`.
    a_half: Vec<DMatrix<f64>>,
    b_nodes: Vec<DVector<f64>>,
    /// `C(t_i)` stored as a plain vector (used only in dot products).
    c_nodes: Vec<DVector<f64>>,
    s_sub: usize,
    h: f64,
}

impl CoeffCache {
    fn build(sys: &LtvStateSpace, grid: &TimeGrid) -> Result<Self> {
        let n = grid.n();
        let dt = grid.dt();
        let s_sub = (dt / DEFAULT_DT_ODE - 1e-12).ceil().max(1.0) as usize;
        let h = dt / s_sub as f64;
        let half_count = 2 * (n - 1) * s_sub + 1;
        let mut a_half = Vec::with_capacity(half_count);
        for k in 0..half_count {
            let s = k as f64 * (h / 2.0);
            let a = sys.eval_a(s);
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("A(t) is non-finite at t = {s}")));
            }
            a_half.push(a);
        }
        let mut b_nodes = Vec::with_capacity(n);
        let mut c_nodes = Vec::with_capacity(n);
        for i in 0..n {
            let t = grid.node(i);
            let b = sys.eval_b(t);
            let c = sys.eval_c(t).transpose();
            if b.iter().chain(c.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("B/C non-finite at t = {t}")));
            }
            b_nodes.push(b);
            c_nodes.push(c);
        }
        Ok(CoeffCache { a_half, b_nodes, c_nodes, s_sub, h })
    }
}

/// Tabulates `g(t_i, τ_j) = C(t_i) Φ(t_i, τ_j) B(τ_j)` over the lower
/// triangle.
///
/// Computed column-wise: for each `τ_j` one forward RK4 sweep of the vector
/// ODE `v̇ = A(t)v`, `v(τ_j) = B(τ_j)`, recording `C(t_i)·v(t_i)` along the
/// way — `n` sweeps instead of `n²/2` independent solves. Coefficients are
/// evaluated once per stage time and shared across all columns. The RK4
/// sub-step is `min(dt, 1e-3)`, refined to divide `dt` exactly.
pub fn impulse_kernel(sys: &LtvStateSpace, grid: &TimeGrid) -> Result<KernelTable> {
    let cache = CoeffCache::build(sys, grid)?;
    if sys.n_states() == 1 {
        sweep_scalar(grid, &cache)
    } else {
        sweep_generic(grid, &cache)
    }
}

/// Scalar fast path (`n_states == 1`): the presets and every long-horizon
/// run use single-state controllers, and avoiding matrix machinery in the
/// innermost loop makes full-grid sweeps take seconds instead of minutes.
fn sweep_scalar(grid: &TimeGrid, cache: &CoeffCache) -> Result<KernelTable> {
    let n = grid.n();
    let a: Vec<f64> = cache.a_half.iter().map(|m| m[(0, 0)]).collect();
    let b: Vec<f64> = cache.b_nodes.iter().map(|v| v[0]).collect();
    let c: Vec<f64> = cache.c_nodes.iter().map(|v| v[0]).collect();
    let (s_sub, h) = (cache.s_sub, cache.h);
    let mut values = vec![0.0f64; row_offset(n - 1) + n];
    for j in 0..n {
        let mut v = b[j];
        values[row_offset(j) + j] = c[j] * v;
        for i in j..n - 1 {
            for m in 0..s_sub {
                let hi = 2 * (i * s_sub + m);
                let k1 = a[hi] * v;
                let k2 = a[hi + 1] * (v + 0.5 * h * k1);
                let k3 = a[hi + 1] * (v + 0.5 * h * k2);
                let k4 = a[hi + 2] * (v + h * k3);
                v += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            let g = c[i + 1] * v;
            if !g.is_finite() {
                return Err(Error::NonFinite(format!(
                    "impulse kernel diverged at (t, tau) = ({}, {})",
                    grid.node(i + 1),
                    grid.node(j)
                )));
            }
            values[row_offset(i + 1) + j] = g;
        }
    }
    KernelTable::from_packed(grid.clone(), values)
}

/// General multi-state sweep. Reuses four stage buffers and one scratch
/// vector so the inner loop performs no allocation.
fn sweep_generic(grid: &TimeGrid, cache: &CoeffCache) -> Result<KernelTable> {
    let n = grid.n();
    let ns = cache.b_nodes[0].len();
    let (s_sub, h) = (cache.s_sub, cache.h);
    let mut values = vec![0.0f64; row_offset(n - 1) + n];
    let mut v = DVector::<f64>::zeros(ns);
    let mut tmp = DVector::<f64>::zeros(ns);
    let mut k = [
        DVector::<f64>::zeros(ns),
        DVector::<f64>::zeros(ns),
        DVector::<f64>::zeros(ns),
        DVector::<f64>::zeros(ns),
    ];
    for j in 0..n {
        v.copy_from(&cache.b_nodes[j]);
        values[row_offset(j) + j] = cache.c_nodes[j].dot(&v);
        for i in j..n - 1 {
            for m in 0..s_sub {
                let hi = 2 * (i * s_sub + m);
                // k1 = A(s) v
                k[0].gemv(1.0, &cache.a_half[hi], &v, 0.0);
                // k2 = A(s+h/2) (v + h/2 k1)
                tmp.copy_from(&v);
                tmp.axpy(0.5 * h, &k[0], 1.0);
                k[1].gemv(1.0, &cache.a_half[hi + 1], &tmp, 0.0);
                // k3 = A(s+h/2) (v + h/2 k2)
                tmp.copy_from(&v);
                tmp.axpy(0.5 * h, &k[1], 1.0);
                k[2].gemv(1.0, &cache.a_half[hi + 1], &tmp, 0.0);
                // k4 = A(s+h) (v + h k3)
                tmp.copy_from(&v);
                tmp.axpy(h, &k[2], 1.0);
                k[3].gemv(1.0, &cache.a_half[hi + 2], &tmp, 0.0);
                // v += h/6 (k1 + 2k2 + 2k3 + k4)
                v.axpy(h / 6.0, &k[0], 1.0);
                v.axpy(h / 3.0, &k[1], 1.0);
                v.axpy(h / 3.0, &k[2], 1.0);
                v.axpy(h / 6.0, &k[3], 1.0);
            }
            let g = cache.c_nodes[i + 1].dot(&v);
            if !g.is_finite() {
                return Err(Error::NonFinite(format!(
                    "impulse kernel diverged at (t, tau) = ({}, {})",
                    grid.node(i + 1),
                    grid.node(j)
                )));
            }
            values[row_offset(i + 1) + j] = g;
        }
    }
    KernelTable::from_packed(grid.clone(), values)
}

// ---------------------------------------------------------------------------
// Integrator chain
// ---------------------------------------------------------------------------

/// Convolution kernel of a chain of `q ≥ 1` pure integrators:
/// `g_q(t, τ) = (t−τ)^{q−1} / (q−1)!` on the lower triangle.
pub fn integrator_kernel(q: u32, grid: &TimeGrid) -> Result<KernelTable> {
    if q < 1 {
        return Err(Error::Domain("integrator count q must be at least 1".into()));
    }
    if q > MAX_Q {
        return Err(Error::Domain(format!("q = {q} exceeds the supported maximum {MAX_Q}")));
    }
    let fact: f64 = (1..q).map(|k| k as f64).product();
    let p = (q - 1) as i32;
    let dt = grid.dt();
    KernelTable::from_fn(grid.clone(), |t, tau| {
        // exact node spacing multiple keeps (t−τ) free of cancellation
        let d = ((t - tau) / dt).round() * dt;
        d.powi(p) / fact
    })
}

/// The integrator chain realized as a state space (`q` states): the input
/// feeds the last integrator, the chain output is the first state,
/// `u_p = [1 0 … 0] x`. Its impulse response equals [`integrator_kernel`].
pub fn integrator_chain_ss(q: u32) -> Result<LtvStateSpace> {
    if q < 1 || q > MAX_Q {
        return Err(Error::Domain(format!("q must lie in 1..={MAX_Q}, got {q}")));
    }
    let n = q as usize;
    let mut a = vec![vec![crate::expr::CoefExpr::constant(0.0); n]; n];
    for (i, row) in a.iter_mut().enumerate().take(n - 1) {
        row[i + 1] = crate::expr::CoefExpr::constant(1.0);
    }
    let mut b = vec![crate::expr::CoefExpr::constant(0.0); n];
    b[n - 1] = crate::expr::CoefExpr::constant(1.0);
    let mut c = vec![crate::expr::CoefExpr::constant(0.0); n];
    c[0] = crate::expr::CoefExpr::constant(1.0);
    LtvStateSpace::new(a, b, c)
}
