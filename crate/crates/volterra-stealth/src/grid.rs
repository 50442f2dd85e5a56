//! Uniform time grids, sampled signals, and finite-horizon decay
//! diagnostics.
//!
//! Everything downstream (kernel tables, Volterra solves, simulations)
//! shares one uniform grid per run: product-quadrature solvers need aligned
//! nodes, and at desk scale adaptive stepping buys nothing. Asymptotic
//! notions are replaced by finite-horizon surrogates: `sup_{t≥0}` becomes a
//! max over the grid, and "decays to zero" becomes a tail-window trend test
//! ([`decay_metric`]).

use serde::Serialize;

use crate::error::Error;
use crate::Result;

/// Fraction of the horizon used for tail diagnostics throughout the crate
/// (the final window of [`decay_metric`]; four such windows feed the trend
/// test). With a 10 s horizon this is the `t ∈ [8, 10]` tail.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.2;

/// Relative slack for the "non-increasing windows" trend test: a window may
/// exceed its predecessor by this relative amount (plus a 1e-12 absolute
/// floor) and still count as non-increasing, so exact plateaus and rounding
/// noise do not flip verdicts.
pub(crate) const WINDOW_SLACK_REL: f64 = 1e-9;

/// A uniform time grid `t_k = k·dt`, `k = 0..n`, covering `[0, t_end]`.
#[derive(Debug, Clone, Serialize)]
pub struct TimeGrid {
    t_end: f64,
    dt: f64,
    n: usize,
}

impl PartialEq for TimeGrid {
    fn eq(&self, other: &Self) -> bool {
        // Grids are equal when they produce identical nodes. dt is compared
        // bitwise: grids meant to be shared are constructed from the same
        // parameters.
        self.n == other.n && self.dt.to_bits() == other.dt.to_bits()
    }
}

impl TimeGrid {
    /// Builds the grid with `n = floor(t_end/dt) + 1` nodes.
    ///
    /// The floor is taken with a 1e-9 relative slack so horizons that are
    /// exact multiples of `dt` are not truncated by floating-point rounding
    /// (`10.0 / 1e-3` evaluates just above 10000).
    pub fn new(t_end: f64, dt: f64) -> Result<Self> {
        if !t_end.is_finite() || t_end <= 0.0 {
            return Err(Error::InvalidGrid(format!("t_end must be > 0, got {t_end}")));
        }
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::InvalidGrid(format!("dt must be > 0, got {dt}")));
        }
        let ratio = t_end / dt;
        if ratio > 5e7 {
            return Err(Error::InvalidGrid(format!(
                "grid would have ~{ratio:.1e} nodes; refusing (desk-scale tool)"
            )));
        }
        let n = (ratio + 1e-9).floor() as usize + 1;
        if n < 2 {
            return Err(Error::InvalidGrid(format!(
                "grid needs at least 2 nodes, got n = {n} (t_end = {t_end}, dt = {dt})"
            )));
        }
        Ok(TimeGrid { t_end, dt, n })
    }

    /// Builds a grid directly from a node count (`n ≥ 2` nodes, spacing
    /// `dt`). Used for truncated trajectories after a divergence guard
    /// trips, where the last node is not a round multiple of the requested
    /// horizon.
    pub fn from_steps(n: usize, dt: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need n >= 2 nodes, got {n}")));
        }
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::InvalidGrid(format!("dt must be > 0, got {dt}")));
        }
        Ok(TimeGrid { t_end: (n - 1) as f64 * dt, dt, n })
    }

    /// Horizon end requested at construction.
    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Node spacing.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of nodes (`floor(t_end/dt) + 1`).
    pub fn n(&self) -> usize {
        self.n
    }

    /// The `k`-th node, `t_k = k·dt`.
    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Time of the last node, `(n−1)·dt` (equals `t_end` when the horizon is
    /// a multiple of `dt`).
    pub fn last_time(&self) -> f64 {
        self.node(self.n - 1)
    }

    /// Index of the node nearest to `t`, clamped into range.
    pub fn nearest_index(&self, t: f64) -> usize {
        let k = (t / self.dt).round();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(self.n - 1)
        }
    }

    /// Grid with the same horizon and halved step (`dt/2`), doubling the
    /// interval count: `n' = 2(n−1)+1`.
    pub fn halved(&self) -> Result<Self> {
        TimeGrid::new(self.t_end, self.dt / 2.0)
    }

    /// Errors unless `self` and `other` are the same grid.
    pub fn ensure_same(&self, other: &TimeGrid, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: (n = {}, dt = {}) vs (n = {}, dt = {})",
                self.n, self.dt, other.n, other.dt
            )))
        }
    }
}

/// A uniformly sampled scalar trajectory. Values are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Signal {
    /// Wraps sampled values; rejects length mismatches and non-finite
    /// entries (NaN/Inf never propagates silently).
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::GridMismatch(format!(
                "signal has {} samples but grid has {} nodes",
                values.len(),
                grid.n()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "signal sample at t = {} is {}",
                grid.node(k),
                values[k]
            )));
        }
        Ok(Signal { grid, values })
    }

    /// The identically-zero signal.
    pub fn zero(grid: TimeGrid) -> Self {
        let n = grid.n();
        Signal { grid, values: vec![0.0; n] }
    }

    /// Samples `f(t_k)` over the grid; rejects non-finite samples.
    pub fn from_fn(grid: TimeGrid, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        let values = (0..grid.n()).map(|k| f(grid.node(k))).collect();
        Signal::new(grid, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `max_k |s(t_k)|` — see [`sup_norm`].
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Index and value of the largest |sample|.
    pub fn argmax_abs(&self) -> (usize, f64) {
        let mut best = (0usize, 0.0f64);
        for (k, v) in self.values.iter().enumerate() {
            if v.abs() > best.1 {
                best = (k, v.abs());
            }
        }
        best
    }

    /// A new signal scaled by `c` (finite `c` keeps values finite).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Signal::new(self.grid.clone(), self.values.iter().map(|v| c * v).collect())
    }

    /// Pointwise difference `self − other` (shared grid required).
    pub fn sub(&self, other: &Signal) -> Result<Self> {
        self.grid.ensure_same(&other.grid, "signal subtraction")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Signal::new(self.grid.clone(), values)
    }
}

/// Finite-horizon surrogate of `sup_{t≥0} |s(t)|`: the max of `|s|` over the
/// grid nodes.
pub fn sup_norm(s: &Signal) -> f64 {
    s.sup_norm()
}

/// Result of the finite-horizon decay test. `windows` holds the per-window
/// maxima of `|s|` over the last four equal windows (oldest first); the last
/// window is the tail that `tail_max` reports.
#[derive(Debug, Clone, Serialize)]
pub struct DecayMetric {
    /// `max |s|` over the final `tail_fraction` of the horizon.
    pub tail_max: f64,
    /// True iff the window maxima are non-increasing *and* `tail_max` is
    /// below the decay tolerance.
    pub is_decaying: bool,
    /// Maxima of `|s|` over the last four equal windows, oldest first.
    pub windows: [f64; 4],
    /// The tolerance actually applied (explicit, or the dynamic default
    /// `max(1e-3·sup_norm, 1e-9)`).
    pub decay_tol_used: f64,
    /// The window width as a fraction of the horizon.
    pub tail_fraction: f64,
}

/// Finite-horizon surrogate of `lim_{t→∞} |s(t)| = 0`.
///
/// Splits the end of the horizon into 4 equal windows of width
/// `tail_fraction · t_last` each and takes the max of `|s|` per window.
/// The signal counts as decaying iff the window maxima are non-increasing
/// (within a 1e-9 relative slack, so plateaus and rounding noise do not
/// flip the verdict) **and** the final-window max is below `decay_tol`.
///
/// `decay_tol = None` applies the dynamic default
/// `max(1e-3 · sup_norm(s), 1e-9)`; the absolute floor keeps the
/// identically-zero signal classified as decaying.
///
/// Errors with "insufficient horizon" when four windows do not fit
/// (`4 · tail_fraction > 1`) or a window would contain fewer than two
/// samples.
pub fn decay_metric(
    s: &Signal,
    tail_fraction: f64,
    decay_tol: Option<f64>,
) -> Result<DecayMetric> {
    if !(0.0..1.0).contains(&tail_fraction) || tail_fraction <= 0.0 {
        return Err(Error::Domain(format!(
            "tail_fraction must lie in (0,1), got {tail_fraction}"
        )));
    }
    let intervals = s.len() - 1;
    let w = (tail_fraction * intervals as f64).floor() as usize;
    if w < 1 || 4 * w > intervals {
        return Err(Error::InsufficientHorizon(format!(
            "4 tail windows of fraction {tail_fraction} need 4·{w} intervals \
             but the grid has {intervals}"
        )));
    }
    let last = s.len() - 1;
    let mut windows = [0.0f64; 4];
    for (k, win) in windows.iter_mut().enumerate() {
        let lo = last - (4 - k) * w;
        let hi = last - (3 - k) * w;
        *win = s.values()[lo..=hi]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
    }
    let tail_max = windows[3];
    let tol = decay_tol.unwrap_or_else(|| (1e-3 * s.sup_norm()).max(1e-9));
    let non_increasing = windows
        .windows(2)
        .all(|p| p[1] <= p[0] + (WINDOW_SLACK_REL * p[0]).max(1e-12));
    Ok(DecayMetric {
        tail_max,
        is_decaying: non_increasing && tail_max < tol,
        windows,
        decay_tol_used: tol,
        tail_fraction,
    })
}
