//! System descriptions and their JSON form.
//!
//! A [`SystemConfig`] captures one attacked feedback loop: the plant, the
//! LTV controller, the integrator count `q`, the polynomial attack `(a, h)`,
//! the time grid, and the numeric tolerances. Configs serialize to a JSON
//! document (schema shipped in `docs/config-schema.md`):
//!
//! ```json
//! {
//!   "plant": { "unity": true },
//!   "controller": { "n_states": 1, "a": [["-t^2"]], "b": ["1"], "c": ["1"] },
//!   "q": 2,
//!   "attack": { "a": 2, "h": 1.0 },
//!   "grid": { "t_end": 10.0, "dt": 0.001 },
//!   "tolerances": { "decay_tol": 0.15, "nonneg_tol": 1e-12, "sup_guard": 1e12 }
//! }
//! ```
//!
//! Unknown fields are rejected, all dimensions are validated, and every
//! coefficient expression must parse; a config that deserializes is safe to
//! simulate. [`SystemConfig::config_hash`] gives a stable SHA-256 of the
//! canonical serialization for reproducibility stamps in result files.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::expr::CoefExpr;
use crate::grid::TimeGrid;
use crate::Result;

/// Default tolerance below which kernel entries still count as non-negative.
pub const DEFAULT_NONNEG_TOL: f64 = 1e-12;
/// Default state-magnitude guard; beyond it a simulation reports unbounded
/// growth and stops.
pub const DEFAULT_SUP_GUARD: f64 = 1e12;

/// A time-varying state-space triple `(A(t), B(t), C(t))` describing one
/// SISO subsystem `ẋ = A(t)x + B(t)u`, `y = C(t)x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "LtvStateSpaceRaw")]
pub struct LtvStateSpace {
    n_states: usize,
    a: Vec<Vec<CoefExpr>>,
    b: Vec<CoefExpr>,
    c: Vec<CoefExpr>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LtvStateSpaceRaw {
    n_states: usize,
    a: Vec<Vec<CoefExpr>>,
    b: Vec<CoefExpr>,
    c: Vec<CoefExpr>,
}

impl From<LtvStateSpace> for LtvStateSpaceRaw {
    fn from(s: LtvStateSpace) -> Self {
        LtvStateSpaceRaw { n_states: s.n_states, a: s.a, b: s.b, c: s.c }
    }
}

impl TryFrom<LtvStateSpaceRaw> for LtvStateSpace {
    type Error = Error;

    fn try_from(raw: LtvStateSpaceRaw) -> Result<Self> {
        LtvStateSpace::new(raw.a, raw.b, raw.c).and_then(|s| {
            if s.n_states != raw.n_states {
                Err(Error::Config(format!(
                    "n_states = {} does not match the {}x{} A matrix",
                    raw.n_states, s.n_states, s.n_states
                )))
            } else {
                Ok(s)
            }
        })
    }
}

impl<'de> Deserialize<'de> for LtvStateSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        LtvStateSpaceRaw::deserialize(d)?
            .try_into()
            .map_err(serde::de::Error::custom)
    }
}

impl LtvStateSpace {
    /// Builds a system from per-entry coefficient expressions. `a` must be
    /// square (`n×n`), `b` and `c` of length `n`, `n ≥ 1`.
    pub fn new(a: Vec<Vec<CoefExpr>>, b: Vec<CoefExpr>, c: Vec<CoefExpr>) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::Config("state dimension must be at least 1".into()));
        }
        if let Some(row) = a.iter().find(|row| row.len() != n) {
            return Err(Error::Config(format!(
                "A must be square: found a row of length {} in a {}-state system",
                row.len(),
                n
            )));
        }
        if b.len() != n || c.len() != n {
            return Err(Error::Config(format!(
                "B and C must have {n} entries, got {} and {}",
                b.len(),
                c.len()
            )));
        }
        Ok(LtvStateSpace { n_states: n, a, b, c })
    }

    /// Convenience constructor from expression sources.
    pub fn from_strs(a: &[&[&str]], b: &[&str], c: &[&str]) -> Result<Self> {
        let a = a
            .iter()
            .map(|row| row.iter().map(|s| CoefExpr::parse(s)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let b = b.iter().map(|s| CoefExpr::parse(s)).collect::<Result<Vec<_>>>()?;
        let c = c.iter().map(|s| CoefExpr::parse(s)).collect::<Result<Vec<_>>>()?;
        LtvStateSpace::new(a, b, c)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// `A(t)` as an `n×n` matrix.
    pub fn eval_a(&self, t: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_states, self.n_states, |i, j| self.a[i][j].eval(t))
    }

    /// `B(t)` as an `n×1` column.
    pub fn eval_b(&self, t: f64) -> DVector<f64> {
        DVector::from_fn(self.n_states, |i, _| self.b[i].eval(t))
    }

    /// `C(t)` as a `1×n` row.
    pub fn eval_c(&self, t: f64) -> RowDVector<f64> {
        RowDVector::from_fn(self.n_states, |_, j| self.c[j].eval(t))
    }

    /// Errors if any coefficient is non-finite somewhere on `[0, t_end]`
    /// (sampled at the probe times; full guarantees come from the dense
    /// evaluation caches used by simulation, which re-check every node).
    pub fn ensure_finite_on(&self, t_end: f64) -> Result<()> {
        let probes = 65;
        for k in 0..=probes {
            let t = t_end * k as f64 / probes as f64;
            for (name, v) in [
                ("A", self.eval_a(t).iter().cloned().fold(0.0f64, |m, x| m.max(x.abs()))),
                ("B", self.eval_b(t).iter().cloned().fold(0.0f64, |m, x| m.max(x.abs()))),
                ("C", self.eval_c(t).iter().cloned().fold(0.0f64, |m, x| m.max(x.abs()))),
            ] {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "{name}(t) is non-finite at t = {t}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The plant: either a full LTV state space or the trivial unity-gain map
/// `y_p ≡ u_p` (impulse response = Dirac delta), which downstream
/// compositions treat as the identity operator instead of tabulating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlantSpec {
    /// `{"unity": true}`
    Unity {
        /// Must be `true`; present so the JSON form is self-describing.
        unity: bool,
    },
    /// `{"state_space": {...}}`
    StateSpace {
        state_space: LtvStateSpace,
    },
}

impl PlantSpec {
    pub fn unity() -> Self {
        PlantSpec::Unity { unity: true }
    }

    pub fn state_space(sys: LtvStateSpace) -> Self {
        PlantSpec::StateSpace { state_space: sys }
    }

    pub fn is_unity(&self) -> bool {
        matches!(self, PlantSpec::Unity { .. })
    }

    /// The state-space description, if any.
    pub fn as_state_space(&self) -> Option<&LtvStateSpace> {
        match self {
            PlantSpec::Unity { .. } => None,
            PlantSpec::StateSpace { state_space } => Some(state_space),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PlantSpec::Unity { unity: true } => Ok(()),
            PlantSpec::Unity { unity: false } => Err(Error::Config(
                "plant: {\"unity\": false} is meaningless; use a state_space plant".into(),
            )),
            PlantSpec::StateSpace { .. } => Ok(()),
        }
    }
}

/// Polynomial attack `y_a(t) = (h/a!) tᵃ`: degree `a ≥ 0` and weight `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    /// Polynomial degree.
    pub a: u32,
    /// Attack weight (any finite real; `h = 0` disables the attack).
    pub h: f64,
}

impl AttackSpec {
    pub fn new(a: u32, h: f64) -> Result<Self> {
        if !h.is_finite() {
            return Err(Error::Config(format!("attack weight must be finite, got {h}")));
        }
        Ok(AttackSpec { a, h })
    }
}

/// Numeric tolerances. All fields optional in JSON with the documented
/// defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Absolute tail tolerance for decay verdicts and vanishing-integral
    /// checks. `None` applies the dynamic default
    /// `max(1e-3 · sup_norm, 1e-9)` per signal.
    pub decay_tol: Option<f64>,
    /// Kernel entries above `−nonneg_tol` count as non-negative.
    pub nonneg_tol: f64,
    /// State-magnitude guard for simulations; beyond it the run reports
    /// unbounded growth and returns partial trajectories.
    pub sup_guard: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            decay_tol: None,
            nonneg_tol: DEFAULT_NONNEG_TOL,
            sup_guard: DEFAULT_SUP_GUARD,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    t_end: f64,
    dt: f64,
}

/// One attacked closed loop: everything a run needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "SystemConfigRaw")]
pub struct SystemConfig {
    pub plant: PlantSpec,
    pub controller: LtvStateSpace,
    /// Number of integrators in the chain between controller and plant.
    pub q: u32,
    pub attack: AttackSpec,
    pub grid: TimeGrid,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemConfigRaw {
    plant: PlantSpec,
    controller: LtvStateSpace,
    q: u32,
    attack: AttackSpec,
    grid: GridSpec,
    #[serde(default)]
    tolerances: Tolerances,
}

impl From<SystemConfig> for SystemConfigRaw {
    fn from(c: SystemConfig) -> Self {
        SystemConfigRaw {
            plant: c.plant,
            controller: c.controller,
            q: c.q,
            attack: c.attack,
            grid: GridSpec { t_end: c.grid.t_end(), dt: c.grid.dt() },
            tolerances: c.tolerances,
        }
    }
}

impl TryFrom<SystemConfigRaw> for SystemConfig {
    type Error = Error;

    fn try_from(raw: SystemConfigRaw) -> Result<Self> {
        let grid = TimeGrid::new(raw.grid.t_end, raw.grid.dt)?;
        let cfg = SystemConfig {
            plant: raw.plant,
            controller: raw.controller,
            q: raw.q,
            attack: raw.attack,
            grid,
            tolerances: raw.tolerances,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl<'de> Deserialize<'de> for SystemConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        SystemConfigRaw::deserialize(d)?
            .try_into()
            .map_err(serde::de::Error::custom)
    }
}

impl SystemConfig {
    /// Structural validation beyond what construction of the parts already
    /// guarantees.
    pub fn validate(&self) -> Result<()> {
        if self.q < 1 {
            return Err(Error::Config("q must be at least 1 (integrator count)".into()));
        }
        self.plant.validate()?;
        if !self.attack.h.is_finite() {
            return Err(Error::Config("attack weight h must be finite".into()));
        }
        if let Some(tol) = self.tolerances.decay_tol {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(Error::Config(format!("decay_tol must be > 0, got {tol}")));
            }
        }
        if !(self.tolerances.sup_guard.is_finite() && self.tolerances.sup_guard > 0.0) {
            return Err(Error::Config("sup_guard must be a positive finite number".into()));
        }
        if self.tolerances.nonneg_tol < 0.0 {
            return Err(Error::Config("nonneg_tol must be non-negative".into()));
        }
        let t_end = self.grid.t_end();
        self.controller.ensure_finite_on(t_end)?;
        if let Some(p) = self.plant.as_state_space() {
            p.ensure_finite_on(t_end)?;
        }
        Ok(())
    }

    /// Parses a JSON document (see module docs for the schema).
    pub fn from_json_str(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))
    }

    /// Pretty-printed JSON form.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// SHA-256 (hex) of the canonical compact JSON serialization. Stable
    /// across runs and platforms for identical configs; stamped into result
    /// files so outputs are traceable to their inputs.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialization cannot fail");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Copy with a different attack.
    pub fn with_attack(&self, a: u32, h: f64) -> Result<Self> {
        let mut c = self.clone();
        c.attack = AttackSpec::new(a, h)?;
        Ok(c)
    }

    /// Copy with a different integrator count.
    pub fn with_q(&self, q: u32) -> Result<Self> {
        let mut c = self.clone();
        c.q = q;
        c.validate()?;
        Ok(c)
    }

    /// Copy with a different grid.
    pub fn with_grid(&self, t_end: f64, dt: f64) -> Result<Self> {
        let mut c = self.clone();
        c.grid = TimeGrid::new(t_end, dt)?;
        Ok(c)
    }
}

// ---------------------------------------------------------------------------
// Sweep-list parsing (shared by the CLI and its fuzz target)
// ---------------------------------------------------------------------------

/// Maximum number of values a sweep list may expand to.
const MAX_LIST: usize = 10_000;

/// Parses a comma-separated list of non-negative integers with optional
/// inclusive ranges: `"0,1,2,3"`, `"0..3"`, `"0..2,5"`.
pub fn parse_u32_list(spec: &str) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for part in split_nonempty(spec)? {
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: u32 = parse_int(lo)?;
            let hi: u32 = parse_int(hi)?;
            if hi < lo {
                return Err(Error::Config(format!("empty range '{part}' (end < start)")));
            }
            if (hi - lo) as usize + 1 > MAX_LIST {
                return Err(Error::Config(format!("range '{part}' expands past {MAX_LIST} items")));
            }
            out.extend(lo..=hi);
        } else {
            out.push(parse_int(&part)?);
        }
        if out.len() > MAX_LIST {
            return Err(Error::Config(format!("list expands past {MAX_LIST} items")));
        }
    }
    Ok(out)
}

/// Parses a comma-separated list of finite reals: `"0.5,1,2"`.
pub fn parse_f64_list(spec: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in split_nonempty(spec)? {
        let v: f64 = part
            .parse()
            .map_err(|e| Error::Config(format!("cannot parse '{part}' as a number: {e}")))?;
        if !v.is_finite() {
            return Err(Error::Config(format!("list value '{part}' is not finite")));
        }
        out.push(v);
        if out.len() > MAX_LIST {
            return Err(Error::Config(format!("list expands past {MAX_LIST} items")));
        }
    }
    Ok(out)
}

fn split_nonempty(spec: &str) -> Result<Vec<String>> {
    if spec.len() > 64 * 1024 {
        return Err(Error::Config("list specification too long".into()));
    }
    let parts: Vec<String> = spec
        .split(',')
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect();
    if parts.is_empty() {
        return Err(Error::Config("empty list specification".into()));
    }
    Ok(parts)
}

fn parse_int(s: &str) -> Result<u32> {
    s.trim()
        .parse()
        .map_err(|e| Error::Config(format!("cannot parse '{s}' as an integer: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1_json() -> String {
        r#"{
            "plant": {"unity": true},
            "controller": {"n_states": 1, "a": [["-t^2"]], "b": ["1"], "c": ["1"]},
            "q": 2,
            "attack": {"a": 2, "h": 1.0},
            "grid": {"t_end": 10.0, "dt": 0.001}
        }"#
        .to_string()
    }

    #[test]
    fn parses_the_reference_config() {
        let cfg = SystemConfig::from_json_str(&ex1_json()).unwrap();
        assert!(cfg.plant.is_unity());
        assert_eq!(cfg.q, 2);
        assert_eq!(cfg.grid.n(), 10_001);
        assert_eq!(cfg.controller.n_states(), 1);
        assert_eq!(cfg.controller.eval_a(2.0)[(0, 0)], -4.0);
        // defaults kick in when tolerances are absent
        assert_eq!(cfg.tolerances.nonneg_tol, DEFAULT_NONNEG_TOL);
        assert_eq!(cfg.tolerances.sup_guard, DEFAULT_SUP_GUARD);
        assert_eq!(cfg.tolerances.decay_tol, None);
    }

    #[test]
    fn missing_q_is_reported_by_name() {
        let json = ex1_json().replace("\"q\": 2,", "");
        let err = SystemConfig::from_json_str(&json).unwrap_err();
        assert!(err.to_string().contains('q'), "error must name the field: {err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let json = ex1_json().replace("\"q\": 2,", "\"q\": 2, \"extra\": 1,");
        assert!(SystemConfig::from_json_str(&json).is_err());
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let json = ex1_json().replace("\"b\": [\"1\"]", "\"b\": [\"1\", \"0\"]");
        assert!(SystemConfig::from_json_str(&json).is_err());
        let json = ex1_json().replace("\"n_states\": 1", "\"n_states\": 3");
        assert!(SystemConfig::from_json_str(&json).is_err());
    }

    #[test]
    fn roundtrip_preserves_the_config_and_hash() {
        let cfg = SystemConfig::from_json_str(&ex1_json()).unwrap();
        let json = cfg.to_json_string();
        let back = SystemConfig::from_json_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.config_hash(), cfg.config_hash());
    }

    #[test]
    fn hash_is_sensitive_to_the_attack() {
        let cfg = SystemConfig::from_json_str(&ex1_json()).unwrap();
        let other = cfg.with_attack(1, 1.0).unwrap();
        assert_ne!(cfg.config_hash(), other.config_hash());
        assert_eq!(cfg.config_hash().len(), 64);
    }

    #[test]
    fn state_space_plant_form_parses() {
        let json = ex1_json().replace(
            "{\"unity\": true}",
            r#"{"state_space": {"n_states": 1, "a": [["0"]], "b": ["1"], "c": ["1"]}}"#,
        );
        let cfg = SystemConfig::from_json_str(&json).unwrap();
        assert!(!cfg.plant.is_unity());
        assert_eq!(cfg.plant.as_state_space().unwrap().n_states(), 1);
    }

    #[test]
    fn non_finite_coefficients_are_rejected_at_validation() {
        // exp(t^3) overflows within t <= 10
        let json = ex1_json().replace("-t^2", "exp(t^3)");
        let err = SystemConfig::from_json_str(&json).unwrap_err();
        assert!(err.to_string().contains("non-finite"), "{err}");
    }

    #[test]
    fn u32_list_forms() {
        assert_eq!(parse_u32_list("0,1,2,3").unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(parse_u32_list("0..3").unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(parse_u32_list("0..1,5").unwrap(), vec![0, 1, 5]);
        assert_eq!(parse_u32_list(" 2 ").unwrap(), vec![2]);
        for bad in ["", ",", "a", "3..1", "1..999999999", "-1"] {
            assert!(parse_u32_list(bad).is_err(), "'{bad}' must not parse");
        }
    }

    #[test]
    fn f64_list_forms() {
        assert_eq!(parse_f64_list("0.5,1,2").unwrap(), vec![0.5, 1.0, 2.0]);
        for bad in ["", "x", "1,inf", "nan"] {
            assert!(parse_f64_list(bad).is_err(), "'{bad}' must not parse");
        }
    }
}
