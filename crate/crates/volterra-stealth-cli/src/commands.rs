//! Subcommand implementations.
//!
//! Each command returns a process exit code per the contract:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | a condition check failed (`check` only) |
//! | 2 | usage or configuration error |
//! | 3 | numerical failure (non-finite values, singular implicit step, horizon too short) |
//!
//! A *diverging simulation is not an error*: `simulate` truncates the
//! trajectories, records `diverged_at`, and still exits 0.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use serde::Serialize;
use volterra_stealth::closedloop::CrossReport;
use volterra_stealth::conditions::{
    check_assumption1, check_assumption2, uniform_convergence_probe, AssumptionParams,
    CheckStatus, ConditionEntry, KernelMode,
};
use volterra_stealth::config::{parse_f64_list, parse_u32_list, AttackSpec};
use volterra_stealth::{
    cross_validate, forcing_term, presets, simulate, solve_lvie, stealth_verdict, Error,
    KernelBundle, StealthVerdict, SystemConfig,
};

use crate::plot;

/// Fraction of the horizon covered by each trailing decay window; 0.2 puts
/// the final window on the last fifth of the run.
pub const TAIL_FRACTION: f64 = 0.2;

/// Stealth threshold when neither `--epsilon` nor a preset supplies one.
pub const DEFAULT_EPSILON: f64 = 1.0;

/// A trajectory tail counts as *unbounded growth* when its four window
/// maxima strictly increase and the last exceeds the first by this factor —
/// strict enough that a tail settling onto a plateau (ratios ≈ 1.05) is not
/// mislabelled, loose enough that polynomial growth (ratios ≥ 2) is.
pub const GROWTH_RATIO: f64 = 1.2;

/// Halving sequence of head horizons for the uniform-convergence probe.
pub const PROBE_HORIZONS: [f64; 3] = [0.4, 0.2, 0.1];

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// A command failure carrying the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    fn config(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_CONFIG };
        Failure { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::config(format!("i/o error: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::config(format!("csv error: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::config(format!("json error: {e}"))
    }
}

pub type CmdResult = Result<u8, Failure>;

/// Options shared by every subcommand, already decoupled from the argument
/// parser so the commands are callable from tests.
#[derive(Debug, Clone, Default)]
pub struct CommonOpts {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub out: PathBuf,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub attack_degree: Option<u32>,
    pub attack_weight: Option<f64>,
    pub epsilon: Option<f64>,
}

/// A fully resolved run: config with overrides applied, the stealth
/// threshold, and a label for console output.
#[derive(Debug)]
pub struct RunSpec {
    pub config: SystemConfig,
    pub epsilon: f64,
    pub label: String,
}

/// Loads the config (file or preset), applies flag overrides, and resolves
/// the stealth threshold (flag > preset > [`DEFAULT_EPSILON`]).
pub fn resolve(opts: &CommonOpts) -> Result<RunSpec, Failure> {
    let (config, preset_epsilon, label) = match (&opts.config, &opts.preset) {
        (Some(_), Some(_)) => {
            return Err(Failure::config("--config and --preset are mutually exclusive"));
        }
        (None, None) => {
            return Err(Failure::config("one of --config PATH or --preset NAME is required"));
        }
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Failure::config(format!("cannot read config '{}': {e}", path.display()))
            })?;
            (SystemConfig::from_json_str(&text)?, None, path.display().to_string())
        }
        (None, Some(name)) => {
            let preset = presets::by_name(name).ok_or_else(|| {
                Failure::config(format!("unknown preset '{name}' (available: ex1, ex2)"))
            })?;
            (preset.config, Some(preset.epsilon), preset.name.to_string())
        }
    };

    let mut config = config;
    if opts.dt.is_some() || opts.t_end.is_some() {
        config = config.with_grid(
            opts.t_end.unwrap_or_else(|| config.grid.t_end()),
            opts.dt.unwrap_or_else(|| config.grid.dt()),
        )?;
    }
    if opts.attack_degree.is_some() || opts.attack_weight.is_some() {
        config = config.with_attack(
            opts.attack_degree.unwrap_or(config.attack.a),
            opts.attack_weight.unwrap_or(config.attack.h),
        )?;
    }
    config.validate()?;

    let epsilon = opts.epsilon.or(preset_epsilon).unwrap_or(DEFAULT_EPSILON);
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Failure::config(format!("--epsilon must be positive, got {epsilon}")));
    }
    Ok(RunSpec { config, epsilon, label })
}

#[derive(Serialize)]
struct GridInfo {
    t_end: f64,
    dt: f64,
    n: usize,
}

/// Shape of `verdict.json`.
#[derive(Serialize)]
struct RunRecord<'a> {
    config_sha256: &'a str,
    label: &'a str,
    grid: GridInfo,
    epsilon: f64,
    /// Route that produced the judged trajectory.
    uq_route: &'static str,
    /// Last sampled value of the injected signal.
    y_a_final: f64,
    /// First time the magnitude guard tripped, if it did.
    diverged_at: Option<f64>,
    /// `None` only when a divergence left too little horizon to judge.
    verdict: Option<&'a StealthVerdict>,
    cross_check: &'a CrossReport,
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn cmd_simulate(opts: &CommonOpts, plots: bool) -> CmdResult {
    let spec = resolve(opts)?;
    fs::create_dir_all(&opts.out)?;

    let sim = simulate(&spec.config)?;
    let cross = cross_validate(&spec.config)?;
    let verdict = match stealth_verdict(
        &sim.u_q,
        spec.epsilon,
        TAIL_FRACTION,
        spec.config.tolerances.decay_tol,
    ) {
        Ok(v) => Some(v),
        // A guard trip can leave too few samples for tail windows; the run
        // is still a valid (divergence) result.
        Err(e) if sim.diverged_at.is_some() && e.is_numerical() => None,
        Err(e) => return Err(e.into()),
    };

    let csv_path = opts.out.join("trajectories.csv");
    sim.write_csv(BufWriter::new(File::create(&csv_path)?))?;

    let hash = spec.config.config_hash();
    let record = RunRecord {
        config_sha256: &hash,
        label: &spec.label,
        grid: GridInfo {
            t_end: spec.config.grid.t_end(),
            dt: spec.config.grid.dt(),
            n: spec.config.grid.n(),
        },
        epsilon: spec.epsilon,
        uq_route: "ode-rk4",
        y_a_final: *sim.y_a.values().last().expect("grids are non-empty"),
        diverged_at: sim.diverged_at,
        verdict: verdict.as_ref(),
        cross_check: &cross,
    };
    let json_path = opts.out.join("verdict.json");
    fs::write(&json_path, serde_json::to_string_pretty(&record)? + "\n")?;

    let mut written = vec![csv_path.display().to_string(), json_path.display().to_string()];
    if plots {
        for (name, signal) in [
            ("u_q", &sim.u_q),
            ("u_c", &sim.u_c),
            ("u_p", &sim.u_p),
            ("y_p", &sim.y_p),
            ("y_a", &sim.y_a),
        ] {
            let path = opts.out.join(format!("{name}.svg"));
            fs::write(&path, plot::line_plot_svg(signal, name))?;
            written.push(path.display().to_string());
        }
    }

    println!("run     : {} (config {})", spec.label, &hash[..12]);
    println!(
        "grid    : t_end = {}, dt = {}, n = {}",
        spec.config.grid.t_end(),
        spec.config.grid.dt(),
        spec.config.grid.n()
    );
    if let Some(t) = sim.diverged_at {
        println!("guard   : magnitude guard tripped at t = {t}; trajectories truncated");
    }
    match &verdict {
        Some(v) => {
            println!(
                "sup|u_q|: {:.6} against ε = {} → {}",
                v.sup_uq,
                v.epsilon,
                if v.is_epsilon_stealthy { "ε-stealthy" } else { "NOT ε-stealthy" }
            );
            println!(
                "tail    : max {:.6} over the final window (tol {:.3}) → {}",
                v.tail_max,
                v.decay_tol_used,
                if v.is_untraceable { "untraceable" } else { "not untraceable" }
            );
        }
        None => println!("verdict : horizon after truncation too short to judge"),
    }
    println!(
        "cross   : {} (sup diff {:.3e}, halved {:.3e}, shrink {:.2})",
        cross.status, cross.sup_diff, cross.sup_diff_halved, cross.shrink_factor
    );
    println!("wrote   : {}", written.join(", "));
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

pub fn cmd_check(opts: &CommonOpts, absolute: bool) -> CmdResult {
    let spec = resolve(opts)?;
    fs::create_dir_all(&opts.out)?;

    let mode = if absolute { KernelMode::Absolute } else { KernelMode::Raw };
    let bundle = KernelBundle::build(&spec.config)?;

    let mut params = AssumptionParams::standard(spec.config.grid.t_end()).with_mode(mode);
    params.decay_tol = spec.config.tolerances.decay_tol;
    params.nonneg_tol = spec.config.tolerances.nonneg_tol;

    let mut report = check_assumption1(&bundle.g_c, bundle.g_cp.as_ref(), &bundle.g_cpq, &params)?;
    report.merge(check_assumption2(&bundle.g_c, &bundle.g_cpq, &params)?);
    report.push(probe_entry(&bundle, &params)?);

    let json_path = opts.out.join("conditions.json");
    fs::write(&json_path, report.to_json()? + "\n")?;

    println!("checks for {} (mode: {mode:?})", spec.label);
    println!("{}", report.to_table());
    let fails = report.entries.iter().filter(|e| e.status == CheckStatus::Fail).count();
    let indet =
        report.entries.iter().filter(|e| e.status == CheckStatus::Indeterminate).count();
    println!(
        "result  : {} checks, {fails} failed, {indet} indeterminate",
        report.entries.len()
    );
    println!("wrote   : {}", json_path.display());

    Ok(if report.has_fail() { EXIT_CHECK_FAILED } else { EXIT_OK })
}

/// Uniform-convergence surrogate as a report entry. Mode-applied like the
/// assumption checks; a horizon too coarse for the probe's head sequence
/// yields an indeterminate entry rather than an error.
fn probe_entry(bundle: &KernelBundle, params: &AssumptionParams) -> Result<ConditionEntry, Failure> {
    let k_c = params.mode.apply(&bundle.g_c)?;
    match uniform_convergence_probe(&k_c, bundle.q, &PROBE_HORIZONS) {
        Ok(probe) => Ok(probe.entry("uniform_convergence_probe")),
        Err(Error::Domain(why)) => Ok(ConditionEntry::new(
            "uniform_convergence_probe",
            CheckStatus::Indeterminate,
        )
        .with_note(format!("probe not run: {why}"))),
        Err(e) => Err(e.into()),
    }
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    a: u32,
    h: f64,
    q: u32,
    verdict: StealthVerdict,
}

/// Stealth class of one sweep cell. Growth is judged first: a strictly
/// increasing tail is growth even when its sup is still under ε at this
/// horizon.
fn stealth_class(v: &StealthVerdict) -> &'static str {
    let w = &v.tail_windows;
    let growing = w.windows(2).all(|p| p[1] > p[0]) && w[3] >= GROWTH_RATIO * w[0];
    if growing {
        "unbounded-growth"
    } else if v.is_untraceable {
        "untraceable"
    } else if v.is_epsilon_stealthy {
        "eps-stealthy"
    } else {
        "not-stealthy"
    }
}

fn class_severity(class: &str) -> u8 {
    match class {
        "untraceable" => 0,
        "eps-stealthy" => 1,
        "not-stealthy" => 2,
        _ => 3,
    }
}

#[derive(Serialize)]
struct SummaryCell {
    a: u32,
    q: u32,
    class: &'static str,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    config_sha256: &'a str,
    epsilon: f64,
    cells: Vec<SummaryCell>,
}

pub fn cmd_sweep(
    opts: &CommonOpts,
    a_list: Option<&str>,
    h_list: Option<&str>,
    q_list: Option<&str>,
) -> CmdResult {
    let spec = resolve(opts)?;
    let a_vals = match a_list {
        Some(s) => parse_u32_list(s)?,
        None => vec![spec.config.attack.a],
    };
    let h_vals = match h_list {
        Some(s) => parse_f64_list(s)?,
        None => vec![spec.config.attack.h],
    };
    let q_vals = match q_list {
        Some(s) => parse_u32_list(s)?,
        None => vec![spec.config.q],
    };
    fs::create_dir_all(&opts.out)?;

    // The loop kernel depends on q alone, so it is tabulated once per q and
    // every (a, h) cell reuses it — the per-cell cost is one forcing
    // evaluation and one marching solve.
    let mut rows: Vec<SweepRow> = Vec::with_capacity(a_vals.len() * h_vals.len() * q_vals.len());
    for &q in &q_vals {
        let cfg_q = spec.config.with_q(q)?;
        let bundle = KernelBundle::build(&cfg_q)?;
        let g_c = bundle.g_c;
        let kernel = bundle.g_cpq.negated()?; // negative junction
        for &a in &a_vals {
            for &h in &h_vals {
                let attack = AttackSpec::new(a, h)?;
                let phi = forcing_term(&g_c, &attack)?;
                let u_q = solve_lvie(&kernel, &phi)?;
                let verdict = stealth_verdict(
                    &u_q,
                    spec.epsilon,
                    TAIL_FRACTION,
                    cfg_q.tolerances.decay_tol,
                )?;
                rows.push(SweepRow { a, h, q, verdict });
            }
        }
    }

    let csv_path = opts.out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["a", "h", "q", "sup_uq", "tail_max", "is_epsilon_stealthy", "is_untraceable"])?;
    for r in &rows {
        w.write_record([
            r.a.to_string(),
            r.h.to_string(),
            r.q.to_string(),
            r.verdict.sup_uq.to_string(),
            r.verdict.tail_max.to_string(),
            r.verdict.is_epsilon_stealthy.to_string(),
            r.verdict.is_untraceable.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Failure::config(format!("csv flush: {e}")))?;

    // Summary per (a, q): the most severe class across the h values.
    let mut summary: Vec<SummaryCell> = Vec::new();
    for &a in &a_vals {
        for &q in &q_vals {
            let worst = rows
                .iter()
                .filter(|r| r.a == a && r.q == q)
                .map(|r| stealth_class(&r.verdict))
                .max_by_key(|c| class_severity(c))
                .expect("every (a, q) pair has at least one h");
            summary.push(SummaryCell { a, q, class: worst });
        }
    }
    let hash = spec.config.config_hash();
    let summary_path = opts.out.join("summary.json");
    fs::write(
        &summary_path,
        serde_json::to_string_pretty(&SweepSummary {
            config_sha256: &hash,
            epsilon: spec.epsilon,
            cells: summary
                .iter()
                .map(|c| SummaryCell { a: c.a, q: c.q, class: c.class })
                .collect(),
        })? + "\n",
    )?;

    println!(
        "sweep   : {} cells over a ∈ {a_vals:?}, h ∈ {h_vals:?}, q ∈ {q_vals:?}, ε = {}",
        rows.len(),
        spec.epsilon
    );
    println!("stealth classes (most severe across h):");
    for cell in &summary {
        println!("  a={} q={}  {}", cell.a, cell.q, cell.class);
    }
    println!("wrote   : {}, {}", csv_path.display(), summary_path.display());
    Ok(EXIT_OK)
}
