//! End-to-end tests of the binary: exit-code contract, file outputs, and
//! reproducibility. Grids are kept coarse so the whole file runs in seconds.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_volterra-stealth"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary spawns")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

// ---------------------------------------------------------------------------
// exit-code contract
// ---------------------------------------------------------------------------

#[test]
fn usage_and_config_errors_exit_2() {
    let out = run(&["simulate"]);
    assert_eq!(exit_code(&out), 2, "missing --config/--preset: {}", stderr(&out));

    let out = run(&["check", "--preset", "nope"]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("unknown preset"), "stderr: {}", stderr(&out));

    let out = run(&["sweep", "--preset", "ex1", "--a-list", " , "]);
    assert_eq!(exit_code(&out), 2, "an empty sweep list is a usage error");

    let out = run(&["frobnicate"]);
    assert_eq!(exit_code(&out), 2, "unknown subcommand goes through the usage path");

    let out = run(&["simulate", "--preset", "ex1", "--epsilon", "-1"]);
    assert_eq!(exit_code(&out), 2, "non-positive ε is a usage error");
}

#[test]
fn numerical_failure_exits_3() {
    // An attack weight at the float ceiling blows past the magnitude guard
    // before two valid samples exist, which is a numerical failure rather
    // than a divergence result.
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--preset",
        "ex1",
        "--attack-weight",
        "1e308",
        "--dt",
        "0.01",
        "--t-end",
        "1",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 3, "stderr: {}", stderr(&out));
}

#[test]
fn config_file_missing_field_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("broken.json");
    // A structurally valid config with the chain length q removed.
    std::fs::write(
        &path,
        r#"{
          "plant": { "unity": true },
          "controller": { "n_states": 1, "a": [["-t^2"]], "b": ["1"], "c": ["1"] },
          "attack": { "a": 2, "h": 1.0 },
          "grid": { "t_end": 2.0, "dt": 0.02 }
        }"#,
    )
    .unwrap();
    let out = run(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains('q'), "error names the missing field: {}", stderr(&out));
}

#[test]
fn check_exit_separates_fail_from_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().to_str().unwrap();

    // ex2's loop kernel has negative entries: raw mode must fail (exit 1)...
    let out = run(&["check", "--preset", "ex2", "--dt", "0.01", "--out", out_dir]);
    assert_eq!(exit_code(&out), 1, "stdout: {}", stdout(&out));
    assert!(stdout(&out).contains("fail"));

    // ...and |G| mode must pass (exit 0).
    let out = run(&["check", "--preset", "ex2", "--dt", "0.01", "--abs", "--out", out_dir]);
    assert_eq!(exit_code(&out), 0, "stdout: {}", stdout(&out));
}

// ---------------------------------------------------------------------------
// file outputs
// ---------------------------------------------------------------------------

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_the_contracted_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().to_str().unwrap();
    let out = run(&[
        "simulate", "--preset", "ex1", "--dt", "0.02", "--t-end", "4", "--plots", "--out", out_dir,
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));

    let csv = std::fs::read_to_string(tmp.path().join("trajectories.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,u_q,u_c,u_p,y_p,y_a"));
    assert_eq!(lines.count(), 201, "one row per grid node");

    let v = read_json(&tmp.path().join("verdict.json"));
    assert_eq!(v["grid"]["n"], 201);
    assert_eq!(v["epsilon"], 0.4, "preset ε is recorded");
    assert_eq!(v["y_a_final"], 8.0, "t²/2 at t = 4, exactly");
    assert_eq!(v["diverged_at"], serde_json::Value::Null);
    assert_eq!(v["cross_check"]["status"], "pass");
    assert!(v["verdict"]["sup_uq"].as_f64().unwrap() > 0.0);
    assert_eq!(
        v["config_sha256"].as_str().unwrap().len(),
        64,
        "full sha256 hex digest"
    );

    for name in ["u_q", "u_c", "u_p", "y_p", "y_a"] {
        let svg = std::fs::read_to_string(tmp.path().join(format!("{name}.svg"))).unwrap();
        assert!(svg.starts_with("<svg"), "{name}.svg is an SVG document");
    }
}

#[test]
fn epsilon_resolution_order_is_flag_preset_default() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().to_str().unwrap();
    let base = ["simulate", "--preset", "ex1", "--dt", "0.02", "--t-end", "4", "--out", out_dir];

    run(&base);
    assert_eq!(read_json(&tmp.path().join("verdict.json"))["epsilon"], 0.4);

    let mut with_flag = base.to_vec();
    with_flag.extend(["--epsilon", "2.5"]);
    run(&with_flag);
    assert_eq!(read_json(&tmp.path().join("verdict.json"))["epsilon"], 2.5);
}

#[test]
fn config_file_run_matches_the_equivalent_preset_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = volterra_stealth::presets::ex1().config.with_grid(4.0, 0.02).unwrap();
    let path = tmp.path().join("loop.json");
    std::fs::write(&path, config.to_json_string()).unwrap();

    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    let out = run(&[
        "simulate", "--config", path.to_str().unwrap(), "--out", dir_a.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let out = run(&[
        "simulate", "--preset", "ex1", "--dt", "0.02", "--t-end", "4",
        "--epsilon", "1", "--out", dir_b.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);

    // Identical loops ⇒ identical config hash and identical trajectories;
    // only the ε bookkeeping differs (the file route has no preset ε).
    let va = read_json(&dir_a.join("verdict.json"));
    let vb = read_json(&dir_b.join("verdict.json"));
    assert_eq!(va["config_sha256"], vb["config_sha256"]);
    assert_eq!(va["epsilon"], 1.0, "no preset ⇒ default ε = 1");
    assert_eq!(
        std::fs::read_to_string(dir_a.join("trajectories.csv")).unwrap(),
        std::fs::read_to_string(dir_b.join("trajectories.csv")).unwrap(),
    );
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[test]
fn sweep_csv_is_bit_reproducible_and_has_the_contracted_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    let base = ["sweep", "--preset", "ex1", "--dt", "0.02", "--t-end", "4",
        "--a-list", "0..2", "--h-list", "0.5,1", "--epsilon", "1"];

    for dir in [&dir_a, &dir_b] {
        let mut args = base.to_vec();
        args.extend(["--out", dir.to_str().unwrap()]);
        let out = run(&args);
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    }

    let a = std::fs::read(dir_a.join("sweep.csv")).unwrap();
    let b = std::fs::read(dir_b.join("sweep.csv")).unwrap();
    assert_eq!(a, b, "same config hash ⇒ byte-identical sweep.csv");

    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("a,h,q,sup_uq,tail_max,is_epsilon_stealthy,is_untraceable")
    );
    assert_eq!(lines.count(), 6, "3 degrees × 2 weights");

    let summary = read_json(&dir_a.join("summary.json"));
    assert_eq!(summary["cells"].as_array().unwrap().len(), 3, "one cell per (a, q)");

    // coarse-grid sanity: the zero-degree attack stays untraceable
    let first = text.lines().nth(1).unwrap();
    assert!(first.starts_with("0,0.5,2,"), "rows ordered by (q, a, h): {first}");
}

#[test]
fn sweep_defaults_fill_lists_from_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep", "--preset", "ex1", "--dt", "0.02", "--t-end", "4",
        "--out", tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let text = std::fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1, "no lists ⇒ the config's own (a, h, q) cell");
    assert!(rows[0].starts_with("2,1,2,"), "ex1's a=2, h=1, q=2: {}", rows[0]);
}
