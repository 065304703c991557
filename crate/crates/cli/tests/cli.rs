//! Black-box tests of the binary: exit codes, emitted file shapes,
//! determinism, and provenance behavior.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use covsteer_cli::bundle::SolutionBundle;
use covsteer_cli::outputs::SimSummary;

fn covsteer(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covsteer"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary should launch")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("binary should not die on a signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

const UNCONTROLLABLE: &str = r#"
horizon = 1.0
a = [[0.0, 1.0], [-1.0, -1.0]]
b = [[0.0], [0.0]]
c = [[0.0, 1.0]]
sigma0 = [[0.5, 0.0], [0.0, 0.5]]

[target]
kind = "output"
covariance = [[0.0625]]
"#;

const RANK_DEFICIENT: &str = r#"
horizon = 1.0
a = [[0.0, 1.0], [-1.0, -1.0]]
b = [[0.0], [1.0]]
c = [[1.0, 0.0], [1.0, 0.0]]
sigma0 = [[0.5, 0.0], [0.0, 0.5]]

[target]
kind = "output"
covariance = [[0.1, 0.0], [0.0, 0.1]]
"#;

#[test]
fn solve_writes_well_formed_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = covsteer(&["solve", "--example", "ou", "--steps", "400", "--out", "run"], tmp.path());
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));

    let run = tmp.path().join("run");
    let bundle: SolutionBundle =
        serde_json::from_str(&fs::read_to_string(run.join("solution.json")).unwrap()).unwrap();
    let cxc = bundle.static_part.output_cov.to_matrix();
    assert!((cxc[(0, 0)] - 0.0625).abs() < 1e-8, "CXC' = {}", cxc[(0, 0)]);
    assert_eq!(bundle.provenance.steps, 400);
    assert_eq!(bundle.schedule.times.len(), 401);

    // one header plus one row per grid node, fixed column order
    for (file, header) in [
        ("gains.csv", "t,pi_0_0,pi_0_1,pi_1_0,pi_1_1,k_0_0,k_0_1"),
        ("covariance.csv", "t,sigma_0_0,sigma_0_1,sigma_1_0,sigma_1_1,tube_r0,tube_r1"),
    ] {
        let text = fs::read_to_string(run.join(file)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), header, "{file} header");
        let mut rows = 0;
        let mut prev_t = f64::NEG_INFINITY;
        for line in lines {
            let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
            assert!(fields.iter().all(|v| v.is_finite()), "{file}: non-finite field");
            assert!(fields[0] > prev_t, "{file}: time column must increase");
            prev_t = fields[0];
            rows += 1;
        }
        assert_eq!(rows, 401, "{file} row count");
    }
}

#[test]
fn solution_json_round_trips_to_identical_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = covsteer(&["solve", "--example", "ou", "--steps", "100", "--out", "run"], tmp.path());
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));

    let text = fs::read_to_string(tmp.path().join("run/solution.json")).unwrap();
    let original: serde_json::Value = serde_json::from_str(&text).unwrap();
    let typed: SolutionBundle = serde_json::from_str(&text).unwrap();
    let reserialized: serde_json::Value =
        serde_json::from_str(&serde_json::to_string(&typed).unwrap()).unwrap();
    // every float survives the file -> struct -> file cycle bit for bit
    assert_eq!(original, reserialized);
}

#[test]
fn config_hash_follows_solver_inputs_only() {
    let tmp = tempfile::tempdir().unwrap();
    let hash_of = |args: &[&str]| -> String {
        let out = covsteer(args, tmp.path());
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
        let dir = args[args.len() - 1];
        let bundle: SolutionBundle = serde_json::from_str(
            &fs::read_to_string(tmp.path().join(dir).join("solution.json")).unwrap(),
        )
        .unwrap();
        bundle.provenance.config_hash
    };

    let a = hash_of(&["solve", "--example", "ou", "--steps", "200", "--out", "a"]);
    let b = hash_of(&["solve", "--example", "ou", "--steps", "200", "--out", "b"]);
    let c = hash_of(&["solve", "--example", "ou", "--steps", "300", "--out", "c"]);
    assert_eq!(a, b, "same model and grid must hash identically across runs");
    assert_ne!(a, c, "grid resolution is a solver input and must change the hash");
}

#[test]
fn parse_failures_exit_2() {
    let tmp = tempfile::tempdir().unwrap();

    let out = covsteer(&["solve", "--example", "nosuch"], tmp.path());
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("unknown example"), "stderr: {}", stderr(&out));

    let bad = write_config(tmp.path(), "bad.toml", "horizon = [not toml");
    let out = covsteer(&["solve", "--config", bad.to_str().unwrap()], tmp.path());
    assert_eq!(exit_code(&out), 2);

    // missing model: usage error from the argument parser
    let out = covsteer(&["solve"], tmp.path());
    assert_eq!(exit_code(&out), 2);

    let out = covsteer(&["solve", "--example", "ou", "--steps", "3"], tmp.path());
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("at least 4 grid steps"), "stderr: {}", stderr(&out));
}

#[test]
fn uncontrollable_model_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "dead_input.toml", UNCONTROLLABLE);
    let out = covsteer(&["solve", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(exit_code(&out), 3, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("NotControllable"), "stderr: {}", stderr(&out));
}

#[test]
fn rank_deficient_output_map_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rank_deficient.toml", RANK_DEFICIENT);
    let out = covsteer(&["solve", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(exit_code(&out), 4, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("RankDeficient"), "stderr: {}", stderr(&out));
}

#[test]
fn discretization_bias_fails_statistics_with_exit_5() {
    // a 5-interval grid leaves Euler-Maruyama bias far outside the
    // three-standard-error band of a large ensemble
    let tmp = tempfile::tempdir().unwrap();
    let out = covsteer(
        &["simulate", "--example", "ou", "--steps", "5", "--paths", "20000", "--seed", "1", "--out", "run"],
        tmp.path(),
    );
    assert_eq!(exit_code(&out), 5, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("statistical checks failed"), "stderr: {}", stderr(&out));

    // artifacts must exist even though the run failed
    let run = tmp.path().join("run");
    assert!(run.join("trajectories.csv").is_file());
    let summary: SimSummary =
        serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert!(!summary.pass);
    assert!(summary.checks.iter().any(|c| !c.pass));
}

#[test]
fn verify_passes_clean_and_fails_corrupted() {
    let tmp = tempfile::tempdir().unwrap();
    let scalar = include_str!("../../../configs/scalar.toml");
    let cfg = write_config(tmp.path(), "scalar.toml", scalar);

    let out = covsteer(&["verify", "--config", cfg.to_str().unwrap(), "--steps", "400"], tmp.path());
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let table = String::from_utf8_lossy(&out.stdout).into_owned();
    for name in [
        "stationarity_x",
        "stationarity_y",
        "constraint",
        "quadratic",
        "multiplier_asymmetry",
        "boundary_initial",
        "boundary_terminal",
        "lyapunov",
        "riccati",
        "factorization",
        "energy_rel_gap",
        "oracle_gap",
    ] {
        assert!(table.contains(name), "verify table must name the {name} residual");
    }

    let out = covsteer(
        &["verify", "--config", cfg.to_str().unwrap(), "--steps", "400", "--corrupt-multiplier"],
        tmp.path(),
    );
    assert_eq!(exit_code(&out), 6, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("stationarity_x"), "stderr: {}", stderr(&out));
}

#[test]
fn identical_seeds_reproduce_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &str, seed: &str| {
        let out = covsteer(
            &["simulate", "--example", "ou", "--steps", "100", "--paths", "50", "--seed", seed, "--out", dir],
            tmp.path(),
        );
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    };
    run("a", "9");
    run("b", "9");
    run("c", "10");

    let read = |dir: &str, file: &str| fs::read(tmp.path().join(dir).join(file)).unwrap();
    assert_eq!(read("a", "trajectories.csv"), read("b", "trajectories.csv"));
    assert_eq!(read("a", "summary.json"), read("b", "summary.json"));
    assert_ne!(read("a", "trajectories.csv"), read("c", "trajectories.csv"));
}

#[test]
fn single_path_run_stores_every_grid_node() {
    let tmp = tempfile::tempdir().unwrap();
    let out = covsteer(
        &["simulate", "--example", "ou", "--steps", "50", "--paths", "1", "--store-every", "1", "--out", "run"],
        tmp.path(),
    );
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let run = tmp.path().join("run");
    // header plus one row per grid node
    assert_eq!(line_count(&run.join("trajectories.csv")), 52);
    // ensemble statistics are undefined for a single path
    assert!(!run.join("summary.json").exists());
}
