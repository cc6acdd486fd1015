use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[problem]
nodes = 81
steps = 200

[energy]
modes = [1, 2, 3]

[sharpness]
modes = [1, 2, 3]
dt = 5e-3
i_max = 3
initial_steps = 200
"#;

fn pel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pel"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run pel")
}

fn with_config(text: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.toml"), text).unwrap();
    dir
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

#[test]
fn malformed_config_exits_2() {
    let dir = with_config("[problem]\nnodes = \"many\"\n");
    let o = pel(dir.path(), &["solve", "--config", "cfg.toml", "--out", "o"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn missing_config_and_bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&pel(dir.path(), &["solve", "--config", "absent.toml"])),
        2
    );
    assert_eq!(
        code(&pel(dir.path(), &["solve", "--theta-scheme", "0.2"])),
        2
    );
    assert_eq!(code(&pel(dir.path(), &["frobnicate"])), 2);
}

#[test]
fn unwritable_output_exits_2() {
    let dir = with_config(SMALL);
    fs::write(dir.path().join("blocker"), "x").unwrap();
    let o = pel(
        dir.path(),
        &["solve", "--config", "cfg.toml", "--out", "blocker/out"],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn numerical_failure_exits_3() {
    // T beta^2 / b = 4 violates the delay smallness condition.
    let dir = with_config(&format!("{SMALL}\n[delay]\nbeta = [2.0]\n"));
    let o = pel(dir.path(), &["delay", "--config", "cfg.toml", "--out", "o"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn failed_check_exits_1() {
    // Without a shift the drift preset breaks the 1/2 + eps bound.
    let dir = with_config(
        &format!("{SMALL}\n[forcing]\nkind = \"constant\"\n")
            .replace("nodes = 81", "preset = \"drift\"\nnodes = 81"),
    );
    let o = pel(dir.path(), &["solve", "--config", "cfg.toml", "--out", "o"]);
    let summary = read(&dir.path().join("o"), "summary.txt");
    assert_eq!(code(&o), 1, "{summary}");
    assert!(summary.contains("FAIL energy-bound"));
    assert!(summary.contains("PASS residual"));
}

#[test]
fn zero_forcing_solve_is_trivial() {
    let dir = with_config(&format!("{SMALL}\n[forcing]\nkind = \"zero\"\n"));
    let o = pel(dir.path(), &["solve", "--config", "cfg.toml", "--out", "o"]);
    assert_eq!(code(&o), 0);
    let out = dir.path().join("o");
    assert!(read(&out, "summary.txt").contains("PASS residual: relative 0.000e0 absolute 0.000e0"));
    let csv = read(&out, "solve.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("t,energy,norm_sq,forcing_norm_sq,lhs,rhs,ratio")
    );
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 7);
        for f in &fields[1..6] {
            assert_eq!(f.parse::<f64>().unwrap(), 0.0, "{line}");
        }
        assert_eq!(fields[6], "", "ratio is undefined when both sides vanish");
    }
}

#[test]
fn sweep_schema() {
    let dir = with_config(SMALL);
    let o = pel(dir.path(), &["sweep", "--config", "cfg.toml", "--out", "o"]);
    assert_eq!(code(&o), 0);
    let out = dir.path().join("o");
    let sweep = read(&out, "sweep.csv");
    assert_eq!(sweep.lines().next(), Some("K,M,probe_id,t,lhs,rhs,ratio"));
    assert_eq!(sweep.lines().count(), 1 + 4 * 3 * 201);
    assert_eq!(
        read(&out, "sweep_summary.csv").lines().next(),
        Some("K,M,sup_ratio")
    );
}

#[test]
fn sharpness_first_mode_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = pel(dir.path(), &["sharpness", "--out", "o"]);
    let out = dir.path().join("o");
    // The initial-time limit checks fail by construction, so the run exits 1.
    assert_eq!(code(&o), 1);
    let csv = read(&out, "sharpness.csv");
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    let numeric: f64 = row[3].parse().unwrap();
    assert!((numeric - 0.43233).abs() < 0.01 * 0.43233, "{numeric}");
    let summary = read(&out, "summary.txt");
    assert!(summary.contains("PASS sharpness-agreement"));
    assert!(summary.contains("FAIL initial-time-limit"));
}

#[test]
fn zero_delay_converges_immediately() {
    let dir = with_config(&format!("{SMALL}\n[delay]\nbeta = [0.0]\nbeta_bar = 0.0\n"));
    let o = pel(dir.path(), &["delay", "--config", "cfg.toml", "--out", "o"]);
    let out = dir.path().join("o");
    let summary = read(&out, "summary.txt");
    assert_eq!(code(&o), 0, "{summary}");
    assert!(summary.contains("PASS zero-delay-reduction"));
    let iterations = read(&out, "delay.csv").lines().count() - 1;
    assert!(iterations <= 2, "{iterations}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = with_config(SMALL);
    for cmd in ["solve", "sweep", "sharpness", "asymptotic", "delay"] {
        pel(
            dir.path(),
            &[cmd, "--config", "cfg.toml", "--out", "a", "--seed", "5"],
        );
        pel(
            dir.path(),
            &[cmd, "--config", "cfg.toml", "--out", "b", "--seed", "5"],
        );
    }
    let mut compared = 0;
    for entry in fs::read_dir(dir.path().join("a")).unwrap() {
        let name = entry.unwrap().file_name();
        let a = fs::read(dir.path().join("a").join(&name)).unwrap();
        let b = fs::read(dir.path().join("b").join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs");
        compared += 1;
    }
    assert!(compared >= 10, "{compared}");
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = with_config(SMALL);
    let run = |threads: &str, out: &str| {
        Command::new(env!("CARGO_BIN_EXE_pel"))
            .args(["sweep", "--config", "cfg.toml", "--out", out])
            .env("PEL_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("1", "one")), 0);
    assert_eq!(code(&run("4", "four")), 0);
    assert_eq!(
        read(&dir.path().join("one"), "sweep.csv"),
        read(&dir.path().join("four"), "sweep.csv")
    );
    assert_eq!(code(&run("zero", "bad")), 2);
}
