use std::path::PathBuf;
use std::process::{Command, Output};

fn mrrd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrrd"))
        .args(args)
        .env_remove("MRRD_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("mrrd-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn config_prints_defaults() {
    let o = mrrd(&["config", "--model", "nagumo", "--dim", "2", "--levels", "9"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("levels=9\n") && text.contains("dt=0.01\n"), "{text}");
}

#[test]
fn config_output_parses_back() {
    let dir = scratch("cfg");
    std::fs::create_dir_all(&dir).unwrap();
    let first = stdout(&mrrd(&["config", "--model", "bz", "--levels", "7", "--set", "rtol=1e-7", "--threads", "2"]));
    let file = dir.join("run.cfg");
    std::fs::write(&file, &first).unwrap();
    let second = stdout(&mrrd(&["config", "--config", file.to_str().unwrap()]));
    assert_eq!(first, second);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_errors_exit_two() {
    for args in [
        &["config", "--model", "nagumo", "--dim", "3", "--levels", "30"][..],
        &["config", "--dim", "2"],
        &["config", "--model", "bz", "--mode", "cartesian", "--matrix-format", "compact"],
        &["config", "--model", "bz", "--set", "nonsense=1"],
        &["run", "--model", "stroke"],
        &["config", "--config", "/nonexistent/run.cfg"],
    ] {
        let o = mrrd(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn solver_failure_exits_three() {
    let o = mrrd(&[
        "run", "--model", "nagumo", "--levels", "5", "--dt", "0.01", "--tend", "0.01", "--threads", "1", "--set",
        "diffusion_control=true", "--set", "rtol=1e-300", "--set", "atol=1e-300", "-q",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn run_writes_snapshots() {
    let dir = scratch("run");
    let out = dir.to_str().unwrap();
    let o = mrrd(&[
        "run", "--model", "bz", "--levels", "6", "--tend", "0.004", "--threads", "1", "--out", out,
        "--snapshot-every", "2", "--vtk", "5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["snap_000000.txt", "snap_000002.txt", "snap_000004.txt", "snap_000004.vtk"]);
    let last = std::fs::read_to_string(dir.join("snap_000004.txt")).unwrap();
    assert!(last.starts_with("# mrrd snapshot\nconfig model="));
    assert!(last.contains("\nconfig tend=0.004\n") && last.contains("\nstep 4\n"));
    assert!(!last.contains("config threads=") && !last.contains("config out="));
    let text = stdout(&o);
    assert!(text.contains("finished 4 steps") && text.contains("S step"), "{text}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn snapshots_do_not_depend_on_threads() {
    let snap = |k: &str| {
        let dir = scratch(&format!("det{k}"));
        let o = mrrd(&["run", "--model", "bz", "--levels", "6", "--tend", "0.003", "--threads", k, "--out", dir.to_str().unwrap(), "-q"]);
        assert_eq!(o.status.code(), Some(0));
        let s = std::fs::read(dir.join("snap_000003.txt")).unwrap();
        std::fs::remove_dir_all(&dir).unwrap();
        s
    };
    assert_eq!(snap("1"), snap("3"));
}

#[test]
fn bench_reports_tables() {
    let o = mrrd(&[
        "bench", "--model", "bz", "--levels", "6", "--tend", "0.003", "--thread-list", "1,2", "--compare-cartesian",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("e_R") && text.contains("MR / cartesian"), "{text}");
}
