use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("kglab-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn kglab(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{sub}.cfg"));
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_kglab"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .env_remove("KGLAB_WORKERS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn verify_algebra_writes_the_closure_table() {
    let dir = scratch("algebra");
    let o = kglab(&dir, "verify-algebra", "seed = 3\n", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.join("out/structure_constants.csv")).unwrap();
    assert_eq!(csv.lines().count(), 46);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("closure_pairs: 45") && stdout.contains("jacobi_triples: 1000"), "{stdout}");
    assert_eq!(fs::read_to_string(dir.join("out/config.txt")).unwrap(), "seed = 3\n");
}

#[test]
fn zero_amplitude_gives_an_all_zero_series() {
    let dir = scratch("zero");
    let o = kglab(&dir, "solve-linear", "n = 17\nL = 4\nT = 1\neps = 0\nstride = 2\n", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.join("out/series.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,E0,calE0,gammaSob_0,gammaSup_0,support_radius");
    for row in lines {
        let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cols[1..].iter().all(|&v| v == 0.0), "{row}");
    }
}

#[test]
fn outputs_are_deterministic_across_worker_counts() {
    let cfg = "n = 25\nL = 8\nT = 2\nstride = 2\nnorm_order = 1\nsnapshot_stride = 8\n";
    let a = scratch("det-a");
    let b = scratch("det-b");
    assert_eq!(code(&kglab(&a, "solve-linear", cfg, &["--workers", "1"])), 0);
    assert_eq!(code(&kglab(&b, "solve-linear", cfg, &["--workers", "3"])), 0);
    let read = |d: &Path, f: &str| fs::read(d.join("out").join(f)).unwrap();
    assert_eq!(read(&a, "series.csv"), read(&b, "series.csv"));
    assert_eq!(read(&a, "snapshot_000008.bin"), read(&b, "snapshot_000008.bin"));
}

#[test]
fn config_errors_exit_1() {
    let dir = scratch("config");
    for bad in ["n = 3\n", "unknown = 1\n", "data = square\n", "T = -2\n"] {
        let o = kglab(&dir, "solve-linear", bad, &[]);
        assert_eq!(code(&o), 1, "{bad}");
    }
    assert_eq!(code(&kglab(&dir, "solve-perturbed", "n = 17\n", &[])), 1);
    assert_eq!(code(&kglab(&dir, "solve-linear", "n = 17\n", &["--workers", "0"])), 1);
}

#[test]
fn boundary_contact_exits_2() {
    let dir = scratch("boundary");
    let o = kglab(&dir, "solve-linear", "n = 17\nL = 3\nT = 6\n", &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("boundary contact"));
}

#[test]
fn audit_reports_violations_with_exit_3() {
    let dir = scratch("audit");
    let cfg = "n = 25\nL = 8\nT = 2\nstride = 4\nnonlinearity = quadratic\ndepth = 3\neps = 0.01\n";
    let o = kglab(&dir, "audit", cfg, &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.join("out/audit.txt")).unwrap();
    assert!(text.contains("violations: iterate conditions"), "{text}");
    assert!(dir.join("out/iteration.csv").exists() && dir.join("out/energy_ledger_N0.csv").exists());
}

#[test]
fn perturbed_audit_passes_and_report_aggregates() {
    let dir = scratch("hormander");
    let cfg = "n = 29\nL = 10\nT = 3\nstride = 2\nnorm_order = 1\nperturbation = bump\n";
    let o = kglab(&dir, "audit", cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let o = kglab(&dir, "report", "", &[]);
    assert_eq!(code(&o), 0);
    let summary = fs::read_to_string(dir.join("out/report.txt")).unwrap();
    assert!(summary.contains("[audit]") && summary.contains("hormander.csv:"), "{summary}");
    assert_eq!(fs::read_to_string(dir.join("out/config.txt")).unwrap(), cfg);
}
