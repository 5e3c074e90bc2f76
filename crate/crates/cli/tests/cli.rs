use std::path::Path;
use std::process::{Command, Output};

use leraylab::{Grid, Rank, SpectralField};
use leraylab_cli::snapshot::{read_snapshot, write_snapshot};

fn leraylab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leraylab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("LERAYLAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn new_bernstein_plancherel_case_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = leraylab(&["verify", "--suite", "new_bernstein", "--alpha", "0.8333", "--p", "2", "--n", "64", "--trials", "4"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("verify_new_bernstein.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(rec["verdict"], "pass");
    assert_eq!(rec["parameters"]["seed"], 42.0);
    assert!(dir.path().join("verify_new_bernstein_summary.txt").exists());
}

#[test]
fn missing_alpha_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = leraylab(&["verify", "--suite", "kernel_decay"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--alpha"));
}

#[test]
fn bad_flags_and_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&leraylab(&["verify", "--suite", "nonsense"], dir.path())), 2);
    assert_eq!(code(&leraylab(&["verify", "--suite", "bernstein", "--n", "7"], dir.path())), 2);
    assert_eq!(code(&leraylab(&["solve", "--alpha", "0.5", "--n", "16"], dir.path())), 2);
    assert_eq!(code(&leraylab(&["solve", "--box", "-3", "--n", "16"], dir.path())), 2);
}

#[test]
fn commutator_suite_records_identity_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = leraylab(&["verify", "--suite", "commutator_x", "--n", "32", "--seed", "7", "--dim", "1", "--trials", "3"], dir.path());
    // The 1e-9 identity tolerance is not reachable on a 32-point torus (see README).
    assert!(matches!(code(&o), 0 | 1), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("verify_commutator_x.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(rec["parameters"]["seed"], 7.0);
    assert!(rec["measured"].as_array().unwrap().iter().any(|m| m["id"].as_str().unwrap().starts_with("identity_q")));
}

#[test]
fn same_seed_gives_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["verify", "--suite", "new_bernstein", "--alpha", "1", "--p", "4", "--n", "32", "--trials", "3", "--seed", "9"];
    leraylab(&args, a.path());
    leraylab(&args, b.path());
    let ra = std::fs::read(a.path().join("verify_new_bernstein.jsonl")).unwrap();
    let rb = std::fs::read(b.path().join("verify_new_bernstein.jsonl")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn config_file_drives_a_suite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "suite = \"kernel_decay\"\nalpha = 1.0\nn = 64\nbox = \"pi\"\n").unwrap();
    let o = leraylab(&["verify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("verify_kernel_decay.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn evolve_writes_snapshots_profile_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let o = leraylab(&["solve", "--mode", "evolve", "--n", "16", "--box", "4pi", "--amp", "0.1"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for t in ["0.2500", "0.5000", "1.0000"] {
        let (h, f) = read_snapshot(&dir.path().join(format!("snapshot_t{t}.bin"))).unwrap();
        assert_eq!((h.dim, h.n, h.alpha), (3, 16, 1.0));
        assert_eq!(f.rank(), Rank::Vector);
    }
    let (_, p) = read_snapshot(&dir.path().join("profile_p.bin")).unwrap();
    assert_eq!(p.rank(), Rank::Scalar);
    let csv = std::fs::read_to_string(dir.path().join("residual.csv")).unwrap();
    assert!(csv.starts_with("iter_or_step,time,l2_update,div_residual,max_velocity"));
    assert_eq!(csv.lines().count(), 501);
    let summary = std::fs::read_to_string(dir.path().join("solve_summary.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(summary.trim()).unwrap();
    assert_eq!(rec["status"], "ok");
    assert!(rec["self_similarity_residual"].as_f64().is_some());
}

#[test]
fn picard_converges_at_small_amplitude() {
    let dir = tempfile::tempdir().unwrap();
    let o = leraylab(&["solve", "--mode", "picard", "--n", "24", "--box", "6pi", "--amp", "0.1", "--s-min", "0.05"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("residual.csv")).unwrap();
    let updates: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(updates.len() >= 3 && *updates.last().unwrap() < 1e-6, "{updates:?}");
    assert!(updates.windows(2).skip(1).all(|w| w[1] < 0.9 * w[0]), "{updates:?}");
}

#[test]
fn picard_at_large_amplitude_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let o = leraylab(&["solve", "--mode", "picard", "--n", "24", "--box", "6pi", "--amp", "50", "--s-min", "0.05"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("amplitude too large"), "{}", stderr(&o));
    let summary = std::fs::read_to_string(dir.path().join("solve_summary.jsonl")).unwrap();
    assert!(summary.contains("\"status\":\"aborted\""));
}

fn power_field(path: &Path, m: f64) {
    let g = Grid::new(3, 64, 16.0 * std::f64::consts::PI).unwrap();
    let f = SpectralField::from_fn(&g, Rank::Scalar, |x, o| {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        o[0] = if r > 0.0 { r.powf(-m) } else { 0.0 };
    });
    write_snapshot(path, &f, f64::NAN, 1.0).unwrap();
}

#[test]
fn decay_recovers_a_synthetic_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("synthetic.bin");
    power_field(&input, 7.0 / 3.0);
    let o = leraylab(&["decay", "--input", input.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("decay.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    let m = rec["exponent"].as_f64().unwrap();
    assert!((m - 7.0 / 3.0).abs() <= 0.05, "{m}");
    let csv = std::fs::read_to_string(dir.path().join("decay_synthetic.csv")).unwrap();
    assert!(csv.starts_with("r,shell_max,shell_mean"));
    assert!(csv.lines().count() > 8);
}

#[test]
fn decay_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("synthetic.bin");
    power_field(&input, 3.0);
    let o = leraylab(&["decay", "--input", input.to_str().unwrap(), "--annulus", "0.3,0.1"], dir.path());
    assert_eq!(code(&o), 2);
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, vec![7u8; 200]).unwrap();
    assert_eq!(code(&leraylab(&["decay", "--input", bad.to_str().unwrap()], dir.path())), 2);
    assert_eq!(code(&leraylab(&["decay", "--input", "/nonexistent/file.bin"], dir.path())), 2);
}
