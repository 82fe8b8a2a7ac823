use std::path::Path;
use std::process::{Command, Output};

use fenefp::output::{parse_ledger, read_checkpoint, LEDGER_COLUMNS};

const SMALL: &str = r#"
[scenario]
name = "decay"
velocity_amplitude = 0.1
density_amplitude = 0.2
noise = 0.1

[scheme]
t_final = 0.1
dt = 0.02

[grid]
nx = 6
n_r = 8
n_theta = 8
"#;

fn fenefp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fenefp")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn run_small(dir: &Path, extra: &str, seed: &str) -> String {
    let cfg = write_config(dir, "run.toml", &format!("{SMALL}{extra}"));
    let out = dir.join(format!("out-{seed}"));
    let o = fenefp(&["run", &cfg, "-q", "--seed", seed, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    std::fs::read_to_string(out.join("ledger.tsv")).unwrap()
}

#[test]
fn check_accepts_valid_and_rejects_invalid_configs() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), "good.toml", SMALL);
    let o = fenefp(&["check", &good]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("5 steps"));

    let unknown = write_config(dir.path(), "unknown.toml", "[grid]\nnx = 8\nnq = 3\n");
    assert_eq!(fenefp(&["check", &unknown]).status.code(), Some(1));

    let bad = write_config(dir.path(), "bad.toml", "[scheme]\nl = 0.5\n");
    let o = fenefp(&["check", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid configuration"));

    let coarse = write_config(dir.path(), "coarse.toml", "[scheme]\nt_final = 1.0\ndt = 0.5\n");
    assert_eq!(fenefp(&["check", &coarse]).status.code(), Some(0));
    assert_eq!(fenefp(&["check", &coarse, "--strict"]).status.code(), Some(1));

    assert_eq!(fenefp(&["check", dir.path().join("missing.toml").to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn runs_are_reproducible_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_small(dir.path(), "", "3");
    let b = run_small(dir.path(), "", "3");
    let c = run_small(dir.path(), "", "4");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn outputs_are_complete_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let text = run_small(dir.path(), "", "1");
    let out = dir.path().join("out-1");
    assert_eq!(text.lines().next().unwrap().split('\t').collect::<Vec<_>>(), LEDGER_COLUMNS);
    let rows = parse_ledger(&text).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.windows(2).all(|w| w[1].free_energy < w[0].free_energy));
    assert!(rows.iter().all(|r| r.energy_lhs <= r.b2 && (r.rho_min - 1.0).abs() < 1e-10));

    let ckpt = read_checkpoint(std::fs::File::open(out.join("final.ckpt")).unwrap()).unwrap();
    assert_eq!(ckpt.n, 5);
    assert!((ckpt.t - 0.1).abs() < 1e-12);

    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], serde_json::Value::Bool(true));
    let grid: toml::Value = toml::from_str(&std::fs::read_to_string(out.join("grid.toml")).unwrap()).unwrap();
    assert!(grid.get("flow").is_some() && grid.get("configuration").is_some());
}

#[test]
fn equilibrium_run_stays_at_rest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "eq.toml",
        "[scenario]\nname = \"equilibrium\"\n[scheme]\nt_final = 0.1\ndt = 0.02\n[grid]\nnx = 6\nn_r = 8\nn_theta = 8\n",
    );
    let out = dir.path().join("eq");
    let o = fenefp(&["run", &cfg, "-q", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let rows = parse_ledger(&std::fs::read_to_string(out.join("ledger.tsv")).unwrap()).unwrap();
    for r in &rows {
        assert!(r.kinetic < 1e-30 && r.entropy.abs() < 1e-14 && r.free_energy.abs() < 1e-14);
        assert!((r.psi_min - 1.0).abs() < 1e-12);
    }
}
