use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relu-recovery"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("relu-recovery-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn theta_star_output() {
    let o = run(&["theory", "theta-star"]);
    assert!(o.status.success());
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.contains("theta_star=0.1307"), "{s}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["--set", "bogus=1", "phase"]).status.code(), Some(2));
    assert_eq!(run(&["--config", "/definitely/missing.toml", "phase"]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--n", "abc"]).status.code(), Some(2));
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["arrangements", "nic", "solve", "reconstruct", "phase", "beta-sweep", "theory", "gmm-check"] {
        let o = run(&[sub, "--help"]);
        assert!(o.status.success(), "{sub}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"), "{sub}");
    }
}

#[test]
fn phase_csv_is_deterministic() {
    let dir = scratch("phase");
    let mut outputs = Vec::new();
    for k in 0..2 {
        let path = dir.join(format!("g{k}.csv"));
        let o = run(&[
            "--seed", "5", "--out", path.to_str().unwrap(),
            "--set", "d=4", "--set", "n_ratio=2,4", "--set", "trials=2",
            "phase", "--plots",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read_to_string(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(outputs[0].starts_with("d,n,sigma,trial,seed,success"));
    assert_eq!(outputs[0].lines().count(), 5);
    assert!(dir.join("g0_success.py").exists());
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn solve_and_reconstruct_run() {
    let o = run(&["solve", "--n", "30", "--d", "5", "--program", "grelu_skip"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = scratch("net");
    let path = dir.join("net.txt");
    let o = run(&["--out", path.to_str().unwrap(), "reconstruct", "--n", "30", "--d", "5", "--program", "grelu_skip"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("relu-network v1"));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn arrangements_exact_small() {
    let o = run(&["arrangements", "--n", "3", "--d", "2", "--exact"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains('6'));
}
