use std::process::{Command, Output};

fn csfq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csfq")).args(args).env_remove("SOURCE_DATE_EPOCH").output().expect("binary runs")
}

const MC: &[&str] = &["mc", "--seed", "7", "--taus", "1,3", "--pulses", "0,1,4", "--samples", "128", "--trajectories", "200"];

#[test]
fn mc_output_repeats_exactly() {
    let a = csfq(MC);
    let b = csfq(MC);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn mc_output_ignores_thread_count() {
    let mut one = vec!["--threads", "1"];
    one.extend_from_slice(MC);
    let mut eight = vec!["--threads", "8"];
    eight.extend_from_slice(MC);
    assert_eq!(csfq(&one).stdout, csfq(&eight).stdout);
}

#[test]
fn timestamp_follows_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_csfq"))
        .args(["spectrum", "--points", "1", "--flux-from", "0.5"])
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().contains("# timestamp: 1700000000"));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(csfq(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(csfq(&["spectrum", "--points", "many"]).status.code(), Some(2));
}

#[test]
fn randomized_commands_need_seed() {
    let out = csfq(&["mc", "--trajectories", "4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn module_errors_exit_one() {
    assert_eq!(csfq(&["--device", "/nonexistent.cfg", "spectrum"]).status.code(), Some(1));
    assert_eq!(csfq(&["coherence", "--alpha", "3"]).status.code(), Some(1));
}

#[test]
fn spectrum_at_symmetry_point() {
    let out = csfq(&["spectrum", "--points", "1", "--flux-from", "0.5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<f64> = text.lines().find(|l| !l.starts_with('#')).unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
    assert_eq!(row[0], 0.5);
    assert!((row[1] - 1.708).abs() < 0.01, "f01 = {}", row[1]);
    assert!(row[2] > 5.0 && row[3] > 7.0);
}

#[test]
fn out_flag_writes_file() {
    let dir = std::env::temp_dir().join(format!("csfq-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("relax.txt");
    let p = path.to_str().unwrap();
    assert!(csfq(&["relax", "--points", "11", "--out", p]).status.success());
    let fit = csfq(&["fit-relax", "--data", p]);
    assert!(fit.status.success());
    let text = String::from_utf8(fit.stdout).unwrap();
    let g21: f64 = text.lines().find_map(|l| l.strip_prefix("# gamma21: ")).unwrap().parse().unwrap();
    assert!((g21 / 124.3e3 - 1.0).abs() < 1e-6);
    std::fs::remove_dir_all(dir).unwrap();
}
