use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aopt::config::RunConfig;
use aopt::formats::{read_csv, read_dump};

const SMALL: &str = "\
[geometry]
nx = 9
nz_fix = 3
nz_var = 9

[time]
nt = 16
";

const MANUFACTURED: &str = "
[objective]
targets = manufactured
target_g = pulse 1.0
target_h = pulse 1.0
target_ell = bump 0.1 0.25 0.75
";

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn aopt(args: &[&str], config: &Path, out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_aopt"));
    cmd.args(args).arg("--config").arg(config).env_remove("AOPT_OUT");
    if let Some(o) = out {
        cmd.arg("--out").arg(o);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn forward_with_zero_controls_writes_zero_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.ini", &format!("{SMALL}\n[output]\nprobes = 0.5 -0.1; 0.25 -0.2\n"));
    let out = dir.path().join("out");
    let o = aopt(&["forward"], &cfg, Some(&out));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["pbar", "ptil", "p", "wtil", "g", "h"] {
        let (shape, values) = read_dump(out.join(format!("{f}.bin"))).unwrap();
        assert_eq!(shape.n_time, 17, "{f}");
        assert!(values.iter().all(|v| *v == 0.0), "{f}");
    }
    let (header, rows) = read_csv(out.join("probes.csv")).unwrap();
    assert_eq!(header.len(), 3);
    assert_eq!(rows.len(), 17);
    assert!(rows.iter().all(|r| r[1] == 0.0 && r[2] == 0.0));
    let (_, ell) = read_csv(out.join("ell.csv")).unwrap();
    assert!(ell.iter().all(|r| r[1] == 1.0));
}

#[test]
fn adjoint_writes_gradients_of_the_configured_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.ini", &format!("{SMALL}{MANUFACTURED}"));
    let out = dir.path().join("out");
    let o = aopt(&["adjoint"], &cfg, Some(&out));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (shape, g) = read_dump(out.join("grad_g.bin")).unwrap();
    assert_eq!((shape.n_time, shape.nx, shape.nz), (17, 9, 1));
    assert!(g.iter().any(|v| *v != 0.0));
    let (_, ell) = read_csv(out.join("grad_ell.csv")).unwrap();
    assert_eq!(ell.len(), 9);
}

#[test]
fn invalid_configurations_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for body in [
        "[physics]\nc = -1\n",
        "[geometry]\nnx = 1\n",
        "[nonsense]\nx = 1\n",
        "[geometry]\nunknown_key = 3\n",
        "[controls]\nprior_g = file missing.bin\n",
    ] {
        let cfg = write_config(dir.path(), "bad.ini", &format!("{SMALL}{body}"));
        let o = aopt(&["forward"], &cfg, Some(&out));
        assert_eq!(code(&o), 2, "{body}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = aopt(&["forward"], &dir.path().join("absent.ini"), Some(&out));
    assert_eq!(code(&o), 3);
}

#[test]
fn gradcheck_below_its_tolerance_exits_with_code_four() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}{MANUFACTURED}\n[check]\ntolerance = 1e-12\ndirections = 1\n");
    let cfg = write_config(dir.path(), "run.ini", &body);
    let out = dir.path().join("out");
    let o = aopt(&["gradcheck"], &cfg, Some(&out));
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("gradcheck.csv")).unwrap();
    assert!(text.starts_with("component,"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn config_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}{MANUFACTURED}roi = 0.1 0.9 -0.2 0\ntheta = 2.5e-3\n[optimizer]\nmode = gd\n");
    let cfg = write_config(dir.path(), "run.ini", &body);
    let out = dir.path().join("out");
    assert_eq!(code(&aopt(&["forward"], &cfg, Some(&out))), 0);
    let echoed = RunConfig::load(&out.join("config.ini")).unwrap();
    assert_eq!(echoed, RunConfig::load(&cfg).unwrap());
}

#[test]
fn output_directory_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.ini", SMALL);
    let env_out = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_aopt"))
        .args(["forward", "--config"])
        .arg(&cfg)
        .env("AOPT_OUT", &env_out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(env_out.join("config.ini").exists());

    let flag_out = dir.path().join("from-flag");
    let o = Command::new(env!("CARGO_BIN_EXE_aopt"))
        .args(["forward", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&flag_out)
        .env("AOPT_OUT", &env_out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(flag_out.join("config.ini").exists());
}

fn history(out: &Path) -> String {
    fs::read_to_string(out.join("history.csv")).unwrap()
}

#[test]
fn optimize_histories_are_bit_identical_across_runs_and_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}{MANUFACTURED}\n[optimizer]\nmax_iters = 6\n");
    let cfg = write_config(dir.path(), "run.ini", &body);
    let runs: Vec<String> = [("a", "1"), ("b", "1"), ("c", "4")]
        .iter()
        .map(|(name, jobs)| {
            let out = dir.path().join(name);
            let o = aopt(&["optimize", "--jobs", jobs], &cfg, Some(&out));
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            history(&out)
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
    assert_eq!(runs[0].lines().count(), 8);
}

#[test]
fn resume_continues_from_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.ini", &format!("{SMALL}{MANUFACTURED}\n[optimizer]\nmax_iters = 3\n"));
    let out = dir.path().join("out");
    assert_eq!(code(&aopt(&["optimize"], &cfg, Some(&out))), 0);
    let first = history(&out);
    let o = aopt(&["optimize", "--resume"], &cfg, Some(&out));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let resumed = history(&out);
    // the checkpointed iterate is re-evaluated as the first line of the resumed run
    let kept: Vec<&str> = first.lines().take(4).collect();
    assert_eq!(resumed.lines().take(4).collect::<Vec<_>>(), kept);
    let (_, rows) = read_csv(out.join("history.csv")).unwrap();
    let iterations: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(iterations, (0..=6).map(f64::from).collect::<Vec<_>>());
    let totals: Vec<f64> = rows.iter().map(|r| r[7]).collect();
    assert!(totals.windows(2).all(|w| w[1] <= w[0]), "{totals:?}");
}
