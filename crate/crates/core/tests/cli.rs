use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn chimney(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_chimney"));
    cmd.args(args).arg("--out").arg(out).args(["--threads", "1"]);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().expect("binary runs")
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn atlas_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = chimney(&["atlas"], None, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("wrote curve_c.csv"));

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "atlas");
    let hash = manifest["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    for f in ["atlas.csv", "curve_c.csv", "motor_report.txt"] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with('#') && first.contains(hash), "{f}: {first}");
    }
}

#[test]
fn terrain_with_zero_radius_is_vertical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[terrain.spec]\njunction_r = 0.0\nwall_width = 0.9\n").unwrap();
    let out = chimney(&["terrain"], Some(&cfg), &dir.path().join("o"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("o/terrain.csv")).unwrap();
    let rows = data_rows(&text);
    assert_eq!(rows[0], "z,x_left,x_right");
    assert!(rows.len() > 100);
    for r in &rows[1..] {
        let v: Vec<f64> = r.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!((v[1], v[2]), (-0.45, 0.45), "{r}");
    }
}

#[test]
fn empty_grid_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[atlas.grid]\nx_min = 5.0\nx_max = 6.0\n").unwrap();
    let out = chimney(&["atlas"], Some(&cfg), &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "seed = 1\n\n[train]\nno_such_key = 3\n").unwrap();
    let out = chimney(&["train"], Some(&cfg), &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no_such_key") && err.contains('4'), "{err}");

    fs::write(&cfg, "[train]\nclip = 3.0\n").unwrap();
    let out = chimney(&["train"], Some(&cfg), &dir.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_then_rollout_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "seed = 4\n[train]\nn_envs = 2\nsteps_per_rollout = 4\nminibatches = 2\nppo_epochs = 1\ncheckpoint_every = 0\n\
         [train.policy]\nhidden = [8, 8]\n[rollout]\nduration = 2.0\nlevel = 3\n",
    )
    .unwrap();
    let train_dir = dir.path().join("train");
    let out = chimney(&["train", "--iterations", "2"], Some(&cfg), &train_dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(train_dir.join("metrics.csv")).unwrap();
    assert_eq!(data_rows(&metrics).len(), 3);

    let ckpt = train_dir.join("policy.ckpt");
    let run = |name: &str| {
        let o = dir.path().join(name);
        let out = chimney(&["rollout", "--checkpoint", ckpt.to_str().unwrap()], Some(&cfg), &o);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (
            fs::read_to_string(o.join("trajectory.csv")).unwrap(),
            fs::read_to_string(o.join("rewards.csv")).unwrap(),
        )
    };
    let a = run("r1");
    let b = run("r2");
    assert_eq!(a, b);
    assert!(data_rows(&a.0).len() > 2);
}
