//! End-to-end tests of the `gru-pfg` binary: command surfaces, file
//! outputs, exit codes and manifests.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gru-pfg"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth_args(dir: &Path, name: &str, days: usize, seed: u64) -> PathBuf {
    let out = dir.join(name);
    let days = days.to_string();
    let seed = seed.to_string();
    let o = run(&[
        "synth", "--stocks", "8", "--days", &days, "--groups", "2", "--signal", "0.8",
        "--noise", "0.3", "--seed", &seed, "--out", out.to_str().unwrap(),
    ]);
    assert_ok(&o);
    out
}

/// Tiny config over an 8-stock panel: 20 train / 5 valid / 5 test days.
fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.ini");
    std::fs::write(
        &path,
        "model.kind = gru-pfg\n\
         model.hidden_size = 4\n\
         train.epochs = 2\n\
         train.learning_rate = 1e-3\n\
         train.seed = 5\n\
         split.train_start = 2010-01-04\n\
         split.train_end = 2010-01-29\n\
         split.valid_start = 2010-02-01\n\
         split.valid_end = 2010-02-05\n\
         split.test_start = 2010-02-08\n\
         split.test_end = 2010-02-12\n",
    )
    .unwrap();
    path
}

#[test]
fn synth_writes_expected_panel_shape() {
    let dir = tempfile::tempdir().unwrap();
    let panel = synth_args(dir.path(), "p.csv", 12, 7);
    let text = std::fs::read_to_string(&panel).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 12 * 8, "header plus dates x stocks");
    assert!(lines[0].starts_with("date,stock_id,f000,"));
    assert!(lines[0].ends_with(",f359,label"));
    // one manifest per run
    assert!(panel.with_file_name("p.csv.manifest.txt").exists());
}

#[test]
fn synth_same_flags_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth_args(dir.path(), "a.csv", 10, 3);
    let b = synth_args(dir.path(), "b.csv", 10, 3);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn synth_groups_exceeding_stocks_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = run(&[
        "synth", "--stocks", "20", "--days", "5", "--groups", "30", "--signal", "0.5",
        "--noise", "0.1", "--seed", "1", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pfg_seed_env_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |out: &Path| -> Vec<String> {
        [
            "synth", "--stocks", "4", "--days", "3", "--groups", "2", "--signal", "0.5",
            "--noise", "0.1", "--seed", "1", "--out", out.to_str().unwrap(),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };
    let o = bin().args(args(&a)).env("PFG_SEED", "99").output().unwrap();
    assert_ok(&o);
    let o = bin()
        .args({
            let mut v = args(&b);
            let i = v.iter().position(|s| s == "1").unwrap();
            v[i] = "99".into();
            v
        })
        .output()
        .unwrap();
    assert_ok(&o);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn train_eval_produce_fixed_filenames() {
    let dir = tempfile::tempdir().unwrap();
    let panel = synth_args(dir.path(), "p.csv", 30, 11);
    let config = tiny_config(dir.path());
    let run_dir = dir.path().join("run");
    let o = run(&[
        "train", "--panel", panel.to_str().unwrap(), "--config", config.to_str().unwrap(),
        "--out-dir", run_dir.to_str().unwrap(),
    ]);
    assert_ok(&o);
    for file in ["checkpoint.bin", "train_log.csv", "manifest.txt", "load_report.txt"] {
        assert!(run_dir.join(file).exists(), "missing {file}");
    }

    let eval_dir = dir.path().join("eval");
    let o = run(&[
        "eval", "--panel", panel.to_str().unwrap(), "--checkpoint",
        run_dir.join("checkpoint.bin").to_str().unwrap(), "--split", "test", "--config",
        config.to_str().unwrap(), "--out-dir", eval_dir.to_str().unwrap(),
    ]);
    assert_ok(&o);
    for file in ["metrics.csv", "monthly.csv", "manifest.txt"] {
        assert!(eval_dir.join(file).exists(), "missing {file}");
    }
    let metrics = std::fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,scope,value\n"));
    assert!(metrics.contains("ic,mean,"));
    let monthly = std::fs::read_to_string(eval_dir.join("monthly.csv")).unwrap();
    assert!(monthly.starts_with("month,ic,p3,p5,p10,p30\n"));
}

#[test]
fn eval_with_mismatched_hidden_size_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let panel = synth_args(dir.path(), "p.csv", 30, 13);
    let config = tiny_config(dir.path());

    // fabricate a checkpoint whose header hidden size disagrees with its
    // array shapes
    use gru_pfg::baselines::{ModelVariant, VariantKind};
    use gru_pfg::model::params::ParamSet;
    use rand::SeedableRng;
    let model = ModelVariant::<f64>::init(
        VariantKind::Gru,
        4,
        &mut rand_chacha::ChaCha8Rng::seed_from_u64(1),
    );
    let mut entries = Vec::new();
    model.visit(&mut |name, t| {
        entries.push((name.to_string(), t.shape().to_vec(), t.values.clone()));
    });
    let bad = dir.path().join("bad.bin");
    gru_pfg::train::checkpoint::write_raw(&bad, "gru", 16, &entries).unwrap();

    let o = run(&[
        "eval", "--panel", panel.to_str().unwrap(), "--checkpoint", bad.to_str().unwrap(),
        "--split", "test", "--config", config.to_str().unwrap(), "--out-dir",
        dir.path().join("eval").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gradcheck_small_instance_exits_0() {
    let o = run(&["gradcheck", "--stocks", "3", "--dims", "4", "--seed", "2"]);
    assert_ok(&o);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("max relative error"), "stdout: {stdout}");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let panel = synth_args(dir.path(), "p.csv", 10, 17);
    let config = dir.path().join("bad.ini");
    std::fs::write(&config, "train.warp_speed = 9\n").unwrap();
    let o = run(&[
        "train", "--panel", panel.to_str().unwrap(), "--config", config.to_str().unwrap(),
        "--out-dir", dir.path().join("r").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_panel_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "train", "--panel", dir.path().join("nope.csv").to_str().unwrap(), "--out-dir",
        dir.path().join("r").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn ablate_two_variants_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let panel = synth_args(dir.path(), "p.csv", 30, 19);
    let config = tiny_config(dir.path());
    let out_dir = dir.path().join("abl");
    let o = run(&[
        "ablate", "--panel", panel.to_str().unwrap(), "--config", config.to_str().unwrap(),
        "--variants", "gru,gru-pfg", "--seeds", "1,2", "--out-dir", out_dir.to_str().unwrap(),
    ]);
    assert_ok(&o);

    let table = String::from_utf8_lossy(&o.stdout);
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].contains("IC") && lines[0].contains("Rank IC") && lines[0].contains("P@30"));
    assert_eq!(lines.len(), 3, "header plus one row per variant: {table}");
    assert!(lines[1].starts_with("gru "));
    assert!(lines[2].starts_with("gru-pfg "));

    let csv = std::fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(
        rows[0],
        "variant,seeds,ic,ic_std,rank_ic,rank_ic_std,p3,p3_std,p5,p5_std,p10,p10_std,p30,p30_std"
    );
    assert_eq!(rows.len(), 3);
    // per-cell artifacts at disjoint paths
    for cell in ["gru-seed1", "gru-seed2", "gru-pfg-seed1", "gru-pfg-seed2"] {
        assert!(out_dir.join("cells").join(cell).join("metrics.csv").exists());
    }
}

#[test]
fn train_is_reproducible_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let panel = synth_args(dir.path(), "p.csv", 30, 23);
    let config = tiny_config(dir.path());
    let run1 = dir.path().join("run1");
    let o = run(&[
        "train", "--panel", panel.to_str().unwrap(), "--config", config.to_str().unwrap(),
        "--out-dir", run1.to_str().unwrap(),
    ]);
    assert_ok(&o);

    // replay: reconstruct the config from the manifest snapshot
    let manifest = std::fs::read_to_string(run1.join("manifest.txt")).unwrap();
    let replay_config: String = manifest
        .lines()
        .filter_map(|l| l.split_once('='))
        .filter_map(|(k, v)| k.strip_prefix("config.").map(|key| format!("{key} = {v}\n")))
        .collect();
    let config2 = dir.path().join("replay.ini");
    std::fs::write(&config2, replay_config).unwrap();

    let run2 = dir.path().join("run2");
    let o = run(&[
        "train", "--panel", panel.to_str().unwrap(), "--config", config2.to_str().unwrap(),
        "--out-dir", run2.to_str().unwrap(),
    ]);
    assert_ok(&o);

    assert_eq!(
        std::fs::read(run1.join("checkpoint.bin")).unwrap(),
        std::fs::read(run2.join("checkpoint.bin")).unwrap(),
        "replayed checkpoint differs"
    );
}
