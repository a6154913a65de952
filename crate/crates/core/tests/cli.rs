use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use num_complex::Complex64;

use cellfree_gnn::dataset::{load_channel_set, load_measurements, write_measurements, MeasurementMeta, MeasurementSet};

fn cellfree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellfree"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const ALL_METHODS: &str = "[\"cb\", \"zf\", \"gnn_pretrained\", \"gnn_finetuned\"]";

fn write_config(dir: &Path, methods: &str, top_extra: &str, dataset: &str) -> String {
    let text = format!(
        "seed = 5\nmethods = {methods}\nsnr_sweep_db = [0.0, 10.0]\n{top_extra}\n\
         [scenario]\nusers = 2\naps = 4\n\n[dataset]\n{dataset}\n\n[pretrain]\ncount = 60\n\n\
         [model]\nhidden_width = 6\n\n[train]\nepochs = 1\nbatch_size = 16\n"
    );
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn eval_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), ALL_METHODS, "", "count = 60");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let stdout = ok(cellfree(&[
            "eval",
            "--config",
            &config,
            "--out",
            out.to_str().unwrap(),
            "--deterministic",
        ]));
        assert!(stdout.starts_with("method,freeze,snr_db,mean_sum_rate,std,count\n"));
    }
    for file in ["metrics.csv", "history_pretrained.csv", "history_finetuned_freeze4.csv"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    let c = dir.path().join("c");
    ok(cellfree(&[
        "eval",
        "--config",
        &config,
        "--out",
        c.to_str().unwrap(),
        "--seed",
        "6",
    ]));
    assert_ne!(
        fs::read(a.join("metrics.csv")).unwrap(),
        fs::read(c.join("metrics.csv")).unwrap()
    );
}

#[test]
fn staged_commands_share_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), ALL_METHODS, "freeze_sweep = [0, 8]", "count = 60");
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    ok(cellfree(&["pretrain", "--config", &config, "--out", out_s]));
    let pretrained = fs::read(out.join("checkpoints/pretrained.json")).unwrap();
    ok(cellfree(&["finetune", "--config", &config, "--out", out_s]));
    assert!(out.join("checkpoints/finetuned_freeze4.json").exists());
    let sweep = ok(cellfree(&["freeze-sweep", "--config", &config, "--out", out_s]));
    assert_eq!(sweep.lines().count(), 1 + 2 * 2);
    assert_eq!(fs::read(out.join("checkpoints/pretrained.json")).unwrap(), pretrained);

    // Fully frozen fine-tuning leaves the pretrained weights untouched.
    let frozen = fs::read_to_string(out.join("checkpoints/finetuned_freeze8.json")).unwrap();
    let pre: serde_json::Value = serde_json::from_slice(&pretrained).unwrap();
    let ft: serde_json::Value = serde_json::from_str(&frozen).unwrap();
    assert_eq!(pre["layers"], ft["layers"]);

    ok(cellfree(&[
        "pretrain",
        "--config",
        &config,
        "--out",
        out_s,
        "--retrain",
        "--seed",
        "9",
    ]));
    assert_ne!(fs::read(out.join("checkpoints/pretrained.json")).unwrap(), pretrained);
}

#[test]
fn data_commands() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), ALL_METHODS, "", "count = 60");
    let out = dir.path().join("data");
    let out_s = out.to_str().unwrap();

    ok(cellfree(&["gen-synth", "--config", &config, "--out", out_s]));
    let (set, meta) = load_channel_set(&out.join("channels.csv")).unwrap();
    assert_eq!((set.len(), meta.num_ues, meta.num_aps, meta.seed), (60, 2, 4, Some(5)));

    let csi = dir.path().join("csi.csv");
    let vectors = DMatrix::from_fn(7, 4, |i, m| Complex64::new(i as f64 + 1.0, m as f64 - 1.5));
    write_measurements(&MeasurementSet::new(vectors, MeasurementMeta::default()).unwrap(), &csi).unwrap();
    let summary = ok(cellfree(&[
        "ingest",
        "--input",
        csi.to_str().unwrap(),
        "--out",
        out_s,
        "--unit-scale",
        "2",
    ]));
    assert!(summary.contains("7 positions x 4 APs"));
    let ingested = load_measurements(&out.join("measurements.csv")).unwrap();
    assert_eq!(ingested.vector(0)[0], Complex64::new(2.0, -3.0));

    let measured = dir.path().join("measured");
    fs::create_dir_all(&measured).unwrap();
    let mcfg = write_config(
        &measured,
        ALL_METHODS,
        "",
        &format!("kind = \"measured\"\npath = {:?}", csi.to_str().unwrap()),
    );
    let pairs = ok(cellfree(&["pairs", "--config", &mcfg, "--out", out_s]));
    assert!(pairs.starts_with("21 samples"), "{pairs}");
    assert!(out.join("samples_target.json").exists());
    assert!(out.join("split_target.json").exists());
}

#[test]
fn export_rebuilds_metrics_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[\"cb\"]", "", "count = 60");
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    ok(cellfree(&["eval", "--config", &config, "--out", out_s]));
    let copy = dir.path().join("copy.csv");
    ok(cellfree(&["export", "--out", out_s, "--csv", copy.to_str().unwrap()]));
    assert_eq!(fs::read(&copy).unwrap(), fs::read(out.join("metrics.csv")).unwrap());
}

#[test]
fn config_errors_exit_nonzero_with_key_path() {
    let dir = tempfile::tempdir().unwrap();
    for (extra, key) in [
        ("[finetune]\nfreeze = 9\n", "finetune.freeze"),
        ("[train]\nlearning_rate = -1.0\n", "train.learning_rate"),
        ("bogus = 1\n", "bogus"),
    ] {
        let path = dir.path().join("bad.toml");
        fs::write(
            &path,
            format!("{extra}\n[scenario]\nusers = 2\naps = 4\n[dataset]\ncount = 10\n"),
        )
        .unwrap();
        let out = cellfree(&["eval", "--config", path.to_str().unwrap()]);
        assert!(!out.status.success());
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(key), "{err}");
    }
    let out = cellfree(&["eval"]);
    assert!(!out.status.success());
}
