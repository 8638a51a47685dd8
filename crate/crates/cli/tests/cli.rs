use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctxsynth"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Tiny model flags shared by the training tests.
const TINY: [&str; 8] = ["--latent-dim", "4", "--model-dim", "8", "--layers", "1", "--heads", "2"];

fn tiny_model() -> Value {
    serde_json::json!({
        "latent_dim": 4, "model_dim": 8, "layers": 1, "heads": 2,
        "ffn_hidden_multiplier": 2, "activation": "gelu"
    })
}

fn small_manifest(dir: &Path, name: &str, tasks: &str, seed: &str, prefix: &str) -> PathBuf {
    let m = dir.join(name);
    ok(&["plan", "--tasks", tasks, "--rows", "50:60", "--features", "3:3", "--seed", seed, "--prefix", prefix, "--out", s(&m)]);
    m
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v = Vec::new();
    for task in fs::read_dir(dir).unwrap() {
        let task = task.unwrap().path();
        if task.is_dir() {
            for f in fs::read_dir(&task).unwrap() {
                let f = f.unwrap().path();
                if f.extension().is_some_and(|e| e == "csv") {
                    v.push(f);
                }
            }
        }
    }
    v.sort();
    v
}

#[test]
fn corpus_variants_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_manifest(dir.path(), "m.json", "2", "1", "task");
    let a = dir.path().join("a");
    ok(&["corpus", "--manifest", s(&m), "--out", s(&a)]);
    assert_eq!(csv_files(&a).len(), 10);
    let b = dir.path().join("b");
    ok(&["corpus", "--manifest", s(&m), "--out", s(&b)]);
    for (x, y) in csv_files(&a).iter().zip(csv_files(&b)) {
        assert_eq!(fs::read(x).unwrap(), fs::read(&y).unwrap());
    }
    let c = dir.path().join("c");
    ok(&["corpus", "--manifest", s(&m), "--out", s(&c), "--no-permute"]);
    assert_eq!(csv_files(&c).len(), 2);
    assert!(c.join("run_config.json").exists());
    assert_eq!(read_json(&c.join("manifest.json"))["permute"], false);
}

#[test]
fn invalid_manifest_is_a_usage_error_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("bad.json");
    fs::write(&m, "{\n  \"tasks\": [\n    {\"task_id\": 3,}\n  ]\n}\n").unwrap();
    let out = run(&["corpus", "--manifest", s(&m), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(&["corpus", "--bogus"])), 2);
    assert_eq!(code(&run(&["plan", "--tasks", "2"])), 2);
    assert_eq!(code(&run(&[])), 2);
}

#[test]
fn paper_preset_echoes_training_protocol() {
    let out = ok(&["pretrain", "--preset", "paper", "--print-config"]);
    let cfg: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["train"]["lr"], 2e-4);
    assert_eq!(cfg["train"]["warmup_ratio"], 0.05);
    assert_eq!(cfg["model"]["latent_dim"], 192);
    let out = ok(&["pretrain", "--print-config", "--epochs", "7"]);
    let cfg: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["train"]["epochs"], 7);
    assert_eq!(cfg["model"]["latent_dim"], 32);
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c.json");
    fs::write(&c, r#"{"preset": "paper", "train": {"epochs": 3, "lr": 0.01}}"#).unwrap();
    let out = ok(&["pretrain", "--config", s(&c), "--lr", "0.5", "--print-config"]);
    let cfg: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["preset"], "paper");
    assert_eq!(cfg["train"]["epochs"], 3);
    assert_eq!(cfg["train"]["lr"], 0.5);
    assert_eq!(cfg["model"]["model_dim"], 512);
    fs::write(&c, r#"{"train": {"epochz": 3}}"#).unwrap();
    assert_eq!(code(&run(&["pretrain", "--config", s(&c), "--print-config"])), 2);
}

#[test]
fn pretrain_synth_eval_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let m = small_manifest(d, "m.json", "2", "1", "task");
    let v = small_manifest(d, "v.json", "1", "2", "val");
    ok(&["corpus", "--manifest", s(&m), "--out", s(&d.join("corpus")), "--variants", "2"]);
    ok(&["corpus", "--manifest", s(&v), "--out", s(&d.join("val")), "--no-permute"]);

    let run_dir = d.join("run");
    ok(&[&[
        "pretrain", "--corpus", s(&d.join("corpus")), "--validation", s(&d.join("val")),
        "--out", s(&run_dir), "--epochs", "2", "--checkpoint-every", "1", "--initial-checkpoint",
    ][..], &TINY].concat());
    let log = fs::read_to_string(run_dir.join("train_log.jsonl")).unwrap();
    let steps: Vec<u64> = log.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["step"].as_u64().unwrap()).collect();
    assert_eq!(steps.len(), 8);
    assert!(steps.windows(2).all(|w| w[0] < w[1]));
    let sel = read_json(&run_dir.join("selection.json"));
    assert_eq!(sel["fids"].as_array().unwrap().len(), 3);
    let ck = run_dir.join(sel["selected_checkpoint"].as_str().unwrap());
    assert!(ck.exists());

    // rerunning from the written config reproduces the checkpoints bit for bit
    let again = d.join("again");
    let mut cfg = read_json(&run_dir.join("run_config.json"));
    cfg["out"] = Value::String(s(&again).into());
    let cfg_path = d.join("rerun.json");
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    ok(&["pretrain", "--config", s(&cfg_path)]);
    for name in ["ckpt-00000000.bin", "ckpt-00000004.bin", "ckpt-00000008.bin"] {
        assert_eq!(fs::read(run_dir.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }
    assert_eq!(fs::read(run_dir.join("selection.json")).unwrap(), fs::read(again.join("selection.json")).unwrap());

    let data = d.join("corpus/task0000/v0.csv");
    let syn = d.join("syn/s.csv");
    ok(&["synth", "--checkpoint", s(&ck), "--data", s(&data), "--rows", "37", "--decoder-epochs", "5", "--out", s(&syn)]);
    let text = fs::read_to_string(&syn).unwrap();
    assert_eq!(text.lines().count(), 38);
    assert_eq!(
        fs::read(d.join("syn/s.schema.json")).unwrap(),
        fs::read(d.join("corpus/task0000/v0.schema.json")).unwrap()
    );
    let side = read_json(&d.join("syn/s.csv.json"));
    assert_eq!(side["rows"], 37);
    assert_eq!(side["decoder_losses"].as_object().unwrap().len(), 3);
    let cfg = read_json(&d.join("syn/s.csv.run_config.json"));
    assert_eq!(cfg["context_ratio"], 0.3);
    let syn2 = d.join("syn/s2.csv");
    let mut cfg2 = cfg.clone();
    cfg2["out"] = Value::String(s(&syn2).into());
    fs::write(d.join("s2.json"), cfg2.to_string()).unwrap();
    ok(&["synth", "--config", s(&d.join("s2.json"))]);
    assert_eq!(fs::read(&syn).unwrap(), fs::read(&syn2).unwrap());

    // evaluation: a copy of train overfits completely
    let schema = d.join("corpus/task0000/v0.schema.json");
    let report = d.join("r1.json");
    ok(&[
        "eval", "--syn", s(&data), "--train", s(&data), "--val", s(&syn), "--test", s(&data),
        "--schema", s(&schema), "--dataset", "toy", "--method", "copy", "--seed", "1", "--out", s(&report),
    ]);
    let r = read_json(&report);
    assert_eq!(r["dcr_overfit"], 0.0);
    assert_eq!(r["method"], "copy");
    let report2 = d.join("r2.json");
    ok(&["eval", "--syn", s(&syn), "--train", s(&data), "--test", s(&data), "--out", s(&report2), "--method", "syn"]);
    let r2 = read_json(&report2);
    assert!(r2["dcr_overfit"].is_null());
    assert!(r2["notes"].as_array().unwrap().iter().any(|n| n.as_str().unwrap().starts_with("dcr_overfit")));
    assert!(r2["utility"]["boosted_stumps"].is_number());

    // one report aggregates to itself
    let agg = d.join("agg");
    ok(&["report", "--out", s(&agg), s(&report)]);
    let summary = fs::read_to_string(agg.join("summary.csv")).unwrap();
    let shape_line = summary.lines().find(|l| l.contains(",shape,")).unwrap();
    let fields: Vec<&str> = shape_line.split(',').collect();
    assert_eq!(fields[3], "1");
    assert_eq!(fields[4].parse::<f64>().unwrap(), r["shape"].as_f64().unwrap());
    assert_eq!(fields[5], "0.0");

    // several reports: deterministic correlation output
    let agg_a = d.join("agg_a");
    let agg_b = d.join("agg_b");
    ok(&["report", "--out", s(&agg_a), s(&report), s(&report2)]);
    ok(&["report", "--out", s(&agg_b), s(&report), s(&report2)]);
    for f in ["summary.csv", "pearson.csv", "spearman.csv", "frontier_points.csv"] {
        assert_eq!(fs::read(agg_a.join(f)).unwrap(), fs::read(agg_b.join(f)).unwrap(), "{f}");
    }
    let plot = fs::read_to_string(agg_a.join("frontier_points.csv")).unwrap();
    assert_eq!(plot.lines().next().unwrap(), "dataset,method,seed,quality,privacy");
}

#[test]
fn missing_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let nope = dir.path().join("nope.csv");
    let out = run(&["eval", "--syn", s(&nope), "--train", s(&nope), "--test", s(&nope), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(code(&out), 3);
}

#[test]
fn divergence_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_manifest(dir.path(), "m.json", "1", "1", "task");
    ok(&["corpus", "--manifest", s(&m), "--out", s(&dir.path().join("c")), "--no-permute"]);
    let out = run(&[&[
        "pretrain", "--corpus", s(&dir.path().join("c")), "--out", s(&dir.path().join("r")),
        "--epochs", "20", "--lr", "1e300",
    ][..], &TINY].concat());
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

fn study_config(dir: &Path, ablation: bool) -> PathBuf {
    let p = dir.join(if ablation { "ablate.json" } else { "study.json" });
    let mut cfg = serde_json::json!({
        "model": tiny_model(),
        "rows": 60,
        "n_train": 50,
        "decoder": {"epochs": 3, "hidden": 16},
        "train": {"epochs": 4, "checkpoint_every": 2}
    });
    if ablation {
        cfg["corpus_train"] = serde_json::json!({"epochs": 1});
    }
    fs::write(&p, cfg.to_string()).unwrap();
    p
}

#[test]
fn frontier_and_ablation_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let m = small_manifest(d, "m.json", "1", "3", "task");
    ok(&["corpus", "--manifest", s(&m), "--out", s(&d.join("c")), "--no-permute"]);
    let mut big = serde_json::from_str::<Value>(&fs::read_to_string(&m).unwrap()).unwrap();
    big["tasks"][0]["n_rows"] = 120.into();
    big["tasks"][0]["task_id"] = "toy".into();
    fs::write(d.join("big.json"), big.to_string()).unwrap();
    ok(&["corpus", "--manifest", s(&d.join("big.json")), "--out", s(&d.join("big")), "--no-permute"]);
    let data = d.join("big/toy/v0.csv");
    let cfg = study_config(d, false);

    let f = d.join("ds.csv");
    ok(&["frontier", "--mode", "dataset-specific", "--data", s(&data), "--config", s(&cfg), "--out", s(&f)]);
    let text = fs::read_to_string(&f).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step_or_ratio,quality,privacy");
    assert_eq!(lines.len(), 3);
    let steps: Vec<f64> = lines[1..].iter().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(steps, vec![2.0, 4.0]);

    ok(&[&["pretrain", "--corpus", s(&d.join("c")), "--out", s(&d.join("r")), "--epochs", "1"][..], &TINY].concat());
    let ck = d.join("r/ckpt-00000001.bin");
    let f = d.join("icl.csv");
    ok(&["frontier", "--mode", "icl", "--checkpoint", s(&ck), "--data", s(&data), "--config", s(&cfg), "--out", s(&f)]);
    let text = fs::read_to_string(&f).unwrap();
    let ratios: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(ratios, vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);

    let cfg = study_config(d, true);
    for (variant, label) in [("s", "ablation_s"), ("N", "ablation_n")] {
        let out = d.join(format!("ab_{variant}.json"));
        ok(&[
            "ablate", "--variant", variant, "--manifest", s(&m), "--data", s(&data), "--config", s(&cfg),
            "--out", s(&out),
        ]);
        let r = read_json(&out);
        assert_eq!(r["method"], label);
        assert!(r["dcr_overfit"].is_number());
        assert!(r["shape"].is_number());
    }
}
