use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use oracle4rec::encoder::read_manifest;
use oracle4rec::seqdata::Dataset;
use oracle4rec::Config;
use oracle4rec_cli::ablation::ABLATIONS;

fn oracle4rec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oracle4rec"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TOY: &str = "model.d = 8\nmodel.d_ff = 8\nmodel.L = 8\nmodel.P = 2\n\
                   train.epochs = 2\ntrain.batch = 16\n";

/// Synthetic dataset plus a tiny config in a fresh directory.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = oracle4rec(&[
        "synth",
        "--out",
        s(dir.path()),
        "--users",
        "40",
        "--items",
        "120",
        "--categories",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    fs::write(dir.path().join("toy.conf"), TOY).unwrap();
    dir
}

fn train(dir: &Path, out: &str, extra: &[&str]) {
    let conf = dir.join("toy.conf");
    let data = dir.join("dataset.json");
    let out = dir.join(out);
    let mut args = vec!["train", "--config", s(&conf), "--input", s(&data)];
    args.extend(["--out", s(&out)]);
    args.extend_from_slice(extra);
    let o = oracle4rec(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["--bogus"],
        vec![],
        vec!["frobnicate"],
        vec!["train"],
        vec!["train", "--out", "x", "--unknown-flag"],
        vec!["train", "--out", "x", "--model.nonsense", "3"],
        vec!["eval", "--checkpoint", "x", "--protocol", "top5"],
        vec!["ablate", "no_such_row", "--out", "x"],
        vec!["analyze", "--checkpoint", "a", "--out", "x"],
    ] {
        let o = oracle4rec(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
    assert_eq!(code(&oracle4rec(&["--help"])), 0);
}

#[test]
fn out_of_range_setting_names_the_key() {
    let o = oracle4rec(&["train", "--out", "x", "--guiding.gamma", "-1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("guiding.gamma"), "{}", stderr(&o));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_eq!(code(&oracle4rec(&["eval", "--checkpoint", s(&missing)])), 1);
    assert_eq!(
        code(&oracle4rec(&[
            "prep",
            "--input",
            s(&missing),
            "--out",
            s(dir.path())
        ])),
        1
    );
}

#[test]
fn ablate_list_names_every_row() {
    let o = oracle4rec(&["ablate", "--list"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), ABLATIONS.len());
    for a in ABLATIONS {
        assert!(text.contains(a.name));
    }
}

#[test]
fn prep_writes_a_reloadable_dataset_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    // users a..f each rate items 1..5; user g is dropped by 5-core filtering
    let mut tsv = String::new();
    for (k, u) in ["a", "b", "c", "d", "e", "f"].iter().enumerate() {
        for i in 1..=5 {
            tsv.push_str(&format!("{u}\t{i}\t{}\tx|y\n", 100 * k + i));
        }
    }
    tsv.push_str("g\t1\t5\n");
    let input = dir.path().join("log.tsv");
    fs::write(&input, tsv).unwrap();
    let out = dir.path().join("prep");
    let o = oracle4rec(&["prep", "--input", s(&input), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("users         6"), "{stdout}");

    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["users"], 6);
    assert_eq!(stats["items"], 5);
    assert_eq!(stats["interactions"], 30);
    assert_eq!(stats["density"], 1.0);
    let ds = Dataset::load(out.join("dataset.json")).unwrap();
    assert_eq!(ds.num_interactions(), 30);
    assert_eq!(ds.num_categories(), 2);
}

#[test]
fn train_then_eval_writes_parseable_metrics() {
    let dir = workspace();
    train(dir.path(), "run", &["--model.d", "12", "--seed", "5"]);
    let run = dir.path().join("run");
    for f in [
        "checkpoint.bin",
        "manifest.json",
        "trainlog.csv",
        "metrics.json",
    ] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let manifest = read_manifest(&run).unwrap();
    assert_eq!(manifest.config.model.d, 12);
    assert_eq!(manifest.config.train.seed, 5);
    // the config echo reads back to the configuration that was run
    let echo = Config::parse_str(&fs::read_to_string(run.join("config.conf")).unwrap()).unwrap();
    assert_eq!(echo, manifest.config);

    let log = fs::read_to_string(run.join("trainlog.csv")).unwrap();
    assert!(log.starts_with("epoch,L_p,L_f,L_g,val_MRR"));
    assert_eq!(log.lines().count(), 3);

    let out = dir.path().join("eval");
    let o = oracle4rec(&[
        "eval",
        "--checkpoint",
        s(&run.join("checkpoint.bin")),
        "--out",
        s(&out),
        "--protocol",
        "full",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["split"], "test");
    assert_eq!(m["protocol"], "full");
    assert_eq!(m["users"], 40);
    assert_eq!(m["HR@1"], m["NDCG@1"]);
    for k in ["HR@5", "HR@10", "NDCG@5", "NDCG@10", "MRR"] {
        let v = m[k].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{k} = {v}");
    }
}

#[test]
fn eval_is_repeatable_and_seeded() {
    let dir = workspace();
    train(dir.path(), "run", &[]);
    let run = dir.path().join("run");
    let metrics = |seed: &str, out: &str| {
        let out = dir.path().join(out);
        let o = oracle4rec(&[
            "eval",
            "--checkpoint",
            s(&run),
            "--seed",
            seed,
            "--out",
            s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
        (v["MRR"].as_f64().unwrap(), v["seed"].as_u64().unwrap())
    };
    let a = metrics("1", "a");
    assert_eq!(a, metrics("1", "b"));
    assert_eq!(a.1, 1);
    assert_eq!(metrics("2", "c").1, 2);
}

#[test]
fn ablation_and_analysis_pipeline() {
    let dir = workspace();
    train(dir.path(), "full", &[]);
    let nf = dir.path().join("nf");
    let o = oracle4rec(&[
        "ablate",
        "no_future",
        "--config",
        s(&dir.path().join("toy.conf")),
        "--input",
        s(&dir.path().join("dataset.json")),
        "--out",
        s(&nf),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(read_manifest(&nf).unwrap().config.train.no_future);

    let out = dir.path().join("analysis");
    let o = oracle4rec(&[
        "analyze",
        "--checkpoint",
        s(&nf),
        "--checkpoint",
        s(&dir.path().join("full")),
        "--out",
        s(&out),
        "--top-k",
        "5",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("prefdist.csv")).unwrap();
    assert!(csv.starts_with("user,category,real_p,model_a_p,model_b_p\n"));
    assert_eq!(csv.lines().count(), 1 + 40 * 3);
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("preference.json")).unwrap()).unwrap();
    assert_eq!(r["top_k"], 5);
    assert!(r["kl_a"].as_f64().unwrap() >= 0.0);
    assert!(r["relative_improvement_pct"]
        .as_str()
        .unwrap()
        .ends_with('%'));
}

#[test]
fn every_ablation_trains() {
    let dir = workspace();
    let conf = dir.path().join("toy.conf");
    let data = dir.path().join("dataset.json");
    for a in ABLATIONS {
        let out = dir.path().join(a.name);
        let o = oracle4rec(&[
            "ablate",
            a.name,
            "--config",
            s(&conf),
            "--input",
            s(&data),
            "--out",
            s(&out),
            "--train.epochs",
            "1",
        ]);
        assert_eq!(code(&o), 0, "{}: {}", a.name, stderr(&o));
        let cfg = read_manifest(&out).unwrap().config;
        let mut want = Config::parse_str(TOY).unwrap();
        a.apply(&mut want).unwrap();
        assert_eq!(cfg.model, want.model, "{}", a.name);
        assert_eq!(cfg.guiding, want.guiding, "{}", a.name);
    }
}
