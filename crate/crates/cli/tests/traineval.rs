mod common;

use std::path::Path;

use common::*;
use defocus_cli::args::SplitArg;
use defocus_cli::commands::traineval::{cmd_traineval, run_train, split_ids};
use defocus_cli::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn features_file(path: &Path, n: usize, seed: u64) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::from("id,label,f0,f1,f2,constant\n");
    for i in 0..n {
        let l = (i % 2) as f64;
        text.push_str(&format!(
            "s{i:04},{},{},{},{},0.5\n",
            l as u8,
            r.random_range(0.0..1.0) + 0.8 * l,
            r.random_range(0.0..1.0),
            r.random_range(0.0..1.0) - 0.4 * l
        ));
    }
    std::fs::write(path, text).unwrap();
}

fn cfg(out: &Path) -> RunConfig {
    RunConfig {
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn split_is_seventy_fifteen_fifteen_and_disjoint() {
    let ids: Vec<String> = (0..200).map(|i| format!("id{i:03}")).collect();
    let sp = split_ids(&ids, 42);
    assert_eq!((sp.train.len(), sp.validation.len(), sp.test.len()), (140, 30, 30));
    let mut all: Vec<&String> = sp.train.iter().chain(&sp.validation).chain(&sp.test).collect();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), 200);
    assert_eq!(sp, split_ids(&ids, 42));
    assert_ne!(sp.train, split_ids(&ids, 43).train);
    // input order does not matter
    let mut rev = ids.clone();
    rev.reverse();
    assert_eq!(sp, split_ids(&rev, 42));
}

#[test]
fn fixed_seed_reproduces_split_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let feats = tmp.path().join("f.csv");
    features_file(&feats, 120, 1);
    let (t1, e1) = cmd_traineval(&feats, &cfg(&tmp.path().join("a"))).unwrap();
    let (t2, e2) = cmd_traineval(&feats, &cfg(&tmp.path().join("b"))).unwrap();
    assert_eq!(t1.split, t2.split);
    assert_eq!(t1.model, t2.model);
    assert_eq!(e1.report, e2.report);
    assert_eq!(t1.model.dropped, [3], "the constant column is dropped");
    let (lo, hi) = e1.report.auc_ci_95;
    assert!(lo <= e1.report.auc && e1.report.auc <= hi);
    assert_eq!(e1.report.n, 18);
}

#[test]
fn cli_train_then_eval_writes_model_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let feats = tmp.path().join("f.csv");
    features_file(&feats, 80, 2);
    let out = tmp.path().join("m");
    assert_eq!(run(&["train", "--features", &s(&feats), "--split-seed", "5", "--out-dir", &s(&out)]), 0);
    let model = read_json(&out.join("model.json"));
    assert_envelope(&model, "train");
    assert_eq!(model["split"]["seed"], 5);
    assert_eq!(model["feature_names"][0], "f0");
    assert_eq!(model["model"]["schema_version"], 1);

    assert_eq!(
        run(&["eval", "--model", &s(&out.join("model.json")), "--features", &s(&feats), "--split", "all", "--out-dir", &s(&out)]),
        0
    );
    let eval = read_json(&out.join("eval.json"));
    assert_envelope(&eval, "eval");
    assert_eq!(eval["split"], "all");
    assert_eq!(eval["report"]["n"], 80);
    assert_eq!(eval["scores"].as_array().unwrap().len(), 80);
    let ci = eval["report"]["auc_ci_95"].as_array().unwrap();
    let auc = eval["report"]["auc"].as_f64().unwrap();
    assert!(ci[0].as_f64().unwrap() <= auc && auc <= ci[1].as_f64().unwrap());
}

#[test]
fn a_split_without_both_classes_asks_for_a_larger_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let feats = tmp.path().join("f.csv");
    features_file(&feats, 6, 3);
    let err = run_train(&feats, &cfg(tmp.path())).unwrap_err();
    assert!(format!("{err:#}").contains("larger corpus"), "{err:#}");
}

#[test]
fn eval_rejects_mismatched_feature_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let feats = tmp.path().join("f.csv");
    features_file(&feats, 60, 4);
    let c = cfg(tmp.path());
    run_train(&feats, &c).unwrap();
    let other = tmp.path().join("g.csv");
    std::fs::write(&other, std::fs::read_to_string(&feats).unwrap().replacen("f0", "zz", 1)).unwrap();
    let model = tmp.path().join("model.json");
    assert!(defocus_cli::commands::traineval::run_eval(&model, &other, SplitArg::Test, &c).is_err());
}
