use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rrwnet::checkpoint::{Checkpoint, Provenance};
use rrwnet::cli::{list_map_ids, read_maps, write_maps};
use rrwnet::data::{load_dataset, DatasetKind, DatasetLayout, LoadOptions};
use rrwnet::networks::{Rrwnet, RrwnetConfig, Variant};

const TINY: &str = "base_channels = 4\ndepth = 2\nk = 2\nlearning_rate = 0.001\n";

fn rrwnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rrwnet")).args(args).env_remove("RRWNET_THREADS").output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A synthetic dataset plus a tiny training config in a fresh directory.
fn workspace(train: usize, test: usize) -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = dir.path().join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    ok(&rrwnet(&["synth", "--out", s(&data), "--train-count", &train.to_string(), "--test-count", &test.to_string(), "--size", "32"]));
    (dir, data, cfg)
}

fn help_text() -> String {
    let mut text = ok(&rrwnet(&["--help"]));
    for sub in ["train", "predict", "refine", "evaluate", "ksearch", "ablate", "synth"] {
        text.push_str(&format!("\n=== {sub} ===\n"));
        text.push_str(&ok(&rrwnet(&[sub, "--help"])));
    }
    text
}

#[test]
fn help_matches_golden_file() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/help.txt");
    let text = help_text();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&golden, &text).unwrap();
    }
    assert_eq!(text, fs::read_to_string(&golden).unwrap());
    for flag in ["--config", "--data", "--out", "--seed", "--k ", "--variant", "--folds", "--paths", "--threshold"] {
        assert!(text.contains(flag), "{flag}");
    }
}

#[test]
fn usage_and_data_errors_map_to_exit_codes() {
    let out = rrwnet(&["ablate", "--variants", "unet_only,vnet"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vnet"));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let out = rrwnet(&["train", "--data", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("E_DATA: ") && err.contains(s(&missing)), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "k = 2\nlearning_rate = quick\n").unwrap();
    let out = rrwnet(&["train", "--config", s(&cfg), "--data", s(dir.path()), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = Command::new(env!("CARGO_BIN_EXE_rrwnet"))
        .args(["synth", "--out", s(&dir.path().join("t"))])
        .env("RRWNET_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn smoke_training_run_with_one_fold() {
    let (dir, data, cfg) = workspace(6, 3);
    let out = dir.path().join("run");
    let start = Instant::now();
    ok(&rrwnet(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out), "--folds", "1", "--max-epochs", "2"]));
    assert!(start.elapsed() < Duration::from_secs(300));
    for p in ["manifest.txt", "checkpoints/best.ckpt", "checkpoints/fold0.ckpt", "reports/train_fold0.csv"] {
        assert!(out.join(p).is_file(), "{p}");
    }
    assert!(!out.join(".rrwnet.lock").exists());
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("command = train") && manifest.contains("max_epochs = 2") && manifest.contains("kind = custom"));
    assert_eq!(fs::read_to_string(out.join("reports/train_fold0.csv")).unwrap().lines().count(), 3);
}

#[test]
fn cross_validation_writes_every_fold_and_is_reproducible() {
    let (dir, data, cfg) = workspace(8, 2);
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&rrwnet(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out), "--max-epochs", "1", "--seed", "3"]));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in 0..4 {
        assert!(a.join(format!("checkpoints/fold{f}.ckpt")).is_file());
    }
    assert_eq!(fs::read(a.join("checkpoints/best.ckpt")).unwrap(), fs::read(b.join("checkpoints/best.ckpt")).unwrap());
}

#[test]
fn output_directory_lock_blocks_a_second_writer() {
    let (dir, data, cfg) = workspace(4, 1);
    let out = dir.path().join("locked");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".rrwnet.lock"), "").unwrap();
    let res = rrwnet(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&out), "--folds", "1", "--max-epochs", "1"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("lock"));
}

#[test]
fn predict_refine_evaluate_pipeline() {
    let (dir, data, cfg) = workspace(4, 3);
    let train = dir.path().join("train");
    ok(&rrwnet(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&train), "--folds", "1", "--max-epochs", "1"]));
    let ckpt = train.join("checkpoints/best.ckpt");

    let predict = |name: &str| {
        let out = dir.path().join(name);
        ok(&rrwnet(&["predict", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&out)]));
        out.join("predictions")
    };
    let (p1, p2) = (predict("p1"), predict("p2"));
    let ids = list_map_ids(&p1).unwrap();
    assert_eq!(ids.len(), 3);
    for id in &ids {
        for suffix in ["artery", "vein", "vessel", "composite"] {
            let name = format!("{id}_{suffix}.png");
            assert_eq!(fs::read(p1.join(&name)).unwrap(), fs::read(p2.join(&name)).unwrap(), "{name}");
        }
        let (maps, has_vessel) = read_maps(&p1, id).unwrap();
        assert!(has_vessel);
        assert_eq!(maps.shape(), &[3, 32, 32]);
    }

    let mismatch = rrwnet(&["predict", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&dir.path().join("p3")), "--variant", "rrwnet_all"]);
    assert_eq!(mismatch.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&mismatch.stderr).starts_with("E_CHECKPOINT"));

    let k0 = dir.path().join("k0");
    ok(&rrwnet(&["refine", "--checkpoint", s(&ckpt), "--maps", s(&p1), "--out", s(&k0), "--k", "0"]));
    for id in &ids {
        for suffix in ["artery", "vein", "vessel"] {
            let name = format!("{id}_{suffix}.png");
            assert_eq!(fs::read(p1.join(&name)).unwrap(), fs::read(k0.join("predictions").join(&name)).unwrap());
        }
    }

    let refined = dir.path().join("refined");
    ok(&rrwnet(&["refine", "--checkpoint", s(&ckpt), "--maps", s(&p1), "--out", s(&refined), "--data", s(&data)]));
    for id in &ids {
        let vessel = format!("{id}_vessel.png");
        assert_eq!(fs::read(p1.join(&vessel)).unwrap(), fs::read(refined.join("predictions").join(&vessel)).unwrap());
    }
    for r in ["before.json", "after.json", "before.csv", "after.csv"] {
        assert!(refined.join("reports").join(r).is_file(), "{r}");
    }

    let eval = dir.path().join("eval");
    ok(&rrwnet(&["evaluate", "--pred", s(&dir.path().join("p1")), "--data", s(&data), "--out", s(&eval), "--paths", "50"]));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval.join("reports/metrics.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["topology"]["n_paths"], 50);
    assert_eq!(json["images"].as_array().unwrap().len(), 3);

    fs::remove_file(p1.join(format!("{}_vein.png", ids[1]))).unwrap();
    fs::write(p1.join(format!("{}_artery.png", ids[2])), b"not a png").unwrap();
    let bad = dir.path().join("bad");
    let res = rrwnet(&["refine", "--checkpoint", s(&ckpt), "--maps", s(&p1), "--out", s(&bad)]);
    assert_eq!(res.status.code(), Some(3));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains(&format!("{}_vein.png", ids[1])) && err.contains(&format!("{}_artery.png", ids[2])), "{err}");
}

#[test]
fn refining_a_fixed_point_leaves_maps_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    // with all weights zero every refiner output is sigmoid(0) = 0.5
    let model = Rrwnet::new(RrwnetConfig::new(Variant::Rrwnet, 4, 2, 3)).unwrap();
    let ckpt = Checkpoint {
        model: model.config,
        provenance: Provenance::default(),
        params: model.zero_params().unwrap(),
        optimizer: None,
    };
    let ckpt_path = dir.path().join("zero.ckpt");
    ckpt.save(&ckpt_path).unwrap();
    let maps_dir = dir.path().join("maps");
    fs::create_dir_all(&maps_dir).unwrap();
    let half = rrwnet::autodiff::NdArray::full(&[3, 20, 28], 0.5f32);
    write_maps(&maps_dir, "img", &half).unwrap();
    let out = dir.path().join("out");
    ok(&rrwnet(&["refine", "--checkpoint", s(&ckpt_path), "--maps", s(&maps_dir), "--out", s(&out), "--k", "5"]));
    for suffix in ["artery", "vein", "vessel"] {
        let name = format!("img_{suffix}.png");
        let (a, b) = (read_maps(&maps_dir, "img").unwrap().0, read_maps(&out.join("predictions"), "img").unwrap().0);
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn evaluating_ground_truth_against_itself_is_perfect() {
    let (dir, data, _) = workspace(1, 3);
    let layout = DatasetLayout::resolve(&data, DatasetKind::Custom).unwrap();
    let ds = load_dataset(&layout, &LoadOptions::evaluation()).unwrap();
    let pred = dir.path().join("gt_pred");
    fs::create_dir_all(&pred).unwrap();
    for sample in &ds.test {
        write_maps(&pred, &sample.identifier, &sample.gt).unwrap();
    }
    let out = dir.path().join("e1");
    ok(&rrwnet(&["evaluate", "--pred", s(&pred), "--data", s(&data), "--out", s(&out)]));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("reports/metrics.json")).unwrap()).unwrap();
    let mean = &report["mean"];
    for key in ["artery", "vein", "vessel"] {
        assert_eq!(mean[key]["auroc"], 1.0);
        assert_eq!(mean[key]["aupr"], 1.0);
    }
    for key in ["av_intersection", "av_all_gt", "bv"] {
        assert_eq!(mean[key]["accuracy"], 100.0, "{key}");
    }
    assert_eq!(mean["topo_artery"]["cor"], 100.0);
    assert_eq!(mean["topo_vein"]["inf"], 0.0);
    let csv = fs::read_to_string(out.join("reports/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 + 1);

    // one flipped pixel must show up somewhere in the report
    let id = &ds.test[0].identifier;
    let (mut maps, _) = read_maps(&pred, id).unwrap();
    let idx = maps.channel(0).iter().position(|&v| v > 0.5).unwrap();
    maps.channel_mut(0)[idx] = 0.0;
    write_maps(&pred, id, &maps).unwrap();
    let out2 = dir.path().join("e2");
    ok(&rrwnet(&["evaluate", "--pred", s(&pred), "--data", s(&data), "--out", s(&out2)]));
    assert_ne!(fs::read_to_string(out2.join("reports/metrics.csv")).unwrap(), csv);

    fs::remove_file(pred.join(format!("{}_vessel.png", ds.test[1].identifier))).unwrap();
    fs::remove_file(pred.join(format!("{}_artery.png", ds.test[2].identifier))).unwrap();
    let res = rrwnet(&["evaluate", "--pred", s(&pred), "--data", s(&data), "--out", s(&dir.path().join("e3"))]);
    assert_eq!(res.status.code(), Some(3));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains(&ds.test[2].identifier), "{err}");
}

#[test]
fn metric_report_json_has_the_documented_shape() {
    let (dir, data, _) = workspace(1, 2);
    let layout = DatasetLayout::resolve(&data, DatasetKind::Custom).unwrap();
    let ds = load_dataset(&layout, &LoadOptions::evaluation()).unwrap();
    let pred = dir.path().join("pred");
    fs::create_dir_all(&pred).unwrap();
    for sample in &ds.test {
        let noisy = sample.gt.map(|v| 0.3 + 0.4 * v);
        write_maps(&pred, &sample.identifier, &noisy).unwrap();
    }
    let out = dir.path().join("e");
    ok(&rrwnet(&["evaluate", "--pred", s(&pred), "--data", s(&data), "--out", s(&out), "--paths", "20"]));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("reports/metrics.json")).unwrap()).unwrap();
    let number_or_null = |x: &serde_json::Value| x.is_number() || x.is_null();
    assert!(v["config"]["threshold"].is_number());
    for m in v["images"].as_array().unwrap().iter().chain([&v["mean"]]) {
        assert!(m["identifier"].is_string());
        for key in ["artery", "vein", "vessel"] {
            assert!(number_or_null(&m[key]["auroc"]) && number_or_null(&m[key]["aupr"]));
        }
        for key in ["av_intersection", "av_all_gt", "bv"] {
            for rate in ["sensitivity", "specificity", "accuracy"] {
                assert!(number_or_null(&m[key][rate]), "{key}.{rate}");
            }
        }
        for key in ["topo_artery", "topo_vein"] {
            assert!(m[key].is_null() || (m[key]["cor"].is_number() && m[key]["inf"].is_number()));
        }
    }
}

#[test]
fn ksearch_table_has_one_column_per_k() {
    let (dir, data, cfg) = workspace(6, 1);
    let out = dir.path().join("ks");
    let stdout = ok(&rrwnet(&["ksearch", "--config", s(&cfg), "--data", s(&data), "--out", s(&out), "--k-list", "0,2", "--folds", "2", "--max-epochs", "1"]));
    let csv = fs::read_to_string(out.join("reports/ksearch.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "evaluation,structure,metric,K=0,K=2,best");
    assert_eq!(lines.len(), 1 + 12 + 1);
    assert!(lines[1].starts_with("Segmentation,Artery,AUROC,"));
    assert!(lines[12].starts_with("Classification,BV/BG,Acc.,"));
    assert!(stdout.contains("selected K = "));

    let zero = dir.path().join("k0");
    ok(&rrwnet(&["ksearch", "--config", s(&cfg), "--data", s(&data), "--out", s(&zero), "--k-list", "0", "--folds", "2", "--max-epochs", "1"]));
    let csv = fs::read_to_string(zero.join("reports/ksearch.csv")).unwrap();
    assert!(csv.starts_with("evaluation,structure,metric,K=0,best\n"));
}

#[test]
fn ablation_tables() {
    let (dir, data, cfg) = workspace(5, 6);
    let single = dir.path().join("single");
    ok(&rrwnet(&["ablate", "--config", s(&cfg), "--data", s(&data), "--out", s(&single), "--variants", "unet_only", "--max-epochs", "1"]));
    let csv = fs::read_to_string(single.join("reports/ablation.csv")).unwrap();
    assert!(csv.starts_with("evaluation,structure,metric,unet_only\n"));
    assert_eq!(csv.lines().count(), 13);

    let pair = dir.path().join("pair");
    ok(&rrwnet(&["ablate", "--config", s(&cfg), "--data", s(&data), "--out", s(&pair), "--variants", "unet_only,wnet", "--max-epochs", "1"]));
    let csv = fs::read_to_string(pair.join("reports/ablation.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "evaluation,structure,metric,unet_only,wnet,best,second,p_value");
    for line in lines {
        let p = line.rsplit(',').next().unwrap();
        if !p.is_empty() {
            let p: f64 = p.parse().unwrap();
            assert!(p > 0.0 && p <= 1.0, "{line}");
        }
    }
}
