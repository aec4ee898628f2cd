use std::path::Path;
use std::process::{Command, Output};

use spp_cli::{EXIT_ABORT, EXIT_CONFIG, EXIT_IO, EXIT_MISMATCH};
use spp_core::guided::TrainingHistory;
use spp_core::optics::HeatMap;

const CONFIG: &str = r#"
[grids]
wavelength_count = 12
angle_count = 10

[dataset]
train_count = 16
test_count = 6

[training]
epochs = 2
batch_size = 8

[guidance]
warmup = 0
"#;

fn spp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spp"))
        .current_dir(dir)
        .args(["--workers", "1", "--config", "run.toml"])
        .args(args)
        .output()
        .expect("spp runs")
}

fn setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), format!("{CONFIG}{extra}")).unwrap();
    let out = spp(dir.path(), &["gen-data", "--out", "data", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn render_maps_half_to_128() {
    let dir = setup("");
    HeatMap::filled(3, 4, 0.5).unwrap().save(dir.path().join("half.sppm")).unwrap();
    let out = spp(dir.path(), &["--check", "render", "--map", "half.sppm", "--out", "half.pgm"]);
    assert!(out.status.success());
    let bytes = std::fs::read(dir.path().join("half.pgm")).unwrap();
    let (w, h, px) = spp_cli::render::parse_pgm(&bytes).unwrap();
    assert_eq!((w, h), (4, 3));
    assert!(px.iter().all(|&p| p == 128));
    assert!(dir.path().join("half.pgm.axes.txt").exists());
}

#[test]
fn exit_codes() {
    let dir = setup("");
    let p = dir.path();
    let code = |o: Output| o.status.code().unwrap();

    assert_eq!(code(spp(p, &["render", "--map", "data/test/maps/0000.sppm"])), EXIT_CONFIG);
    assert_eq!(code(spp(p, &["--workers", "0", "render", "--map", "x"])), EXIT_CONFIG);
    assert_eq!(code(spp(p, &["render", "--map", "missing.sppm", "--out", "m.pgm"])), EXIT_IO);
    std::fs::write(p.join("junk.sppm"), b"not a map").unwrap();
    assert_eq!(code(spp(p, &["render", "--map", "junk.sppm", "--out", "m.pgm"])), EXIT_IO);
    assert_eq!(
        code(spp(p, &["train", "--data", "data", "--guided", "--baseline", "--out", "m.sppw"])),
        EXIT_CONFIG
    );

    assert!(spp(p, &["train", "--data", "data", "--baseline", "--out", "m.sppw"]).status.success());
    std::fs::write(p.join("wide.toml"), "[network]\nstage_widths = [8, 16, 32, 64]\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_spp"))
        .current_dir(p)
        .args(["--config", "wide.toml", "predict", "--checkpoint", "m.sppw", "--map", "data/test/maps/0000.sppm"])
        .output()
        .unwrap();
    assert_eq!(code(out), EXIT_MISMATCH);
}

#[test]
fn divergent_training_aborts_and_keeps_last_good_state() {
    let dir = setup("");
    let p = dir.path();
    std::fs::write(
        p.join("run.toml"),
        CONFIG.replace("batch_size = 8", "batch_size = 8\nlearning_rate = 1e30"),
    )
    .unwrap();
    let out = spp(p, &["train", "--data", "data", "--baseline", "--epochs", "6", "--out", "m.sppw"]);
    assert_eq!(out.status.code(), Some(EXIT_ABORT), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(p.join("m.sppw").exists());
    let hist = TrainingHistory::load(p.join("m.sppw.history.csv")).unwrap();
    assert!(hist.records.len() < 6);
    assert!(hist.records.iter().all(|r| r.mean_loss.is_finite()));
}

#[test]
fn baseline_keeps_train_cost_and_eval_reports_one_row() {
    let dir = setup("");
    let p = dir.path();
    assert!(spp(p, &["train", "--data", "data", "--baseline", "--epochs", "3", "--out", "b.sppw"]).status.success());
    let hist = TrainingHistory::load(p.join("b.sppw.history.csv")).unwrap();
    let first = hist.records[0].mean_train_cost;
    assert!(hist.records.iter().all(|r| r.mean_train_cost == first && r.replacements == 0));
    assert_eq!(std::fs::read_to_string(p.join("b.sppw.audit.jsonl")).unwrap(), "");

    let out = spp(p, &["eval", "--checkpoint", "b.sppw", "--data", "data/test", "--per-sample", "ps.csv"]);
    assert!(out.status.success());
    let rows = TrainingHistory::from_csv(&stdout(&out), Path::new("stdout")).unwrap();
    assert_eq!(rows.records.len(), 1);
    // Evaluating the training checkpoint on the test set reproduces the
    // last history row's test-side columns.
    let last = hist.records.last().unwrap();
    let r = rows.records[0];
    assert_eq!(r.epoch, 3);
    assert_eq!(r.mean_test_cost, last.mean_test_cost);
    assert_eq!(r.accuracy_mre, last.accuracy_mre);
    assert_eq!(r.accuracy_literal, last.accuracy_literal);
    let per = std::fs::read_to_string(p.join("ps.csv")).unwrap();
    assert_eq!(per.lines().count(), 1 + 6);
}

#[test]
fn zero_epsilon_compare_has_unit_ratio() {
    let dir = setup("epsilon = 0.0\n");
    let out = spp(dir.path(), &["compare", "--data", "data", "--seeds", "5", "--epochs", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], "guided");
    assert_eq!(rows[1][1], "baseline");
    assert_eq!(rows[0][2..], rows[1][2..]);
    assert_eq!(rows[0][5].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn predict_reports_layers_cost_and_distance() {
    let dir = setup("");
    let p = dir.path();
    assert!(spp(p, &["train", "--data", "data", "--baseline", "--epochs", "1", "--out", "m.sppw"]).status.success());
    let out = spp(p, &["predict", "--checkpoint", "m.sppw", "--map", "data/test/maps/0002.sppm"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["layers"].as_array().unwrap().len(), 6);
    assert!(v["cost"].as_f64().unwrap() >= 0.0);
    assert!(v["distance"].as_f64().unwrap() >= 0.0);
}
