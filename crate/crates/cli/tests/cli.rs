use std::path::Path;
use std::process::{Command, Output};

fn rowseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rowseg")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, count: &str) -> String {
    let out = dir.to_str().unwrap();
    let o = rowseg(&["synth", "--count", count, "--seed", "3", "--out", out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join("manifest.txt").to_str().unwrap().to_owned()
}

#[test]
fn help_lists_config_keys() {
    let o = rowseg(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for key in ["net.base_width", "rpem.kind", "train.lr", "loss.t"] {
        assert!(text.contains(key), "{key}");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&rowseg(&["frobnicate"])), 1);
    let o = rowseg(&["profile", "--set", "net.no_such_key=3"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("net.no_such_key"));
    assert_eq!(code(&rowseg(&["profile", "--set", "net.base_width=wide"])), 1);
}

#[test]
fn synth_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth(a.path(), "3");
    synth(b.path(), "3");
    for name in ["manifest.txt", "scene_0000.ppm", "scene_0002.pgm"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn stats_counts_every_valid_pixel() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "2");
    let o = rowseg(&["stats", "--manifest", &manifest, "--buckets", "8"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout.clone()).unwrap();
    let total: u64 = csv.lines().skip(1).flat_map(|l| l.split(',').skip(2).map(|v| v.parse::<u64>().unwrap())).sum();
    assert_eq!(csv.lines().count(), 9);
    assert_eq!(total, 2 * 64 * 96);
    assert!(stderr(&o).contains("sea"));
}

#[test]
fn dump_rpe_prints_the_table() {
    let o = rowseg(&["stats", "--dump-rpe", "linear", "4", "2", "standard"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    let first: Vec<f64> = csv.lines().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(first, [0.0, 0.25, 0.5, 0.75]);
    assert_eq!(code(&rowseg(&["stats", "--dump-rpe", "linear", "four", "2", "standard"])), 1);
}

#[test]
fn profile_compares_against_no_rpem() {
    let o = rowseg(&["profile", "--compare-no-rpem"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("without RPEM") && text.contains("with RPEM"), "{text}");
}

#[test]
fn train_eval_infer_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let manifest = synth(&data, "2");
    let ckpt = dir.path().join("m.ckpt");
    let log = dir.path().join("log.csv");
    let (ckpt_s, log_s) = (ckpt.to_str().unwrap(), log.to_str().unwrap());
    let o = rowseg(&["train", "--manifest", &manifest, "--iters", "2", "--batch-size", "1", "--crop", "64x96", "--checkpoint", ckpt_s, "--log", log_s]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 3);

    let o = rowseg(&["train", "--manifest", &manifest, "--resume", ckpt_s, "--lr", "0.1"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    let o = rowseg(&["eval", "--checkpoint", ckpt_s, "--manifest", &manifest, "--csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().contains("sky"));

    let o = rowseg(&["eval", "--checkpoint", ckpt_s, "--manifest", &manifest, "--classes", "sea,sky"]);
    assert_eq!(code(&o), 2);
    let msg = stderr(&o);
    assert!(msg.contains('2') && msg.contains('6'), "{msg}");

    let image = data.join("scene_0000.ppm");
    let o = rowseg(&["infer", "--checkpoint", ckpt_s, "--image", image.to_str().unwrap(), "--class", "sky"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let labels = std::fs::read(data.join("scene_0000_labels.pgm")).unwrap();
    assert!(labels.starts_with(b"P5"));
    assert!(std::fs::read(data.join("scene_0000_sky.ppm")).unwrap().starts_with(b"P6"));

    let mut bytes = std::fs::read(&ckpt).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, bytes).unwrap();
    let o = rowseg(&["eval", "--checkpoint", bad.to_str().unwrap(), "--manifest", &manifest]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).to_lowercase().contains("checksum"), "{}", stderr(&o));
}

#[test]
fn missing_files_exit_two() {
    let o = rowseg(&["eval", "--checkpoint", "/nonexistent/m.ckpt", "--manifest", "/nonexistent/m.txt"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn tiny_gradcheck_passes() {
    let o = rowseg(&["gradcheck", "--tiny"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}
