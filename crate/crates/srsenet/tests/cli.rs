//! End-to-end tests of the `srse` binary: flag contracts, exit codes, config
//! merging and cross-subcommand pipelines.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use srsenet::checkpoint::load_checkpoint;
use srsenet::imaging::{load_png, save_png, ColorSpace, Image};

fn srse() -> Command {
    Command::new(env!("CARGO_BIN_EXE_srse"))
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn gray_png(path: &Path, w: usize, h: usize) {
    let data: Vec<u8> = (0..w * h).map(|i| ((i * 31 + i / w * 17) % 256) as u8).collect();
    save_png(&Image::new(w, h, 1, ColorSpace::Luma, data).unwrap(), path).unwrap();
}

fn rgb_png(path: &Path, w: usize, h: usize) {
    let data: Vec<u8> = (0..w * h * 3).map(|i| ((i * 23) % 256) as u8).collect();
    save_png(&Image::new(w, h, 3, ColorSpace::Srgb, data).unwrap(), path).unwrap();
}

#[test]
fn degrade_produces_quarter_extents() {
    let dir = tempfile::tempdir().unwrap();
    let hr = dir.path().join("hr");
    let out = dir.path().join("lr");
    fs::create_dir(&hr).unwrap();
    gray_png(&hr.join("img.png"), 100, 100);
    let result = srse().args(["degrade", "--scale", "4", "--hr"]).arg(&hr).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let lr = load_png(&out.join("img.png")).unwrap();
    assert_eq!((lr.width, lr.height), (25, 25));

    // rerun without --force collides
    let again = srse().args(["degrade", "--scale", "4", "--hr"]).arg(&hr).arg("--out").arg(&out).output().unwrap();
    assert_ne!(code(&again), 0);
    let forced = srse().args(["degrade", "--scale", "4", "--force", "--hr"]).arg(&hr).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&forced), 0);
}

#[test]
fn degrade_empty_dir_warns_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let hr = dir.path().join("hr");
    fs::create_dir(&hr).unwrap();
    let result = srse()
        .args(["degrade", "--scale", "2", "--hr"])
        .arg(&hr)
        .arg("--out")
        .arg(dir.path().join("lr"))
        .output()
        .unwrap();
    assert_eq!(code(&result), 0);
    assert!(stderr(&result).contains("warning"));
}

#[test]
fn unsupported_scale_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let result = srse()
        .args(["degrade", "--scale", "3", "--hr"])
        .arg(dir.path())
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&result), 2);
}

#[test]
fn pack_patch_grid_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let hr = dir.path().join("hr");
    fs::create_dir(&hr).unwrap();
    gray_png(&hr.join("a.png"), 192, 192);
    let pack_path = dir.path().join("d.srdp");
    let result = srse()
        .args(["pack", "--scale", "8", "--hr"])
        .arg(&hr)
        .arg("--out")
        .arg(&pack_path)
        .output()
        .unwrap();
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    assert!(stdout(&result).contains("packed 4 pairs"));
    let pack = srsenet::imaging::read_dataset(&pack_path).unwrap();
    assert_eq!(pack.pairs.len(), 4);
    assert_eq!(pack.pairs[0].lr.width, 12);

    // patch not divisible by scale
    let bad = srse()
        .args(["pack", "--scale", "4", "--patch", "50", "--hr"])
        .arg(&hr)
        .arg("--out")
        .arg(dir.path().join("bad.srdp"))
        .output()
        .unwrap();
    assert_ne!(code(&bad), 0);
}

fn make_pack(dir: &Path) -> std::path::PathBuf {
    let hr = dir.join("hr");
    fs::create_dir_all(&hr).unwrap();
    gray_png(&hr.join("a.png"), 48, 48);
    let pack = dir.join("train.srdp");
    let result = srse()
        .args(["pack", "--scale", "2", "--patch", "16", "--hr"])
        .arg(&hr)
        .arg("--out")
        .arg(&pack)
        .output()
        .unwrap();
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    pack
}

fn tiny_train(pack: &Path, extra: &[&str], ckpt: &Path, curve: Option<&Path>) -> Output {
    let mut cmd = srse();
    cmd.args([
        "train", "--iters", "4", "--batch", "2", "--depth", "1", "--width", "4", "--reduction",
        "2", "--eval-interval", "2",
    ]);
    cmd.arg("--data").arg(pack).arg("--ckpt").arg(ckpt);
    if let Some(c) = curve {
        cmd.arg("--curve").arg(c);
    }
    cmd.args(extra);
    cmd.output().unwrap()
}

#[test]
fn train_zero_iterations_saves_the_init() {
    let dir = tempfile::tempdir().unwrap();
    let pack = make_pack(dir.path());
    let ckpt = dir.path().join("init.srse");
    let result = srse()
        .args(["train", "--iters", "0", "--depth", "1", "--width", "4", "--reduction", "2"])
        .arg("--data")
        .arg(&pack)
        .arg("--ckpt")
        .arg(&ckpt)
        .output()
        .unwrap();
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let (net, _, iteration) = load_checkpoint::<f32>(&ckpt).unwrap();
    assert_eq!(iteration, 0);
    let reference = srsenet::model::build_srsenet::<f32>(&net.config, 0).unwrap();
    assert_eq!(net.head.weight.data(), reference.head.weight.data());
}

#[test]
fn no_se_checkpoint_has_no_fc_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let pack = make_pack(dir.path());
    let ckpt = dir.path().join("ablated.srse");
    let result = tiny_train(&pack, &["--no-se"], &ckpt, None);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let (net, _, _) = load_checkpoint::<f32>(&ckpt).unwrap();
    assert!(net.param_entries().iter().all(|(name, _)| !name.contains("fc")));
}

#[test]
fn same_seed_gives_byte_identical_curves() {
    let dir = tempfile::tempdir().unwrap();
    let pack = make_pack(dir.path());
    let (c1, c2) = (dir.path().join("c1.csv"), dir.path().join("c2.csv"));
    let r1 = tiny_train(&pack, &["--seed", "11"], &dir.path().join("k1.srse"), Some(&c1));
    let r2 = tiny_train(&pack, &["--seed", "11"], &dir.path().join("k2.srse"), Some(&c2));
    assert_eq!(code(&r1), 0, "{}", stderr(&r1));
    assert_eq!(code(&r2), 0, "{}", stderr(&r2));
    assert_eq!(fs::read(&c1).unwrap(), fs::read(&c2).unwrap());
    assert!(!fs::read(&c1).unwrap().is_empty());
}

#[test]
fn train_scale_flag_must_match_pack() {
    let dir = tempfile::tempdir().unwrap();
    let pack = make_pack(dir.path());
    let result = tiny_train(&pack, &["--scale", "4"], &dir.path().join("k.srse"), None);
    assert_eq!(code(&result), 3);
    assert!(stderr(&result).contains("scale"));
}

#[test]
fn sr_color_input_with_luma_model() {
    let dir = tempfile::tempdir().unwrap();
    let pack = make_pack(dir.path());
    let ckpt = dir.path().join("m.srse");
    let result = tiny_train(&pack, &[], &ckpt, None);
    assert_eq!(code(&result), 0, "{}", stderr(&result));

    let input = dir.path().join("color.png");
    rgb_png(&input, 20, 14);
    let out = dir.path().join("sr.png");
    let sr = srse().arg("sr").arg("--ckpt").arg(&ckpt).arg("--in").arg(&input).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&sr), 0, "{}", stderr(&sr));
    let img = load_png(&out).unwrap();
    assert_eq!((img.width, img.height, img.channels), (40, 28, 3));
}

#[test]
fn sr_channel_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    // RGB-mode checkpoint, grayscale input
    let config = srsenet::model::SrSeNetConfig {
        depth: 1,
        width: 4,
        upscale: 2,
        se_enabled: true,
        input_channels: 3,
        reduction: 2,
        leaky_slope: 0.2,
    };
    let net = srsenet::model::build_srsenet::<f32>(&config, 0).unwrap();
    let ckpt = dir.path().join("rgb.srse");
    srsenet::checkpoint::save_checkpoint(&net, None, 0, &ckpt).unwrap();
    let input = dir.path().join("gray.png");
    gray_png(&input, 16, 16);
    let result = srse()
        .arg("sr")
        .arg("--ckpt")
        .arg(&ckpt)
        .arg("--in")
        .arg(&input)
        .arg("--out")
        .arg(dir.path().join("o.png"))
        .output()
        .unwrap();
    assert_eq!(code(&result), 3);
    assert!(stderr(&result).contains("channel"));
}

#[test]
fn eval_self_comparison_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let hr = dir.path().join("hr");
    fs::create_dir(&hr).unwrap();
    gray_png(&hr.join("one.png"), 64, 64);
    let result = srse()
        .args(["eval", "--scale", "2", "--hr"])
        .arg(&hr)
        .arg("--sr")
        .arg(&hr)
        .output()
        .unwrap();
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let text = stdout(&result);
    assert!(text.contains("one,inf,1.00000"), "{text}");
}

#[test]
fn eval_missing_stem_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let hr = dir.path().join("hr");
    let sr = dir.path().join("sr");
    fs::create_dir(&hr).unwrap();
    fs::create_dir(&sr).unwrap();
    gray_png(&hr.join("one.png"), 32, 32);
    let result = srse()
        .args(["eval", "--scale", "2", "--hr"])
        .arg(&hr)
        .arg("--sr")
        .arg(&sr)
        .output()
        .unwrap();
    assert_eq!(code(&result), 3);
    assert!(stderr(&result).contains("one"));
}

#[test]
fn eval_bicubic_baseline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let hr = dir.path().join("hr");
    fs::create_dir(&hr).unwrap();
    gray_png(&hr.join("img.png"), 64, 64);
    let result = srse()
        .args(["eval", "--scale", "2", "--bicubic", "--hr"])
        .arg(&hr)
        .arg("--out")
        .arg(dir.path().join("report.csv"))
        .output()
        .unwrap();
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.contains("# scale=2"));
    assert!(csv.lines().any(|l| l.starts_with("mean,")));
}

#[test]
fn gradcheck_default_passes_and_injection_fails() {
    let ok = srse().arg("gradcheck").output().unwrap();
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert!(stdout(&ok).contains("all 14 gradient checks passed"));

    let bad = srse().args(["gradcheck", "--inject-error", "dense"]).output().unwrap();
    assert_eq!(code(&bad), 4);
    assert!(stderr(&bad).contains("dense"));
}

#[test]
fn gradcheck_report_is_seed_stable() {
    let a = srse().args(["gradcheck", "--seed", "5"]).output().unwrap();
    let b = srse().args(["gradcheck", "--seed", "5"]).output().unwrap();
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn config_file_merges_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let pack = make_pack(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "iters=4\nbatch=2\ndepth=1\nwidth=4\nreduction=2\nseed=3\n# comment\n").unwrap();
    let ckpt = dir.path().join("k.srse");
    // --seed on the command line must win over seed=3 in the file
    let result = srse()
        .args(["train", "--seed", "8", "--eval-interval", "2"])
        .arg("--config")
        .arg(&cfg)
        .arg("--data")
        .arg(&pack)
        .arg("--ckpt")
        .arg(&ckpt)
        .output()
        .unwrap();
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let echo = stdout(&result);
    assert!(echo.contains("seed=8"), "{echo}");
    assert!(echo.contains("iters=4"), "{echo}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "nonsense=1\n").unwrap();
    let result = srse().args(["gradcheck", "--config"]).arg(&cfg).output().unwrap();
    assert_ne!(code(&result), 0);
    assert!(stderr(&result).contains("nonsense"));
}
