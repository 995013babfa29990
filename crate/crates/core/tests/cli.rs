use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dfdnet::eval::Report;

fn dfdnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dfdnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run dfdnet")
}

fn ok(args: &[&str]) {
    let out = dfdnet(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for dir in fs::read_dir(root).unwrap() {
        for f in fs::read_dir(dir.unwrap().path()).unwrap() {
            out.push(f.unwrap().path().strip_prefix(root).unwrap().to_path_buf());
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_layout_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["synth", "--n", "1", "--out", s(&a), "--seed", "5", "--size", "32"]);
    let listed = files(&a);
    let mut want: Vec<PathBuf> = ["flare", "gt", "input", "mask_glare", "mask_light", "mask_streak"]
        .iter()
        .map(|d| PathBuf::from(d).join("000000.png"))
        .chain([PathBuf::from("meta/000000.json")])
        .collect();
    want.sort();
    assert_eq!(listed, want);

    ok(&["synth", "--n", "1", "--out", s(&b), "--seed", "5", "--size", "32"]);
    for f in &listed {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f:?}");
    }
}

#[test]
fn train_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--n", "2", "--out", s(&data), "--seed", "1", "--size", "18"]);
    let cfg = tmp.path().join("train.cfg");
    fs::write(&cfg, "crop = 16\nbase_channels = 4\ntotal_iters = 2\nproj_dim = 8\n").unwrap();
    let run = tmp.path().join("run");
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&run)]);

    let log = fs::read_to_string(run.join("loss_log.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "iter,total,perceptual,frequency,ldg,lr");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,"));

    let ev = tmp.path().join("eval");
    ok(&["eval", "--ckpt", s(&run.join("final.ckpt")), "--data", s(&data), "--out", s(&ev), "--save-images"]);
    let report: Report = serde_json::from_str(&fs::read_to_string(ev.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.count, 2);
    assert_eq!(report.padded, 2);
    for img in &report.images {
        assert_eq!(img.padded_to, Some([20, 20]));
        assert!((img.full_mask_psnr - img.psnr).abs() < 1e-9);
    }
    let mean = report.images.iter().map(|r| r.psnr).sum::<f64>() / 2.0;
    assert!((report.mean.psnr - mean).abs() < 1e-9);
    assert!(ev.join("restored/000001.png").is_file());
}

#[test]
fn spectrum_writes_grayscale_png_of_same_size() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--n", "1", "--out", s(&data), "--seed", "2", "--size", "24"]);
    let out = tmp.path().join("spec.png");
    ok(&["spectrum", "--in", s(&data.join("input/000000.png")), "--out", s(&out)]);
    let img = image::open(&out).unwrap();
    assert_eq!((img.width(), img.height()), (24, 24));
    assert_eq!(img.color(), image::ColorType::L8);

    let flat = tmp.path().join("flat.png");
    dfdnet::imageio::save_rgb(&flat, &dfdnet::Tensor::full(&[3, 8, 8], 0.4)).unwrap();
    let flat_out = tmp.path().join("flat_spec.png");
    ok(&["spectrum", "--in", s(&flat), "--out", s(&flat_out)]);
    let spec = image::open(&flat_out).unwrap().to_luma8();
    let bright: Vec<_> = spec.enumerate_pixels().filter(|p| p.2[0] > 0).map(|p| (p.0, p.1)).collect();
    assert_eq!(bright, [(4, 4)]);
}

#[test]
fn errors_exit_nonzero_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "learning_rate = 1e-3\n").unwrap();
    let out = dfdnet(&["train", "--config", s(&cfg), "--data", s(tmp.path()), "--out", s(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));

    let out = dfdnet(&["spectrum", "--in", "/no/such/image.png", "--out", s(&tmp.path().join("x.png"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/image.png"));

    let out = dfdnet(&["eval", "--ckpt", s(&cfg), "--data", s(tmp.path()), "--out", s(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}
