use std::path::Path;
use std::process::{Command, Output};

const SMALL: [&str; 8] = ["--set", "train_videos=3", "--set", "test_videos=2", "--set", "video_length=11", "--set", "batch_size=1"];

fn midgap(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_midgap"))
        .args(SMALL)
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = midgap(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn gen_data_writes_frame_folders() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data"]);
    assert!(dir.path().join("train/manifest.txt").exists());
    assert!(dir.path().join("test/clip_0001/frame_000011.pgm").exists());
    assert!(dir.path().join("config.cfg").exists());
}

#[test]
fn train_eval_and_sweeps_from_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let stdout = ok(&run, &["--variant", "tai", "train", "--iters", "2"]);
    assert!(stdout.contains("trained tai for 2 iterations"), "{stdout}");
    let ckpt = run.join("checkpoint.bin");
    let ckpt = ckpt.to_str().unwrap();
    assert!(run.join("trace.csv").exists());

    let resumed = dir.path().join("resumed");
    let stdout = ok(&resumed, &["--variant", "tai", "train", "--checkpoint", ckpt, "--iters", "3"]);
    assert!(stdout.contains("for 3 iterations"), "{stdout}");

    let eval = dir.path().join("eval");
    let table = ok(&eval, &["--variant", "tai", "eval", "--checkpoint", ckpt]);
    assert!(table.contains("tai"), "{table}");
    for file in ["metrics.csv", "ssim.svg", "psnr.svg", "provenance.txt", "strip.pgm"] {
        assert!(eval.join(file).exists(), "{file}");
    }
    let csv = std::fs::read_to_string(eval.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("model,t,psnr,ssim,count"));
    assert_eq!(csv.lines().count(), 1 + 5);

    let sweep = dir.path().join("ctx");
    ok(&sweep, &["--variant", "tai", "--set", "video_length=15", "sweep-context", "--checkpoint", ckpt]);
    let csv = std::fs::read_to_string(sweep.join("metrics.csv")).unwrap();
    assert!(csv.contains("tai@context2") && csv.contains("tai@context5"), "{csv}");

    let middle = dir.path().join("mid");
    ok(&middle, &["--variant", "tai", "sweep-middle", "--checkpoint", ckpt, "--middle-frames", "3,4"]);
    let csv = std::fs::read_to_string(middle.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 + 4);

    let merged = dir.path().join("merged");
    let eval_csv = eval.join("metrics.csv");
    let mid_csv = middle.join("metrics.csv");
    ok(&merged, &["report", eval_csv.to_str().unwrap(), mid_csv.to_str().unwrap()]);
    let svg = std::fs::read_to_string(merged.join("ssim.svg")).unwrap();
    assert!(svg.contains("tai@m4"));
}

#[test]
fn handcrafted_eval_needs_no_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let table = ok(dir.path(), &["--variant", "handcrafted:tw_pf", "eval", "--middle-frames", "3"]);
    assert!(table.contains("tw_pf"), "{table}");
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["--variant", "tai", "eval"],
        vec!["--set", "no_such_key=1", "gen-data"],
        vec!["--set", "p", "gen-data"],
        vec!["--variant", "sideways", "gen-data"],
        vec!["--variant", "sa_pf", "train"],
    ] {
        let o = midgap(dir.path(), &args);
        assert!(!o.status.success(), "{args:?} should fail");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn config_file_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "variant = handcrafted:repeat_p\ntest_middle = 2\n").unwrap();
    let out = dir.path().join("o");
    ok(&out, &["--config", cfg.to_str().unwrap(), "eval"]);
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("repeat_p,4,"));
    assert_eq!(csv.lines().count(), 3);
}
