//! End-to-end runs of the `reverbkit` binary.

use std::path::Path;
use std::process::{Command, Output};

use reverbkit::dsp::{read_wav_mono, write_wav, AudioBuffer, WavFormat};
use reverbkit::irsynth::{shaped_noise_ir, ShapedNoiseParams};
use reverbkit::preset::Preset;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reverbkit"))
        .args(args)
        .env_remove("REVERBKIT_PRESET")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["dataset", "--n", "0", "--out", "x"])), 1);
    assert_eq!(code(&run(&["--preset", "huge", "analyze", "x.wav"])), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_reverbkit"))
        .args(["analyze", "x.wav"])
        .env("REVERBKIT_PRESET", "huge")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let out = run(&["train", "--corpus", path(&missing), "--out", path(&dir.path().join("t"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("manifest.tsv"), "{}", stderr(&out));
    assert_eq!(code(&run(&["analyze", path(&missing)])), 2);
}

#[test]
fn dataset_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(code(&run(&["dataset", "--n", "6", "--seed", "7", "--out", path(d)])), 0);
    }
    let manifest = std::fs::read_to_string(a.join("manifest.tsv")).unwrap();
    assert_eq!(manifest, std::fs::read_to_string(b.join("manifest.tsv")).unwrap());
    let files: Vec<&str> = manifest
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("id\t"))
        .flat_map(|l| l.split('\t').skip(6))
        .collect();
    assert_eq!(files.len(), 18);
    for f in files {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn analyze_reports_shaped_noise_t60() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("ir.wav");
    let ir = shaped_noise_ir(&ShapedNoiseParams::broadband(0.5, 2.0, 22050, 1)).unwrap();
    write_wav(&wav, &ir, WavFormat::Float32).unwrap();
    let out = run(&["analyze", path(&wav)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let full: f64 = text.lines().find_map(|l| l.strip_prefix("fullband ")).unwrap().parse().unwrap();
    assert!((full - 0.5).abs() < 0.05, "{full}");
    assert_eq!(text.lines().count(), 2);
    let octave = String::from_utf8(run(&["analyze", path(&wav), "--bands", "octave"]).stdout).unwrap();
    assert!(octave.lines().any(|l| l.starts_with("1000 ")), "{octave}");
    assert_eq!(octave.lines().count(), 9);
}

#[test]
fn convolve_with_delta_passes_dry_through() {
    let dir = tempfile::tempdir().unwrap();
    let dry: Vec<f32> = (0..3000).map(|i| ((i as f32) * 0.01).sin() * 0.5).collect();
    let mut delta = vec![0.0f32; 64];
    delta[0] = 1.0;
    write_wav(dir.path().join("dry.wav"), &AudioBuffer::new(dry.clone(), 16000).unwrap(), WavFormat::Float32).unwrap();
    write_wav(dir.path().join("ir.wav"), &AudioBuffer::new(delta, 16000).unwrap(), WavFormat::Float32).unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let out = run(&["convolve", &p("dry.wav"), &p("ir.wav"), &p("wet.wav"), "--normalize", "none", "--block-size", "256"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let wet = read_wav_mono(p("wet.wav")).unwrap();
    for (w, d) in wet.samples().iter().zip(&dry) {
        assert!((w - d).abs() < 1e-6);
    }
    assert!(wet.samples()[dry.len()..].iter().all(|v| v.abs() < 1e-6));
    assert_eq!(code(&run(&["convolve", &p("dry.wav"), &p("ir.wav"), &p("w2.wav"), "--block-size", "100"])), 2);
}

/// Corpus, a short training run, inference and every evaluation mode.
#[test]
fn train_infer_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    assert_eq!(code(&run(&["dataset", "--n", "40", "--seed", "3", "--out", &d("corpus")])), 0);

    let out = run(&["train", "--corpus", &d("corpus"), "--out", &d("runs"), "--epochs", "2", "--seeds", "5,6"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let metrics = std::fs::read_to_string(d("runs/main-seed5.metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3, "header + one row per epoch");
    assert!(Path::new(&d("runs/main-seed6.ckpt")).exists());

    let out = run(&["train", "--corpus", &d("corpus"), "--out", &d("runs"), "--epochs", "1", "--ablation", "no_t60p"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let config = std::fs::read_to_string(d("runs/no_t60p-seed1.toml")).unwrap();
    assert!(config.contains("lambda_t60 = 0.0"), "{config}");
    let paper = Command::new(env!("CARGO_BIN_EXE_reverbkit"))
        .args(["train", "--corpus", &d("corpus"), "--out", &d("runs"), "--epochs", "1"])
        .env("REVERBKIT_PRESET", "paper")
        .output()
        .unwrap();
    assert_eq!(code(&paper), 2, "preset mismatch with the corpus");

    let manifest = std::fs::read_to_string(d("corpus/manifest.tsv")).unwrap();
    let row: Vec<&str> = manifest.lines().find(|l| l.contains("\ttest\t")).unwrap().split('\t').collect();
    let (rgb, depth) = (d(&format!("corpus/{}", row[7])), d(&format!("corpus/{}", row[8])));
    let ckpt = d("runs/main-seed5.ckpt");
    let infer = |out: &str, extra: &[&str]| {
        let mut args = vec!["infer", "--checkpoint", &ckpt, "--image", &rgb, "--depth", &depth, "--seed", "4", "--out", out];
        args.extend_from_slice(extra);
        run(&args)
    };
    assert_eq!(code(&infer(&d("a.wav"), &["--spectrogram", &d("a.rksg")])), 0);
    assert_eq!(code(&infer(&d("b.wav"), &[])), 0);
    assert_eq!(std::fs::read(d("a.wav")).unwrap(), std::fs::read(d("b.wav")).unwrap());
    let ir = read_wav_mono(d("a.wav")).unwrap();
    assert_eq!(ir.len(), Preset::toy().stft.num_samples);
    assert!(Path::new(&d("a.rksg")).exists());
    assert_eq!(code(&infer(&d("c.wav"), &["--depth-override", "0.0"])), 0);
    assert_eq!(code(&infer(&d("c.wav"), &["--depth-override", "1.5"])), 1);

    let corpus = d("corpus");
    let eval = |mode: &str, out: &str, ckpts: &[&str]| {
        let mut args = vec!["eval", "--corpus", &corpus, "--mode", mode, "--out", out];
        for c in ckpts {
            args.extend_from_slice(&["--checkpoint", c]);
        }
        run(&args)
    };
    let out = eval("single", &d("ev"), &[&ckpt]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for suffix in ["tsv", "summary.txt", "hist.csv", "hist.png"] {
        assert!(Path::new(&d(&format!("ev/main-seed5.{suffix}"))).exists(), "{suffix}");
    }
    let first = std::fs::read(d("ev/main-seed5.tsv")).unwrap();
    assert_eq!(code(&eval("single", &d("ev2"), &[&ckpt])), 0);
    assert_eq!(first, std::fs::read(d("ev2/main-seed5.tsv")).unwrap());

    assert_eq!(code(&eval("ablation", &d("ab"), &[&ckpt])), 1);
    let out = eval("ablation", &d("ab"), &[&ckpt, &d("runs/main-seed6.ckpt"), &d("runs/no_t60p-seed1.ckpt")]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = std::fs::read_to_string(d("ab/ordering.tsv")).unwrap();
    assert_eq!(table.lines().count(), 4);

    let out = eval("depth", &d("dp"), &[&ckpt]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = std::fs::read_to_string(d("dp/depth-main-seed5.summary.txt")).unwrap();
    for label in ["scene", "zero", "max"] {
        assert!(summary.lines().any(|l| l.starts_with(label)), "{summary}");
    }
    let out = eval("nn", &d("nn"), &[&ckpt]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(Path::new(&d("nn/nn-seed5.tsv")).exists());
}

#[test]
fn bench_prints_a_row_per_pair() {
    let out = run(&["bench", "--ir-len", "1024,2048", "--block", "256", "--seconds", "0.1"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);
}
