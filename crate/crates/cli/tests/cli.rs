use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use spectail::harmonics::pink_noise;
use spectail::synth::{quantize_8bit, write_gray_png};

fn spectail(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spectail"))
        .args(args)
        .env("SPECTAIL_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pink_png(dir: &Path, name: &str, size: usize, seed: u64) -> PathBuf {
    let path = dir.join(name);
    write_gray_png(&quantize_8bit(&pink_noise(size, seed).unwrap()), &path).unwrap();
    path
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn synth(out: &Path, extra: &[&str]) {
    let mut args = vec!["synth", s(out)];
    args.extend_from_slice(extra);
    let o = spectail(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

/// Runs `analyze` on a directory produced by `synth` and returns the corpus JSON.
fn analyze(corpus: &Path, out: &Path) -> Value {
    let o = spectail(&["analyze", s(&corpus.join("manifest.csv")), s(out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    read_json(&out.join("corpus.json"))
}

fn mean_delta(report: &Value, label: &str) -> f64 {
    report[label]["delta"]["mean"].as_f64().unwrap()
}

#[test]
fn spectrum_csv_contract() {
    let dir = tempfile::tempdir().unwrap();
    let img = pink_png(dir.path(), "p.png", 256, 1);
    let o = spectail(&["spectrum", s(&img), "--bins", "128", "--size", "256"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rho,log10_power,count");
    assert_eq!(lines.len(), 129);
    let rho = |l: &str| l.split(',').next().unwrap().parse::<f64>().unwrap();
    assert!(rho(lines[1]) > 0.0);
    assert!(rho(lines[128]) <= 1.0);

    let o = spectail(&["spectrum", s(&img), "--bins", "32", "--channel", "r"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 33);
}

#[test]
fn spectrum_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.png");
    fs::write(&bad, b"definitely not a png").unwrap();
    let o = spectail(&["spectrum", s(&bad)]);
    assert_eq!(code(&o), 2);
    assert!(o.stdout.is_empty());
    assert!(!o.stderr.is_empty());

    let small = pink_png(dir.path(), "small.png", 64, 2);
    assert_eq!(code(&spectail(&["spectrum", s(&small)])), 3);
    assert_eq!(code(&spectail(&["spectrum", s(&small), "--size", "64", "--bins", "8"])), 4);
    assert_eq!(code(&spectail(&["spectrum", s(&dir.path().join("missing.png"))])), 2);
    assert_eq!(code(&spectail(&["spectrum", s(&small), "--channel", "q"])), 4);
    assert_eq!(code(&spectail(&["--help"])), 0);
}

#[test]
fn analyze_relu_corpus_is_deterministic_and_shows_the_gap() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    synth(&corpus, &["--count", "10", "--seed", "3"]);
    let out = dir.path().join("out");
    let report = analyze(&corpus, &out);
    assert_eq!(report["images"], 20);
    assert_eq!(report["skipped"], 0);
    let gap = report["delta_gap"].as_f64().unwrap();
    assert!(gap >= 0.03, "gap {gap}");
    assert!((gap - (mean_delta(&report, "fake") - mean_delta(&report, "real"))).abs() < 1e-12);

    let files = [
        "images.csv",
        "corpus.json",
        "mean_spectrum_real.csv",
        "mean_spectrum_fake.csv",
        "tail_curve_real.csv",
        "tail_curve_fake.csv",
    ];
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(out.join(f)).unwrap()).collect();
    assert_eq!(fs::read_dir(out.join("cache")).unwrap().count(), 20);
    // second run hits the cache; a third skips it
    analyze(&corpus, &out);
    let o = spectail(&["analyze", s(&corpus.join("manifest.csv")), s(&out), "--no-cache"]);
    assert_eq!(code(&o), 0);
    for (f, bytes) in files.iter().zip(&first) {
        assert_eq!(&fs::read(out.join(f)).unwrap(), bytes, "{f} changed");
    }

    let images = fs::read_to_string(out.join("images.csv")).unwrap();
    let paths: Vec<&str> = images.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    let mut sorted = paths.clone();
    sorted.sort_unstable();
    assert_eq!(paths, sorted);
    let tail = fs::read_to_string(out.join("tail_curve_fake.csv")).unwrap();
    let first_rho: f64 = tail.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(first_rho >= 0.7);
}

#[test]
fn analyze_records_row_errors() {
    let dir = tempfile::tempdir().unwrap();
    pink_png(dir.path(), "a.png", 256, 4);
    fs::write(dir.path().join("b.png"), b"junk").unwrap();
    let manifest = dir.path().join("m.csv");
    fs::write(&manifest, "path,label\na.png,real\nb.png,fake\n").unwrap();
    let out = dir.path().join("out");
    let o = spectail(&["analyze", s(&manifest), s(&out)]);
    assert_eq!(code(&o), 0);
    let report = read_json(&out.join("corpus.json"));
    assert_eq!(report["skipped"], 1);
    assert_eq!(report["errors"][0]["path"], "b.png");
    assert!(report["fake"].is_null());

    fs::write(&manifest, "b.png,fake\n").unwrap();
    assert_eq!(code(&spectail(&["analyze", s(&manifest), s(&out)])), 2);
    fs::write(&manifest, "path,label,tag\n").unwrap();
    assert_eq!(code(&spectail(&["analyze", s(&manifest), s(&out)])), 4);
    assert_eq!(code(&spectail(&["analyze", s(&dir.path().join("none.csv")), s(&out)])), 2);
}

#[test]
fn theorems_command() {
    let a = spectail(&["theorems"]);
    assert_eq!(code(&a), 0);
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    assert!(text.ends_with("overall: PASS\n"), "{text}");
    let b = spectail(&["theorems"]);
    assert_eq!(a.stdout, b.stdout);
    let other = spectail(&["theorems", "--seed", "5", "--trials", "20", "--max-depth", "2"]);
    assert_eq!(code(&other), 0);
    assert_ne!(other.stdout, a.stdout);
    assert_eq!(code(&spectail(&["theorems", "--sabotage", "--trials", "10"])), 1);
    assert_eq!(code(&spectail(&["theorems", "--max-depth", "0"])), 4);
}

#[test]
fn synth_activation_and_jpeg_experiments() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&spectail(&["synth", s(&dir.path().join("x")), "--count", "0"])), 4);
    assert_eq!(code(&spectail(&["synth", s(&dir.path().join("x")), "--activation", "tanh"])), 4);

    let id = dir.path().join("identity");
    synth(&id, &["--activation", "identity", "--seed", "7"]);
    let manifest = fs::read_to_string(id.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 33);
    assert!(manifest.contains("fake_0015.png,fake,identity-d4"));
    let r = analyze(&id, &dir.path().join("identity_out"));
    let gap = mean_delta(&r, "fake") - mean_delta(&r, "real");
    assert!(gap.abs() < 0.02, "identity gap {gap}");

    let jpeg = dir.path().join("jpeg");
    synth(&jpeg, &["--activation", "relu", "--jpeg-quality", "60", "--seed", "8"]);
    let r = analyze(&jpeg, &dir.path().join("jpeg_out"));
    assert!(mean_delta(&r, "fake") >= 0.01, "jpeg fake delta {}", mean_delta(&r, "fake"));
}

#[test]
fn train_and_eval_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let (tr, te) = (dir.path().join("train"), dir.path().join("test"));
    synth(&tr, &["--count", "100", "--seed", "11"]);
    synth(&te, &["--count", "50", "--seed", "12"]);
    let model = dir.path().join("model.json");
    let log = dir.path().join("log.csv");
    let metrics = dir.path().join("metrics.json");
    let o = spectail(&[
        "train",
        "--train",
        s(&tr.join("manifest.csv")),
        "--eval",
        s(&te.join("manifest.csv")),
        "--model",
        s(&model),
        "--log",
        s(&log),
        "--metrics",
        s(&metrics),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&metrics);
    assert!(m["balanced_accuracy"].as_f64().unwrap() >= 0.9, "{m}");
    let log_text = fs::read_to_string(&log).unwrap();
    assert!(log_text.starts_with("step,w_aux,L_cls,L_con,L_freq,L_align,L_tail,total,skipped_terms\n"));
    assert_eq!(log_text.lines().count(), 6001);

    let eval = |model: &Path| {
        let o = spectail(&["eval", "--model", s(model), "--manifest", s(&te.join("manifest.csv"))]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        o.stdout
    };
    let direct = eval(&model);
    assert_eq!(direct, fs::read(&metrics).unwrap());

    let mut json = read_json(&model);
    for name in ["f_psi", "t_omega", "t_out", "c_f"] {
        for part in ["weight", "bias"] {
            let arr = json["model"]["params"][name][part].as_array_mut().unwrap();
            arr.iter_mut().for_each(|v| *v = Value::from(0.0));
        }
    }
    let zeroed = dir.path().join("zeroed.json");
    fs::write(&zeroed, serde_json::to_string(&json).unwrap()).unwrap();
    assert_eq!(eval(&zeroed), direct);

    let missing = dir.path().join("nope.json");
    let o = spectail(&["eval", "--model", s(&missing), "--manifest", s(&te.join("manifest.csv"))]);
    assert_eq!(code(&o), 2);
    fs::write(&zeroed, "{}").unwrap();
    let o = spectail(&["eval", "--model", s(&zeroed), "--manifest", s(&te.join("manifest.csv"))]);
    assert_eq!(code(&o), 4);
}

#[test]
fn thread_variable_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_spectail"))
        .args(["theorems", "--trials", "1"])
        .env("SPECTAIL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 4);
}
