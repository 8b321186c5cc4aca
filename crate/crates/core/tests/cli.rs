use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mgcn::data::MotionSequence;
use mgcn::model::read_checkpoint;
use mgcn::train::{evaluate, EvalReport, Pipeline, TrainConfig};

const TINY: &str = r#"
epochs = 2
batch_size = 4
lr = 0.001
n_history = 6
n_future = 4

[model]
hidden = 8
stm_hidden = 4
csb_hidden = 8
csb_proj = 4
n_sim = 1
gcn_blocks = 1
"#;

fn mgcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgcn"))
        .args(args)
        .env_remove("MGCN_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    config: PathBuf,
}

fn fixture(skeleton: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("data");
    let o = mgcn(&[
        "synth",
        "--skeleton",
        skeleton,
        "--frames",
        "14",
        "--count",
        "5",
        "--correlated",
        "--out",
        s(&data),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let config = root.join("tiny.toml");
    std::fs::write(&config, TINY).unwrap();
    Fixture {
        _dir: dir,
        root,
        data,
        config,
    }
}

fn train_tiny(f: &Fixture, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--skeleton",
        "stick6",
        "--data",
        s(&f.data),
        "--config",
        s(&f.config),
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    mgcn(&args)
}

#[test]
fn train_eval_predict_roundtrip() {
    let f = fixture("stick6");
    let out = f.root.join("run");
    let o = train_tiny(&f, &out, &["--val-data", s(&f.data)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in [
        "manifest.json",
        "checkpoint.mgcn",
        "loss_curve.tsv",
        "train_report.json",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let curve = std::fs::read_to_string(out.join("loss_curve.tsv")).unwrap();
    assert_eq!(curve.lines().count(), 3);
    assert!(curve.starts_with("epoch\ttrain_loss\tval_loss\tlr\n"));

    let ev = f.root.join("eval");
    let ckpt = out.join("checkpoint.mgcn");
    let o = mgcn(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&f.data),
        "--horizons",
        "40,160",
        "--out",
        s(&ev),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let tsv = std::fs::read_to_string(ev.join("eval.tsv")).unwrap();
    assert!(
        tsv.starts_with("action\tmethod\twindows\t40ms\t160ms\n"),
        "{tsv}"
    );
    let report: EvalReport =
        serde_json::from_str(&std::fs::read_to_string(ev.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report.horizon_frames, vec![1, 4]);

    let pred = f.root.join("pred.motion");
    let hist = f.data.join("seq0000.motion");
    let o = mgcn(&[
        "predict",
        "--checkpoint",
        s(&ckpt),
        "--history",
        s(&hist),
        "--out",
        s(&pred),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let future = MotionSequence::read(&pred).unwrap();
    assert_eq!((future.n_frames(), future.dims()), (4, 18));

    // The CLI prediction matches the library applied to the loaded checkpoint.
    let ck = read_checkpoint(&ckpt).unwrap();
    let cfg = TrainConfig {
        n_history: 6,
        n_future: 4,
        n_coeffs: Some(ck.manifest.model.n_coeffs),
        ..TrainConfig::default()
    };
    let pipe = Pipeline::new(&cfg, &ck.model.skeleton).unwrap();
    let seq = MotionSequence::read(&hist).unwrap();
    let last = seq.slice(seq.n_frames() - 6, 6).unwrap().into_frames();
    let want = pipe.predict_future(&ck.model, &last).unwrap();
    assert!(future.frames().max_abs_diff(&want) < 1e-12);

    // And eval over the same windows agrees with the library.
    let seqs: Vec<_> = (0..5)
        .map(|i| MotionSequence::read(&f.data.join(format!("seq{i:04}.motion"))).unwrap())
        .collect();
    let ds = mgcn::data::make_windows(&seqs, 6, 4, 1, mgcn::data::Split::Test).unwrap();
    let lib = evaluate(&ck.model, &pipe, &ds, &[40, 160], 25).unwrap();
    assert_eq!(lib, report);
}

#[test]
fn manifest_records_precedence_and_digests() {
    let f = fixture("stick6");
    let out = f.root.join("run");
    let o = train_tiny(
        &f,
        &out,
        &[
            "--preset", "cmu", "--epochs", "1", "--seed", "9", "--ablate", "no-csb",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let train = &m["config"]["train"];
    // flag beats file, file beats preset, preset beats default
    assert_eq!(train["epochs"], 1);
    assert_eq!(train["batch_size"], 4);
    assert_eq!(train["n_history"], 6);
    assert_eq!(train["seed"], 9);
    assert_eq!(train["model"]["hidden"], 8);
    assert_eq!(train["model"]["ablation"]["no_csb"], true);
    assert_eq!(m["seed"], 9);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 5);
    let first = &m["inputs"][0];
    let bytes = std::fs::read(first["path"].as_str().unwrap()).unwrap();
    assert_eq!(first["sha256"], mgcn::cli::sha256_hex(&bytes));
    let ck = read_checkpoint(&out.join("checkpoint.mgcn")).unwrap();
    assert_eq!(ck.csb_record_count(), 0);
}

#[test]
fn config_file_via_environment() {
    let f = fixture("stick6");
    let out = f.root.join("run");
    let o = Command::new(env!("CARGO_BIN_EXE_mgcn"))
        .args([
            "train",
            "--skeleton",
            "stick6",
            "--data",
            s(&f.data),
            "--out",
            s(&out),
            "--epochs",
            "1",
        ])
        .env("MGCN_CONFIG", &f.config)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["train"]["model"]["hidden"], 8);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&mgcn(&[])), 1);
    assert_eq!(code(&mgcn(&["train", "--bogus"])), 1);
    assert_eq!(code(&mgcn(&["selfcheck", "--inject-fault", "nonsense"])), 1);
    assert_eq!(code(&mgcn(&["--help"])), 0);
    let f = fixture("stick6");
    let o = train_tiny(&f, &f.root.join("run"), &["--preset", "nope"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn validation_errors_exit_two() {
    let f = fixture("stick6");
    let out = f.root.join("run");
    assert_eq!(code(&train_tiny(&f, &out, &[])), 0);
    let ckpt = out.join("checkpoint.mgcn");

    // skeleton mismatch at eval
    let o = mgcn(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&f.data),
        "--skeleton",
        "h36m20",
        "--out",
        s(&f.root.join("e")),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));

    // data of the wrong skeleton
    let other = fixture("h36m20");
    let o = mgcn(&[
        "train",
        "--skeleton",
        "stick6",
        "--data",
        s(&other.data),
        "--config",
        s(&f.config),
        "--out",
        s(&f.root.join("bad")),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));

    // prediction length mismatch
    let hist = f.data.join("seq0001.motion");
    let o = mgcn(&[
        "predict",
        "--checkpoint",
        s(&ckpt),
        "--history",
        s(&hist),
        "--n-future",
        "9",
        "--out",
        s(&f.root.join("p")),
    ]);
    assert_eq!(code(&o), 2);

    // corrupt checkpoint
    let mut bytes = std::fs::read(&ckpt).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    let bad = f.root.join("bad.mgcn");
    std::fs::write(&bad, bytes).unwrap();
    let o = mgcn(&[
        "predict",
        "--checkpoint",
        s(&bad),
        "--history",
        s(&hist),
        "--out",
        s(&f.root.join("p")),
    ]);
    assert_eq!(code(&o), 2);

    // invalid config value
    let cfg = f.root.join("bad.toml");
    std::fs::write(&cfg, "batch_size = 0\n").unwrap();
    let o = mgcn(&[
        "train",
        "--skeleton",
        "stick6",
        "--data",
        s(&f.data),
        "--config",
        s(&cfg),
        "--out",
        s(&f.root.join("b")),
    ]);
    assert_eq!(code(&o), 2);
    // unknown key
    std::fs::write(&cfg, "colour = 3\n").unwrap();
    let o = mgcn(&[
        "train",
        "--skeleton",
        "stick6",
        "--data",
        s(&f.data),
        "--config",
        s(&cfg),
        "--out",
        s(&f.root.join("b")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn selfcheck_catches_injected_fault() {
    let o = mgcn(&["selfcheck", "--inject-fault", "softmax"]);
    assert_eq!(code(&o), 3);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("FAIL attention_normalization"), "{out}");
    assert!(out.contains("PASS zero_init_identity"), "{out}");
}

#[test]
fn missing_input_is_a_runtime_error() {
    let f = fixture("stick6");
    let o = mgcn(&[
        "predict",
        "--checkpoint",
        s(&f.root.join("absent.mgcn")),
        "--history",
        s(&f.data.join("seq0000.motion")),
        "--out",
        s(&f.root.join("p")),
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn untrained_checkpoint_is_the_baseline() {
    let f = fixture("stick6");
    let out = f.root.join("run");
    let o = train_tiny(&f, &out, &["--epochs", "0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = out.join("checkpoint.mgcn");
    assert_eq!(read_checkpoint(&ckpt).unwrap().manifest.epochs_trained, 0);

    let ev = f.root.join("eval");
    let o = mgcn(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&f.data),
        "--horizons",
        "160",
        "--out",
        s(&ev),
    ]);
    assert_eq!(code(&o), 0);
    let report: EvalReport =
        serde_json::from_str(&std::fs::read_to_string(ev.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report.horizon_frames, vec![4]);
    for row in report.rows.iter().filter(|r| r.method == "mgcn") {
        let base = report.row(&row.action, "zero_velocity").unwrap();
        assert!((row.values[0] - base.values[0]).abs() < 1e-9);
    }

    let hist = f.data.join("seq0002.motion");
    let pred = f.root.join("pred.motion");
    let o = mgcn(&[
        "predict",
        "--checkpoint",
        s(&ckpt),
        "--history",
        s(&hist),
        "--n-future",
        "4",
        "--out",
        s(&pred),
    ]);
    assert_eq!(code(&o), 0);
    let seq = MotionSequence::read(&hist).unwrap();
    let last = seq.frame(seq.n_frames() - 1);
    let future = MotionSequence::read(&pred).unwrap();
    for t in 0..4 {
        for (a, b) in future.frame(t).iter().zip(last) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn short_history_is_an_input_error() {
    let f = fixture("stick6");
    let out = f.root.join("run");
    assert_eq!(code(&train_tiny(&f, &out, &["--epochs", "0"])), 0);
    let short = f.root.join("short.motion");
    let seq = MotionSequence::read(&f.data.join("seq0000.motion")).unwrap();
    seq.slice(0, 3).unwrap().write(&short).unwrap();
    let o = mgcn(&[
        "predict",
        "--checkpoint",
        s(&out.join("checkpoint.mgcn")),
        "--history",
        s(&short),
        "--out",
        s(&f.root.join("p.motion")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("frames"));
}
