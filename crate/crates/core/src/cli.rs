//! The `mgcn` command line.
//!
//! Configuration is layered: built-in defaults (or a `--preset`), then a
//! TOML file given by `--config` or `MGCN_CONFIG`, then individual flags.
//! Every command that writes files first writes a `manifest.json` recording
//! the resolved configuration and the digests of its inputs.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    load_sequences, make_windows, motion_files, synth_corpus, MotionFormat, MotionSequence,
    Preprocess, Split, SynthKind, SynthOptions, WindowedDataset,
};
use crate::error::Error;
use crate::model::{read_checkpoint, write_checkpoint, Ablation, Checkpoint, MgcnModel};
use crate::selfcheck::{self, Fault};
use crate::skeleton::{resolve_skeleton, SkeletonConfig};
use crate::tensor::Tensor;
use crate::train::{
    evaluate, train, EvalReport, LossKind, Pipeline, TrainConfig, AVERAGE, METHOD_MODEL,
};

pub const CONFIG_ENV: &str = "MGCN_CONFIG";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e {
                Error::Input(_)
                | Error::Validation(_)
                | Error::Reference(_)
                | Error::Parse { .. }
                | Error::Schema(_)
                | Error::Checkpoint(_)
                | Error::Config(_) => EXIT_VALIDATION,
                Error::Tensor(_) | Error::NonFinite { .. } | Error::Io { .. } => EXIT_RUNTIME,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "mgcn",
    version,
    about = "Multiscale graph network for human motion prediction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint, loss curve and manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint at several horizons against the zero-velocity baseline.
    Eval(EvalArgs),
    /// Predict the future frames of one history file.
    Predict(PredictArgs),
    /// Train the full model and each ablation and compare test errors.
    Ablate(AblateArgs),
    /// Run the built-in verification suite.
    Selfcheck(SelfcheckArgs),
    /// Write a synthetic corpus of `#motion v1` files.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AblateFlag {
    NoStm,
    NoCsb,
    ParallelDecoder,
}

impl AblateFlag {
    fn apply(self, a: &mut Ablation) {
        match self {
            AblateFlag::NoStm => a.no_stm_mean_pool = true,
            AblateFlag::NoCsb => a.no_csb = true,
            AblateFlag::ParallelDecoder => a.parallel_decoder = true,
        }
    }
}

/// Flags shared by commands that train.
#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// Built-in skeleton name (h36m20, stick6) or path to a skeleton TOML file.
    #[arg(long)]
    pub skeleton: String,
    /// A `.motion` file or a directory of them.
    #[arg(long)]
    pub data: PathBuf,
    /// Validation corpus.
    #[arg(long)]
    pub val_data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML training configuration.
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Starting configuration (h36m, h36m-long, cmu, cmu-long).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub n_history: Option<usize>,
    #[arg(long)]
    pub n_future: Option<usize>,
    #[arg(long)]
    pub dct_coeffs: Option<usize>,
    #[arg(long)]
    pub sim_stack: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// angle_mae or position_mpjpe.
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// Decimate the corpus to this frame rate.
    #[arg(long)]
    pub target_fps: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: TrainFlags,
    /// Disable a component; repeatable.
    #[arg(long, value_enum)]
    pub ablate: Vec<AblateFlag>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Horizons in milliseconds.
    #[arg(long, value_delimiter = ',', default_values_t = crate::train::DEFAULT_HORIZONS_MS.to_vec())]
    pub horizons: Vec<u32>,
    /// Expected skeleton; must match the checkpoint's.
    #[arg(long)]
    pub skeleton: Option<String>,
    /// Window start spacing.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long)]
    pub target_fps: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `#motion v1` file; its last N frames are used.
    #[arg(long)]
    pub history: PathBuf,
    /// Output `#motion v1` file.
    #[arg(long)]
    pub out: PathBuf,
    /// Must equal the checkpoint's prediction length when given.
    #[arg(long)]
    pub n_future: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: TrainFlags,
    /// Test corpus.
    #[arg(long)]
    pub test_data: PathBuf,
    /// Seeds to average over.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0u64, 1, 2])]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = crate::train::DEFAULT_HORIZONS_MS.to_vec())]
    pub horizons: Vec<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct SelfcheckArgs {
    /// Deliberately break a component to confirm the suite notices.
    #[arg(long, default_value = "none")]
    pub inject_fault: Fault,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub skeleton: String,
    #[arg(long, default_value = "sinusoidal")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 20)]
    pub frames: usize,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 25)]
    pub fps: u32,
    /// Couple the joints of each scale-2 component.
    #[arg(long)]
    pub correlated: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// What a run needs to be reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn digest_inputs(paths: &[&Path]) -> CliResult<Vec<InputDigest>> {
    let mut out = Vec::new();
    for p in paths {
        let files = if p.is_dir() {
            motion_files(p)?
        } else {
            vec![p.to_path_buf()]
        };
        for f in files {
            let bytes = fs::read(&f).map_err(|e| Error::io(&f, e))?;
            out.push(InputDigest {
                path: f.display().to_string(),
                sha256: sha256_hex(&bytes),
            });
        }
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Defaults or preset, then the config file, then flags.
pub fn resolve_config(flags: &TrainFlags, ablate: &[AblateFlag]) -> CliResult<TrainConfig> {
    let mut cfg = match &flags.preset {
        Some(name) => TrainConfig::preset(name).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown preset `{name}` (expected one of {})",
                crate::train::PRESETS.join(", ")
            ))
        })?,
        None => TrainConfig::default(),
    };
    if let Some(path) = &flags.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg = merge_toml(&cfg, file)?;
    }
    macro_rules! set {
        ($flag:ident => $($field:tt)+) => {
            if let Some(v) = flags.$flag.clone() {
                cfg.$($field)+ = v;
            }
        };
    }
    set!(epochs => epochs);
    set!(batch => batch_size);
    set!(lr => lr);
    set!(n_history => n_history);
    set!(n_future => n_future);
    set!(sim_stack => model.n_sim);
    set!(hidden => model.hidden);
    set!(seed => seed);
    set!(loss => loss);
    if let Some(d) = flags.dct_coeffs {
        cfg.n_coeffs = Some(d);
    }
    for a in ablate {
        a.apply(&mut cfg.model.ablation);
    }
    let cfg = cfg.resolve();
    cfg.validate()?;
    Ok(cfg)
}

/// Overlays the keys present in `file` onto `base`.
fn merge_toml(base: &TrainConfig, file: toml::Table) -> CliResult<TrainConfig> {
    fn merge(into: &mut toml::Table, from: toml::Table) {
        for (k, v) in from {
            match (into.get_mut(&k), v) {
                (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
                (_, v) => {
                    into.insert(k, v);
                }
            }
        }
    }
    let mut table: toml::Table = base.to_toml().parse().expect("own output parses");
    merge(&mut table, file);
    let text = toml::to_string(&table).expect("table serializes");
    Ok(TrainConfig::from_toml(&text)?)
}

fn load_corpus(
    path: &Path,
    target_fps: Option<u32>,
    skel: &SkeletonConfig,
) -> CliResult<Vec<MotionSequence>> {
    let opts = Preprocess {
        target_fps,
        ..Preprocess::default()
    };
    let (seqs, _) = load_sequences(path, MotionFormat::MotionV1, &opts)?;
    let k = skel.pose_dims();
    if let Some(s) = seqs.iter().find(|s| s.dims() != k) {
        return Err(Error::Validation(format!(
            "{} has {} dimensions but skeleton `{}` needs {k}",
            path.display(),
            s.dims(),
            skel.name
        ))
        .into());
    }
    Ok(seqs)
}

fn corpus_fps(seqs: &[MotionSequence]) -> CliResult<u32> {
    let fps = seqs[0].fps;
    if seqs.iter().any(|s| s.fps != fps) {
        return Err(
            Error::Validation("sequences in one corpus must share a frame rate".into()).into(),
        );
    }
    Ok(fps)
}

fn windows(seqs: &[MotionSequence], cfg: &TrainConfig, split: Split) -> CliResult<WindowedDataset> {
    let ds = make_windows(seqs, cfg.n_history, cfg.n_future, cfg.window_stride, split)?;
    if ds.is_empty() {
        return Err(Error::Input(format!(
            "no sequence is at least {} frames long",
            cfg.n_history + cfg.n_future
        ))
        .into());
    }
    Ok(ds)
}

struct Trained {
    checkpoint: Checkpoint,
    curve: String,
    report: crate::train::TrainReport,
}

fn train_one(
    cfg: &TrainConfig,
    skel: &SkeletonConfig,
    train_seqs: &[MotionSequence],
    val_seqs: &[MotionSequence],
) -> CliResult<Trained> {
    let pipe = Pipeline::new(cfg, skel)?;
    let train_set = pipe.samples(&windows(train_seqs, cfg, Split::Train)?)?;
    let val_set = if val_seqs.is_empty() {
        Vec::new()
    } else {
        pipe.samples(&windows(val_seqs, cfg, Split::Val)?)?
    };
    let mut model = MgcnModel::new(cfg.model_config(), skel.clone(), cfg.seed)?;
    let report = train(&mut model, &pipe, &train_set, &val_set, cfg)?;
    let curve = report.curve_table();
    Ok(Trained {
        checkpoint: Checkpoint::new(model, cfg.n_history, cfg.n_future, cfg.epochs, cfg.seed),
        curve,
        report,
    })
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let f = &args.common;
    let cfg = resolve_config(f, &args.ablate)?;
    let skel = resolve_skeleton(&f.skeleton)?;
    let mut inputs: Vec<&Path> = vec![&f.data];
    if let Some(v) = &f.val_data {
        inputs.push(v);
    }
    let ckpt_path = f.out.join("checkpoint.mgcn");
    let curve_path = f.out.join("loss_curve.tsv");
    let report_path = f.out.join("train_report.json");
    create_dir(&f.out)?;
    RunManifest {
        command: "train".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: Some(cfg.seed),
        config: config_json(&cfg, &skel),
        inputs: digest_inputs(&inputs)?,
        outputs: [&ckpt_path, &curve_path, &report_path]
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
    }
    .write(&f.out)?;

    let train_seqs = load_corpus(&f.data, f.target_fps, &skel)?;
    let val_seqs = match &f.val_data {
        Some(p) => load_corpus(p, f.target_fps, &skel)?,
        None => Vec::new(),
    };
    let t = train_one(&cfg, &skel, &train_seqs, &val_seqs)?;
    write_checkpoint(&ckpt_path, &t.checkpoint)?;
    write_file(&curve_path, &t.curve)?;
    write_file(
        &report_path,
        &serde_json::to_string_pretty(&t.report).expect("report serializes"),
    )?;
    println!(
        "trained {} parameters for {} epochs ({} steps); checkpoint {}",
        t.checkpoint.model.param_count(),
        cfg.epochs,
        t.report.steps,
        ckpt_path.display()
    );
    Ok(())
}

fn config_json(cfg: &TrainConfig, skel: &SkeletonConfig) -> serde_json::Value {
    serde_json::json!({
        "train": cfg,
        "skeleton": skel.name,
        "skeleton_sha256": sha256_hex(skel.to_toml().as_bytes()),
    })
}

fn check_skeleton(ckpt: &Checkpoint, expected: Option<&str>) -> CliResult<()> {
    if let Some(spec) = expected {
        let want = resolve_skeleton(spec)?;
        if want != ckpt.model.skeleton {
            return Err(Error::Validation(format!(
                "checkpoint was trained on skeleton `{}`, not `{}`",
                ckpt.model.skeleton.name, want.name
            ))
            .into());
        }
    }
    Ok(())
}

fn pipeline_for(ckpt: &Checkpoint) -> CliResult<Pipeline> {
    let m = &ckpt.manifest;
    let cfg = TrainConfig {
        n_history: m.n_history,
        n_future: m.n_future,
        n_coeffs: Some(m.model.n_coeffs),
        ..TrainConfig::default()
    };
    Ok(Pipeline::new(&cfg, &ckpt.model.skeleton)?)
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    if args.horizons.is_empty() {
        return Err(CliError::Usage(
            "--horizons needs at least one value".into(),
        ));
    }
    let ckpt = read_checkpoint(&args.checkpoint)?;
    check_skeleton(&ckpt, args.skeleton.as_deref())?;
    let tsv = args.out.join("eval.tsv");
    let json = args.out.join("eval.json");
    create_dir(&args.out)?;
    RunManifest {
        command: "eval".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: None,
        config: serde_json::json!({
            "horizons_ms": args.horizons,
            "stride": args.stride,
            "checkpoint": ckpt.manifest,
        }),
        inputs: digest_inputs(&[&args.checkpoint, &args.data])?,
        outputs: vec![tsv.display().to_string(), json.display().to_string()],
    }
    .write(&args.out)?;

    let report = eval_checkpoint(
        &ckpt,
        &args.data,
        &args.horizons,
        args.stride,
        args.target_fps,
    )?;
    write_file(&tsv, &report.to_tsv())?;
    write_file(&json, &report.to_json())?;
    print!("{}", report.to_tsv());
    Ok(())
}

fn eval_checkpoint(
    ckpt: &Checkpoint,
    data: &Path,
    horizons: &[u32],
    stride: usize,
    target_fps: Option<u32>,
) -> CliResult<EvalReport> {
    if stride == 0 {
        return Err(CliError::Usage("--stride must be at least 1".into()));
    }
    let skel = &ckpt.model.skeleton;
    let seqs = load_corpus(data, target_fps, skel)?;
    let fps = corpus_fps(&seqs)?;
    let pipe = pipeline_for(ckpt)?;
    let ds = make_windows(&seqs, pipe.n_history, pipe.n_future, stride, Split::Test)?;
    Ok(evaluate(&ckpt.model, &pipe, &ds, horizons, fps)?)
}

pub fn cmd_predict(args: &PredictArgs) -> CliResult<()> {
    let ckpt = read_checkpoint(&args.checkpoint)?;
    let pipe = pipeline_for(&ckpt)?;
    if let Some(t) = args.n_future {
        if t != pipe.n_future {
            return Err(Error::Validation(format!(
                "--n-future {t} differs from the checkpoint's prediction length {}",
                pipe.n_future
            ))
            .into());
        }
    }
    let hist = MotionSequence::read(&args.history)?;
    let k = ckpt.model.skeleton.pose_dims();
    if hist.dims() != k {
        return Err(Error::Validation(format!(
            "history has {} dimensions, checkpoint skeleton needs {k}",
            hist.dims()
        ))
        .into());
    }
    let n = pipe.n_history;
    if hist.n_frames() < n {
        return Err(Error::Input(format!(
            "history has {} frames, need at least {n}",
            hist.n_frames()
        ))
        .into());
    }
    let last: Tensor = hist.slice(hist.n_frames() - n, n)?.into_frames();
    let future = pipe.predict_future(&ckpt.model, &last)?;
    hist.with_frames(future)?.write(&args.out)?;
    println!("wrote {} frames to {}", pipe.n_future, args.out.display());
    Ok(())
}

pub fn cmd_ablate(args: &AblateArgs) -> CliResult<()> {
    if args.seeds.is_empty() || args.horizons.is_empty() {
        return Err(CliError::Usage(
            "--seeds and --horizons need at least one value".into(),
        ));
    }
    let f = &args.common;
    let base = resolve_config(f, &[])?;
    let skel = resolve_skeleton(&f.skeleton)?;
    let table_path = f.out.join("ablation.tsv");
    create_dir(&f.out)?;
    RunManifest {
        command: "ablate".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: None,
        config: serde_json::json!({
            "base": config_json(&base, &skel),
            "seeds": args.seeds,
            "horizons_ms": args.horizons,
        }),
        inputs: digest_inputs(&[&f.data, &args.test_data])?,
        outputs: vec![table_path.display().to_string()],
    }
    .write(&f.out)?;

    let train_seqs = load_corpus(&f.data, f.target_fps, &skel)?;
    let test_seqs = load_corpus(&args.test_data, f.target_fps, &skel)?;
    let fps = corpus_fps(&test_seqs)?;
    let variants: [(&str, Option<AblateFlag>); 4] = [
        ("full", None),
        ("no_stm_mean_pool", Some(AblateFlag::NoStm)),
        ("no_csb", Some(AblateFlag::NoCsb)),
        ("parallel_decoder", Some(AblateFlag::ParallelDecoder)),
    ];
    let mut table = String::from("variant\tseed");
    for ms in &args.horizons {
        table.push_str(&format!("\t{ms}ms"));
    }
    table.push('\n');
    for (name, flag) in variants {
        let mut sum = vec![0.0; args.horizons.len()];
        for &seed in &args.seeds {
            let mut cfg = base.clone();
            cfg.seed = seed;
            if let Some(flag) = flag {
                flag.apply(&mut cfg.model.ablation);
            }
            let t = train_one(&cfg, &skel, &train_seqs, &[])?;
            let pipe = pipeline_for(&t.checkpoint)?;
            let ds = make_windows(
                &test_seqs,
                cfg.n_history,
                cfg.n_future,
                cfg.window_stride,
                Split::Test,
            )?;
            let report = evaluate(&t.checkpoint.model, &pipe, &ds, &args.horizons, fps)?;
            let row = report.row(AVERAGE, METHOD_MODEL).expect("average row");
            table.push_str(&format!("{name}\t{seed}"));
            for (s, v) in sum.iter_mut().zip(&row.values) {
                table.push_str(&format!("\t{v}"));
                *s += v / args.seeds.len() as f64;
            }
            table.push('\n');
        }
        table.push_str(&format!("{name}\tmean"));
        for v in &sum {
            table.push_str(&format!("\t{v}"));
        }
        table.push('\n');
    }
    write_file(&table_path, &table)?;
    print!("{table}");
    Ok(())
}

pub fn cmd_selfcheck(args: &SelfcheckArgs) -> CliResult<bool> {
    let results = selfcheck::run_all(args.inject_fault)?;
    for r in &results {
        println!("{r}");
    }
    Ok(results.iter().all(|r| r.passed))
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let skel = resolve_skeleton(&args.skeleton)?;
    create_dir(&args.out)?;
    let mut opts = SynthOptions::new(args.kind, args.frames, args.seed);
    opts.fps = args.fps;
    opts.group_correlated = args.correlated;
    let seqs = synth_corpus(&skel, &opts, args.count)?;
    for (i, s) in seqs.iter().enumerate() {
        s.write(&args.out.join(format!("seq{i:04}.motion")))?;
    }
    println!("wrote {} sequences to {}", seqs.len(), args.out.display());
    Ok(())
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Selfcheck(a) => match cmd_selfcheck(a) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("selfcheck failed");
                return EXIT_RUNTIME;
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
