use mgcn::data::{make_windows, split_sequences, synth_corpus, Split, SynthKind, SynthOptions};
use mgcn::model::{read_checkpoint, write_checkpoint, Checkpoint, MgcnModel, ModelConfig};
use mgcn::skeleton::SkeletonConfig;
use mgcn::train::{
    evaluate, train, LossKind, Metric, Pipeline, TrainConfig, AVERAGE, METHOD_BASELINE,
    METHOD_MODEL,
};

fn tiny(loss: LossKind) -> TrainConfig {
    TrainConfig {
        epochs: 4,
        batch_size: 4,
        lr: 2e-3,
        n_history: 6,
        n_future: 4,
        loss,
        model: ModelConfig {
            hidden: 16,
            stm_hidden: 8,
            csb_hidden: 16,
            csb_proj: 8,
            n_sim: 1,
            gcn_blocks: 1,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn train_checkpoint_eval() {
    let skel = SkeletonConfig::stick6();
    let cfg = tiny(LossKind::PositionMpjpe);
    let seqs = synth_corpus(
        &skel,
        &SynthOptions::new(SynthKind::Mixed, 16, 3).correlated(),
        12,
    )
    .unwrap();
    let (tr, va, te) = split_sequences(&seqs, 8, 2).unwrap();
    let pipe = Pipeline::new(&cfg, &skel).unwrap();
    let train_set = pipe
        .samples(&make_windows(&tr, 6, 4, 2, Split::Train).unwrap())
        .unwrap();
    let val_set = pipe
        .samples(&make_windows(&va, 6, 4, 2, Split::Val).unwrap())
        .unwrap();
    let mut model = MgcnModel::new(cfg.model_config(), skel.clone(), 5).unwrap();
    let report = train(&mut model, &pipe, &train_set, &val_set, &cfg).unwrap();
    assert_eq!(report.curve.len(), 4);
    assert!(report.curve.iter().all(|e| e.val_loss.is_some()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.mgcn");
    write_checkpoint(&path, &Checkpoint::new(model.clone(), 6, 4, 4, 5)).unwrap();
    let loaded = read_checkpoint(&path).unwrap();
    assert_eq!(loaded.manifest.epochs_trained, 4);
    assert_eq!(loaded.model.param_count(), model.param_count());

    // the loaded model is the trained one rounded to f32
    let test = make_windows(&te, 6, 4, 1, Split::Test).unwrap();
    let a = evaluate(&model, &pipe, &test, &[40, 80, 160], 25).unwrap();
    let b = evaluate(&loaded.model, &pipe, &test, &[40, 80, 160], 25).unwrap();
    assert_eq!(a.metric, Metric::JointDistance);
    let ma = &a.row(AVERAGE, METHOD_MODEL).unwrap().values;
    let mb = &b.row(AVERAGE, METHOD_MODEL).unwrap().values;
    for (x, y) in ma.iter().zip(mb) {
        assert!((x - y).abs() < 1e-5 * x.abs().max(1.0), "{x} vs {y}");
    }
    assert_eq!(
        a.row(AVERAGE, METHOD_BASELINE).unwrap().values,
        b.row(AVERAGE, METHOD_BASELINE).unwrap().values
    );
}

#[test]
fn angle_data_is_scored_by_absolute_error() {
    let skel = SkeletonConfig::stick6();
    let cfg = tiny(LossKind::AngleMae);
    let seqs = synth_corpus(&skel, &SynthOptions::new(SynthKind::Sinusoidal, 12, 1), 4).unwrap();
    let pipe = Pipeline::new(&cfg, &skel).unwrap();
    let ds = make_windows(&seqs, 6, 4, 1, Split::Test).unwrap();
    let model = MgcnModel::new(cfg.model_config(), skel, 0).unwrap();
    let rep = evaluate(&model, &pipe, &ds, &[160], 25).unwrap();
    assert_eq!(rep.metric, Metric::AbsError);
    let m = rep.row(AVERAGE, METHOD_MODEL).unwrap().values[0];
    let b = rep.row(AVERAGE, METHOD_BASELINE).unwrap().values[0];
    assert!((m - b).abs() < 1e-12);

    // independent oracle for the baseline at frame 4
    let mut total = 0.0;
    for w in &ds.windows {
        let hist = w.history();
        let last = hist.row(5);
        let truth = w.future();
        let err: f64 = truth
            .row(3)
            .iter()
            .zip(last)
            .map(|(a, b)| (a - b).abs())
            .sum();
        total += err / last.len() as f64;
    }
    assert!((b - total / ds.len() as f64).abs() < 1e-12);
}

#[test]
fn non_finite_input_aborts_training() {
    let skel = SkeletonConfig::stick6();
    let cfg = tiny(LossKind::PositionMpjpe);
    let seqs = synth_corpus(&skel, &SynthOptions::new(SynthKind::Sinusoidal, 10, 2), 2).unwrap();
    let pipe = Pipeline::new(&cfg, &skel).unwrap();
    let mut samples = pipe
        .samples(&make_windows(&seqs, 6, 4, 1, Split::Train).unwrap())
        .unwrap();
    for s in &mut samples {
        s.target.data_mut()[0] = f64::NAN;
    }
    let mut model = MgcnModel::new(cfg.model_config(), skel, 0).unwrap();
    let err = train(&mut model, &pipe, &samples, &[], &cfg).unwrap_err();
    assert!(
        matches!(
            err,
            mgcn::Error::NonFinite {
                epoch: 0,
                step: 0,
                ..
            }
        ),
        "{err}"
    );
}
