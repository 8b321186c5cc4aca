//! Built-in verification suite run by `mgcn selfcheck`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{make_windows, synth_corpus, Split, SynthKind, SynthOptions};
use crate::dct::{CoeffMatrix, DctCodec};
use crate::error::Result;
use crate::model::{Init, MgcnModel, ModelConfig, Probe};
use crate::skeleton::SkeletonConfig;
use crate::tensor::Tensor;
use crate::train::{gradient_check, LossKind, Pipeline, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Attention scores are exponentiated but not normalized.
    Softmax,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Fault::None),
            "softmax" => Ok(Fault::Softmax),
            other => Err(format!("unknown fault `{other}` (expected softmax)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Gradient-check setup: stick6, `D = 8`, every width 16, one unit.
pub fn gradcheck_config(loss: LossKind) -> TrainConfig {
    TrainConfig {
        n_history: 4,
        n_future: 4,
        n_coeffs: Some(8),
        loss,
        model: ModelConfig {
            hidden: 16,
            stm_hidden: 16,
            csb_hidden: 16,
            csb_proj: 16,
            n_sim: 1,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

pub fn check_dct(n: usize, max_len: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut round, mut parseval) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let len = rng.gen_range(1..=max_len);
        let k = rng.gen_range(1..=6);
        let x = Tensor::matrix(
            len,
            k,
            (0..len * k).map(|_| rng.gen_range(-10.0..10.0)).collect(),
        )?;
        let codec = DctCodec::new(len, len)?;
        let c = codec.encode(&x)?;
        round = round.max(codec.decode(&c)?.max_abs_diff(&x));
        let ex: f64 = x.data().iter().map(|v| v * v).sum();
        let ec: f64 = c.0.data().iter().map(|v| v * v).sum();
        parseval = parseval.max((ex - ec).abs() / ex.max(1.0));
    }
    Ok(CheckResult {
        name: "dct_roundtrip",
        passed: round < 1e-9 && parseval < 1e-9,
        detail: format!(
            "{n} sequences, max roundtrip error {round:.3e}, max Parseval gap {parseval:.3e}"
        ),
    })
}

pub fn check_gradients(loss: LossKind, seed: u64) -> Result<CheckResult> {
    let skel = SkeletonConfig::stick6();
    let cfg = gradcheck_config(loss);
    let pipe = Pipeline::new(&cfg, &skel)?;
    let model = MgcnModel::with_init(cfg.model_config(), skel.clone(), seed, Init::Random)?;
    let seqs = synth_corpus(
        &skel,
        &SynthOptions::new(SynthKind::Mixed, 8, seed).correlated(),
        1,
    )?;
    let ds = make_windows(&seqs, 4, 4, 1, Split::Train)?;
    let sample = pipe.sample(&ds.windows[0])?;
    let g = gradient_check(&model, &pipe, &sample, 1e-5)?;
    let name = match loss {
        LossKind::AngleMae => "gradient_mae",
        LossKind::PositionMpjpe => "gradient_mpjpe",
    };
    Ok(CheckResult {
        name,
        passed: g.max_rel_error < 1e-3,
        detail: format!(
            "{} parameters, max relative error {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e}, gradient scale {:.3e})",
            g.scalars, g.max_rel_error, g.worst.0, g.worst.1, g.analytic, g.numeric, g.grad_scale
        ),
    })
}

fn random_coeffs(rng: &mut ChaCha8Rng, k: usize, d: usize) -> Result<CoeffMatrix> {
    Ok(CoeffMatrix(Tensor::matrix(
        k,
        d,
        (0..k * d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?))
}

fn small_model(init: Init, seed: u64) -> Result<MgcnModel> {
    let cfg = ModelConfig {
        n_coeffs: 8,
        hidden: 16,
        stm_hidden: 8,
        csb_hidden: 16,
        csb_proj: 8,
        ..ModelConfig::default()
    };
    MgcnModel::with_init(cfg, SkeletonConfig::h36m20(), seed, init)
}

pub fn check_attention(fault: Fault, seed: u64) -> Result<CheckResult> {
    let model = small_model(Init::Random, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = Probe {
        record_attention: true,
        skip_softmax_normalization: fault == Fault::Softmax,
        attention: Vec::new(),
    };
    let mut worst = 0.0f64;
    let mut bad_shapes = 0;
    for _ in 0..4 {
        let x = random_coeffs(&mut rng, model.skeleton.pose_dims(), 8)?;
        model.predict_probed(&x, Some(&mut probe))?;
    }
    for r in &probe.attention {
        let want = [
            model.skeleton.n_nodes(r.receiver),
            model.skeleton.n_nodes(r.sender),
        ];
        if r.matrix.shape() != want {
            bad_shapes += 1;
            continue;
        }
        for i in 0..want[0] {
            let e = (r.matrix.row(i).iter().sum::<f64>() - 1.0).abs();
            if e.is_nan() || e > worst {
                worst = e;
            }
        }
    }
    Ok(CheckResult {
        name: "attention_normalization",
        passed: bad_shapes == 0 && worst < 1e-9,
        detail: format!(
            "{} matrices over {} units, {bad_shapes} bad shapes, max |row sum - 1| {worst:.3e}",
            probe.attention.len(),
            model.sim.len()
        ),
    })
}

pub fn check_zero_init(seed: u64) -> Result<CheckResult> {
    let model = small_model(Init::Standard, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..4 {
        let x = random_coeffs(&mut rng, model.skeleton.pose_dims(), 8)?;
        worst = worst.max(model.predict(&x)?.0.max_abs_diff(&x.0));
    }
    Ok(CheckResult {
        name: "zero_init_identity",
        passed: worst == 0.0,
        detail: format!("max |F_p - F| {worst:.3e}"),
    })
}

pub fn run_all(fault: Fault) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_dct(200, 64, 0)?,
        check_gradients(LossKind::PositionMpjpe, 0)?,
        check_gradients(LossKind::AngleMae, 0)?,
        check_attention(fault, 0)?,
        check_zero_init(0)?,
    ])
}
