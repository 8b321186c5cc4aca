use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::loss::{loss_value, loss_var, LossKind};
use super::optim::{clip_global_norm, lr_at_epoch, Adam};
use crate::data::{Window, WindowedDataset};
use crate::dct::{pad_frames, CoeffMatrix, DctCodec};
use crate::error::{Error, Result};
use crate::model::{MgcnModel, Probe};
use crate::skeleton::SkeletonConfig;
use crate::tensor::{Tape, Tensor, Var};

/// One window prepared for the network: padded-history coefficients and
/// the full ground-truth window.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub coeffs: Tensor,
    pub target: Tensor,
    pub action: String,
}

/// Window-level plumbing: pad, encode, run the model, decode, score.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub codec: DctCodec,
    pub n_history: usize,
    pub n_future: usize,
    pub dims_per_joint: usize,
    pub loss: LossKind,
}

impl Pipeline {
    pub fn new(cfg: &TrainConfig, skeleton: &SkeletonConfig) -> Result<Self> {
        let dct = cfg.dct();
        dct.validate()?;
        Ok(Self {
            codec: DctCodec::from_config(&dct)?,
            n_history: cfg.n_history,
            n_future: cfg.n_future,
            dims_per_joint: skeleton.dims_per_joint,
            loss: cfg.loss,
        })
    }

    pub fn window_len(&self) -> usize {
        self.n_history + self.n_future
    }

    /// Coefficients of the replicate-padded history.
    pub fn input_coeffs(&self, history: &Tensor) -> Result<CoeffMatrix> {
        if history.rows() != self.n_history {
            return Err(Error::Input(format!(
                "history has {} frames, expected {}",
                history.rows(),
                self.n_history
            )));
        }
        self.codec.encode(&pad_frames(history, self.n_future)?)
    }

    pub fn sample(&self, w: &Window) -> Result<Sample> {
        if w.n_history != self.n_history || w.n_future() != self.n_future {
            return Err(Error::Input(format!(
                "window is {}+{} frames, pipeline expects {}+{}",
                w.n_history,
                w.n_future(),
                self.n_history,
                self.n_future
            )));
        }
        Ok(Sample {
            coeffs: self.input_coeffs(&w.history())?.0,
            target: w.frames().clone(),
            action: w.action.clone().unwrap_or_else(|| "all".into()),
        })
    }

    pub fn samples(&self, ds: &WindowedDataset) -> Result<Vec<Sample>> {
        ds.windows.iter().map(|w| self.sample(w)).collect()
    }

    /// All `N + T` predicted frames for an `N`-frame history.
    pub fn predict(&self, model: &MgcnModel, history: &Tensor) -> Result<Tensor> {
        let coeffs = self.input_coeffs(history)?;
        self.codec.decode(&model.predict(&coeffs)?)
    }

    /// The `T` predicted future frames.
    pub fn predict_future(&self, model: &MgcnModel, history: &Tensor) -> Result<Tensor> {
        let all = self.predict(model, history)?;
        let k = all.cols();
        Ok(Tensor::matrix(
            self.n_future,
            k,
            all.data()[self.n_history * k..].to_vec(),
        )?)
    }

    /// Differentiable window loss against the full ground-truth window.
    pub fn loss_var(
        &self,
        tape: &mut Tape,
        model: &MgcnModel,
        params: &[Var],
        s: &Sample,
        probe: Option<&mut Probe>,
    ) -> Result<Var> {
        let x = tape.constant(s.coeffs.clone());
        let y = model.forward(tape, params, x, probe)?;
        let frames = self.codec.decode_var(tape, y)?;
        let truth = tape.constant(s.target.clone());
        loss_var(tape, self.loss, frames, truth, self.dims_per_joint)
    }

    pub fn sample_loss(&self, model: &MgcnModel, s: &Sample) -> Result<f64> {
        let pred = self
            .codec
            .decode(&model.predict(&CoeffMatrix(s.coeffs.clone()))?)?;
        loss_value(self.loss, &pred, &s.target, self.dims_per_joint)
    }

    /// Mean window loss, summed in dataset order.
    pub fn dataset_loss(&self, model: &MgcnModel, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Input("empty dataset".into()));
        }
        let mut total = 0.0;
        for s in samples {
            total += self.sample_loss(model, s)?;
        }
        Ok(total / samples.len() as f64)
    }

    /// Loss of repeating the last observed frame.
    pub fn baseline_loss(&self, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Input("empty dataset".into()));
        }
        let mut total = 0.0;
        for s in samples {
            let k = s.target.cols();
            let hist = Tensor::matrix(
                self.n_history,
                k,
                s.target.data()[..self.n_history * k].to_vec(),
            )?;
            let pred = pad_frames(&hist, self.n_future)?;
            total += loss_value(self.loss, &pred, &s.target, self.dims_per_joint)?;
        }
        Ok(total / samples.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean of the per-step batch losses seen during the epoch.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

/// Attention matrices checked while training.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionStats {
    pub matrices: usize,
    pub units: usize,
    pub shape_violations: usize,
    /// Largest `|row sum - 1|` observed.
    pub max_row_error: f64,
}

impl AttentionStats {
    fn absorb(&mut self, model: &MgcnModel, probe: &mut Probe) {
        for r in probe.attention.drain(..) {
            self.matrices += 1;
            self.units = self.units.max(r.unit + 1);
            let want = [
                model.skeleton.n_nodes(r.receiver),
                model.skeleton.n_nodes(r.sender),
            ];
            if r.matrix.shape() != want {
                self.shape_violations += 1;
                continue;
            }
            for i in 0..want[0] {
                let e = (r.matrix.row(i).iter().sum::<f64>() - 1.0).abs();
                if e.is_nan() || e > self.max_row_error {
                    self.max_row_error = e;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub curve: Vec<EpochStats>,
    pub steps: usize,
    pub initial_train_loss: f64,
    pub initial_val_loss: Option<f64>,
    pub attention: Option<AttentionStats>,
}

impl TrainReport {
    /// Tab-separated `epoch train_loss val_loss lr` table.
    pub fn curve_table(&self) -> String {
        let mut s = String::from("epoch\ttrain_loss\tval_loss\tlr\n");
        for e in &self.curve {
            let val = e
                .val_loss
                .map_or_else(|| "-".to_string(), |v| v.to_string());
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.epoch, e.train_loss, val, e.lr
            ));
        }
        s
    }
}

/// Adam over shuffled mini-batches with the stepwise decay schedule.
///
/// The order of windows is reshuffled every epoch from a generator seeded
/// with `cfg.seed`, so identical inputs give bitwise-identical runs.
pub fn train(
    model: &mut MgcnModel,
    pipe: &Pipeline,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Input("training set has no windows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam, model.params.values());
    let val_loss = |m: &MgcnModel| -> Result<Option<f64>> {
        if val_set.is_empty() {
            Ok(None)
        } else {
            pipe.dataset_loss(m, val_set).map(Some)
        }
    };
    let initial_train_loss = pipe.dataset_loss(model, train_set)?;
    let initial_val_loss = val_loss(model)?;
    let mut attention = cfg.monitor_attention.then(AttentionStats::default);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let lr = lr_at_epoch(cfg.lr, cfg.lr_decay, cfg.lr_decay_every, epoch);
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let params = model.params.bind(&mut tape);
            let mut probe = cfg.monitor_attention.then(Probe::recording);
            let mut total: Option<Var> = None;
            for &i in batch {
                let l = pipe.loss_var(&mut tape, model, &params, &train_set[i], probe.as_mut())?;
                total = Some(match total {
                    None => l,
                    Some(t) => tape.add(t, l)?,
                });
            }
            let loss = tape.scale(total.expect("non-empty batch"), 1.0 / batch.len() as f64);
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    step,
                    loss: value,
                });
            }
            if let (Some(stats), Some(p)) = (attention.as_mut(), probe.as_mut()) {
                stats.absorb(model, p);
            }
            tape.backward(loss)?;
            let mut grads: Vec<Tensor> = params
                .iter()
                .map(|&v| {
                    tape.grad(v)
                        .cloned()
                        .unwrap_or_else(|| Tensor::zeros(tape.shape(v)))
                })
                .collect();
            if let Some(max) = cfg.grad_clip {
                clip_global_norm(&mut grads, max);
            }
            adam.step(model.params.values_mut(), &grads, lr);
            epoch_total += value * batch.len() as f64;
            step += 1;
        }
        let stats = EpochStats {
            epoch,
            train_loss: epoch_total / train_set.len() as f64,
            val_loss: val_loss(model)?,
            lr,
        };
        log::info!(
            "epoch {epoch}: train {:.6} val {} lr {lr:.3e}",
            stats.train_loss,
            stats.val_loss.map_or("-".into(), |v| format!("{v:.6}"))
        );
        curve.push(stats);
    }
    Ok(TrainReport {
        curve,
        steps: step,
        initial_train_loss,
        initial_val_loss,
        attention,
    })
}
