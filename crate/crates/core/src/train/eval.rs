use serde::{Deserialize, Serialize};

use super::loss::{frame_abs_error, frame_joint_distance, LossKind};
use super::trainer::Pipeline;
use crate::data::{MotionSequence, WindowedDataset};
use crate::dct::pad_frames;
use crate::error::{Error, Result};
use crate::model::MgcnModel;
use crate::tensor::Tensor;

pub const DEFAULT_HORIZONS_MS: [u32; 4] = [80, 160, 320, 400];

/// Frame index (1-based, counted from the first future frame) of a horizon.
pub fn horizon_frame(ms: u32, fps: u32) -> usize {
    (ms as f64 * fps as f64 / 1000.0).round() as usize
}

/// `T` copies of the last history frame.
pub fn zero_velocity_baseline(history: &MotionSequence, t_future: usize) -> Result<MotionSequence> {
    let n = history.n_frames();
    let padded = pad_frames(history.frames(), t_future)?;
    let k = padded.cols();
    history.with_frames(Tensor::matrix(
        t_future,
        k,
        padded.data()[n * k..].to_vec(),
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Mean Euclidean distance per joint.
    JointDistance,
    /// Mean absolute error per dimension.
    AbsError,
}

impl Metric {
    pub fn for_loss(kind: LossKind) -> Self {
        match kind {
            LossKind::PositionMpjpe => Metric::JointDistance,
            LossKind::AngleMae => Metric::AbsError,
        }
    }

    pub fn frame_error(self, pred: &[f64], truth: &[f64], dims_per_joint: usize) -> f64 {
        match self {
            Metric::JointDistance => frame_joint_distance(pred, truth, dims_per_joint),
            Metric::AbsError => frame_abs_error(pred, truth),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub action: String,
    pub method: String,
    pub windows: usize,
    /// One value per horizon.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fps: u32,
    pub metric: Metric,
    pub horizons_ms: Vec<u32>,
    pub horizon_frames: Vec<usize>,
    pub rows: Vec<EvalRow>,
}

pub const METHOD_MODEL: &str = "mgcn";
pub const METHOD_BASELINE: &str = "zero_velocity";
pub const AVERAGE: &str = "average";

impl EvalReport {
    pub fn row(&self, action: &str, method: &str) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.action == action && r.method == method)
    }

    /// Tab-separated action × horizon table.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("action\tmethod\twindows");
        for ms in &self.horizons_ms {
            s.push_str(&format!("\t{ms}ms"));
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("{}\t{}\t{}", r.action, r.method, r.windows));
            for v in &r.values {
                s.push_str(&format!("\t{v}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-action and average errors of the model and the zero-velocity
/// baseline at each horizon.
pub fn evaluate(
    model: &MgcnModel,
    pipe: &Pipeline,
    ds: &WindowedDataset,
    horizons_ms: &[u32],
    fps: u32,
) -> Result<EvalReport> {
    if ds.is_empty() {
        return Err(Error::Input("evaluation set has no windows".into()));
    }
    if fps == 0 {
        return Err(Error::Input("frame rate must be positive".into()));
    }
    let frames: Vec<usize> = horizons_ms
        .iter()
        .map(|&ms| horizon_frame(ms, fps))
        .collect();
    for (&ms, &f) in horizons_ms.iter().zip(&frames) {
        if f == 0 || f > pipe.n_future {
            return Err(Error::Input(format!(
                "horizon {ms} ms is frame {f} at {fps} fps, outside 1..={}",
                pipe.n_future
            )));
        }
    }
    let metric = Metric::for_loss(pipe.loss);
    let dpj = pipe.dims_per_joint;
    let actions = ds.actions();
    let h = frames.len();
    let mut sums = vec![(vec![0.0; h], vec![0.0; h], 0usize); actions.len()];
    for w in &ds.windows {
        let a = w.action.clone().unwrap_or_else(|| "all".into());
        let ai = actions.iter().position(|x| *x == a).expect("action listed");
        let hist = w.history();
        let pred = pipe.predict_future(model, &hist)?;
        let last = hist.row(hist.rows() - 1);
        let truth = w.future();
        let slot = &mut sums[ai];
        for (i, &f) in frames.iter().enumerate() {
            slot.0[i] += metric.frame_error(pred.row(f - 1), truth.row(f - 1), dpj);
            slot.1[i] += metric.frame_error(last, truth.row(f - 1), dpj);
        }
        slot.2 += 1;
    }
    let mut rows = Vec::new();
    let mut avg = (vec![0.0; h], vec![0.0; h]);
    for (a, (m, b, n)) in actions.iter().zip(&sums) {
        let mean = |v: &[f64]| v.iter().map(|x| x / *n as f64).collect::<Vec<_>>();
        let (mv, bv) = (mean(m), mean(b));
        for i in 0..h {
            avg.0[i] += mv[i] / actions.len() as f64;
            avg.1[i] += bv[i] / actions.len() as f64;
        }
        rows.push(EvalRow {
            action: a.clone(),
            method: METHOD_MODEL.into(),
            windows: *n,
            values: mv,
        });
        rows.push(EvalRow {
            action: a.clone(),
            method: METHOD_BASELINE.into(),
            windows: *n,
            values: bv,
        });
    }
    let total = ds.len();
    rows.push(EvalRow {
        action: AVERAGE.into(),
        method: METHOD_MODEL.into(),
        windows: total,
        values: avg.0,
    });
    rows.push(EvalRow {
        action: AVERAGE.into(),
        method: METHOD_BASELINE.into(),
        windows: total,
        values: avg.1,
    });
    Ok(EvalReport {
        fps,
        metric,
        horizons_ms: horizons_ms.to_vec(),
        horizon_frames: frames,
        rows,
    })
}
