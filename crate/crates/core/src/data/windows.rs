use serde::{Deserialize, Serialize};

use crate::data::MotionSequence;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// `N + T` contiguous frames cut from one source sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub source: usize,
    pub start: usize,
    pub n_history: usize,
    pub action: Option<String>,
    frames: Tensor,
}

impl Window {
    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn n_future(&self) -> usize {
        self.len() - self.n_history
    }

    pub fn dims(&self) -> usize {
        self.frames.cols()
    }

    pub fn history(&self) -> Tensor {
        self.rows(0, self.n_history)
    }

    pub fn future(&self) -> Tensor {
        self.rows(self.n_history, self.len())
    }

    fn rows(&self, a: usize, b: usize) -> Tensor {
        let k = self.dims();
        Tensor::matrix(b - a, k, self.frames.data()[a * k..b * k].to_vec()).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub split: Split,
    pub n_history: usize,
    pub n_future: usize,
    pub windows: Vec<Window>,
    /// Source sequences too short to yield any window.
    pub skipped: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Distinct action labels in first-seen order.
    pub fn actions(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for w in &self.windows {
            let a = w.action.clone().unwrap_or_else(|| "all".to_string());
            if !out.contains(&a) {
                out.push(a);
            }
        }
        out
    }
}

/// Every window of `n_history + n_future` frames whose start is a multiple
/// of `stride`, never crossing a sequence boundary.
pub fn make_windows(
    seqs: &[MotionSequence],
    n_history: usize,
    n_future: usize,
    stride: usize,
    split: Split,
) -> Result<WindowedDataset> {
    if n_history == 0 || n_future == 0 || stride == 0 {
        return Err(Error::Input(format!(
            "windowing needs N, T, stride >= 1 (got {n_history}, {n_future}, {stride})"
        )));
    }
    let len = n_history + n_future;
    let mut windows = Vec::new();
    let mut skipped = 0;
    for (si, s) in seqs.iter().enumerate() {
        if s.n_frames() < len {
            skipped += 1;
            continue;
        }
        let mut start = 0;
        while start + len <= s.n_frames() {
            let w = s.slice(start, len)?;
            windows.push(Window {
                source: si,
                start,
                n_history,
                action: s.action.clone(),
                frames: w.into_frames(),
            });
            start += stride;
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} sequence(s) shorter than {len} frames were skipped");
    }
    Ok(WindowedDataset {
        split,
        n_history,
        n_future,
        windows,
        skipped,
    })
}

/// Splits by sequence index: the first `n_train` sequences, the next `n_val`,
/// and the remainder as test.
pub fn split_sequences(
    seqs: &[MotionSequence],
    n_train: usize,
    n_val: usize,
) -> Result<(
    Vec<MotionSequence>,
    Vec<MotionSequence>,
    Vec<MotionSequence>,
)> {
    if n_train + n_val > seqs.len() {
        return Err(Error::Input(format!(
            "cannot take {n_train} train + {n_val} val from {} sequences",
            seqs.len()
        )));
    }
    let train = seqs[..n_train].to_vec();
    let val = seqs[n_train..n_train + n_val].to_vec();
    let test = seqs[n_train + n_val..].to_vec();
    Ok((train, val, test))
}
