//! Motion sequences and the `#motion v1` text format.
//!
//! A file holds one sequence. The first line is the header
//!
//! ```text
//! #motion v1 fps=<int> rep=<angle|position3d> action=<label>
//! ```
//!
//! with single spaces between fields, in that order. `action=` may be
//! omitted; a label never contains whitespace. Every following line is one
//! frame of `K` space-separated decimal numbers. Lines that are empty after
//! trimming are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MOTION_MAGIC: &str = "#motion";
pub const MOTION_VERSION: &str = "v1";
pub const MOTION_EXTENSION: &str = "motion";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Angle,
    #[serde(rename = "position3d")]
    Position3d,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Angle => "angle",
            Representation::Position3d => "position3d",
        }
    }
}

impl FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "angle" => Ok(Representation::Angle),
            "position3d" => Ok(Representation::Position3d),
            other => Err(format!("unknown representation `{other}`")),
        }
    }
}

/// `frames × K` pose matrix plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    frames: Tensor,
    pub fps: u32,
    pub action: Option<String>,
    pub representation: Representation,
}

impl MotionSequence {
    pub fn new(frames: Tensor, fps: u32, representation: Representation) -> Result<Self> {
        let (n, _) = frames.dims2()?;
        if n == 0 {
            return Err(Error::Input(
                "a motion sequence needs at least one frame".into(),
            ));
        }
        Ok(Self {
            frames,
            fps,
            action: None,
            representation,
        })
    }

    pub fn with_action(mut self, action: impl Into<String>) -> Self {
        self.action = Some(action.into());
        self
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn into_frames(self) -> Tensor {
        self.frames
    }

    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn dims(&self) -> usize {
        self.frames.cols()
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        self.frames.row(i)
    }

    /// Frames `start..start + len` as a new sequence with the same metadata.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.n_frames() {
            return Err(Error::Input(format!(
                "frame range {start}..{} outside sequence of {} frames",
                start + len,
                self.n_frames()
            )));
        }
        let k = self.dims();
        let data = self.frames.data()[start * k..(start + len) * k].to_vec();
        Ok(Self {
            frames: Tensor::matrix(len, k, data)?,
            fps: self.fps,
            action: self.action.clone(),
            representation: self.representation,
        })
    }

    /// Same metadata, different frames.
    pub fn with_frames(&self, frames: Tensor) -> Result<Self> {
        let mut out = Self::new(frames, self.fps, self.representation)?;
        out.action = self.action.clone();
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{MOTION_MAGIC} {MOTION_VERSION} fps={} rep={}",
            self.fps,
            self.representation.as_str()
        );
        if let Some(a) = &self.action {
            write!(s, " action={a}").unwrap();
        }
        s.push('\n');
        for i in 0..self.n_frames() {
            let row = self.frame(i);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    s.push(' ');
                }
                write!(s, "{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
        let (fps, representation, action) = parse_header(header).map_err(|m| perr(1, m))?;

        let mut data = Vec::new();
        let mut width: Option<usize> = None;
        let mut rows = 0;
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let before = data.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| perr(i + 1, format!("invalid number `{tok}`")))?;
                if !v.is_finite() {
                    return Err(perr(i + 1, format!("non-finite value `{tok}`")));
                }
                data.push(v);
            }
            let n = data.len() - before;
            match width {
                None => width = Some(n),
                Some(w) if w != n => {
                    return Err(perr(
                        i + 1,
                        format!("ragged row: expected {w} values, found {n}"),
                    ))
                }
                _ => {}
            }
            rows += 1;
        }
        let k = width.ok_or_else(|| perr(2, "no frames".into()))?;
        let frames = Tensor::matrix(rows, k, data)?;
        let mut seq = MotionSequence::new(frames, fps, representation)?;
        seq.action = action;
        Ok(seq)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn parse_header(line: &str) -> std::result::Result<(u32, Representation, Option<String>), String> {
    let mut fields = line.split(' ');
    if fields.next() != Some(MOTION_MAGIC) {
        return Err(format!("header must start with `{MOTION_MAGIC}`"));
    }
    match fields.next() {
        Some(MOTION_VERSION) => {}
        Some(v) => return Err(format!("unsupported format version `{v}`")),
        None => return Err("missing format version".into()),
    }
    let fps = fields
        .next()
        .and_then(|f| f.strip_prefix("fps="))
        .ok_or("expected `fps=<int>`")?
        .parse::<u32>()
        .map_err(|e| format!("fps: {e}"))?;
    if fps == 0 {
        return Err("fps must be positive".into());
    }
    let rep = fields
        .next()
        .and_then(|f| f.strip_prefix("rep="))
        .ok_or("expected `rep=<angle|position3d>`")?
        .parse::<Representation>()?;
    let action = match fields.next() {
        None => None,
        Some(f) => {
            let label = f
                .strip_prefix("action=")
                .ok_or("expected `action=<label>`")?;
            if label.is_empty() {
                return Err("empty action label".into());
            }
            Some(label.to_string())
        }
    };
    if let Some(extra) = fields.next() {
        return Err(format!("unexpected header field `{extra}`"));
    }
    Ok((fps, rep, action))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MotionFormat {
    #[default]
    MotionV1,
}

/// Optional cleanup applied after loading.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocess {
    /// Decimate to this rate; the source rate must be an integer multiple.
    pub target_fps: Option<u32>,
    /// Drop columns whose variance over the whole corpus is below the threshold.
    pub drop_constant: bool,
    pub variance_threshold: f64,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            target_fps: None,
            drop_constant: false,
            variance_threshold: 1e-8,
        }
    }
}

/// Columns removed by preprocessing, with the constant value each held.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColumnMask {
    pub full_dims: usize,
    pub dropped: Vec<(usize, f64)>,
}

pub const MASK_MAGIC: &str = "#mask";

impl ColumnMask {
    pub fn identity(dims: usize) -> Self {
        Self {
            full_dims: dims,
            dropped: Vec::new(),
        }
    }

    pub fn kept_dims(&self) -> usize {
        self.full_dims - self.dropped.len()
    }

    pub fn kept_columns(&self) -> Vec<usize> {
        (0..self.full_dims)
            .filter(|c| !self.dropped.iter().any(|(d, _)| d == c))
            .collect()
    }

    /// Restores dropped columns with their recorded constants.
    pub fn reinsert(&self, seq: &MotionSequence) -> Result<MotionSequence> {
        if seq.dims() != self.kept_dims() {
            return Err(Error::Schema(format!(
                "sequence has {} columns, mask keeps {}",
                seq.dims(),
                self.kept_dims()
            )));
        }
        let n = seq.n_frames();
        let kept = self.kept_columns();
        let mut out = Tensor::zeros(&[n, self.full_dims]);
        for f in 0..n {
            for (src, &dst) in kept.iter().enumerate() {
                out.set(f, dst, seq.frames().at(f, src));
            }
            for &(c, v) in &self.dropped {
                out.set(f, c, v);
            }
        }
        seq.with_frames(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MASK_MAGIC} v1 dims={}\n", self.full_dims);
        for (c, v) in &self.dropped {
            writeln!(s, "{c} {v}").unwrap();
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| perr(1, "empty mask file".into()))?;
        let full_dims = header
            .strip_prefix("#mask v1 dims=")
            .ok_or_else(|| perr(1, "expected `#mask v1 dims=<int>`".into()))?
            .parse::<usize>()
            .map_err(|e| perr(1, e.to_string()))?;
        let mut dropped = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let c = it
                .next()
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| perr(i + 2, "expected column index".into()))?;
            let v = it
                .next()
                .and_then(|t| t.parse::<f64>().ok())
                .ok_or_else(|| perr(i + 2, "expected constant value".into()))?;
            if c >= full_dims {
                return Err(perr(i + 2, format!("column {c} >= dims {full_dims}")));
            }
            dropped.push((c, v));
        }
        Ok(Self { full_dims, dropped })
    }
}

/// Applies [`Preprocess`] to a corpus. Running it on its own output is a no-op.
pub fn preprocess(
    seqs: &[MotionSequence],
    opts: &Preprocess,
) -> Result<(Vec<MotionSequence>, ColumnMask)> {
    let dims = check_consistent_dims(seqs)?;
    let mut out = Vec::with_capacity(seqs.len());
    for s in seqs {
        out.push(match opts.target_fps {
            Some(target) => decimate(s, target)?,
            None => s.clone(),
        });
    }
    if !opts.drop_constant || out.is_empty() {
        return Ok((out, ColumnMask::identity(dims)));
    }

    let total: usize = out.iter().map(|s| s.n_frames()).sum();
    let mut mean = vec![0.0; dims];
    for s in &out {
        for f in 0..s.n_frames() {
            for (m, v) in mean.iter_mut().zip(s.frame(f)) {
                *m += v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= total as f64);
    let mut var = vec![0.0; dims];
    for s in &out {
        for f in 0..s.n_frames() {
            for ((acc, v), m) in var.iter_mut().zip(s.frame(f)).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
    }
    let dropped: Vec<(usize, f64)> = var
        .iter()
        .enumerate()
        .filter(|(_, v)| **v / (total as f64) < opts.variance_threshold)
        .map(|(c, _)| (c, out[0].frame(0)[c]))
        .collect();
    let mask = ColumnMask {
        full_dims: dims,
        dropped,
    };
    if mask.dropped.is_empty() {
        return Ok((out, mask));
    }
    let kept = mask.kept_columns();
    let projected = out
        .iter()
        .map(|s| {
            let n = s.n_frames();
            let mut data = Vec::with_capacity(n * kept.len());
            for f in 0..n {
                let row = s.frame(f);
                data.extend(kept.iter().map(|&c| row[c]));
            }
            s.with_frames(Tensor::matrix(n, kept.len(), data)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((projected, mask))
}

fn check_consistent_dims(seqs: &[MotionSequence]) -> Result<usize> {
    let Some(first) = seqs.first() else {
        return Ok(0);
    };
    let k = first.dims();
    if let Some((i, s)) = seqs.iter().enumerate().find(|(_, s)| s.dims() != k) {
        return Err(Error::Schema(format!(
            "sequence {i} has {} dimensions, expected {k}",
            s.dims()
        )));
    }
    Ok(k)
}

/// Keeps every `fps / target`-th frame.
pub fn decimate(seq: &MotionSequence, target_fps: u32) -> Result<MotionSequence> {
    if target_fps == 0 || !seq.fps.is_multiple_of(target_fps) {
        return Err(Error::Input(format!(
            "cannot decimate {} fps to {target_fps} fps by an integer stride",
            seq.fps
        )));
    }
    let stride = (seq.fps / target_fps) as usize;
    if stride == 1 {
        return Ok(seq.clone());
    }
    let k = seq.dims();
    let mut data = Vec::new();
    let mut n = 0;
    for f in (0..seq.n_frames()).step_by(stride) {
        data.extend_from_slice(seq.frame(f));
        n += 1;
    }
    let mut out = seq.with_frames(Tensor::matrix(n, k, data)?)?;
    out.fps = target_fps;
    Ok(out)
}

/// Loads one file, or every `*.motion` file of a directory in name order.
pub fn load_sequences(
    path: &Path,
    _fmt: MotionFormat,
    opts: &Preprocess,
) -> Result<(Vec<MotionSequence>, ColumnMask)> {
    let files = motion_files(path)?;
    let seqs = files
        .iter()
        .map(|f| MotionSequence::read(f))
        .collect::<Result<Vec<_>>>()?;
    if seqs.is_empty() {
        return Err(Error::Input(format!(
            "no .motion files under {}",
            path.display()
        )));
    }
    preprocess(&seqs, opts)
}

pub fn motion_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let rd = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == MOTION_EXTENSION))
        .collect();
    files.sort();
    Ok(files)
}
