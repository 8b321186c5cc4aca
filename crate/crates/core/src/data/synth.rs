//! Synthetic motion for tests and demos.
//!
//! With `group_correlated` set, every joint of a scale-2 component follows
//! the component's shared latent trajectory (with its own gain and a small
//! phase lag) plus a weak private trajectory, so dimensions of the same
//! component are strongly correlated and dimensions of different components
//! are not.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{MotionSequence, Representation};
use crate::error::{Error, Result};
use crate::skeleton::SkeletonConfig;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Sinusoidal,
    PiecewiseLinear,
    Mixed,
}

impl std::str::FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sinusoidal" => Ok(SynthKind::Sinusoidal),
            "piecewise_linear" | "piecewise-linear" => Ok(SynthKind::PiecewiseLinear),
            "mixed" => Ok(SynthKind::Mixed),
            other => Err(format!("unknown synthetic kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub kind: SynthKind,
    pub n_frames: usize,
    pub fps: u32,
    pub seed: u64,
    pub group_correlated: bool,
    /// Sinusoid frequency range in Hz.
    pub freq_range: (f64, f64),
    pub amplitude_range: (f64, f64),
}

impl SynthOptions {
    pub fn new(kind: SynthKind, n_frames: usize, seed: u64) -> Self {
        Self {
            kind,
            n_frames,
            fps: 25,
            seed,
            group_correlated: false,
            freq_range: (0.2, 2.0),
            amplitude_range: (0.1, 1.0),
        }
    }

    pub fn correlated(mut self) -> Self {
        self.group_correlated = true;
        self
    }
}

struct Sine {
    amp: f64,
    freq: f64,
    phase: f64,
}

impl Sine {
    fn at(&self, t: f64) -> f64 {
        self.amp * (2.0 * PI * self.freq * t + self.phase).sin()
    }
}

/// Linear interpolation through random knots.
struct Piecewise {
    knots: Vec<(usize, f64)>,
}

impl Piecewise {
    fn random(rng: &mut ChaCha8Rng, n_frames: usize, amp: f64) -> Self {
        let mut knots = vec![(0, rng.gen_range(-amp..=amp))];
        let mut f = 0;
        while f < n_frames.saturating_sub(1) {
            f = (f + rng.gen_range(5..=15)).min(n_frames.saturating_sub(1));
            knots.push((f, rng.gen_range(-amp..=amp)));
        }
        Self { knots }
    }

    fn at(&self, frame: usize) -> f64 {
        match self.knots.iter().position(|&(k, _)| k >= frame) {
            Some(0) | None => self.knots.first().map_or(0.0, |k| k.1),
            Some(i) => {
                let (f0, v0) = self.knots[i - 1];
                let (f1, v1) = self.knots[i];
                let a = (frame - f0) as f64 / (f1 - f0) as f64;
                v0 + a * (v1 - v0)
            }
        }
    }
}

/// One trajectory source: sinusoid, piecewise-linear curve, or their sum.
struct Signal {
    sine: Option<Sine>,
    pw: Option<Piecewise>,
}

impl Signal {
    fn random(rng: &mut ChaCha8Rng, opts: &SynthOptions, freq: f64, amp: f64) -> Self {
        let sine = |rng: &mut ChaCha8Rng| Sine {
            amp,
            freq,
            phase: rng.gen_range(0.0..2.0 * PI),
        };
        match opts.kind {
            SynthKind::Sinusoidal => Signal {
                sine: Some(sine(rng)),
                pw: None,
            },
            SynthKind::PiecewiseLinear => Signal {
                sine: None,
                pw: Some(Piecewise::random(rng, opts.n_frames, amp)),
            },
            SynthKind::Mixed => {
                let s = sine(rng);
                Signal {
                    sine: Some(s),
                    pw: Some(Piecewise::random(rng, opts.n_frames, 0.5 * amp)),
                }
            }
        }
    }

    fn at(&self, frame: usize, fps: u32) -> f64 {
        let t = frame as f64 / fps as f64;
        self.sine.as_ref().map_or(0.0, |s| s.at(t)) + self.pw.as_ref().map_or(0.0, |p| p.at(frame))
    }
}

type Track = Box<dyn Fn(usize) -> f64>;

/// Deterministic synthetic `position3d` sequence for a skeleton.
pub fn synth_motion(cfg: &SkeletonConfig, opts: &SynthOptions) -> Result<MotionSequence> {
    if opts.n_frames == 0 || opts.fps == 0 {
        return Err(Error::Input(
            "synthetic sequences need frames and a frame rate".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let d = cfg.dims_per_joint;
    let (flo, fhi) = opts.freq_range;
    let (alo, ahi) = opts.amplitude_range;
    let k = cfg.pose_dims();

    let mut signals: Vec<Track> = Vec::with_capacity(k);
    if opts.group_correlated {
        let mut per_joint: Vec<Option<Vec<Track>>> = (0..cfg.n_joints()).map(|_| None).collect();
        for g in &cfg.s1_to_s2 {
            let freq = rng.gen_range(flo..=fhi);
            let shared: Vec<(f64, f64, usize)> = (0..d)
                .map(|_| {
                    (
                        rng.gen_range(alo..=ahi),
                        rng.gen_range(0.0..2.0 * PI),
                        rng.gen(),
                    )
                })
                .collect();
            for &j in &g.members {
                let gain = rng.gen_range(0.7..=1.0);
                let lag = rng.gen_range(-0.3..=0.3);
                let own_freq = rng.gen_range(flo..=fhi);
                let mut dims: Vec<Track> = Vec::with_capacity(d);
                for &(amp, phase, pw_seed) in &shared {
                    let offset = rng.gen_range(-0.5..=0.5);
                    let private = Signal::random(&mut rng, opts, own_freq, 0.1 * amp);
                    let mut lrng = ChaCha8Rng::seed_from_u64(pw_seed as u64);
                    let mut latent = Signal::random(&mut lrng, opts, freq, amp);
                    if let Some(s) = latent.sine.as_mut() {
                        s.phase = phase + lag;
                    }
                    let fps = opts.fps;
                    dims.push(Box::new(move |f| {
                        offset + gain * latent.at(f, fps) + private.at(f, fps)
                    }));
                }
                per_joint[j] = Some(dims);
            }
        }
        for dims in per_joint {
            signals.extend(dims.expect("partition covers every joint"));
        }
    } else {
        for _ in 0..cfg.n_joints() {
            let freq = rng.gen_range(flo..=fhi);
            for _ in 0..d {
                let amp = rng.gen_range(alo..=ahi);
                let offset = rng.gen_range(-0.5..=0.5);
                let s = Signal::random(&mut rng, opts, freq, amp);
                let fps = opts.fps;
                signals.push(Box::new(move |f| offset + s.at(f, fps)));
            }
        }
    }

    let mut data = Vec::with_capacity(opts.n_frames * k);
    for f in 0..opts.n_frames {
        data.extend(signals.iter().map(|s| s(f)));
    }
    let frames = Tensor::matrix(opts.n_frames, k, data)?;
    let label = match opts.kind {
        SynthKind::Sinusoidal => "sinusoidal",
        SynthKind::PiecewiseLinear => "piecewise_linear",
        SynthKind::Mixed => "mixed",
    };
    Ok(MotionSequence::new(frames, opts.fps, Representation::Position3d)?.with_action(label))
}

/// `count` sequences with seeds `opts.seed, opts.seed + 1, ...`.
pub fn synth_corpus(
    cfg: &SkeletonConfig,
    opts: &SynthOptions,
    count: usize,
) -> Result<Vec<MotionSequence>> {
    (0..count)
        .map(|i| {
            let mut o = opts.clone();
            o.seed = opts.seed.wrapping_add(i as u64);
            synth_motion(cfg, &o)
        })
        .collect()
}
