//! Trajectory encoding with the orthonormal DCT-II.
//!
//! Each pose dimension is treated as an independent signal over time. For a
//! sequence of `L` frames the basis is the `L × D` matrix
//!
//! ```text
//! B[n][d] = c_d · cos(π (2n + 1) d / (2L)),   c_0 = √(1/L), c_d = √(2/L)
//! ```
//!
//! so encoding an `L × K` sequence `S` is `Sᵀ·B` (one row of coefficients per
//! dimension) and decoding is `B·Fᵀ`. With `D = L` the basis is orthogonal and
//! the round trip is exact up to rounding; with `D < L` decoding yields the
//! least-squares projection onto the first `D` cosines.

use serde::{Deserialize, Serialize};

use crate::data::MotionSequence;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DctConfig {
    pub n_history: usize,
    pub n_future: usize,
    pub n_coeffs: usize,
}

impl DctConfig {
    /// Untruncated: `D = N + T`.
    pub fn full(n_history: usize, n_future: usize) -> Self {
        Self {
            n_history,
            n_future,
            n_coeffs: n_history + n_future,
        }
    }

    pub fn window_len(&self) -> usize {
        self.n_history + self.n_future
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_history == 0 {
            return Err(Error::Validation("n_history must be at least 1".into()));
        }
        if self.n_coeffs == 0 || self.n_coeffs > self.window_len() {
            return Err(Error::Validation(format!(
                "n_coeffs must be in 1..={}, got {}",
                self.window_len(),
                self.n_coeffs
            )));
        }
        Ok(())
    }
}

/// `K × D` matrix of DCT coefficients, one row per pose dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffMatrix(pub Tensor);

impl CoeffMatrix {
    pub fn dims(&self) -> usize {
        self.0.rows()
    }

    pub fn n_coeffs(&self) -> usize {
        self.0.cols()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Extends a history with `t_future` copies of its last frame.
pub fn pad_replicate(seq: &MotionSequence, t_future: usize) -> Result<MotionSequence> {
    seq.with_frames(pad_frames(seq.frames(), t_future)?)
}

/// [`pad_replicate`] on a bare `N × K` frame matrix.
pub fn pad_frames(frames: &Tensor, t_future: usize) -> Result<Tensor> {
    let (n, k) = frames.dims2()?;
    if n == 0 {
        return Err(Error::Input("cannot pad an empty sequence".into()));
    }
    let mut data = frames.data().to_vec();
    data.reserve(t_future * k);
    let last = frames.row(n - 1).to_vec();
    for _ in 0..t_future {
        data.extend_from_slice(&last);
    }
    Ok(Tensor::matrix(n + t_future, k, data)?)
}

/// `L × D` orthonormal DCT-II basis matrix.
pub fn dct_basis(len: usize, n_coeffs: usize) -> Tensor {
    let mut b = Tensor::zeros(&[len, n_coeffs]);
    let l = len as f64;
    for n in 0..len {
        for d in 0..n_coeffs {
            let c = if d == 0 {
                (1.0 / l).sqrt()
            } else {
                (2.0 / l).sqrt()
            };
            let angle = std::f64::consts::PI * (2 * n + 1) as f64 * d as f64 / (2.0 * l);
            b.set(n, d, c * angle.cos());
        }
    }
    b
}

/// Precomputed basis for one `(length, D)` pair.
#[derive(Debug, Clone)]
pub struct DctCodec {
    basis: Tensor,
}

impl DctCodec {
    pub fn new(len: usize, n_coeffs: usize) -> Result<Self> {
        if len == 0 || n_coeffs == 0 || n_coeffs > len {
            return Err(Error::Input(format!(
                "DCT needs 1 <= D <= length, got D={n_coeffs}, length={len}"
            )));
        }
        Ok(Self {
            basis: dct_basis(len, n_coeffs),
        })
    }

    pub fn from_config(cfg: &DctConfig) -> Result<Self> {
        cfg.validate()?;
        Self::new(cfg.window_len(), cfg.n_coeffs)
    }

    pub fn len(&self) -> usize {
        self.basis.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn n_coeffs(&self) -> usize {
        self.basis.cols()
    }

    pub fn basis(&self) -> &Tensor {
        &self.basis
    }

    /// `L × K` frames to `K × D` coefficients.
    pub fn encode(&self, frames: &Tensor) -> Result<CoeffMatrix> {
        let (n, _) = frames.dims2()?;
        if n != self.len() {
            return Err(Error::Input(format!(
                "sequence has {n} frames, codec expects {}",
                self.len()
            )));
        }
        Ok(CoeffMatrix(frames.transposed()?.matmul(&self.basis)?))
    }

    /// `K × D` coefficients to `L × K` frames.
    pub fn decode(&self, coeffs: &CoeffMatrix) -> Result<Tensor> {
        if coeffs.n_coeffs() != self.n_coeffs() {
            return Err(Error::Input(format!(
                "got {} coefficients, codec expects {}",
                coeffs.n_coeffs(),
                self.n_coeffs()
            )));
        }
        Ok(self.basis.matmul(&coeffs.0.transposed()?)?)
    }

    pub fn encode_seq(&self, seq: &MotionSequence) -> Result<CoeffMatrix> {
        self.encode(seq.frames())
    }

    /// Differentiable encode on a tape.
    pub fn encode_var(&self, tape: &mut Tape, frames: Var) -> Result<Var> {
        let n = tape.value(frames).rows();
        if n != self.len() {
            return Err(Error::Input(format!(
                "sequence has {n} frames, codec expects {}",
                self.len()
            )));
        }
        let b = tape.constant(self.basis.clone());
        let t = tape.transpose(frames)?;
        Ok(tape.matmul(t, b)?)
    }

    /// Differentiable decode on a tape.
    pub fn decode_var(&self, tape: &mut Tape, coeffs: Var) -> Result<Var> {
        let b = tape.constant(self.basis.clone());
        let t = tape.transpose(coeffs)?;
        Ok(tape.matmul(b, t)?)
    }
}

/// Convenience wrapper: encode a `(N+T) × K` sequence with its config.
pub fn dct_encode(seq: &MotionSequence, cfg: &DctConfig) -> Result<CoeffMatrix> {
    if seq.n_frames() != cfg.window_len() {
        return Err(Error::Input(format!(
            "sequence has {} frames, expected N+T = {}",
            seq.n_frames(),
            cfg.window_len()
        )));
    }
    DctCodec::from_config(cfg)?.encode_seq(seq)
}

/// Inverse of [`dct_encode`], zero-padding missing high-order coefficients.
pub fn dct_decode(coeffs: &CoeffMatrix, len: usize) -> Result<Tensor> {
    if coeffs.n_coeffs() > len {
        return Err(Error::Input(format!(
            "{} coefficients exceed sequence length {len}",
            coeffs.n_coeffs()
        )));
    }
    DctCodec::new(len, coeffs.n_coeffs())?.decode(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Representation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct O(L²) DCT-II summation, written independently of the basis matrix.
    fn direct_dct(x: &[f64]) -> Vec<f64> {
        let l = x.len();
        (0..l)
            .map(|k| {
                let s: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(n, v)| {
                        v * (std::f64::consts::PI / l as f64 * (n as f64 + 0.5) * k as f64).cos()
                    })
                    .sum();
                let scale = if k == 0 {
                    (1.0 / l as f64).sqrt()
                } else {
                    (2.0 / l as f64).sqrt()
                };
                scale * s
            })
            .collect()
    }

    fn direct_idct(c: &[f64], l: usize) -> Vec<f64> {
        (0..l)
            .map(|n| {
                c.iter()
                    .enumerate()
                    .map(|(k, v)| {
                        let scale = if k == 0 {
                            (1.0 / l as f64).sqrt()
                        } else {
                            (2.0 / l as f64).sqrt()
                        };
                        scale
                            * v
                            * (std::f64::consts::PI / l as f64 * (n as f64 + 0.5) * k as f64).cos()
                    })
                    .sum()
            })
            .collect()
    }

    fn seq(frames: Tensor) -> MotionSequence {
        MotionSequence::new(frames, 25, Representation::Angle).unwrap()
    }

    #[test]
    fn pad_examples() {
        let s = seq(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let p = pad_replicate(&s, 2).unwrap();
        assert_eq!(
            p.frames(),
            &Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[3.0, 4.0], &[3.0, 4.0]])
        );
        assert_eq!(pad_replicate(&s, 0).unwrap(), s);
        let one = seq(Tensor::from_rows(&[&[5.0]]));
        let p = pad_replicate(&one, 3).unwrap();
        assert_eq!(p.frames().data(), &[5.0; 4]);
    }

    #[test]
    fn constant_trajectory_is_dc_only() {
        let l = 7;
        let c = 1.7;
        let codec = DctCodec::new(l, l).unwrap();
        let f = codec.encode(&Tensor::filled(&[l, 1], c)).unwrap();
        assert!((f.0.at(0, 0) - c * (l as f64).sqrt()).abs() < 1e-12);
        for d in 1..l {
            assert!(f.0.at(0, d).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_matches_direct_summation() {
        let codec = DctCodec::new(4, 4).unwrap();
        let x = [1.0, 0.0, 0.0, 0.0];
        let f = codec
            .encode(&Tensor::matrix(4, 1, x.to_vec()).unwrap())
            .unwrap();
        let expect = direct_dct(&x);
        // frozen from the direct formula: [0.5, 0.6532815, 0.5, 0.2705981]
        assert!((expect[1] - 0.653_281_482_438_188_3).abs() < 1e-12);
        for (a, b) in f.0.data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coefficients_decode_to_zero() {
        let out = dct_decode(&CoeffMatrix(Tensor::zeros(&[3, 5])), 8).unwrap();
        assert_eq!(out, Tensor::zeros(&[8, 3]));
    }

    #[test]
    fn truncated_roundtrip_is_low_pass_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = 12;
        let x: Vec<f64> = (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d = l / 2;
        let codec = DctCodec::new(l, d).unwrap();
        let f = codec
            .encode(&Tensor::matrix(l, 1, x.clone()).unwrap())
            .unwrap();
        let back = codec.decode(&f).unwrap();
        let mut coeffs = direct_dct(&x);
        coeffs.truncate(d);
        let expect = direct_idct(&coeffs, l);
        for (a, b) in back.data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_rejects_too_many_coefficients() {
        assert!(dct_decode(&CoeffMatrix(Tensor::zeros(&[2, 6])), 5).is_err());
        let s = seq(Tensor::zeros(&[5, 2]));
        assert!(dct_encode(&s, &DctConfig::full(3, 3)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(DctConfig::full(10, 10).validate().is_ok());
        assert!(DctConfig {
            n_history: 10,
            n_future: 10,
            n_coeffs: 21
        }
        .validate()
        .is_err());
        assert!(DctConfig {
            n_history: 10,
            n_future: 10,
            n_coeffs: 0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn reconstruction_error_non_increasing_in_d() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = 16;
        let x =
            Tensor::matrix(l, 3, (0..l * 3).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut prev = f64::INFINITY;
        for d in 1..=l {
            let codec = DctCodec::new(l, d).unwrap();
            let back = codec.decode(&codec.encode(&x).unwrap()).unwrap();
            let err: f64 = back
                .data()
                .iter()
                .zip(x.data())
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            assert!(err <= prev + 1e-12, "D={d}: {err} > {prev}");
            prev = err;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn encode_var_gradient_is_transposed_basis() {
        let l = 6;
        let codec = DctCodec::new(l, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 =
            Tensor::matrix(l, 2, (0..l * 2).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let w = Tensor::matrix(2, 4, (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();

        let loss_of = |x: &Tensor| -> f64 {
            let f = codec.encode(x).unwrap();
            f.0.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
        };
        let mut tape = Tape::new();
        let xv = tape.leaf(x0.clone());
        let f = codec.encode_var(&mut tape, xv).unwrap();
        assert!(tape.value(f).max_abs_diff(&codec.encode(&x0).unwrap().0) < 1e-15);
        let wv = tape.constant(w.clone());
        let p = tape.mul(f, wv).unwrap();
        let loss = tape.sum(p);
        tape.backward(loss).unwrap();
        let g = tape.grad(xv).unwrap();

        // analytic: B·wᵀ
        let expect = codec.basis().matmul(&w.transposed().unwrap()).unwrap();
        assert!(g.max_abs_diff(&expect) < 1e-12);

        let eps = 1e-6;
        for k in 0..x0.len() {
            let mut a = x0.clone();
            a.data_mut()[k] += eps;
            let mut b = x0.clone();
            b.data_mut()[k] -= eps;
            let num = (loss_of(&a) - loss_of(&b)) / (2.0 * eps);
            assert!((num - g.data()[k]).abs() < 1e-7);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn frames() -> impl Strategy<Value = Tensor> {
            (1usize..40, 1usize..4).prop_flat_map(|(l, k)| {
                prop::collection::vec(-10.0f64..10.0, l * k)
                    .prop_map(move |v| Tensor::matrix(l, k, v).unwrap())
            })
        }

        proptest! {
            #[test]
            fn roundtrip_and_parseval(x in frames()) {
                let codec = DctCodec::new(x.rows(), x.rows()).unwrap();
                let f = codec.encode(&x).unwrap();
                prop_assert!((f.0.norm() - x.norm()).abs() < 1e-9);
                let back = codec.decode(&f).unwrap();
                prop_assert!(back.max_abs_diff(&x) < 1e-9);
            }

            #[test]
            fn linearity(x in frames(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let y = x.map(|v| (v * 1.3).sin());
                let codec = DctCodec::new(x.rows(), x.rows()).unwrap();
                let combo = Tensor::new(
                    x.shape().to_vec(),
                    x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect(),
                ).unwrap();
                let lhs = codec.encode(&combo).unwrap().0;
                let fx = codec.encode(&x).unwrap().0;
                let fy = codec.encode(&y).unwrap().0;
                for i in 0..lhs.len() {
                    prop_assert!((lhs.data()[i] - (a * fx.data()[i] + b * fy.data()[i])).abs() < 1e-9);
                }
            }
        }
    }
}
