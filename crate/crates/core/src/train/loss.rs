//! Training losses and evaluation metrics.
//!
//! Both losses average over every frame of the window, history included.
//! `ℓ_a` is the mean absolute error over all `(N+T)·K` entries. `ℓ_m` sums
//! the squared 3D displacement of each joint and divides by `J·(N+T)`.
//! Evaluation reports the unsquared per-joint distance instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    AngleMae,
    PositionMpjpe,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "angle_mae" | "mae" => Ok(LossKind::AngleMae),
            "position_mpjpe" | "mpjpe" => Ok(LossKind::PositionMpjpe),
            other => Err(format!("unknown loss `{other}`")),
        }
    }
}

fn check_same(op: &str, pred: &Tensor, truth: &Tensor) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(Error::Input(format!(
            "{op}: prediction {:?} and truth {:?} differ in shape",
            pred.shape(),
            truth.shape()
        )));
    }
    Ok(())
}

fn joints(op: &str, t: &Tensor, dims_per_joint: usize) -> Result<usize> {
    let k = t.cols();
    if dims_per_joint == 0 || !k.is_multiple_of(dims_per_joint) {
        return Err(Error::Input(format!(
            "{op}: {k} pose dimensions are not divisible into joints of {dims_per_joint}"
        )));
    }
    Ok(k / dims_per_joint)
}

/// Mean absolute error on the tape.
pub fn mae_var(tape: &mut Tape, pred: Var, truth: Var) -> Result<Var> {
    check_same("mae", tape.value(pred), tape.value(truth))?;
    let d = tape.sub(pred, truth)?;
    let a = tape.abs(d);
    Ok(tape.mean(a))
}

/// Squared per-joint position error on the tape.
pub fn mpjpe_var(tape: &mut Tape, pred: Var, truth: Var, dims_per_joint: usize) -> Result<Var> {
    check_same("mpjpe", tape.value(pred), tape.value(truth))?;
    let j = joints("mpjpe", tape.value(pred), dims_per_joint)?;
    let frames = tape.value(pred).rows();
    let d = tape.sub(pred, truth)?;
    let sq = tape.square(d);
    let total = tape.sum(sq);
    Ok(tape.scale(total, 1.0 / (j * frames) as f64))
}

pub fn loss_var(
    tape: &mut Tape,
    kind: LossKind,
    pred: Var,
    truth: Var,
    dims_per_joint: usize,
) -> Result<Var> {
    match kind {
        LossKind::AngleMae => mae_var(tape, pred, truth),
        LossKind::PositionMpjpe => mpjpe_var(tape, pred, truth, dims_per_joint),
    }
}

pub fn loss_mae(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    check_same("mae", pred, truth)?;
    let n = pred.len().max(1) as f64;
    Ok(pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n)
}

pub fn loss_mpjpe(pred: &Tensor, truth: &Tensor, dims_per_joint: usize) -> Result<f64> {
    check_same("mpjpe", pred, truth)?;
    let j = joints("mpjpe", pred, dims_per_joint)?;
    let sq: f64 = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq / (j * pred.rows()) as f64)
}

pub fn loss_value(
    kind: LossKind,
    pred: &Tensor,
    truth: &Tensor,
    dims_per_joint: usize,
) -> Result<f64> {
    match kind {
        LossKind::AngleMae => loss_mae(pred, truth),
        LossKind::PositionMpjpe => loss_mpjpe(pred, truth, dims_per_joint),
    }
}

/// Mean over joints of the Euclidean distance in one frame.
pub fn frame_joint_distance(pred: &[f64], truth: &[f64], dims_per_joint: usize) -> f64 {
    let j = pred.len() / dims_per_joint;
    let total: f64 = pred
        .chunks(dims_per_joint)
        .zip(truth.chunks(dims_per_joint))
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    total / j as f64
}

/// Mean absolute error in one frame.
pub fn frame_abs_error(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter()
        .zip(truth)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / pred.len() as f64
}

/// Mean per-joint distance over every frame.
pub fn mean_joint_distance(pred: &Tensor, truth: &Tensor, dims_per_joint: usize) -> Result<f64> {
    check_same("distance", pred, truth)?;
    joints("distance", pred, dims_per_joint)?;
    let total: f64 = (0..pred.rows())
        .map(|r| frame_joint_distance(pred.row(r), truth.row(r), dims_per_joint))
        .sum();
    Ok(total / pred.rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, r: usize, c: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn mae_examples() {
        let t = random(0, 3, 4);
        assert_eq!(loss_mae(&t, &t).unwrap(), 0.0);
        let shifted = t.map(|x| x + 0.5);
        assert!((loss_mae(&shifted, &t).unwrap() - 0.5).abs() < 1e-15);

        let p = random(1, 3, 4);
        let mut want = 0.0;
        for r in 0..3 {
            for c in 0..4 {
                want += (p.at(r, c) - t.at(r, c)).abs();
            }
        }
        assert!((loss_mae(&p, &t).unwrap() - want / 12.0).abs() < 1e-15);
        assert!(loss_mae(&p, &random(2, 3, 5)).is_err());
    }

    #[test]
    fn mpjpe_examples() {
        let t = random(3, 2, 6);
        assert_eq!(loss_mpjpe(&t, &t, 3).unwrap(), 0.0);

        let truth = Tensor::from_rows(&[&[0.0, 0.0, 0.0]]);
        let pred = Tensor::from_rows(&[&[3.0, 4.0, 0.0]]);
        assert_eq!(mean_joint_distance(&pred, &truth, 3).unwrap(), 5.0);
        assert_eq!(loss_mpjpe(&pred, &truth, 3).unwrap(), 25.0);

        let (p, tt) = (random(4, 3, 6), random(5, 3, 6));
        let mut want = 0.0;
        let mut dist = 0.0;
        for r in 0..3 {
            for j in 0..2 {
                let n2: f64 = (0..3)
                    .map(|c| (p.at(r, 3 * j + c) - tt.at(r, 3 * j + c)).powi(2))
                    .sum();
                want += n2;
                dist += n2.sqrt();
            }
        }
        assert!((loss_mpjpe(&p, &tt, 3).unwrap() - want / 6.0).abs() < 1e-12);
        assert!((mean_joint_distance(&p, &tt, 3).unwrap() - dist / 6.0).abs() < 1e-12);
        assert!(loss_mpjpe(&random(0, 2, 4), &random(1, 2, 4), 3).is_err());
    }

    #[test]
    fn tape_losses_match_plain_versions() {
        let (p, t) = (random(5, 4, 6), random(6, 4, 6));
        for kind in [LossKind::AngleMae, LossKind::PositionMpjpe] {
            let mut tape = Tape::new();
            let pv = tape.leaf(p.clone());
            let tv = tape.constant(t.clone());
            let l = loss_var(&mut tape, kind, pv, tv, 3).unwrap();
            assert!((tape.value(l).item() - loss_value(kind, &p, &t, 3).unwrap()).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn losses_are_permutation_invariant(seed in 0u64..500, shift in 0usize..4) {
            let (p, t) = (random(seed, 4, 6), random(seed + 1000, 4, 6));
            let order: Vec<usize> = (0..4).map(|i| (i + shift) % 4).collect();
            let permute_rows = |x: &Tensor| {
                let data = order.iter().flat_map(|&r| x.row(r).to_vec()).collect();
                Tensor::matrix(4, 6, data).unwrap()
            };
            let swap_joints = |x: &Tensor| {
                let data = (0..4).flat_map(|r| {
                    let row = x.row(r);
                    let mut v = row[3..].to_vec();
                    v.extend_from_slice(&row[..3]);
                    v
                }).collect();
                Tensor::matrix(4, 6, data).unwrap()
            };
            for kind in [LossKind::AngleMae, LossKind::PositionMpjpe] {
                let base = loss_value(kind, &p, &t, 3).unwrap();
                let a = loss_value(kind, &permute_rows(&p), &permute_rows(&t), 3).unwrap();
                let b = loss_value(kind, &swap_joints(&p), &swap_joints(&t), 3).unwrap();
                prop_assert!((a - base).abs() < 1e-12);
                prop_assert!((b - base).abs() < 1e-12);
            }
        }
    }
}
