//! Scale transformation: joints → components → limbs and back.
//!
//! Aggregation gives every coarse node its own small MLP that reads the
//! concatenated feature rows of its members and emits one row. Expansion
//! mirrors it: one MLP per coarse node emits the rows of all joints the node
//! covers, which are then scattered back into joint order.

use rand_chacha::ChaCha8Rng;

use super::layers::Mlp;
use super::params::ParamStore;
use crate::error::Result;
use crate::skeleton::{ScaleId, SkeletonConfig};
use crate::tensor::{Tape, Tensor, Var};

/// Node membership for every scale change the network performs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMaps {
    pub n_joints: usize,
    /// s1 node indices per s2 node.
    pub s1_to_s2: Vec<Vec<usize>>,
    /// s2 node indices per s3 node.
    pub s2_to_s3: Vec<Vec<usize>>,
    /// Joints covered by each s2 node.
    pub s2_joints: Vec<Vec<usize>>,
    /// Joints covered by each s3 node.
    pub s3_joints: Vec<Vec<usize>>,
}

impl ScaleMaps {
    pub fn new(cfg: &SkeletonConfig) -> Self {
        Self {
            n_joints: cfg.n_joints(),
            s1_to_s2: cfg
                .groups(ScaleId::S1)
                .iter()
                .map(|g| g.members.clone())
                .collect(),
            s2_to_s3: cfg
                .groups(ScaleId::S2)
                .iter()
                .map(|g| g.members.clone())
                .collect(),
            s2_joints: cfg.joint_groups(ScaleId::S2),
            s3_joints: cfg.joint_groups(ScaleId::S3),
        }
    }
}

/// The four MLP families of a learned scale transformation.
#[derive(Debug, Clone)]
pub struct StmMlps {
    pub agg12: Vec<Mlp>,
    pub agg23: Vec<Mlp>,
    pub exp2: Vec<Mlp>,
    pub exp3: Vec<Mlp>,
}

#[derive(Debug, Clone)]
pub enum Stm {
    Learned(StmMlps),
    /// Group mean for aggregation, broadcast for expansion.
    MeanPool,
}

impl Stm {
    pub(crate) fn learned(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        maps: &ScaleMaps,
        width: usize,
        hidden: usize,
    ) -> Self {
        let agg =
            |store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, groups: &[Vec<usize>]| {
                groups
                    .iter()
                    .enumerate()
                    .map(|(k, g)| {
                        Mlp::new(
                            store,
                            rng,
                            &format!("{name}.{k}"),
                            &[g.len() * width, hidden, width],
                        )
                    })
                    .collect::<Vec<_>>()
            };
        let exp =
            |store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, groups: &[Vec<usize>]| {
                groups
                    .iter()
                    .enumerate()
                    .map(|(k, g)| {
                        Mlp::new(
                            store,
                            rng,
                            &format!("{name}.{k}"),
                            &[width, hidden, g.len() * width],
                        )
                    })
                    .collect::<Vec<_>>()
            };
        let agg12 = agg(store, rng, "stm.agg12", &maps.s1_to_s2);
        let agg23 = agg(store, rng, "stm.agg23", &maps.s2_to_s3);
        let exp2 = exp(store, rng, "stm.exp2", &maps.s2_joints);
        let exp3 = exp(store, rng, "stm.exp3", &maps.s3_joints);
        Stm::Learned(StmMlps {
            agg12,
            agg23,
            exp2,
            exp3,
        })
    }

    /// s1 → s2 (`from = S1`) or s2 → s3 (`from = S2`).
    pub fn aggregate(
        &self,
        tape: &mut Tape,
        params: &[Var],
        maps: &ScaleMaps,
        from: ScaleId,
        src: Var,
    ) -> Result<Var> {
        let groups = match from {
            ScaleId::S1 => &maps.s1_to_s2,
            _ => &maps.s2_to_s3,
        };
        match self {
            Stm::Learned(m) => {
                let mlps = if from == ScaleId::S1 {
                    &m.agg12
                } else {
                    &m.agg23
                };
                aggregate_mlp(tape, params, mlps, groups, src)
            }
            Stm::MeanPool => {
                let n_src = tape.value(src).rows();
                let p = tape.constant(pool_matrix(groups, n_src));
                Ok(tape.matmul(p, src)?)
            }
        }
    }

    /// s2 or s3 features expanded to one row per joint.
    pub fn expand(
        &self,
        tape: &mut Tape,
        params: &[Var],
        maps: &ScaleMaps,
        scale: ScaleId,
        src: Var,
    ) -> Result<Var> {
        let groups = match scale {
            ScaleId::S3 => &maps.s3_joints,
            _ => &maps.s2_joints,
        };
        match self {
            Stm::Learned(m) => {
                let mlps = if scale == ScaleId::S3 {
                    &m.exp3
                } else {
                    &m.exp2
                };
                expand_mlp(tape, params, mlps, groups, maps.n_joints, src)
            }
            Stm::MeanPool => {
                let b = tape.constant(broadcast_matrix(groups, maps.n_joints));
                Ok(tape.matmul(b, src)?)
            }
        }
    }
}

/// One MLP per coarse node over its members' concatenated rows.
pub fn aggregate_mlp(
    tape: &mut Tape,
    params: &[Var],
    mlps: &[Mlp],
    groups: &[Vec<usize>],
    src: Var,
) -> Result<Var> {
    let mut rows = Vec::with_capacity(groups.len());
    for (mlp, g) in mlps.iter().zip(groups) {
        let members = tape.select_rows(src, g)?;
        let flat = tape.reshape(members, &[1, tape.value(members).len()])?;
        rows.push(mlp.forward(tape, params, flat)?);
    }
    Ok(tape.concat_rows(&rows)?)
}

/// One MLP per coarse node emitting its joints' rows, scattered into joint
/// order.
pub fn expand_mlp(
    tape: &mut Tape,
    params: &[Var],
    mlps: &[Mlp],
    joint_groups: &[Vec<usize>],
    n_joints: usize,
    src: Var,
) -> Result<Var> {
    let width = tape.value(src).cols();
    let mut blocks = Vec::with_capacity(joint_groups.len());
    for (k, (mlp, g)) in mlps.iter().zip(joint_groups).enumerate() {
        let row = tape.select_rows(src, &[k])?;
        let out = mlp.forward(tape, params, row)?;
        blocks.push(tape.reshape(out, &[g.len(), width])?);
    }
    let stacked = tape.concat_rows(&blocks)?;
    let mut position = vec![0; n_joints];
    for (i, &j) in joint_groups.iter().flatten().enumerate() {
        position[j] = i;
    }
    Ok(tape.select_rows(stacked, &position)?)
}

/// `n_groups × n_src` averaging matrix.
pub fn pool_matrix(groups: &[Vec<usize>], n_src: usize) -> Tensor {
    let mut p = Tensor::zeros(&[groups.len(), n_src]);
    for (k, g) in groups.iter().enumerate() {
        for &m in g {
            p.set(k, m, 1.0 / g.len() as f64);
        }
    }
    p
}

/// `n_joints × n_groups` membership matrix.
pub fn broadcast_matrix(groups: &[Vec<usize>], n_joints: usize) -> Tensor {
    let mut b = Tensor::zeros(&[n_joints, groups.len()]);
    for (k, g) in groups.iter().enumerate() {
        for &j in g {
            b.set(j, k, 1.0);
        }
    }
    b
}
