//! The multiscale graph network.
//!
//! A forward pass maps a `K × D` coefficient matrix to a predicted `K × D`
//! coefficient matrix:
//!
//! 1. the rows of each joint are grouped into one node of width
//!    `dims_per_joint · D` and embedded to width `H` by a shared linear layer;
//! 2. the scale transformation aggregates joints into components (s2) and
//!    components into limbs (s3);
//! 3. `n_sim` interaction units each run a residual GCN per scale and then
//!    inject coarse features into the next finer scale by attention;
//! 4. the s2 and s3 features are expanded back to one row per joint;
//! 5. the decoder runs coarse to fine,
//!    `F_p = f₁(f₂(f₃(F'³) + F'²) + F¹) + F`, where `f₁` projects back to
//!    `dims_per_joint · D` and starts at zero, so an untrained network
//!    returns its input.

mod checkpoint;
mod csb;
mod layers;
mod params;
mod stm;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, CheckpointManifest, CHECKPOINT_VERSION,
};
pub use csb::{CsBlock, Injection};
pub use layers::{Activation, GcLayer, GcnBlock, Linear, Mlp};
pub use params::{ParamId, ParamStore};
pub use stm::{aggregate_mlp, broadcast_matrix, expand_mlp, pool_matrix, ScaleMaps, Stm, StmMlps};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dct::CoeffMatrix;
use crate::error::{Error, Result};
use crate::skeleton::{ScaleId, SkeletonConfig};
use crate::tensor::{Tape, Tensor, TensorError, Var};
use layers::WeightInit;

/// Parts of the network that can be switched off or replaced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Replace the STM MLPs with group mean and broadcast.
    pub no_stm_mean_pool: bool,
    /// Drop cross-scale attention.
    pub no_csb: bool,
    /// Sum three independent per-scale projections instead of decoding
    /// coarse to fine.
    pub parallel_decoder: bool,
}

impl Ablation {
    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.no_stm_mean_pool {
            v.push("no_stm_mean_pool");
        }
        if self.no_csb {
            v.push("no_csb");
        }
        if self.parallel_decoder {
            v.push("parallel_decoder");
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// DCT coefficients per dimension, `D`.
    pub n_coeffs: usize,
    /// Node feature width `H` carried between interaction units.
    pub hidden: usize,
    pub stm_hidden: usize,
    pub csb_hidden: usize,
    /// Attention projection width `D_h`.
    pub csb_proj: usize,
    /// Number of stacked interaction units.
    pub n_sim: usize,
    /// Residual blocks (two GC layers each) per scale per unit.
    pub gcn_blocks: usize,
    /// One cross-scale block pair shared by every unit.
    pub csb_shared: bool,
    /// Also inject fine features into the coarser scale.
    pub csb_fine_to_coarse: bool,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_coeffs: 20,
            hidden: 256,
            stm_hidden: 16,
            csb_hidden: 512,
            csb_proj: 64,
            n_sim: 3,
            gcn_blocks: 3,
            csb_shared: false,
            csb_fine_to_coarse: false,
            ablation: Ablation::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("n_coeffs", self.n_coeffs),
            ("hidden", self.hidden),
            ("stm_hidden", self.stm_hidden),
            ("csb_hidden", self.csb_hidden),
            ("csb_proj", self.csb_proj),
            ("n_sim", self.n_sim),
            ("gcn_blocks", self.gcn_blocks),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Validation(format!(
                    "model.{name} must be at least 1"
                )));
            }
        }
        Ok(())
    }

    /// Closed-form parameter count; see the architecture chapter of the guide.
    pub fn param_count(&self, skel: &SkeletonConfig) -> usize {
        let h = self.hidden;
        let p = skel.dims_per_joint * self.n_coeffs;
        let j = skel.n_nodes(ScaleId::S1);
        let k2 = skel.n_nodes(ScaleId::S2);
        let k3 = skel.n_nodes(ScaleId::S3);
        let s = self.stm_hidden;

        let embed = p * h + h;
        let stm = if self.ablation.no_stm_mean_pool {
            0
        } else {
            let agg_tail = s + s * h + h;
            let exp_head = h * s + s;
            let exp_tail = j * (s * h + h);
            (j * h * s + k2 * agg_tail)
                + (k2 * h * s + k3 * agg_tail)
                + (k2 * exp_head + exp_tail)
                + (k3 * exp_head + exp_tail)
        };
        let gc = |n: usize| n * n + h * h + h;
        let sim = self.n_sim * 2 * self.gcn_blocks * (gc(j) + gc(k2) + gc(k3));
        let csb = if self.ablation.no_csb {
            0
        } else {
            let (c, d) = (self.csb_hidden, self.csb_proj);
            let mlp = h * c + c + c * c + c + c * d + d;
            let per_pair = if self.csb_fine_to_coarse { 4 } else { 2 } * 2 * mlp;
            let pairs = if self.csb_shared { 1 } else { self.n_sim };
            pairs * per_pair
        };
        let out = j * j + h * p + p;
        let decoder = if self.ablation.parallel_decoder {
            3 * out
        } else {
            2 * gc(j) + out
        };
        embed + stm + sim + csb + decoder
    }
}

/// How parameters start out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Fan-in uniform weights with zeroed output projections, so the
    /// untrained network predicts its input.
    Standard,
    /// Fan-in uniform everywhere; used for gradient checks.
    Random,
}

#[derive(Debug, Clone)]
pub struct SimUnit {
    /// Residual GCN for s1, s2, s3.
    pub gcn: [GcnBlock; 3],
}

/// Cross-scale blocks used by one interaction unit.
#[derive(Debug, Clone)]
pub struct CsPair {
    pub s2_to_s1: CsBlock,
    pub s3_to_s2: CsBlock,
    pub s1_to_s2: Option<CsBlock>,
    pub s2_to_s3: Option<CsBlock>,
}

#[derive(Debug, Clone)]
pub enum Decoder {
    CoarseToFine {
        s3: GcLayer,
        s2: GcLayer,
        s1: GcLayer,
    },
    Parallel {
        s3: GcLayer,
        s2: GcLayer,
        s1: GcLayer,
    },
}

impl Decoder {
    pub(crate) fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        nodes: usize,
        hidden: usize,
        out: usize,
        parallel: bool,
        init: Init,
    ) -> Self {
        let last = match init {
            Init::Standard => WeightInit::Zero,
            Init::Random => WeightInit::FanIn,
        };
        let mut gc = |name: &str, d_out: usize, act: Activation, how: WeightInit| {
            GcLayer::new(store, rng, name, nodes, hidden, d_out, act, how)
        };
        if parallel {
            let s3 = gc("decoder.s3", out, Activation::Identity, last);
            let s2 = gc("decoder.s2", out, Activation::Identity, last);
            let s1 = gc("decoder.s1", out, Activation::Identity, last);
            Decoder::Parallel { s3, s2, s1 }
        } else {
            let s3 = gc("decoder.s3", hidden, Activation::Tanh, WeightInit::FanIn);
            let s2 = gc("decoder.s2", hidden, Activation::Tanh, WeightInit::FanIn);
            let s1 = gc("decoder.s1", out, Activation::Identity, last);
            Decoder::CoarseToFine { s3, s2, s1 }
        }
    }

    /// Node-layout output `J × (dims_per_joint · D)`, before the global
    /// residual.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        f1: Var,
        e2: Var,
        e3: Var,
    ) -> Result<Var> {
        match self {
            Decoder::CoarseToFine { s3, s2, s1 } => {
                let y3 = s3.forward(tape, params, e3)?;
                let x2 = tape.add(y3, e2)?;
                let y2 = s2.forward(tape, params, x2)?;
                let x1 = tape.add(y2, f1)?;
                s1.forward(tape, params, x1)
            }
            Decoder::Parallel { s3, s2, s1 } => {
                let a = s1.forward(tape, params, f1)?;
                let b = s2.forward(tape, params, e2)?;
                let c = s3.forward(tape, params, e3)?;
                let ab = tape.add(a, b)?;
                Ok(tape.add(ab, c)?)
            }
        }
    }

    pub fn output_layers(&self) -> Vec<&GcLayer> {
        match self {
            Decoder::CoarseToFine { s1, .. } => vec![s1],
            Decoder::Parallel { s3, s2, s1 } => vec![s3, s2, s1],
        }
    }
}

/// One attention matrix observed during a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub unit: usize,
    pub receiver: ScaleId,
    pub sender: ScaleId,
    pub matrix: Tensor,
}

/// Optional instrumentation for a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Probe {
    pub record_attention: bool,
    /// Fault injection: exponentiate attention scores without normalizing.
    pub skip_softmax_normalization: bool,
    pub attention: Vec<AttentionRecord>,
}

impl Probe {
    pub fn recording() -> Self {
        Self {
            record_attention: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct MgcnModel {
    pub config: ModelConfig,
    pub skeleton: SkeletonConfig,
    pub maps: ScaleMaps,
    pub params: ParamStore,
    pub embed: Linear,
    pub stm: Stm,
    pub sim: Vec<SimUnit>,
    /// Empty without attention; one entry when shared, else one per unit.
    pub csb: Vec<CsPair>,
    pub decoder: Decoder,
}

impl MgcnModel {
    pub fn new(config: ModelConfig, skeleton: SkeletonConfig, seed: u64) -> Result<Self> {
        Self::with_init(config, skeleton, seed, Init::Standard)
    }

    pub fn with_init(
        config: ModelConfig,
        skeleton: SkeletonConfig,
        seed: u64,
        init: Init,
    ) -> Result<Self> {
        config.validate()?;
        skeleton.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let h = config.hidden;
        let node_width = skeleton.dims_per_joint * config.n_coeffs;
        let maps = ScaleMaps::new(&skeleton);
        let j = maps.n_joints;
        let k2 = maps.s1_to_s2.len();
        let k3 = maps.s2_to_s3.len();

        let embed = Linear::new(
            &mut store,
            &mut rng,
            "embed",
            node_width,
            h,
            WeightInit::FanIn,
        );
        let stm = if config.ablation.no_stm_mean_pool {
            Stm::MeanPool
        } else {
            Stm::learned(&mut store, &mut rng, &maps, h, config.stm_hidden)
        };
        let mut sim = Vec::with_capacity(config.n_sim);
        for u in 0..config.n_sim {
            let mut gcn = |scale: &str, nodes: usize| {
                GcnBlock::new(
                    &mut store,
                    &mut rng,
                    &format!("sim.{u}.gcn.{scale}"),
                    nodes,
                    h,
                    config.gcn_blocks,
                )
            };
            let g1 = gcn("s1", j);
            let g2 = gcn("s2", k2);
            let g3 = gcn("s3", k3);
            sim.push(SimUnit { gcn: [g1, g2, g3] });
        }
        let mut csb = Vec::new();
        if !config.ablation.no_csb {
            let n_pairs = if config.csb_shared { 1 } else { config.n_sim };
            for u in 0..n_pairs {
                let prefix = if config.csb_shared {
                    "csb".to_string()
                } else {
                    format!("sim.{u}.csb")
                };
                let mut blk = |name: &str| {
                    CsBlock::new(
                        &mut store,
                        &mut rng,
                        &format!("{prefix}.{name}"),
                        h,
                        config.csb_hidden,
                        config.csb_proj,
                    )
                };
                let s2_to_s1 = blk("s2_s1");
                let s3_to_s2 = blk("s3_s2");
                let (s1_to_s2, s2_to_s3) = if config.csb_fine_to_coarse {
                    (Some(blk("s1_s2")), Some(blk("s2_s3")))
                } else {
                    (None, None)
                };
                csb.push(CsPair {
                    s2_to_s1,
                    s3_to_s2,
                    s1_to_s2,
                    s2_to_s3,
                });
            }
        }
        let decoder = Decoder::new(
            &mut store,
            &mut rng,
            j,
            h,
            node_width,
            config.ablation.parallel_decoder,
            init,
        );
        Ok(Self {
            config,
            skeleton,
            maps,
            params: store,
            embed,
            stm,
            sim,
            csb,
            decoder,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    fn csb_for(&self, unit: usize) -> Option<&CsPair> {
        match self.csb.len() {
            0 => None,
            1 => self.csb.first(),
            _ => self.csb.get(unit),
        }
    }

    /// Joint-node features `J × H` from a `K × D` coefficient matrix.
    pub fn embed_nodes(&self, tape: &mut Tape, params: &[Var], coeffs: Var) -> Result<Var> {
        let k = self.skeleton.pose_dims();
        let d = self.config.n_coeffs;
        let shape = tape.shape(coeffs).to_vec();
        if shape != [k, d] {
            return Err(TensorError::Shape {
                op: "forward",
                lhs: shape,
                rhs: vec![k, d],
            }
            .into());
        }
        let nodes = tape.reshape(
            coeffs,
            &[self.maps.n_joints, self.skeleton.dims_per_joint * d],
        )?;
        self.embed.forward(tape, params, nodes)
    }

    /// One interaction unit: per-scale GCNs, then cross-scale injection.
    pub fn sim_forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        unit: usize,
        f: [Var; 3],
        mut probe: Option<&mut Probe>,
    ) -> Result<[Var; 3]> {
        let blocks = &self.sim[unit].gcn;
        let g = [
            blocks[0].forward(tape, params, f[0])?,
            blocks[1].forward(tape, params, f[1])?,
            blocks[2].forward(tape, params, f[2])?,
        ];
        let Some(pair) = self.csb_for(unit) else {
            return Ok(g);
        };
        let normalize = !probe.as_ref().is_some_and(|p| p.skip_softmax_normalization);
        let mut out = g;
        let mut inject = |tape: &mut Tape,
                          blk: &CsBlock,
                          recv: usize,
                          send: usize,
                          out: &mut [Var; 3]|
         -> Result<()> {
            let inj = blk.inject(tape, params, g[recv], g[send], normalize)?;
            out[recv] = tape.add(out[recv], inj.message)?;
            if let Some(p) = probe.as_deref_mut() {
                if p.record_attention {
                    let scales = [ScaleId::S1, ScaleId::S2, ScaleId::S3];
                    p.attention.push(AttentionRecord {
                        unit,
                        receiver: scales[recv],
                        sender: scales[send],
                        matrix: tape.value(inj.attention).clone(),
                    });
                }
            }
            Ok(())
        };
        inject(tape, &pair.s2_to_s1, 0, 1, &mut out)?;
        inject(tape, &pair.s3_to_s2, 1, 2, &mut out)?;
        if let Some(b) = &pair.s1_to_s2 {
            inject(tape, b, 1, 0, &mut out)?;
        }
        if let Some(b) = &pair.s2_to_s3 {
            inject(tape, b, 2, 1, &mut out)?;
        }
        Ok(out)
    }

    /// Multiscale features after every interaction unit, at s1/s2/s3 node
    /// counts.
    pub fn encode(
        &self,
        tape: &mut Tape,
        params: &[Var],
        coeffs: Var,
        mut probe: Option<&mut Probe>,
    ) -> Result<[Var; 3]> {
        let f1 = self.embed_nodes(tape, params, coeffs)?;
        let f2 = self
            .stm
            .aggregate(tape, params, &self.maps, ScaleId::S1, f1)?;
        let f3 = self
            .stm
            .aggregate(tape, params, &self.maps, ScaleId::S2, f2)?;
        let mut f = [f1, f2, f3];
        for u in 0..self.sim.len() {
            f = self.sim_forward(tape, params, u, f, probe.as_deref_mut())?;
        }
        Ok(f)
    }

    /// Expansion plus decoder plus global residual, returning `K × D`.
    pub fn decode(&self, tape: &mut Tape, params: &[Var], f: [Var; 3], coeffs: Var) -> Result<Var> {
        let e2 = self
            .stm
            .expand(tape, params, &self.maps, ScaleId::S2, f[1])?;
        let e3 = self
            .stm
            .expand(tape, params, &self.maps, ScaleId::S3, f[2])?;
        let y = self.decoder.forward(tape, params, f[0], e2, e3)?;
        let y = tape.reshape(y, tape.shape(coeffs).to_vec().as_slice())?;
        Ok(tape.add(y, coeffs)?)
    }

    /// Predicted coefficients for a `K × D` input recorded on `tape`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &[Var],
        coeffs: Var,
        probe: Option<&mut Probe>,
    ) -> Result<Var> {
        let f = self.encode(tape, params, coeffs, probe)?;
        self.decode(tape, params, f, coeffs)
    }

    /// Inference without gradients.
    pub fn predict(&self, coeffs: &CoeffMatrix) -> Result<CoeffMatrix> {
        self.predict_probed(coeffs, None)
    }

    pub fn predict_probed(
        &self,
        coeffs: &CoeffMatrix,
        probe: Option<&mut Probe>,
    ) -> Result<CoeffMatrix> {
        let mut tape = Tape::new();
        let params = self.params.bind_constants(&mut tape);
        let x = tape.constant(coeffs.0.clone());
        let y = self.forward(&mut tape, &params, x, probe)?;
        Ok(CoeffMatrix(tape.value(y).clone()))
    }

    /// Parameters of every cross-scale block.
    pub fn csb_param_names(&self) -> Vec<&str> {
        self.params
            .iter()
            .map(|(_, n, _)| n)
            .filter(|n| n.starts_with("csb.") || n.contains(".csb."))
            .collect()
    }
}
