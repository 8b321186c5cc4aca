//! Building blocks: dense layers, MLPs and graph convolutions.

use rand_chacha::ChaCha8Rng;

use super::params::{near_identity, uniform_fan_in, ParamId, ParamStore};
use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

const ADJACENCY_NOISE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Identity => x,
        }
    }
}

/// How a weight matrix starts out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum WeightInit {
    FanIn,
    Zero,
}

fn init_weight(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    how: WeightInit,
) -> (Tensor, Tensor) {
    match how {
        WeightInit::FanIn => (
            uniform_fan_in(rng, &[rows, cols], rows),
            uniform_fan_in(rng, &[cols], rows),
        ),
        WeightInit::Zero => (Tensor::zeros(&[rows, cols]), Tensor::zeros(&[cols])),
    }
}

/// `x·W + b` applied to each row.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub(crate) fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
        how: WeightInit,
    ) -> Self {
        let (w, b) = init_weight(rng, d_in, d_out, how);
        Self {
            weight: store.add(format!("{name}.weight"), w),
            bias: store.add(format!("{name}.bias"), b),
            d_in,
            d_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        let h = tape.matmul(x, params[self.weight.0])?;
        Ok(tape.add_bias(h, params[self.bias.0])?)
    }

    pub fn numel(&self) -> usize {
        self.d_in * self.d_out + self.d_out
    }
}

/// Dense layers with `tanh` between them and a linear output.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub(crate) fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        widths: &[usize],
    ) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                Linear::new(
                    store,
                    rng,
                    &format!("{name}.{i}"),
                    w[0],
                    w[1],
                    WeightInit::FanIn,
                )
            })
            .collect();
        Self { layers }
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], mut x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            x = l.forward(tape, params, x)?;
            if i < last {
                x = tape.tanh(x);
            }
        }
        Ok(x)
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().unwrap().d_out
    }
}

/// Graph convolution `σ(A·X·W + b)` over a fully connected graph whose
/// weighted adjacency `A` is learned.
#[derive(Debug, Clone)]
pub struct GcLayer {
    pub adjacency: ParamId,
    pub weight: ParamId,
    pub bias: ParamId,
    pub nodes: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub activation: Activation,
}

impl GcLayer {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        nodes: usize,
        d_in: usize,
        d_out: usize,
        activation: Activation,
        how: WeightInit,
    ) -> Self {
        let adj = near_identity(rng, nodes, ADJACENCY_NOISE);
        let (w, b) = init_weight(rng, d_in, d_out, how);
        Self {
            adjacency: store.add(format!("{name}.adj"), adj),
            weight: store.add(format!("{name}.weight"), w),
            bias: store.add(format!("{name}.bias"), b),
            nodes,
            d_in,
            d_out,
            activation,
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        let ax = tape.matmul(params[self.adjacency.0], x)?;
        let axw = tape.matmul(ax, params[self.weight.0])?;
        let y = tape.add_bias(axw, params[self.bias.0])?;
        Ok(self.activation.apply(tape, y))
    }

    pub fn numel(&self) -> usize {
        self.nodes * self.nodes + self.d_in * self.d_out + self.d_out
    }
}

/// Residual stack: each pair of graph convolutions is wrapped by a skip
/// connection, `x ← x + gc₂(gc₁(x))`.
#[derive(Debug, Clone)]
pub struct GcnBlock {
    pub pairs: Vec<(GcLayer, GcLayer)>,
}

impl GcnBlock {
    pub(crate) fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        nodes: usize,
        width: usize,
        n_blocks: usize,
    ) -> Self {
        let pairs = (0..n_blocks)
            .map(|b| {
                let mk = |store: &mut ParamStore, rng: &mut ChaCha8Rng, i: usize| {
                    GcLayer::new(
                        store,
                        rng,
                        &format!("{name}.{b}.{i}"),
                        nodes,
                        width,
                        width,
                        Activation::Tanh,
                        WeightInit::FanIn,
                    )
                };
                let first = mk(store, rng, 0);
                let second = mk(store, rng, 1);
                (first, second)
            })
            .collect();
        Self { pairs }
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], mut x: Var) -> Result<Var> {
        for (a, b) in &self.pairs {
            let y = a.forward(tape, params, x)?;
            let y = b.forward(tape, params, y)?;
            x = tape.add(x, y)?;
        }
        Ok(x)
    }

    pub fn n_layers(&self) -> usize {
        2 * self.pairs.len()
    }
}
