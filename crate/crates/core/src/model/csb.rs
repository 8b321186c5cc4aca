//! Cross-scale attention.
//!
//! A block projects the receiving scale's nodes and the sending scale's nodes
//! through separate three-layer MLPs to a common width `D_h`, scores every
//! (receiver, sender) pair by dot product, and normalizes each receiver's
//! scores with a softmax. The receiver then adds the attention-weighted sum
//! of sender features to its own:
//!
//! ```text
//! A   = softmax_rows(h_r · h_sᵀ)        (K_r × K_s)
//! out = A · f_s + f_r
//! ```

use rand_chacha::ChaCha8Rng;

use super::layers::Mlp;
use super::params::ParamStore;
use crate::error::Result;
use crate::tensor::{Tape, Var};

#[derive(Debug, Clone)]
pub struct CsBlock {
    /// Projects receiver nodes.
    pub receiver: Mlp,
    /// Projects sender nodes.
    pub sender: Mlp,
}

/// Result of one cross-scale injection.
#[derive(Debug, Clone, Copy)]
pub struct Injection {
    /// `A · f_s`, without the residual.
    pub message: Var,
    pub attention: Var,
}

impl CsBlock {
    pub(crate) fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        width: usize,
        hidden: usize,
        proj: usize,
    ) -> Self {
        let widths = [width, hidden, hidden, proj];
        Self {
            receiver: Mlp::new(store, rng, &format!("{name}.receiver"), &widths),
            sender: Mlp::new(store, rng, &format!("{name}.sender"), &widths),
        }
    }

    /// Attention of `receiver` rows over `sender` rows. With `normalize`
    /// false the scores are exponentiated but not divided by their row sum.
    pub fn inject(
        &self,
        tape: &mut Tape,
        params: &[Var],
        receiver: Var,
        sender: Var,
        normalize: bool,
    ) -> Result<Injection> {
        let hr = self.receiver.forward(tape, params, receiver)?;
        let hs = self.sender.forward(tape, params, sender)?;
        let hst = tape.transpose(hs)?;
        let scores = tape.matmul(hr, hst)?;
        let attention = if normalize {
            tape.softmax_rows(scores)?
        } else {
            tape.exp(scores)
        };
        let message = tape.matmul(attention, sender)?;
        Ok(Injection { message, attention })
    }

    /// Coarse features injected into the fine scale: `A · f_coarse + f_fine`.
    pub fn attend(
        &self,
        tape: &mut Tape,
        params: &[Var],
        coarse: Var,
        fine: Var,
    ) -> Result<(Var, Var)> {
        let inj = self.inject(tape, params, fine, coarse, true)?;
        Ok((tape.add(inj.message, fine)?, inj.attention))
    }

    pub fn proj_width(&self) -> usize {
        self.receiver.d_out()
    }
}
