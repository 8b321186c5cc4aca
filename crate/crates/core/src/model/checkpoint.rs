//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes   "MGCNCKPT"
//! version  u32 LE
//! manifest u64 LE length, then UTF-8 JSON (CheckpointManifest)
//! records  u32 LE count, then per record:
//!            u32 LE name length, name bytes,
//!            u32 LE rank, rank × u64 LE extents,
//!            row-major f32 LE payload
//! checksum 32 bytes  SHA-256 of everything above
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{MgcnModel, ModelConfig};
use crate::error::{Error, Result};
use crate::skeleton::SkeletonConfig;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"MGCNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub model: ModelConfig,
    pub skeleton_name: String,
    /// The full skeleton definition in its TOML form.
    pub skeleton: String,
    pub n_history: usize,
    pub n_future: usize,
    pub epochs_trained: usize,
    pub seed: u64,
    pub param_count: usize,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub model: MgcnModel,
}

impl Checkpoint {
    pub fn new(
        model: MgcnModel,
        n_history: usize,
        n_future: usize,
        epochs_trained: usize,
        seed: u64,
    ) -> Self {
        let manifest = CheckpointManifest {
            model: model.config.clone(),
            skeleton_name: model.skeleton.name.clone(),
            skeleton: model.skeleton.to_toml(),
            n_history,
            n_future,
            epochs_trained,
            seed,
            param_count: model.param_count(),
        };
        Self { manifest, model }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let manifest = serde_json::to_vec(&self.manifest).expect("manifest serializes");
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        let params = &self.model.params;
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for (_, name, t) in params.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in t.data() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(Error::Checkpoint("file is truncated".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let mlen = r.u64()? as usize;
        let manifest: CheckpointManifest = serde_json::from_slice(r.take(mlen)?)
            .map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
        let skeleton = SkeletonConfig::from_toml(&manifest.skeleton)?;
        let mut model = MgcnModel::new(manifest.model.clone(), skeleton, 0)?;

        let count = r.u32()? as usize;
        if count != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "{count} parameter records, model expects {}",
                model.params.len()
            )));
        }
        let mut seen = vec![false; count];
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let id = model
                .params
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected parameter `{name}`")))?;
            if model.params.get(id).shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {shape:?}, model expects {:?}",
                    model.params.get(id).shape()
                )));
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            *model.params.get_mut(id) = Tensor::new(shape, data)?;
            seen[id.index()] = true;
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint(
                "trailing bytes after parameter records".into(),
            ));
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Checkpoint(format!(
                "missing parameter `{}`",
                model.params.name(super::ParamId(i))
            )));
        }
        Ok(Self { manifest, model })
    }

    /// Parameter records whose name marks them as cross-scale attention.
    pub fn csb_record_count(&self) -> usize {
        self.model.csb_param_names().len()
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("file is truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Ablation, Init};

    fn model(ablation: Ablation) -> MgcnModel {
        let cfg = ModelConfig {
            n_coeffs: 4,
            hidden: 6,
            stm_hidden: 3,
            csb_hidden: 5,
            csb_proj: 4,
            n_sim: 1,
            gcn_blocks: 1,
            ablation,
            ..ModelConfig::default()
        };
        MgcnModel::with_init(cfg, SkeletonConfig::stick6(), 3, Init::Random).unwrap()
    }

    #[test]
    fn round_trip_preserves_parameters_to_f32() {
        let m = model(Ablation::default());
        let ck = Checkpoint::new(m.clone(), 10, 10, 2, 7);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.manifest, ck.manifest);
        for ((_, n1, a), (_, n2, b)) in m.params.iter().zip(back.model.params.iter()) {
            assert_eq!(n1, n2);
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!((*x as f32) as f64, *y);
            }
        }
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = Checkpoint::new(model(Ablation::default()), 10, 10, 0, 0).to_bytes();
        let mut bad = bytes.clone();
        bad[40] ^= 1;
        assert!(
            matches!(Checkpoint::from_bytes(&bad), Err(Error::Checkpoint(m)) if m.contains("checksum"))
        );
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"short").is_err());
    }

    #[test]
    fn no_csb_checkpoint_has_no_attention_records() {
        let ck = Checkpoint::new(
            model(Ablation {
                no_csb: true,
                ..Ablation::default()
            }),
            10,
            10,
            0,
            0,
        );
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.csb_record_count(), 0);
        assert!(Checkpoint::new(model(Ablation::default()), 10, 10, 0, 0).csb_record_count() > 0);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = Checkpoint::new(model(Ablation::default()), 10, 25, 1, 1);
        write_checkpoint(&path, &ck).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.manifest.n_future, 25);
    }
}
