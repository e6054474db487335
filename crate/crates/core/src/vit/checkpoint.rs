//! `GEVIT001` checkpoint files.
//!
//! Layout: the 8-byte magic, then for each tensor until end of file:
//! name length (u16 LE), UTF-8 name, rank (u8), extents (u32 LE each),
//! values (f64 LE). Model hyper-parameters are stored as one-element
//! tensors named `config/<key>` ahead of the weights.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::config::{HeadKind, ViTConfig};
use super::model::ViTModel;
use super::params::{copy_by_name, ParamGroup, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"GEVIT001";

/// Encodes named tensors in checkpoint layout.
pub fn encode_tensors<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let mut buf = MAGIC.to_vec();
    for (name, t) in tensors {
        let bytes = name.as_bytes();
        buf.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(bytes);
        buf.push(t.rank() as u8);
        for &e in t.shape() {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }
}

pub fn decode_tensors(bytes: &[u8]) -> std::result::Result<Vec<(String, Tensor)>, String> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err("missing GEVIT001 magic".into());
    }
    let mut r = Reader { bytes, pos: 8 };
    let mut out = Vec::new();
    while r.pos < bytes.len() {
        let truncated = || "truncated record".to_string();
        let len = u16::from_le_bytes(r.take(2).ok_or_else(truncated)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(len).ok_or_else(truncated)?)
            .map_err(|e| format!("bad tensor name: {e}"))?
            .to_string();
        let rank = r.take(1).ok_or_else(truncated)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(
                u32::from_le_bytes(r.take(4).ok_or_else(truncated)?.try_into().unwrap()) as usize,
            );
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8).ok_or_else(truncated)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| format!("tensor {name}: {e}"))?;
        out.push((name, t));
    }
    Ok(out)
}

fn config_entries(cfg: &ViTConfig) -> Vec<(String, Tensor)> {
    let head = match cfg.head {
        HeadKind::Linear => 0.0,
        HeadKind::Cosine => 1.0,
    };
    [
        ("image_size", cfg.image_size as f64),
        ("patch_size", cfg.patch_size as f64),
        ("channels", cfg.channels as f64),
        ("embed_dim", cfg.embed_dim as f64),
        ("num_heads", cfg.num_heads as f64),
        ("num_layers", cfg.num_layers as f64),
        ("num_classes", cfg.num_classes as f64),
        ("embedding_dim_out", cfg.embedding_dim_out as f64),
        ("cosine_temperature", cfg.cosine_temperature),
        ("mlp_ratio", cfg.mlp_ratio as f64),
        ("domain_hidden", cfg.domain_hidden as f64),
        ("head", head),
    ]
    .into_iter()
    .map(|(k, v)| (format!("config/{k}"), Tensor::scalar(v)))
    .collect()
}

pub fn to_bytes(model: &ViTModel) -> Vec<u8> {
    let cfg = config_entries(&model.cfg);
    let items = cfg
        .iter()
        .map(|(n, t)| (n.as_str(), t))
        .chain(model.store.iter().map(|(_, p)| (p.name.as_str(), &p.value)));
    encode_tensors(items)
}

pub fn from_bytes(bytes: &[u8]) -> std::result::Result<ViTModel, String> {
    let tensors = decode_tensors(bytes)?;
    let mut cfg = ViTConfig::default();
    let mut weights = ParamStore::new();
    for (name, t) in tensors {
        if let Some(key) = name.strip_prefix("config/") {
            let v = t.data()[0];
            let u = v as usize;
            match key {
                "image_size" => cfg.image_size = u,
                "patch_size" => cfg.patch_size = u,
                "channels" => cfg.channels = u,
                "embed_dim" => cfg.embed_dim = u,
                "num_heads" => cfg.num_heads = u,
                "num_layers" => cfg.num_layers = u,
                "num_classes" => cfg.num_classes = u,
                "embedding_dim_out" => cfg.embedding_dim_out = u,
                "cosine_temperature" => cfg.cosine_temperature = v,
                "mlp_ratio" => cfg.mlp_ratio = u,
                "domain_hidden" => cfg.domain_hidden = u,
                "head" => {
                    cfg.head = if v == 0.0 {
                        HeadKind::Linear
                    } else {
                        HeadKind::Cosine
                    }
                }
                other => return Err(format!("unknown config entry {other}")),
            }
        } else {
            weights.add(name, ParamGroup::Encoder, t);
        }
    }
    let mut model = ViTModel::new(cfg, 0).map_err(|e| e.to_string())?;
    if weights.len() != model.store.len() {
        return Err(format!(
            "checkpoint holds {} tensors, model expects {}",
            weights.len(),
            model.store.len()
        ));
    }
    copy_by_name(&mut model.store, &weights).map_err(|e| e.to_string())?;
    Ok(model)
}

pub fn save(model: &ViTModel, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&to_bytes(model))
        .map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ViTModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}
