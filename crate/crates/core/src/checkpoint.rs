//! Binary tensor checkpoints with a JSON manifest.
//!
//! Tensor file layout (all integers little-endian):
//!
//! ```text
//! "EDIM"  u32 version  u32 tensor_count
//! per tensor: u16 name_len, name (UTF-8), u8 rank, rank × u32 dims, f64 payload
//! ```
//!
//! The manifest lives next to the tensor file with a `.json` extension and
//! records the model and training configuration plus provenance.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{encoder_digest, EncoderParams, Model, ModelConfig, PoolerParams};
use crate::numeric::Matrix;
use crate::objectives::NliClassifier;
use crate::training::{Provenance, TrainConfig, TrainedBundle};

pub const MAGIC: &[u8; 4] = b"EDIM";
pub const VERSION: u32 = 1;

/// A tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    /// Vectors (single-row matrices) are stored with rank 1.
    pub fn from_matrix(name: impl Into<String>, m: &Matrix) -> Self {
        let dims = if m.rows() == 1 {
            vec![m.cols()]
        } else {
            vec![m.rows(), m.cols()]
        };
        Self {
            name: name.into(),
            dims,
            data: m.as_slice().to_vec(),
        }
    }
}

pub fn encode_tensors(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(
        &u32::try_from(tensors.len())
            .map_err(|_| too_large("tensor count"))?
            .to_le_bytes(),
    );
    for t in tensors {
        let name = t.name.as_bytes();
        out.extend_from_slice(
            &u16::try_from(name.len())
                .map_err(|_| too_large("tensor name"))?
                .to_le_bytes(),
        );
        out.extend_from_slice(name);
        out.push(u8::try_from(t.dims.len()).map_err(|_| too_large("tensor rank"))?);
        for &d in &t.dims {
            out.extend_from_slice(
                &u32::try_from(d)
                    .map_err(|_| too_large("tensor dimension"))?
                    .to_le_bytes(),
            );
        }
        if t.dims.iter().product::<usize>() != t.data.len() {
            return Err(Error::Shape(format!(
                "tensor {} declares {:?} but holds {} values",
                t.name,
                t.dims,
                t.data.len()
            )));
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn too_large(what: &str) -> Error {
    Error::Format(format!("{what} does not fit the checkpoint format"))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Corruption(format!(
                "truncated checkpoint: {what} needs {n} bytes at offset {}, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not an EDIM checkpoint (bad magic)".into()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| Error::Corruption("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u8("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dimension")? as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| {
                Error::Corruption(format!("tensor {name} has an impossible shape {dims:?}"))
            })?;
        let payload = r.take(n, &format!("payload of {name}"))?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(NamedTensor { name, dims, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Corruption(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }
    Ok(tensors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    tensors: String,
    model: ModelConfig,
    train: TrainConfig,
    provenance: Provenance,
    has_head: bool,
    encoder_sha256: String,
    loss_trace: Vec<f64>,
}

/// Path of the manifest that accompanies the tensor file at `path`.
pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn bundle_tensors(bundle: &TrainedBundle) -> Vec<NamedTensor> {
    let mut out = Vec::new();
    for (name, t) in bundle.model.encoder.tensors() {
        out.push(NamedTensor::from_matrix(format!("encoder.{name}"), t));
    }
    for (name, t) in bundle.model.pooler.tensors() {
        out.push(NamedTensor::from_matrix(format!("pooler.{name}"), t));
    }
    if let Some(h) = &bundle.head {
        for (name, t) in h.tensors() {
            out.push(NamedTensor::from_matrix(format!("head.{name}"), t));
        }
    }
    out
}

pub fn save_checkpoint(bundle: &TrainedBundle, path: &Path) -> Result<()> {
    let bytes = encode_tensors(&bundle_tensors(bundle))?;
    let manifest = Manifest {
        format: "edim-checkpoint".into(),
        version: VERSION,
        tensors: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        model: bundle.model.config.clone(),
        train: bundle.train_config.clone(),
        provenance: bundle.provenance.clone(),
        has_head: bundle.head.is_some(),
        encoder_sha256: encoder_digest(&bundle.model.encoder),
        loss_trace: bundle.loss_trace.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    fs::write(&mpath, json + "\n").map_err(|e| Error::io(&mpath, e))?;
    Ok(())
}

fn fill(
    slot: (String, &mut Matrix),
    stored: &mut BTreeMap<String, NamedTensor>,
    prefix: &str,
) -> Result<()> {
    let (name, m) = slot;
    let key = format!("{prefix}.{name}");
    let t = stored
        .remove(&key)
        .ok_or_else(|| Error::Corruption(format!("checkpoint lacks tensor {key}")))?;
    let fits = t.dims == [m.rows(), m.cols()] || (m.rows() == 1 && t.dims == [m.cols()]);
    if !fits {
        return Err(Error::Corruption(format!(
            "tensor {key} has shape {:?}, the configuration expects {}x{}",
            t.dims,
            m.rows(),
            m.cols()
        )));
    }
    m.as_mut_slice().copy_from_slice(&t.data);
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedBundle> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: invalid manifest: {e}", mpath.display())))?;
    if manifest.version != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported manifest version {}",
            mpath.display(),
            manifest.version
        )));
    }
    manifest.model.validate()?;

    let mut stored: BTreeMap<String, NamedTensor> = BTreeMap::new();
    for t in decode_tensors(&bytes)? {
        if stored.contains_key(&t.name) {
            return Err(Error::Corruption(format!("duplicate tensor {}", t.name)));
        }
        stored.insert(t.name.clone(), t);
    }

    let config = manifest.model.clone();
    let mut encoder = EncoderParams::zeros(&config);
    for slot in encoder.tensors_mut() {
        fill(slot, &mut stored, "encoder")?;
    }
    let mut pooler = PoolerParams::zeros(config.hidden_dim, config.pooler_dim);
    for slot in pooler.tensors_mut() {
        fill(slot, &mut stored, "pooler")?;
    }
    let head = if manifest.has_head {
        let mut h = NliClassifier::zeros(config.pooler_dim);
        for slot in h.tensors_mut() {
            fill(slot, &mut stored, "head")?;
        }
        Some(h)
    } else {
        None
    };
    if let Some(extra) = stored.keys().next() {
        return Err(Error::Corruption(format!("unexpected tensor {extra}")));
    }
    if encoder_digest(&encoder) != manifest.encoder_sha256 {
        return Err(Error::Corruption(format!(
            "{}: encoder digest does not match the manifest",
            path.display()
        )));
    }
    Ok(TrainedBundle {
        model: Model::from_parts(config, encoder, pooler)?,
        head,
        train_config: manifest.train,
        provenance: manifest.provenance,
        loss_trace: manifest.loss_trace,
    })
}
