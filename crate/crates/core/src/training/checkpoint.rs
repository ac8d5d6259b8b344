use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{Model, ModelConfig};
use crate::numerics::{ParamStore, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TMOE";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
}

impl Checkpoint {
    /// Rebuilds the model, checking that every tensor the configuration
    /// implies is present with the right shape and nothing else is.
    pub fn into_model(self) -> Result<(Model, ParamStore<f32>)> {
        let model = Model::new(self.config)?;
        let expected = model.init_params(0);
        let names: Vec<&str> = self.params.names().collect();
        let want: Vec<&str> = expected.names().collect();
        if names != want {
            return Err(Error::ConfigMismatch(format!(
                "tensor directory has {} entries, configuration implies {}",
                names.len(),
                want.len()
            )));
        }
        for (name, t) in expected.iter() {
            let got = self.params.get(name)?;
            if got.shape() != t.shape() {
                return Err(Error::ConfigMismatch(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        Ok((model, self.params))
    }

    /// Like [`Checkpoint::into_model`] but also requires the stored
    /// configuration to equal `expected`.
    pub fn into_model_matching(self, expected: &ModelConfig) -> Result<(Model, ParamStore<f32>)> {
        if &self.config != expected {
            return Err(Error::ConfigMismatch(format!(
                "stored {} differs from requested {}",
                serde_json::to_string(&self.config)?,
                serde_json::to_string(expected)?
            )));
        }
        self.into_model()
    }
}

pub fn encode_checkpoint(params: &ParamStore<f32>, config: &ModelConfig) -> Result<Vec<u8>> {
    let mut tensors = Vec::with_capacity(params.len());
    let mut payload = Vec::with_capacity(params.num_elements() * 4);
    for (name, t) in params.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: payload.len() as u64,
        });
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = serde_json::to_vec(&Header {
        config: config.clone(),
        tensors,
    })?;
    let mut out = Vec::with_capacity(16 + header.len() + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = at
        .checked_add(n)
        .filter(|e| *e <= bytes.len())
        .ok_or_else(|| Error::CorruptCheckpoint(format!("truncated while reading {what}")))?;
    let out = &bytes[*at..end];
    *at = end;
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut at = 0;
    if take(bytes, &mut at, 4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut at, 4, "version")?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let len = u64::from_le_bytes(take(bytes, &mut at, 8, "header length")?.try_into().unwrap());
    let len = usize::try_from(len).map_err(|_| Error::CorruptCheckpoint("header length overflow".into()))?;
    let header: Header = serde_json::from_slice(take(bytes, &mut at, len, "header")?)
        .map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;
    let payload = &bytes[at..];

    let mut params = ParamStore::new();
    let mut expected_offset = 0u64;
    for entry in header.tensors {
        if entry.offset != expected_offset {
            return Err(Error::CorruptCheckpoint(format!("`{}` has offset {}", entry.name, entry.offset)));
        }
        let n: usize = entry.shape.iter().product();
        let mut start = entry.offset as usize;
        let raw = take(payload, &mut start, n * 4, &entry.name)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        expected_offset += (n * 4) as u64;
        if params.contains(&entry.name) {
            return Err(Error::CorruptCheckpoint(format!("duplicate tensor `{}`", entry.name)));
        }
        params.insert(entry.name, Tensor::new(entry.shape, data)?);
    }
    if expected_offset != payload.len() as u64 {
        return Err(Error::CorruptCheckpoint(format!(
            "{} trailing payload bytes",
            payload.len() as u64 - expected_offset
        )));
    }
    Ok(Checkpoint {
        version,
        config: header.config,
        params,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ParamStore<f32>, config: &ModelConfig) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params, config)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode_checkpoint(&std::fs::read(path)?)
}
