//! The `.octm` model file.
//!
//! ```text
//! "OCTM1" | header_len: u32 LE | JSON header (header_len bytes) | f32 LE payload
//! ```
//!
//! The header carries the network config, a tensor directory (name, shape,
//! byte offset into the payload, element count) in parameter order, and
//! optional training metadata.

use std::path::Path;

use octalias_core::nn::Tensor;
use octalias_core::recon::PrepMethod;
use octalias_core::unet::{UNetConfig, UNetModel};
use serde::{Deserialize, Serialize};

use crate::error::{read_file, write_file, Error, Result};

pub const MODEL_MAGIC: &[u8; 5] = b"OCTM1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub count: usize,
}

/// What the model was trained on; used for defaults at inference time.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undersample_factor: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prep_method: Option<PrepMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelHeader {
    config: UNetConfig,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    meta: ModelMeta,
}

pub fn encode_model(model: &UNetModel<f32>, meta: &ModelMeta) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut offset = 0u64;
    for (name, t) in model.named_tensors() {
        tensors.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            offset,
            count: t.len(),
        });
        offset += 4 * t.len() as u64;
    }
    let header = ModelHeader {
        config: *model.config(),
        tensors,
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Data(format!("model header: {e}")))?;
    let mut out = Vec::with_capacity(9 + json.len() + offset as usize);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in model.named_tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Header and raw tensors, without checking them against the channel table.
fn decode_parts(bytes: &[u8], origin: &Path) -> Result<(ModelHeader, Vec<(String, Tensor<f32>)>)> {
    if bytes.len() < 9 {
        return Err(Error::format(origin, bytes.len() as u64, "file shorter than the model preamble"));
    }
    if &bytes[..5] != MODEL_MAGIC {
        return Err(Error::format(origin, 0, "bad magic, expected \"OCTM1\""));
    }
    let header_len = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let payload_start = 9 + header_len;
    if bytes.len() < payload_start {
        return Err(Error::format(
            origin,
            5,
            format!("header length {header_len} exceeds file size {}", bytes.len()),
        ));
    }
    let header: ModelHeader = serde_json::from_slice(&bytes[9..payload_start])
        .map_err(|e| Error::format(origin, 9, format!("header JSON: {e}")))?;
    let payload = &bytes[payload_start..];
    let mut expected_offset = 0u64;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let count: usize = e.shape.iter().product();
        if count != e.count || e.offset != expected_offset {
            return Err(Error::format(
                origin,
                9,
                format!("directory entry {} is inconsistent (offset {}, count {})", e.name, e.offset, e.count),
            ));
        }
        let start = e.offset as usize;
        let end = start + 4 * count;
        if end > payload.len() {
            return Err(Error::format(
                origin,
                (payload_start + payload.len()) as u64,
                format!("tensor {} needs payload bytes {start}..{end}, payload has {}", e.name, payload.len()),
            ));
        }
        let values = payload[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::from_vec(&e.shape, values).map_err(|err| {
            Error::format(origin, (payload_start + start) as u64, format!("tensor {}: {err}", e.name))
        })?;
        tensors.push((e.name.clone(), t));
        expected_offset = end as u64;
    }
    if expected_offset as usize != payload.len() {
        return Err(Error::format(
            origin,
            (payload_start + expected_offset as usize) as u64,
            format!("{} trailing payload bytes", payload.len() - expected_offset as usize),
        ));
    }
    Ok((header, tensors))
}

pub fn decode_model(bytes: &[u8], origin: &Path) -> Result<(UNetModel<f32>, ModelMeta)> {
    let (header, tensors) = decode_parts(bytes, origin)?;
    let model = UNetModel::from_tensors(header.config, tensors)
        .map_err(|e| Error::format(origin, 9, e.to_string()))?;
    Ok((model, header.meta))
}

pub fn save_model(model: &UNetModel<f32>, meta: &ModelMeta, path: &Path) -> Result<()> {
    write_file(path, &encode_model(model, meta)?)
}

pub fn load_model(path: &Path) -> Result<(UNetModel<f32>, ModelMeta)> {
    decode_model(&read_file(path)?, path)
}

/// Loads a model that must match `expected`; a mismatch is reported as a
/// shape error naming the first offending tensor.
pub fn load_model_as(path: &Path, expected: UNetConfig) -> Result<(UNetModel<f32>, ModelMeta)> {
    let (header, tensors) = decode_parts(&read_file(path)?, path)?;
    let model = UNetModel::from_tensors(expected, tensors)?;
    Ok((model, header.meta))
}
