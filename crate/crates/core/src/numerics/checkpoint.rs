//! Named-tensor container.
//!
//! Layout: magic `GFT1`, a little-endian `u64` header length, a JSON header
//! `{"meta":..,"tensors":[{"name","dtype","shape","offset"}]}`, then the
//! raw little-endian tensor data. Offsets are relative to the end of the
//! header.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::scalar::Scalar;
use super::tensor::Tensor;
use super::NumericsError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GFT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: Value,
    tensors: Vec<TensorEntry>,
}

/// Serializes `tensors` (in order) with free-form metadata.
pub fn write_checkpoint<T: Scalar>(meta: &Value, tensors: &[(&str, &Tensor<T>)]) -> Vec<u8> {
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        entries.push(TensorEntry {
            name: name.to_string(),
            dtype: T::DTYPE.to_string(),
            shape: t.shape().to_vec(),
            offset: blob.len() as u64,
        });
        for &x in t.data() {
            x.write_le(&mut blob);
        }
    }
    let header = serde_json::to_vec(&Header { meta: meta.clone(), tensors: entries }).expect("header serializes");
    let mut out = Vec::with_capacity(12 + header.len() + blob.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&blob);
    out
}

fn read_as<T: Scalar, S: Scalar>(blob: &[u8], n: usize) -> Vec<T> {
    blob.chunks_exact(S::BYTES).take(n).map(|c| T::of(S::read_le(c).f64())).collect()
}

/// Parses a checkpoint, converting stored values to `T`.
pub fn read_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(Value, Vec<(String, Tensor<T>)>), NumericsError> {
    let fmt = |m: String| NumericsError::Format(m);
    let rest = bytes.strip_prefix(CHECKPOINT_MAGIC.as_slice()).ok_or_else(|| fmt("missing GFT1 magic".into()))?;
    if rest.len() < 8 {
        return Err(fmt("truncated header length".into()));
    }
    let hlen = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
    let rest = &rest[8..];
    if rest.len() < hlen {
        return Err(fmt("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&rest[..hlen]).map_err(|e| fmt(e.to_string()))?;
    let blob = &rest[hlen..];
    let mut out = Vec::with_capacity(header.tensors.len());
    for e in header.tensors {
        let n: usize = e.shape.iter().product();
        let width = match e.dtype.as_str() {
            "f32" => 4,
            "f64" => 8,
            d => return Err(fmt(format!("unsupported dtype {d} for {}", e.name))),
        };
        let start = e.offset as usize;
        let end = start + n * width;
        if end > blob.len() {
            return Err(fmt(format!("tensor {} runs past the end of the data", e.name)));
        }
        let data = if width == 4 { read_as::<T, f32>(&blob[start..end], n) } else { read_as::<T, f64>(&blob[start..end], n) };
        out.push((e.name, Tensor::new(&e.shape, data)?));
    }
    Ok((header.meta, out))
}
