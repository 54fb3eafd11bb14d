//! The `FCW1` weights format.
//!
//! ```text
//! "FCW1" | u32 version = 1 | u32 record count
//! per record: u32 name length | UTF-8 name | u32 ndim | u32 × ndim dims | f32 × Π dims
//! ```
//!
//! Every integer and float is little-endian.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, WeightsError};
use crate::tensor::Tensor;

use super::{build_facechannel, build_sequence_skeleton, ModelGraph, SequenceWiring, LSTM_UNITS, SEQ_DENSE_UNITS};

pub const MAGIC: [u8; 4] = *b"FCW1";
pub const VERSION: u32 = 1;

/// Serialise named tensors into the record format.
pub fn encode_records<'a>(records: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let records: Vec<_> = records.into_iter().collect();
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for (name, tensor) in records {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(tensor.ndim() as u32).to_le_bytes());
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in tensor.data() {
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
    fn take(&mut self, n: usize, context: impl FnOnce() -> String) -> Result<&'a [u8], WeightsError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(WeightsError::Truncated { context: context() });
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, context: impl FnOnce() -> String) -> Result<u32, WeightsError> {
        let b = self.take(4, context)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parse the record format into `(name, tensor)` pairs in file order.
pub fn decode_records(bytes: &[u8]) -> Result<Vec<(String, Tensor)>, WeightsError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, || "magic".into())?;
    if magic != MAGIC {
        return Err(WeightsError::BadMagic { found: [magic[0], magic[1], magic[2], magic[3]] });
    }
    let version = r.u32(|| "version".into())?;
    if version != VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    let count = r.u32(|| "record count".into())?;
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for idx in 0..count {
        let name_len = r.u32(|| format!("name length of record {idx}"))? as usize;
        let name = r.take(name_len, || format!("name of record {idx}"))?;
        let name = String::from_utf8(name.to_vec()).map_err(|_| WeightsError::Malformed(format!("record {idx} name is not UTF-8")))?;
        let ndim = r.u32(|| format!("ndim of `{name}`"))? as usize;
        let mut dims = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            dims.push(r.u32(|| format!("dims of `{name}`"))? as usize);
        }
        if ndim == 0 || dims.contains(&0) {
            return Err(WeightsError::Malformed(format!("`{name}` has empty shape {dims:?}")));
        }
        let numel = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let bytes_needed = numel.and_then(|n| n.checked_mul(4)).ok_or_else(|| WeightsError::Malformed(format!("`{name}` is too large")))?;
        let raw = r.take(bytes_needed, || format!("data of `{name}`"))?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        if !seen.insert(name.clone()) {
            return Err(WeightsError::DuplicateTensor(name));
        }
        records.push((name, Tensor::new(&dims, data).expect("dims checked")));
    }
    if r.pos != bytes.len() {
        return Err(WeightsError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(records)
}

pub fn write_records<'a>(path: &Path, records: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<(), WeightsError> {
    let bytes = encode_records(records);
    let mut file = fs::File::create(path).map_err(|source| WeightsError::Io { path: path.into(), source })?;
    file.write_all(&bytes).map_err(|source| WeightsError::Io { path: path.into(), source })
}

pub fn read_records(path: &Path) -> Result<Vec<(String, Tensor)>, WeightsError> {
    let bytes = fs::read(path).map_err(|source| WeightsError::Io { path: path.into(), source })?;
    decode_records(&bytes)
}

pub fn save_weights(model: &ModelGraph, path: &Path) -> Result<()> {
    write_records(path, model.params().map(|p| (p.name.as_str(), &p.value)))?;
    Ok(())
}

/// Copy records into an existing graph, validating names and dims.
pub fn apply_records(model: &mut ModelGraph, records: Vec<(String, Tensor)>) -> Result<(), WeightsError> {
    let mut loaded = HashSet::new();
    for (name, tensor) in records {
        let Some(param) = model.param_mut(&name) else {
            return Err(WeightsError::UnknownTensor(name));
        };
        if param.value.shape() != tensor.shape() {
            return Err(WeightsError::ShapeMismatch { name, expected: param.value.shape().to_vec(), found: tensor.shape().to_vec() });
        }
        param.value = tensor;
        loaded.insert(name);
    }
    if let Some(missing) = model.params().find(|p| !loaded.contains(&p.name)) {
        return Err(WeightsError::MissingTensor(missing.name.clone()));
    }
    Ok(())
}

pub fn load_weights_into(model: &mut ModelGraph, path: &Path) -> Result<()> {
    let records = read_records(path)?;
    apply_records(model, records)?;
    Ok(())
}

/// Load a weights file, inferring the architecture from its records.
pub fn load_weights(path: &Path) -> Result<ModelGraph> {
    let records = read_records(path)?;
    let mut model = skeleton_for(&records)?;
    apply_records(&mut model, records)?;
    Ok(model)
}

/// Build an empty-valued graph whose layout matches `records`.
pub fn skeleton_for(records: &[(String, Tensor)]) -> Result<ModelGraph, WeightsError> {
    let find = |name: &str| records.iter().find(|(n, _)| n == name).map(|(_, t)| t);
    let classes = find("head.expression.bias")
        .ok_or_else(|| WeightsError::MissingTensor("head.expression.bias".into()))?
        .shape()[0];
    if classes < 2 {
        return Err(WeightsError::Layout(format!("{classes} expression classes")));
    }
    let graph = if find("lstm.w_i").is_some() {
        let head_inputs = find("head.arousal.weight")
            .ok_or_else(|| WeightsError::MissingTensor("head.arousal.weight".into()))?
            .shape()[0];
        let wiring = if head_inputs == LSTM_UNITS + SEQ_DENSE_UNITS { SequenceWiring::Concat } else { SequenceWiring::Sequential };
        build_sequence_skeleton(classes, wiring)
    } else {
        build_facechannel(classes, 0)
    };
    graph.map_err(|e| WeightsError::Layout(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let t = Tensor::new(&[2], vec![1.0f32, -0.5]).unwrap();
        let bytes = encode_records([("ab", &t)]);
        let mut expected = b"FCW1".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(b"ab");
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-0.5f32).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn decode_errors_are_distinct() {
        let t = Tensor::new(&[3], vec![1.0f32, 2.0, 3.0]).unwrap();
        let good = encode_records([("x", &t)]);
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_records(&bad_magic), Err(WeightsError::BadMagic { .. })));
        assert!(matches!(decode_records(&good[..good.len() - 2]), Err(WeightsError::Truncated { .. })));
        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(decode_records(&bad_version), Err(WeightsError::UnsupportedVersion(9))));
        let dup = encode_records([("x", &t), ("x", &t)]);
        assert!(matches!(decode_records(&dup), Err(WeightsError::DuplicateTensor(_))));
        assert_eq!(decode_records(&good).unwrap(), vec![("x".to_string(), t)]);
    }

    proptest::proptest! {
        #[test]
        fn records_round_trip_bitwise(values in proptest::collection::vec(proptest::num::f32::ANY, 1..40)) {
            let n = values.len();
            let t = Tensor::new(&[n], values).unwrap();
            let decoded = decode_records(&encode_records([("p", &t)])).unwrap();
            let bits = |x: &Tensor| x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            proptest::prop_assert_eq!(bits(&decoded[0].1), bits(&t));
        }
    }
}
