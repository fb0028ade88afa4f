//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `b"RFFPCKPT"`                     |
//! | 8      | 4    | format version (`u32`, currently 1)     |
//! | 12     | 4    | float width in bits (`u32`, 32 or 64)   |
//! | 16     | 8    | header length `H` in bytes (`u64`)      |
//! | 24     | H    | UTF-8 JSON header (see [`Header`])      |
//! | 24 + H | ...  | raw tensor data                         |
//!
//! The tensor data is every parameter followed by every buffer, in the order
//! listed in the header, each as contiguous little-endian floats of the
//! declared width. Nothing follows the last tensor.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CheckpointError;
use crate::float::{Float, FloatWidth};
use crate::layers::LayerSpec;
use crate::network::Network;

pub const MAGIC: &[u8; 8] = b"RFFPCKPT";
pub const FORMAT_VERSION: u32 = 1;
const PREFIX_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub input_shape: Vec<usize>,
    pub seed: u64,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<TensorEntry>,
    pub buffers: Vec<TensorEntry>,
}

fn entries<T: Float>(list: Vec<(String, &crate::Tensor<T>)>) -> Vec<TensorEntry> {
    list.into_iter()
        .map(|(name, t)| TensorEntry {
            name,
            shape: t.shape().to_vec(),
        })
        .collect()
}

pub fn to_bytes<T: Float>(net: &Network<T>) -> Vec<u8> {
    let header = Header {
        input_shape: net.input_shape().to_vec(),
        seed: net.seed(),
        layers: net.specs(),
        params: entries(net.named_params()),
        buffers: entries(net.named_buffers()),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(PREFIX_LEN + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&T::WIDTH.bits().to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in net.named_params().into_iter().chain(net.named_buffers()) {
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn save_checkpoint<T: Float>(
    net: &Network<T>,
    path: impl AsRef<Path>,
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&to_bytes(net))?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Float>(path: impl AsRef<Path>) -> Result<Network<T>, CheckpointError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

/// Reads just the JSON header.
pub fn read_header(bytes: &[u8]) -> Result<(FloatWidth, Header), CheckpointError> {
    if bytes.len() < PREFIX_LEN {
        return Err(CheckpointError::Truncated(format!(
            "{} bytes is shorter than the fixed prefix",
            bytes.len()
        )));
    }
    if &bytes[..8] != MAGIC {
        return Err(CheckpointError::Header("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let width = match u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) {
        32 => FloatWidth::F32,
        64 => FloatWidth::F64,
        other => {
            return Err(CheckpointError::Header(format!(
                "unsupported float width {other}"
            )))
        }
    };
    let header_len = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let end = PREFIX_LEN
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| CheckpointError::Truncated("header extends past end of file".into()))?;
    let header: Header = serde_json::from_slice(&bytes[PREFIX_LEN..end])
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    Ok((width, header))
}

pub fn from_bytes<T: Float>(bytes: &[u8]) -> Result<Network<T>, CheckpointError> {
    let (width, header) = read_header(bytes)?;
    let header_len = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let mut net = Network::<T>::new(&header.input_shape, &header.layers, header.seed)?;

    let expected: Vec<TensorEntry> = entries(net.named_params())
        .into_iter()
        .chain(entries(net.named_buffers()))
        .collect();
    let stored: Vec<&TensorEntry> = header.params.iter().chain(&header.buffers).collect();
    if stored.len() != expected.len() {
        return Err(CheckpointError::ShapeMismatch {
            name: "<tensor list>".into(),
            expected: vec![expected.len()],
            found: vec![stored.len()],
        });
    }
    for (s, e) in stored.iter().zip(&expected) {
        if s.shape != e.shape || s.name != e.name {
            return Err(CheckpointError::ShapeMismatch {
                name: e.name.clone(),
                expected: e.shape.clone(),
                found: s.shape.clone(),
            });
        }
    }

    let elem = width.bytes();
    let total: usize = expected
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    let mut cursor = PREFIX_LEN + header_len;
    let needed = cursor + total * elem;
    if bytes.len() < needed {
        return Err(CheckpointError::Truncated(format!(
            "expected {needed} bytes, found {}",
            bytes.len()
        )));
    }
    if bytes.len() > needed {
        return Err(CheckpointError::Header(format!(
            "{} trailing bytes after tensor data",
            bytes.len() - needed
        )));
    }
    let mut read_into = |dst: &mut [T]| {
        for v in dst.iter_mut() {
            let raw = &bytes[cursor..cursor + elem];
            *v = match width {
                FloatWidth::F32 => T::of(f32::read_le(raw) as f64),
                FloatWidth::F64 => T::of(f64::read_le(raw)),
            };
            cursor += elem;
        }
    };
    for t in net.params_mut() {
        read_into(t.data_mut());
    }
    for t in net.buffers_mut() {
        read_into(t.data_mut());
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Mode;
    use crate::Tensor;

    fn net() -> Network<f32> {
        let specs = vec![
            LayerSpec::Conv1d {
                filters: 3,
                kernel: 3,
            },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2 },
        ];
        Network::new(&[2, 6], &specs, 9).unwrap()
    }

    #[test]
    fn roundtrip_preserves_eval_outputs() {
        let mut a = net();
        // move the running stats away from their defaults
        let x = Tensor::from_f64(
            &[3, 2, 6],
            &(0..36).map(|i| i as f64 * 0.1).collect::<Vec<_>>(),
        )
        .unwrap();
        a.forward(&x).unwrap();
        a.set_mode(Mode::Eval);
        let bytes = to_bytes(&a);
        let b: Network<f32> = from_bytes(&bytes).unwrap();
        assert_eq!(a.infer(&x).unwrap().data(), b.infer(&x).unwrap().data());
        assert_eq!(to_bytes(&b), bytes);
    }

    #[test]
    fn version_and_truncation_errors() {
        let bytes = to_bytes(&net());
        let mut bad = bytes.clone();
        bad[8] = 7;
        assert!(matches!(
            from_bytes::<f32>(&bad),
            Err(CheckpointError::Version { found: 7, .. })
        ));
        assert!(matches!(
            from_bytes::<f32>(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Truncated(_))
        ));
        assert!(matches!(
            from_bytes::<f32>(&bytes[..10]),
            Err(CheckpointError::Truncated(_))
        ));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(
            from_bytes::<f32>(&magic),
            Err(CheckpointError::Header(_))
        ));
    }

    #[test]
    fn tampered_shape_is_reported() {
        let bytes = to_bytes(&net());
        let (_, mut header) = read_header(&bytes).unwrap();
        header.params[0].shape = vec![3, 2, 5];
        let json = serde_json::to_vec(&header).unwrap();
        let old_len = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let mut out = bytes[..16].to_vec();
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&bytes[24 + old_len..]);
        assert!(matches!(
            from_bytes::<f32>(&out),
            Err(CheckpointError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn f32_file_loads_into_f64_network() {
        let a = net();
        let b: Network<f64> = from_bytes(&to_bytes(&a)).unwrap();
        let x = Tensor::<f32>::full(&[1, 2, 6], 0.5);
        let ya = a.infer(&x).unwrap();
        let yb = b.infer(&x.cast::<f64>()).unwrap();
        for (p, q) in ya.data().iter().zip(yb.data()) {
            assert!((*p as f64 - q).abs() < 1e-5);
        }
    }
}
