//! Weight checkpoints: `SFCKPT1\n`, a little-endian `u64` header length, a
//! JSON header (input shape, layers, parameter shapes and trainable flags,
//! caller metadata), then every parameter as little-endian `f32`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::layers::{LayerSpec, Param, Sequential};
use super::{NnError, Tensor};
use crate::fsutil::write_atomic;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SFCKPT1\n";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    param_shapes: Vec<Vec<usize>>,
    trainable: Vec<bool>,
    meta: serde_json::Value,
}

pub fn checkpoint_bytes(net: &Sequential, meta: serde_json::Value) -> Vec<u8> {
    let header = Header {
        input_shape: net.input_shape().to_vec(),
        layers: net.layers().to_vec(),
        param_shapes: net.params().iter().map(|p| p.value.shape().to_vec()).collect(),
        trainable: net.params().iter().map(|p| p.trainable).collect(),
        meta,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 4 * net.num_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in net.params() {
        for &v in p.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(Sequential, serde_json::Value), NnError> {
    let bad = |m: &str| NnError::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing SFCKPT1 magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
    let mut off = 16 + hlen;
    let mut params = Vec::with_capacity(header.param_shapes.len());
    for (shape, &trainable) in header.param_shapes.iter().zip(&header.trainable) {
        let n: usize = shape.iter().product();
        let raw = bytes.get(off..off + 4 * n).ok_or_else(|| bad("truncated parameters"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        params.push(Param {
            value: Arc::new(Tensor::new(shape.clone(), data)?),
            trainable,
        });
        off += 4 * n;
    }
    if off != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    let net = Sequential::from_parts(header.input_shape, header.layers, params)?;
    Ok((net, header.meta))
}

pub fn save_checkpoint(net: &Sequential, meta: serde_json::Value, path: &Path) -> Result<(), NnError> {
    write_atomic(path, &checkpoint_bytes(net, meta)).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<(Sequential, serde_json::Value), NnError> {
    let bytes = std::fs::read(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Init;

    #[test]
    fn round_trip() {
        let mut net = Sequential::new(
            vec![1, 6],
            vec![
                LayerSpec::Conv1d {
                    in_channels: 1,
                    out_channels: 2,
                    kernel_size: 3,
                },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_features: 12,
                    out_features: 3,
                    init: Init::Head,
                },
            ],
            4,
        )
        .unwrap();
        net.set_trainable(0..1, false);
        let bytes = checkpoint_bytes(&net, serde_json::json!({"seed": 4}));
        let (back, meta) = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(meta["seed"], 4);
        assert_eq!(back.layers(), net.layers());
        assert!(!back.params()[0].trainable && back.params()[2].trainable);
        for (a, b) in back.params().iter().zip(net.params()) {
            for (x, y) in a.value.data().iter().zip(b.value.data()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(checkpoint_from_bytes(b"SFCKPT2\n").is_err());
    }
}
