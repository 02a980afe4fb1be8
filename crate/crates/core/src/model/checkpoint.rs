//! Checkpoint files.
//!
//! ```text
//! magic "SPFC" | version u8 | header_len u32 | header JSON | payload
//! ```
//!
//! The JSON header holds the model configuration, optional run metadata and
//! optimizer settings, and a tensor directory of `(name, shape, offset,
//! length)` with byte offsets into the payload. The payload is the
//! concatenation of every tensor as little-endian `f32`, in directory order.
//! Optimizer velocities are stored as `optimizer.velocity.<parameter>`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::Model;
use crate::error::{Error, Result};
use crate::fsutil::{put_f32s, put_u32, read_file, write_atomic, ByteReader};
use crate::nn::{OptimizerState, SgdConfig};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SPFC";
pub const CHECKPOINT_VERSION: u8 = 1;

const VELOCITY_PREFIX: &str = "optimizer.velocity.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: usize,
    /// Byte length.
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerHeader {
    pub config: SgdConfig,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    /// Effective run configuration that produced the checkpoint.
    pub run: Option<serde_json::Value>,
    pub optimizer: Option<OptimizerHeader>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: Option<OptimizerState>,
    pub run: Option<serde_json::Value>,
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Checkpoint {
            model,
            optimizer: None,
            run: None,
        }
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut tensors: Vec<(String, &Tensor)> = Vec::new();
    for p in ckpt.model.params() {
        if let Some(i) = p.value.first_non_finite() {
            return Err(Error::NumericFailure(format!(
                "refusing to save {}: non-finite value at coordinate {i}",
                p.name
            )));
        }
        tensors.push((p.name.clone(), &p.value));
    }
    if let Some(opt) = &ckpt.optimizer {
        for (name, v) in &opt.velocities {
            tensors.push((format!("{VELOCITY_PREFIX}{name}"), v));
        }
    }
    let mut offset = 0;
    let directory = tensors
        .iter()
        .map(|(name, t)| {
            let entry = TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
                length: t.len() * 4,
            };
            offset += entry.length;
            entry
        })
        .collect();
    let header = CheckpointHeader {
        model: ckpt.model.config().clone(),
        run: ckpt.run.clone(),
        optimizer: ckpt.optimizer.as_ref().map(|o| OptimizerHeader {
            config: o.config,
            step: o.step,
        }),
        tensors: directory,
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(9 + header.len() + offset);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    put_u32(&mut out, header.len())?;
    out.extend_from_slice(&header);
    for (_, t) in &tensors {
        put_f32s(&mut out, t.data());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes, "checkpoint");
    let magic = r
        .bytes(4)
        .map_err(|_| Error::CorruptHeader("file too short for a checkpoint".into()))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::CorruptHeader(format!("bad magic {magic:02x?}, expected \"SPFC\"")));
    }
    let version = r.u8().map_err(|_| Error::CorruptHeader("missing version byte".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let header_len = r.u32().map_err(|_| Error::CorruptHeader("missing header length".into()))? as usize;
    let header_bytes = r
        .bytes(header_len)
        .map_err(|_| Error::CorruptHeader(format!("header length {header_len} exceeds the file")))?;
    let header: CheckpointHeader = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::CorruptHeader(format!("unreadable header JSON: {e}")))?;

    let mut expected = 0;
    for e in &header.tensors {
        if e.offset != expected || e.length != e.shape.iter().product::<usize>() * 4 {
            return Err(Error::CorruptHeader(format!(
                "tensor {} has offset {} and length {} but {} and {} were expected",
                e.name,
                e.offset,
                e.length,
                expected,
                e.shape.iter().product::<usize>() * 4
            )));
        }
        expected += e.length;
    }
    if r.remaining() < expected {
        return Err(Error::TruncatedPayload(format!(
            "directory needs {expected} payload bytes but only {} remain",
            r.remaining()
        )));
    }
    if r.remaining() > expected {
        return Err(Error::CorruptHeader(format!(
            "{} unexpected trailing bytes after the payload",
            r.remaining() - expected
        )));
    }

    let mut model = Model::new(header.model.clone()).map_err(|e| Error::ConfigMismatch(e.to_string()))?;
    let mut loaded: Vec<(String, Tensor)> = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let values = r.f32s(e.length / 4)?;
        loaded.push((e.name.clone(), Tensor::from_vec(&e.shape, values)?));
    }
    let mut velocities = Vec::new();
    let mut assigned = 0;
    for (name, tensor) in loaded {
        if let Some(param_name) = name.strip_prefix(VELOCITY_PREFIX) {
            let p = model.param(param_name).ok_or_else(|| {
                Error::ConfigMismatch(format!("velocity for unknown parameter {param_name}"))
            })?;
            if p.value.shape() != tensor.shape() {
                return Err(Error::ConfigMismatch(format!(
                    "velocity {param_name} has shape {:?}, parameter has {:?}",
                    tensor.shape(),
                    p.value.shape()
                )));
            }
            velocities.push((param_name.to_string(), tensor));
            continue;
        }
        let p = model
            .param_mut(&name)
            .ok_or_else(|| Error::ConfigMismatch(format!("checkpoint tensor {name} is not part of the configured model")))?;
        if p.value.shape() != tensor.shape() {
            return Err(Error::ConfigMismatch(format!(
                "{name} is stored as {:?} but the configuration needs {:?}",
                tensor.shape(),
                p.value.shape()
            )));
        }
        p.value = tensor;
        assigned += 1;
    }
    let total = model.params().len();
    if assigned != total {
        let present: Vec<&str> = header.tensors.iter().map(|e| e.name.as_str()).collect();
        let missing: Vec<String> = model
            .params()
            .iter()
            .filter(|p| !present.contains(&p.name.as_str()))
            .map(|p| p.name.clone())
            .collect();
        return Err(Error::ConfigMismatch(format!(
            "checkpoint lacks {} of {total} tensors, first {}",
            missing.len(),
            missing.first().map_or("?", |s| s.as_str())
        )));
    }
    let optimizer = match header.optimizer {
        Some(o) => {
            let mut state = OptimizerState::new(o.config)?;
            state.step = o.step;
            state.velocities = velocities;
            Some(state)
        }
        None if velocities.is_empty() => None,
        None => {
            return Err(Error::CorruptHeader(
                "velocities present without optimizer settings".into(),
            ))
        }
    };
    Ok(Checkpoint {
        model,
        optimizer,
        run: header.run,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ckpt)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    fn tiny() -> Model {
        Model::new(ModelConfig {
            wide_input: 40,
            ..ModelConfig::tiny()
        })
        .unwrap()
    }

    #[test]
    fn roundtrip_bitwise() {
        let ckpt = Checkpoint::new(tiny());
        let bytes = encode_checkpoint(&ckpt).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn optimizer_state_survives() {
        let mut model = tiny();
        let mut state = OptimizerState::new(SgdConfig::default()).unwrap();
        state.step = 17;
        state.velocities = model
            .params_mut()
            .into_iter()
            .filter(|p| p.trainable)
            .map(|p| {
                let mut v = p.value.zeros_like();
                v.fill(0.25);
                (p.name.clone(), v)
            })
            .collect();
        let ckpt = Checkpoint {
            model,
            optimizer: Some(state),
            run: Some(serde_json::json!({"seed": 3})),
        };
        let back = decode_checkpoint(&encode_checkpoint(&ckpt).unwrap()).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn directory_lists_every_parameter() {
        let model = tiny();
        let bytes = encode_checkpoint(&Checkpoint::new(model.clone())).unwrap();
        let len = u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]) as usize;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[9..9 + len]).unwrap();
        assert_eq!(header.tensors.len(), model.params().len());
    }

    #[test]
    fn truncated_by_one_byte() {
        let bytes = encode_checkpoint(&Checkpoint::new(tiny())).unwrap();
        let err = decode_checkpoint(&bytes[..bytes.len() - 1]).unwrap_err();
        assert_eq!(err.class(), "truncated-payload");
    }

    #[test]
    fn corrupt_magic_and_version() {
        let bytes = encode_checkpoint(&Checkpoint::new(tiny())).unwrap();
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert_eq!(decode_checkpoint(&bad).unwrap_err().class(), "corrupt-header");
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert_eq!(decode_checkpoint(&bad).unwrap_err().class(), "unsupported-version");
        let mut bad = bytes;
        bad[12] = b'#';
        assert_eq!(decode_checkpoint(&bad).unwrap_err().class(), "corrupt-header");
    }

    #[test]
    fn shape_mismatch_against_config() {
        let a = Model::new(ModelConfig {
            wide_input: 40,
            ..ModelConfig::tiny()
        })
        .unwrap();
        let bytes = encode_checkpoint(&Checkpoint::new(a)).unwrap();
        // rewrite the header to claim a different wide input length
        let len = u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]) as usize;
        let mut header: CheckpointHeader = serde_json::from_slice(&bytes[9..9 + len]).unwrap();
        header.model.wide_input = 41;
        let new_header = serde_json::to_vec(&header).unwrap();
        let mut rebuilt = bytes[..5].to_vec();
        rebuilt.extend_from_slice(&(new_header.len() as u32).to_le_bytes());
        rebuilt.extend_from_slice(&new_header);
        rebuilt.extend_from_slice(&bytes[9 + len..]);
        assert_eq!(decode_checkpoint(&rebuilt).unwrap_err().class(), "config-mismatch");
    }

    #[test]
    fn refuses_non_finite() {
        let mut model = tiny();
        model.params_mut()[0].value.data_mut()[0] = f32::NAN;
        assert_eq!(encode_checkpoint(&Checkpoint::new(model)).unwrap_err().class(), "numeric-failure");
    }

    #[test]
    fn variants_roundtrip() {
        for v in [Variant::DeepOnly, Variant::WideOnly] {
            let model = Model::new(ModelConfig {
                wide_input: 40,
                ..ModelConfig::tiny().with_variant(v)
            })
            .unwrap();
            let ckpt = Checkpoint::new(model);
            assert_eq!(decode_checkpoint(&encode_checkpoint(&ckpt).unwrap()).unwrap(), ckpt);
        }
    }
}
