//! Checkpoint container.
//!
//! Layout: the 8-byte magic `TWCKPT01`, a little-endian `u64` header length,
//! a UTF-8 JSON header (config, vocabulary hash, optional codebook, step
//! counter, and a table of named tensors with shapes and payload offsets),
//! then every tensor as little-endian `f32` in table order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::Model;
use super::params::Params;
use crate::codec::Vocabulary;
use crate::quantizer::Codebook;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"TWCKPT01";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Params,
    pub codebook: Option<Codebook>,
    pub vocab_hash: String,
    pub step: usize,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    /// Offset into the payload, in `f32` elements.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab_hash: String,
    codebook: Option<Codebook>,
    step: usize,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    /// Snapshots a model. Parameters are rounded to `f32` in the model too,
    /// so the in-memory model and any reloaded copy agree exactly.
    pub fn from_model(model: &mut Model, codebook: Option<Codebook>, step: usize) -> Checkpoint {
        model.params.round_to_f32();
        Checkpoint {
            config: model.config.clone(),
            params: model.params.clone(),
            codebook,
            vocab_hash: Vocabulary::new(model.config.mode).hash(),
            step,
        }
    }

    pub fn model(&self) -> Result<Model> {
        Model::from_parts(self.config.clone(), self.params.clone())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let mut tensors = Vec::new();
        let mut offset = 0;
        for (name, t) in self.params.tensors() {
            tensors.push(TensorEntry {
                name,
                shape: [t.nrows(), t.ncols()],
                offset,
            });
            offset += t.len();
        }
        let header = Header {
            config: self.config.clone(),
            vocab_hash: self.vocab_hash.clone(),
            codebook: self.codebook.clone(),
            step: self.step,
            tensors,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let io = |e| Error::Checkpoint(format!("write failed: {e}"));
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&header).map_err(io)?;
        let mut payload = Vec::with_capacity(offset * 4);
        for (_, t) in self.params.tensors() {
            for &x in t.iter() {
                payload.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        w.write_all(&payload).map_err(io)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Checkpoint> {
        let io = |e| Error::Checkpoint(format!("read failed: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(io)?;
        let len = usize::try_from(u64::from_le_bytes(len))
            .map_err(|_| Error::Checkpoint("header length overflow".into()))?;
        if len > 64 << 20 {
            return Err(Error::Checkpoint(format!("implausible header length {len}")));
        }
        let mut header = vec![0u8; len];
        r.read_exact(&mut header).map_err(io)?;
        let header: Header = serde_json::from_slice(&header)
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        header.config.validate()?;

        let expected_hash = Vocabulary::new(header.config.mode).hash();
        if header.vocab_hash != expected_hash {
            return Err(Error::Checkpoint(format!(
                "vocabulary hash mismatch: file {}, this build {expected_hash}",
                header.vocab_hash
            )));
        }
        if let Some(cb) = &header.codebook {
            cb.validate()?;
        }

        let mut payload = Vec::new();
        r.read_to_end(&mut payload).map_err(io)?;
        if payload.len() % 4 != 0 {
            return Err(Error::Checkpoint("payload is not a whole number of f32".into()));
        }
        let floats: Vec<f32> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();

        let mut params = Params::zeros(&header.config);
        let slots = params.tensors_mut();
        if slots.len() != header.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors in file, config implies {}",
                header.tensors.len(),
                slots.len()
            )));
        }
        for ((name, slot), entry) in slots.into_iter().zip(&header.tensors) {
            if entry.name != name || entry.shape != [slot.nrows(), slot.ncols()] {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match expected {name} {:?}",
                    entry.name,
                    entry.shape,
                    slot.dim()
                )));
            }
            let end = entry.offset + slot.len();
            let data = floats
                .get(entry.offset..end)
                .ok_or_else(|| Error::Checkpoint(format!("payload too short for {name}")))?;
            *slot = Array2::from_shape_vec(slot.dim(), data.iter().map(|&x| f64::from(x)).collect())
                .expect("shape checked");
        }
        Ok(Checkpoint {
            config: header.config,
            params,
            codebook: header.codebook,
            vocab_hash: header.vocab_hash,
            step: header.step,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::read_from(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Mode;

    #[test]
    fn round_trip_is_exact() {
        let mut model = Model::new(ModelConfig::tiny(Mode::NoGrooving), 9).unwrap();
        let ckpt = Checkpoint::from_model(&mut model, None, 17);
        let mut bytes = Vec::new();
        ckpt.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.model().unwrap(), model);
    }

    #[test]
    fn rejects_corruption() {
        let mut model = Model::new(ModelConfig::tiny(Mode::NoGrooving), 9).unwrap();
        let ckpt = Checkpoint::from_model(&mut model, None, 0);
        let mut bytes = Vec::new();
        ckpt.write_to(&mut bytes).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(Checkpoint::read_from(bad_magic.as_slice()).is_err());

        let truncated = &bytes[..bytes.len() - 4];
        assert!(Checkpoint::read_from(truncated).is_err());

        let mut wrong_hash = ckpt.clone();
        wrong_hash.vocab_hash = "00".into();
        let mut b = Vec::new();
        wrong_hash.write_to(&mut b).unwrap();
        let err = Checkpoint::read_from(b.as_slice()).unwrap_err();
        assert!(err.to_string().contains("vocabulary hash"));
    }
}
