//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic        8 bytes  "DWACKPT\0"
//! version      u32      = 1
//! geometry     12 x u32 input_len input_dim conv1{filters width stride}
//!                       conv2{filters width stride} fc1 fc2 classes mode(0=dwa 1=linear)
//! batch norm   2 x f64  epsilon momentum
//!              2 x u8   bn1/bn2 running statistics initialised
//! iteration    u64
//! rng          32 bytes key, u64 stream, u128 word position
//! count        u64      number of f32 values that follow
//! values       f32...   parameter groups in declaration order, then
//!                       bn1 running mean, bn1 running var, bn2 running mean, bn2 running var
//! checksum     u64      first 8 bytes of SHA-256 over everything above
//! ```

use std::path::Path;

use ndarray::Array1;
use sha2::{Digest, Sha256};

use crate::nn::{BatchNorm, ConvGeometry, ConvMode, ModelGeometry, ModelState, ParamGroup};
use crate::rng::RngState;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"DWACKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelState,
    pub iteration: u64,
    pub rng: RngState,
}

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Parameter values are written as `f32`; everything else is exact.
pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let model = &ckpt.model;
    let g = model.geometry();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let mode = match g.mode {
        ConvMode::Dwa => 0u32,
        ConvMode::Linear => 1,
    };
    for v in [
        g.input_len,
        g.input_dim,
        g.conv1.filters,
        g.conv1.width,
        g.conv1.stride,
        g.conv2.filters,
        g.conv2.width,
        g.conv2.stride,
        g.fc1,
        g.fc2,
        g.classes,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&mode.to_le_bytes());
    out.extend_from_slice(&model.bn1().epsilon().to_le_bytes());
    out.extend_from_slice(&model.bn1().momentum().to_le_bytes());
    out.push(model.bn1().is_initialized() as u8);
    out.push(model.bn2().is_initialized() as u8);
    out.extend_from_slice(&ckpt.iteration.to_le_bytes());
    out.extend_from_slice(&ckpt.rng.key);
    out.extend_from_slice(&ckpt.rng.stream.to_le_bytes());
    out.extend_from_slice(&ckpt.rng.word_pos.to_le_bytes());

    let mut values: Vec<f64> = Vec::with_capacity(model.parameter_count() + 4 * g.conv1.filters);
    for group in ParamGroup::ALL {
        values.extend_from_slice(model.group(group));
    }
    for bn in [model.bn1(), model.bn2()] {
        values.extend(bn.running_mean().iter());
        values.extend(bn.running_var().iter());
    }
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 4 + 8 {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("version {version}, expected {VERSION}")));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    if checksum(body) != stored {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }

    let mut r = Reader { bytes: body, pos: 12 };
    let mut dims = [0usize; 11];
    for d in dims.iter_mut() {
        *d = r.u32()? as usize;
    }
    let mode = match r.u32()? {
        0 => ConvMode::Dwa,
        1 => ConvMode::Linear,
        m => return Err(Error::Checkpoint(format!("unknown conv mode {m}"))),
    };
    let geometry = ModelGeometry {
        input_len: dims[0],
        input_dim: dims[1],
        conv1: ConvGeometry {
            filters: dims[2],
            width: dims[3],
            stride: dims[4],
        },
        conv2: ConvGeometry {
            filters: dims[5],
            width: dims[6],
            stride: dims[7],
        },
        fc1: dims[8],
        fc2: dims[9],
        classes: dims[10],
        mode,
    };
    let epsilon = r.f64()?;
    let momentum = r.f64()?;
    let initialized = [r.take(1)?[0] != 0, r.take(1)?[0] != 0];
    let iteration = r.u64()?;
    let rng = RngState {
        key: r.array()?,
        stream: r.u64()?,
        word_pos: u128::from_le_bytes(r.array()?),
    };

    let mut model = ModelState::zeros(geometry.clone())
        .map_err(|e| Error::Checkpoint(format!("stored geometry: {e}")))?;
    *model.bn1_mut() = BatchNorm::new(geometry.conv1.filters, epsilon, momentum)?;
    *model.bn2_mut() = BatchNorm::new(geometry.conv2.filters, epsilon, momentum)?;

    let count = r.u64()? as usize;
    let expected = model.parameter_count() + 2 * (geometry.conv1.filters + geometry.conv2.filters);
    if count != expected {
        return Err(Error::Checkpoint(format!("{count} stored values, geometry needs {expected}")));
    }
    let raw = r.take(count * 4)?;
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let mut values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    for group in ParamGroup::ALL {
        for slot in model.group_mut(group) {
            *slot = values.next().expect("count checked");
        }
    }
    for (k, channels) in [geometry.conv1.filters, geometry.conv2.filters].into_iter().enumerate() {
        let mean: Array1<f64> = values.by_ref().take(channels).collect();
        let var: Array1<f64> = values.by_ref().take(channels).collect();
        if initialized[k] {
            let bn = if k == 0 { model.bn1_mut() } else { model.bn2_mut() };
            bn.set_running_stats(mean, var)
                .map_err(|e| Error::Checkpoint(format!("bn{} statistics: {e}", k + 1)))?;
        }
    }
    if ParamGroup::ALL
        .iter()
        .any(|&g| model.group(g).iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Checkpoint("non-finite parameter".into()));
    }
    Ok(Checkpoint { model, iteration, rng })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ckpt)).map_err(|e| Error::io(format!("write {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::PassOptions;
    use crate::rng::{Rng, Stream};
    use ndarray::Array2;

    fn trained_model() -> ModelState {
        let g = ModelGeometry {
            input_len: 12,
            input_dim: 2,
            conv1: ConvGeometry {
                filters: 3,
                width: 4,
                stride: 2,
            },
            conv2: ConvGeometry {
                filters: 2,
                width: 2,
                stride: 1,
            },
            fc1: 5,
            fc2: 4,
            classes: 3,
            mode: ConvMode::Dwa,
        };
        let mut m = ModelState::init(g, 5).unwrap();
        let x = Array2::from_shape_fn((12, 2), |(t, c)| (t as f64 * 0.7 + c as f64).sin());
        let trace = m.forward(&[x.view(), x.view()], PassOptions::train()).unwrap();
        m.update_running_stats(&trace);
        m
    }

    fn ckpt(model: ModelState) -> Checkpoint {
        let mut rng = Rng::new(4, Stream::Shuffle);
        rand::RngCore::next_u64(&mut rng);
        Checkpoint {
            model,
            iteration: 123,
            rng: rng.state(),
        }
    }

    #[test]
    fn round_trip_is_exact_at_stored_precision() {
        let mut model = trained_model();
        model.round_to_f32();
        let original = ckpt(model);
        let bytes = encode_checkpoint(&original);
        let loaded = decode_checkpoint(&bytes).unwrap();
        assert_eq!(loaded, original);
        assert_eq!(encode_checkpoint(&loaded), bytes);
    }

    #[test]
    fn unrounded_parameters_come_back_as_f32() {
        let model = trained_model();
        let loaded = decode_checkpoint(&encode_checkpoint(&ckpt(model.clone()))).unwrap();
        for g in ParamGroup::ALL {
            for (a, b) in model.group(g).iter().zip(loaded.model.group(g)) {
                assert_eq!(*a as f32 as f64, *b);
            }
        }
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let bytes = encode_checkpoint(&ckpt(trained_model()));
        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 0x40;
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Checkpoint(m)) if m.contains("checksum")));
    }

    #[test]
    fn truncation_and_version_are_detected() {
        let bytes = encode_checkpoint(&ckpt(trained_model()));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 20]).is_err());
        assert!(decode_checkpoint(&bytes[..6]).is_err());
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(decode_checkpoint(&v2), Err(Error::Checkpoint(m)) if m.contains("version")));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut model = trained_model();
        model.round_to_f32();
        let c = ckpt(model);
        save_checkpoint(&c, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), c);
    }
}
