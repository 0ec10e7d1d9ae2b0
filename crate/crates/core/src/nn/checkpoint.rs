//! Binary checkpoint format.
//!
//! ```text
//! magic            8 bytes  "RLMPCKPT"
//! version          u32      1
//! input_features   u32
//! window           u32
//! kernel_size      u32
//! stride           u32
//! dropout          f64
//! embedding_dim    u32
//! classifier_dim   u32
//! num_classes      u32
//! n_filters        u32, then n_filters × u32
//! n_tensors        u32
//! per tensor:      rank u32, rank × u32 dims, product(dims) × f32
//! ```
//!
//! All integers and floats are little-endian. Tensors follow parameter
//! declaration order, then every batch-norm layer contributes its running mean
//! and running variance (in that order).

use std::io::{Read, Write};

use super::model::{Model, ModelConfig, RunningStats};
use super::optim::Param;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RLMPCKPT";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_tensor(out: &mut Vec<u8>, shape: &[usize], data: &[f32]) -> Result<()> {
    put_u32(out, shape.len())?;
    for &d in shape {
        put_u32(out, d)?;
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

/// Serialises `model` into a byte vector.
pub fn to_bytes(model: &Model) -> Result<Vec<u8>> {
    let c = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [c.input_features, c.window, c.kernel_size, c.stride] {
        put_u32(&mut out, v)?;
    }
    out.extend_from_slice(&c.dropout.to_le_bytes());
    for v in [c.embedding_dim, c.classifier_hidden_dim, c.num_classes] {
        put_u32(&mut out, v)?;
    }
    put_u32(&mut out, c.conv_filters.len())?;
    for &f in &c.conv_filters {
        put_u32(&mut out, f)?;
    }
    put_u32(&mut out, model.params().len() + 2 * model.running_stats().len())?;
    for p in model.params() {
        put_tensor(&mut out, p.value.shape(), p.value.data())?;
    }
    for r in model.running_stats() {
        put_tensor(&mut out, &[r.mean.len()], &r.mean)?;
        put_tensor(&mut out, &[r.var.len()], &r.var)?;
    }
    Ok(out)
}

pub fn write<W: Write>(model: &Model, mut writer: W) -> Result<()> {
    writer.write_all(&to_bytes(model)?)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self) -> Result<Tensor<f32>> {
        let rank = self.u32()?;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("implausible tensor rank {rank}")));
        }
        let shape = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Tensor::from_vec(&shape, data)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let input_features = r.u32()?;
    let window = r.u32()?;
    let kernel_size = r.u32()?;
    let stride = r.u32()?;
    let dropout = r.f64()?;
    let embedding_dim = r.u32()?;
    let classifier_hidden_dim = r.u32()?;
    let num_classes = r.u32()?;
    let n_filters = r.u32()?;
    if n_filters > 64 {
        return Err(Error::Checkpoint(format!("implausible filter count {n_filters}")));
    }
    let conv_filters = (0..n_filters).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let config = ModelConfig {
        input_features,
        window,
        conv_filters,
        kernel_size,
        stride,
        dropout,
        embedding_dim,
        classifier_hidden_dim,
        num_classes,
    };
    config.validate()?;
    let n_bn = 2 * config.conv_filters.len() + 1;
    let n_tensors = r.u32()?;
    if n_tensors < 2 * n_bn {
        return Err(Error::Checkpoint("too few tensors".into()));
    }
    let mut params = Vec::new();
    for _ in 0..n_tensors - 2 * n_bn {
        params.push(Param {
            name: String::new(),
            value: r.tensor()?,
        });
    }
    let mut running = Vec::new();
    for _ in 0..n_bn {
        let mean = r.tensor()?.into_data();
        let var = r.tensor()?.into_data();
        running.push(RunningStats { mean, var });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Model::from_parts(config, params, running)
}

pub fn read<R: Read>(mut reader: R) -> Result<Model> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bytes_and_outputs() {
        let config = ModelConfig {
            conv_filters: vec![3, 4],
            embedding_dim: 5,
            classifier_hidden_dim: 4,
            ..ModelConfig::new(2, 16, 4)
        };
        let model = Model::new(config, 9).unwrap();
        let bytes = to_bytes(&model).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&back).unwrap(), bytes);
        let x = Tensor::from_vec(&[1, 2, 16], (0..32).map(|i| i as f32 / 7.0).collect()).unwrap();
        assert_eq!(model.infer(&x).unwrap().probs, back.infer(&x).unwrap().probs);
        assert_eq!(back.params()[0].name, model.params()[0].name);
    }

    #[test]
    fn truncated_and_foreign_files_are_rejected() {
        let model = Model::new(ModelConfig::new(1, 32, 2), 0).unwrap();
        let bytes = to_bytes(&model).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(from_bytes(b"definitely not a checkpoint").is_err());
    }
}
