//! Checkpoint file: magic `AKPT`, u32 LE header length, UTF-8 JSON header,
//! then every tensor as f32 LE in declared order. Per layer module: gamma,
//! beta, running_mean, running_var, FC weights (row-major, out x in), FC
//! bias. Then the output layer's weights and bias.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{BatchNorm, HeadConfig, HeadModel, LayerModule, Linear, Mode};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    /// Input width, each layer module's width, then the output width (1).
    pub widths: Vec<usize>,
    pub dropout_p: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
    pub target_scale: f64,
    pub seed: u64,
}

impl CheckpointHeader {
    fn from_config(c: &HeadConfig) -> Self {
        let mut widths = c.widths.clone();
        widths.push(1);
        Self {
            version: CHECKPOINT_VERSION,
            widths,
            dropout_p: c.dropout.clone(),
            momentum: c.momentum,
            epsilon: c.epsilon,
            target_scale: c.target_scale,
            seed: c.seed,
        }
    }

    fn to_config(&self) -> Result<HeadConfig> {
        let (last, layers) = self
            .widths
            .split_last()
            .ok_or_else(|| Error::Checkpoint("empty widths".into()))?;
        if *last != 1 {
            return Err(Error::Checkpoint(format!("output width {last}, expected 1")));
        }
        let cfg = HeadConfig {
            widths: layers.to_vec(),
            dropout: self.dropout_p.clone(),
            momentum: self.momentum,
            epsilon: self.epsilon,
            target_scale: self.target_scale,
            seed: self.seed,
        };
        cfg.validate()
            .map_err(|e| Error::Checkpoint(format!("invalid header: {e}")))?;
        Ok(cfg)
    }
}

pub fn encode_checkpoint(model: &HeadModel<f32>) -> Result<Vec<u8>> {
    if !model.is_finite() {
        return Err(Error::Numeric("model has non-finite parameters".into()));
    }
    let header = serde_json::to_vec(&CheckpointHeader::from_config(&model.config))?;
    let mut out = Vec::with_capacity(8 + header.len() + 4 * model.param_count() * 2);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let mut put = |vals: &[f32]| {
        for v in vals {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    for l in &model.layers {
        put(l.bn.gamma.as_slice().expect("contiguous"));
        put(l.bn.beta.as_slice().expect("contiguous"));
        put(l.bn.running_mean.as_slice().expect("contiguous"));
        put(l.bn.running_var.as_slice().expect("contiguous"));
        put(l.fc.weights.as_slice().expect("contiguous"));
        put(l.fc.bias.as_slice().expect("contiguous"));
    }
    put(model.output.weights.as_slice().expect("contiguous"));
    put(model.output.bias.as_slice().expect("contiguous"));
    Ok(out)
}

struct Blobs<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Blobs<'_> {
    fn take(&mut self, n: usize) -> Result<Vec<f32>> {
        let end = self
            .pos
            .checked_add(n * 4)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!(
                    "corrupt payload: need {n} values at byte {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let vals = self.bytes[self.pos..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect::<Vec<_>>();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!(
                "corrupt payload: non-finite value near byte {}",
                self.pos
            )));
        }
        self.pos = end;
        Ok(vals)
    }

    fn vec1(&mut self, n: usize) -> Result<Array1<f32>> {
        Ok(Array1::from(self.take(n)?))
    }

    fn mat(&mut self, rows: usize, cols: usize) -> Result<Array2<f32>> {
        Array2::from_shape_vec((rows, cols), self.take(rows * cols)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<HeadModel<f32>> {
    if bytes.get(..4) != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(Error::Checkpoint("bad magic, expected AKPT".into()));
    }
    let hlen = bytes
        .get(4..8)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
        .ok_or_else(|| Error::Checkpoint("truncated header length".into()))?;
    let hbytes = bytes
        .get(8..8 + hlen)
        .ok_or_else(|| Error::Checkpoint("truncated JSON header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(hbytes)
        .map_err(|e| Error::Checkpoint(format!("unreadable header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "version mismatch: file has {}, reader supports {CHECKPOINT_VERSION}",
            header.version
        )));
    }
    let config = header.to_config()?;
    let mut blobs = Blobs {
        bytes,
        pos: 8 + hlen,
    };
    let mut layers = Vec::with_capacity(config.dropout.len());
    for (w, &p) in config.widths.windows(2).zip(&config.dropout) {
        let (inw, outw) = (w[0], w[1]);
        let bn = BatchNorm {
            gamma: blobs.vec1(inw)?,
            beta: blobs.vec1(inw)?,
            running_mean: blobs.vec1(inw)?,
            running_var: blobs.vec1(inw)?,
            momentum: config.momentum as f32,
            epsilon: config.epsilon as f32,
        };
        if bn.running_var.iter().any(|&v| v < 0.0) {
            return Err(Error::Checkpoint("negative running variance".into()));
        }
        let fc = Linear {
            weights: blobs.mat(outw, inw)?,
            bias: blobs.vec1(outw)?,
        };
        layers.push(LayerModule {
            bn,
            fc,
            dropout_p: p,
        });
    }
    let last = *config.widths.last().expect("validated");
    let output = Linear {
        weights: blobs.mat(1, last)?,
        bias: blobs.vec1(1)?,
    };
    if blobs.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "corrupt payload: {} trailing bytes",
            bytes.len() - blobs.pos
        )));
    }
    let mut model = HeadModel::new(config)?;
    model.layers = layers;
    model.output = output;
    model.set_mode(Mode::Eval);
    Ok(model)
}

pub fn save_checkpoint(model: &HeadModel<f32>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)?)?;
    Ok(())
}

/// Loads a checkpoint; the model comes back in eval mode.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<HeadModel<f32>> {
    let bytes = std::fs::read(path)?;
    decode_checkpoint(&bytes)
}
