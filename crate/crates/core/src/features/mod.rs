//! Feature extraction stage: a frozen, seeded convolutional stack standing
//! in for a pretrained backbone, the `.ft` tensor file used to import
//! features computed elsewhere, and flattening for the regression head.

mod conv;
mod file;

pub use conv::{avg_pool2, conv2d_same, Kernels};
pub use file::{decode_features, encode_features, read_features, write_features, FT_MAGIC};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::imaging::GrayImage;
use crate::{par, Error, Result};

/// 4-D tensor laid out (batch, height, width, channels), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    dims: [usize; 4],
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(dims: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::invalid(format!("tensor dims {dims:?} overflow")))?;
        if n != data.len() {
            return Err(Error::invalid(format!(
                "tensor dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite feature at index {i}")));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    /// Values per sample: height * width * channels.
    pub fn sample_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn at(&self, b: usize, y: usize, x: usize, c: usize) -> f32 {
        let [_, h, w, ch] = self.dims;
        self.data[((b * h + y) * w + x) * ch + c]
    }

    /// Concatenates along the batch axis; spatial/channel dims must agree.
    pub fn concat(parts: &[FeatureTensor]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::invalid("nothing to concatenate"));
        };
        let tail = &first.dims[1..];
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        let mut batch = 0;
        for p in parts {
            if &p.dims[1..] != tail {
                return Err(Error::invalid(format!(
                    "cannot concatenate {:?} with {:?}",
                    first.dims, p.dims
                )));
            }
            batch += p.dims[0];
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            dims: [batch, tail[0], tail[1], tail[2]],
            data,
        })
    }

    /// Keeps the listed batch entries, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let n = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            if i >= self.batch() {
                return Err(Error::invalid(format!(
                    "batch index {i} out of range {}",
                    self.batch()
                )));
            }
            data.extend_from_slice(self.sample(i));
        }
        Ok(Self {
            dims: [indices.len(), self.dims[1], self.dims[2], self.dims[3]],
            data,
        })
    }
}

/// Row-major flatten of (height, width, channels) per sample.
pub fn flatten(t: &FeatureTensor) -> Array2<f32> {
    Array2::from_shape_vec((t.batch(), t.sample_len()), t.data.clone())
        .expect("tensor length matches its dims")
}

pub fn unflatten(m: &Array2<f32>, dims: [usize; 4]) -> Result<FeatureTensor> {
    if m.nrows() != dims[0] || m.ncols() != dims[1] * dims[2] * dims[3] {
        return Err(Error::invalid(format!(
            "matrix {}x{} does not match dims {dims:?}",
            m.nrows(),
            m.ncols()
        )));
    }
    FeatureTensor::new(dims, m.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    Builtin,
    Imported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorSpec {
    pub kind: ExtractorKind,
    /// (width, height) the extractor accepts.
    pub input_size: (usize, usize),
    /// Output channels per stage; each stage is conv3x3 -> ReLU -> avgpool 2x2.
    pub stages: Vec<usize>,
    pub kernel_size: usize,
    pub weight_seed: u64,
}

impl Default for ExtractorSpec {
    fn default() -> Self {
        Self {
            kind: ExtractorKind::Builtin,
            input_size: (128, 128),
            stages: vec![8, 16, 32, 64],
            kernel_size: 3,
            weight_seed: 0,
        }
    }
}

impl ExtractorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kind == ExtractorKind::Imported {
            return Ok(());
        }
        if self.stages.is_empty() || self.stages.contains(&0) {
            return Err(Error::invalid("builtin extractor needs nonempty, nonzero stages"));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::invalid("kernel size must be odd"));
        }
        let div = 1usize << self.stages.len();
        let (w, h) = self.input_size;
        if w == 0 || h == 0 || w % div != 0 || h % div != 0 {
            return Err(Error::invalid(format!(
                "input size {w}x{h} must be divisible by {div} for {} stages",
                self.stages.len()
            )));
        }
        Ok(())
    }

    /// (height, width, channels) of one sample's output.
    pub fn output_shape(&self) -> (usize, usize, usize) {
        let div = 1usize << self.stages.len();
        (
            self.input_size.1 / div,
            self.input_size.0 / div,
            *self.stages.last().unwrap_or(&0),
        )
    }
}

struct Stage {
    kernels: Kernels,
    bias: Vec<f32>,
}

/// Builtin extractor. Weights are drawn once from a seeded He-scaled normal
/// and never change afterwards.
pub struct Extractor {
    spec: ExtractorSpec,
    stages: Vec<Stage>,
}

impl Extractor {
    pub fn new(spec: ExtractorSpec) -> Result<Self> {
        spec.validate()?;
        if spec.kind != ExtractorKind::Builtin {
            return Err(Error::invalid("imported features have no extractor"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.weight_seed);
        let k = spec.kernel_size;
        let mut in_c = 1;
        let mut stages = Vec::with_capacity(spec.stages.len());
        for &out_c in &spec.stages {
            let std = (2.0 / (k * k * in_c) as f64).sqrt();
            let weights = (0..out_c * k * k * in_c)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (z * std) as f32
                })
                .collect();
            stages.push(Stage {
                kernels: Kernels::new(out_c, k, in_c, weights)?,
                bias: vec![0.0; out_c],
            });
            in_c = out_c;
        }
        Ok(Self { spec, stages })
    }

    pub fn spec(&self) -> &ExtractorSpec {
        &self.spec
    }

    fn extract_one(&self, img: &GrayImage) -> Result<FeatureTensor> {
        let (w, h) = self.spec.input_size;
        if (img.width(), img.height()) != (w, h) {
            return Err(Error::invalid(format!(
                "extractor expects {w}x{h} input, got {}x{}",
                img.width(),
                img.height()
            )));
        }
        let data = img.pixels().iter().map(|&p| p as f32).collect();
        let mut t = FeatureTensor::new([1, h, w, 1], data)?;
        for stage in &self.stages {
            let mut z = conv2d_same(&t, &stage.kernels, &stage.bias)?;
            z.data.iter_mut().for_each(|v| *v = v.max(0.0));
            t = avg_pool2(&z);
        }
        Ok(t)
    }

    /// Runs the stack over a batch; samples are processed in parallel and
    /// stacked in input order.
    pub fn extract(&self, images: &[GrayImage]) -> Result<FeatureTensor> {
        if images.is_empty() {
            let (h, w, c) = self.spec.output_shape();
            return Ok(FeatureTensor::zeros([0, h, w, c]));
        }
        let parts = par::try_map(images, |img| self.extract_one(img))?;
        FeatureTensor::concat(&parts)
    }
}

/// Convenience wrapper: build the extractor for `spec` and run it.
pub fn extract(images: &[GrayImage], spec: &ExtractorSpec) -> Result<FeatureTensor> {
    Extractor::new(spec.clone())?.extract(images)
}
