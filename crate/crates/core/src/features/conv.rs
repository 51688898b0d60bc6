use ndarray::{Array2, ArrayView2};

use super::FeatureTensor;
use crate::{Error, Result};

/// Square convolution kernels laid out (out_channels, k, k, in_channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Kernels {
    out_c: usize,
    k: usize,
    in_c: usize,
    /// (k*k*in_c) x out_c, ready for the im2col product.
    matrix: Array2<f32>,
}

impl Kernels {
    pub fn new(out_c: usize, k: usize, in_c: usize, weights: Vec<f32>) -> Result<Self> {
        if k % 2 == 0 || k == 0 {
            return Err(Error::invalid(format!("kernel size {k} must be odd")));
        }
        if weights.len() != out_c * k * k * in_c {
            return Err(Error::invalid(format!(
                "expected {} kernel weights, got {}",
                out_c * k * k * in_c,
                weights.len()
            )));
        }
        let taps = k * k * in_c;
        let w = ArrayView2::from_shape((out_c, taps), &weights)
            .expect("length checked above");
        Ok(Self {
            out_c,
            k,
            in_c,
            matrix: w.t().to_owned(),
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_c
    }

    pub fn in_channels(&self) -> usize {
        self.in_c
    }

    pub fn size(&self) -> usize {
        self.k
    }
}

/// Stride-1 cross-correlation with zero "same" padding plus per-channel bias.
/// The caller applies any activation.
pub fn conv2d_same(input: &FeatureTensor, kernels: &Kernels, bias: &[f32]) -> Result<FeatureTensor> {
    let [batch, h, w, c] = input.dims();
    if c != kernels.in_c {
        return Err(Error::invalid(format!(
            "kernel expects {} input channels, tensor has {c}",
            kernels.in_c
        )));
    }
    if bias.len() != kernels.out_c {
        return Err(Error::invalid(format!(
            "bias length {} != output channels {}",
            bias.len(),
            kernels.out_c
        )));
    }
    let k = kernels.k;
    let r = (k / 2) as isize;
    let taps = k * k * c;
    let mut out = Vec::with_capacity(batch * h * w * kernels.out_c);
    let mut cols = Array2::<f32>::zeros((h * w, taps));
    for b in 0..batch {
        let src = input.sample(b);
        cols.fill(0.0);
        for y in 0..h {
            for x in 0..w {
                let mut row = cols.row_mut(y * w + x);
                let row = row.as_slice_mut().expect("standard layout");
                for ky in 0..k {
                    let sy = y as isize + ky as isize - r;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let sx = x as isize + kx as isize - r;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let from = (sy as usize * w + sx as usize) * c;
                        let to = (ky * k + kx) * c;
                        row[to..to + c].copy_from_slice(&src[from..from + c]);
                    }
                }
            }
        }
        let mut z = cols.dot(&kernels.matrix);
        for mut px in z.rows_mut() {
            px.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
        }
        out.extend(z.iter());
    }
    FeatureTensor::new([batch, h, w, kernels.out_c], out)
}

/// 2x2 average pooling, stride 2. Odd trailing rows/columns are dropped.
pub fn avg_pool2(input: &FeatureTensor) -> FeatureTensor {
    let [batch, h, w, c] = input.dims();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(batch * oh * ow * c);
    for b in 0..batch {
        for y in 0..oh {
            for x in 0..ow {
                for ch in 0..c {
                    let s = input.at(b, 2 * y, 2 * x, ch)
                        + input.at(b, 2 * y, 2 * x + 1, ch)
                        + input.at(b, 2 * y + 1, 2 * x, ch)
                        + input.at(b, 2 * y + 1, 2 * x + 1, ch);
                    out.push(0.25 * s);
                }
            }
        }
    }
    FeatureTensor::new([batch, oh, ow, c], out).expect("pooled shape is consistent")
}
