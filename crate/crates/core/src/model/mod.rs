//! Shallow regression head: a stack of layer modules (BatchNorm -> fully
//! connected -> ReLU -> dropout) followed by a single linear output unit.
//!
//! The head is generic over the float type so gradients can be checked at
//! 64-bit precision; production training and checkpoints use `f32`.

mod checkpoint;
mod layers;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use layers::{
    batchnorm_forward, check_dropout_p, dropout, dropout_mask, relu, BatchNorm, BnCache, Linear,
};

use std::fmt::{Debug, Display};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Float types the head runs on.
pub trait Real:
    Float
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
pub(crate) fn real<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("f64 converts to every Real")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    /// Input width followed by each layer module's output width. The final
    /// linear unit (width 1) is implicit.
    pub widths: Vec<usize>,
    /// One dropout probability per layer module.
    pub dropout: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
    /// Degrees per unit of network output.
    pub target_scale: f64,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            widths: vec![4096, 256, 64],
            dropout: vec![0.5, 0.5],
            momentum: 0.9,
            epsilon: 1e-5,
            target_scale: 180.0,
            seed: 0,
        }
    }
}

impl HeadConfig {
    pub fn with_input_width(mut self, width: usize) -> Self {
        if let Some(w) = self.widths.first_mut() {
            *w = width;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::invalid("head widths must be nonempty and positive"));
        }
        if self.dropout.len() != self.widths.len() - 1 {
            return Err(Error::invalid(format!(
                "{} layer modules need {} dropout probabilities, got {}",
                self.widths.len() - 1,
                self.widths.len() - 1,
                self.dropout.len()
            )));
        }
        for &p in &self.dropout {
            check_dropout_p(p)?;
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("batchnorm momentum must be in [0, 1)"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::invalid("batchnorm epsilon must be >= 0"));
        }
        if !(self.target_scale > 0.0 && self.target_scale.is_finite()) {
            return Err(Error::invalid("target_scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerModule<T> {
    pub bn: BatchNorm<T>,
    pub fc: Linear<T>,
    pub dropout_p: f64,
}

/// Intermediates of one layer module in a train-mode pass.
#[derive(Debug, Clone)]
struct LayerCache<T> {
    bn: BnCache<T>,
    fc_input: Array2<T>,
    active: Array2<bool>,
    drop_mask: Option<Array2<T>>,
}

#[derive(Debug, Clone)]
struct ForwardCache<T> {
    layers: Vec<LayerCache<T>>,
    head_input: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

/// Gradients shaped exactly like the head's trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T> {
    pub layers: Vec<LayerGrads<T>>,
    pub out_weights: Array2<T>,
    pub out_bias: Array1<T>,
}

impl<T: Real> GradientSet<T> {
    /// Flat views in canonical parameter order (see [`HeadModel::params_mut`]).
    pub fn slices(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = Vec::with_capacity(4 * self.layers.len() + 2);
        for l in &self.layers {
            v.push(l.gamma.as_slice().expect("contiguous"));
            v.push(l.beta.as_slice().expect("contiguous"));
            v.push(l.weights.as_slice().expect("contiguous"));
            v.push(l.bias.as_slice().expect("contiguous"));
        }
        v.push(self.out_weights.as_slice().expect("contiguous"));
        v.push(self.out_bias.as_slice().expect("contiguous"));
        v
    }

    pub fn is_all_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_zero()))
    }
}

#[derive(Debug, Clone)]
pub struct HeadModel<T> {
    pub layers: Vec<LayerModule<T>>,
    pub output: Linear<T>,
    pub mode: Mode,
    pub config: HeadConfig,
    cache: Option<ForwardCache<T>>,
}

impl<T: Real> PartialEq for HeadModel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
            && self.output == other.output
            && self.mode == other.mode
            && self.config == other.config
    }
}

const MID_RANGE_DEG: f64 = 90.0;

fn he_linear<T: Real>(in_w: usize, out_w: usize, rng: &mut ChaCha8Rng) -> Linear<T> {
    let std = (2.0 / in_w as f64).sqrt();
    let weights = Array2::from_shape_simple_fn((out_w, in_w), || {
        let z: f64 = StandardNormal.sample(rng);
        real(z * std)
    });
    Linear {
        weights,
        bias: Array1::zeros(out_w),
    }
}

impl<T: Real> HeadModel<T> {
    /// He-initialized FC weights from a seeded normal, zero biases,
    /// gamma = 1, beta = 0, running mean 0 and variance 1. The output unit
    /// starts with zero weights and a bias of 90° in scaled units, so the
    /// untrained head predicts the middle of the angle range. Starts in
    /// train mode.
    pub fn new(config: HeadConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .widths
            .windows(2)
            .zip(&config.dropout)
            .map(|(w, &p)| LayerModule {
                bn: BatchNorm::new(w[0], config.momentum, config.epsilon),
                fc: he_linear(w[0], w[1], &mut rng),
                dropout_p: p,
            })
            .collect();
        let last = *config.widths.last().expect("validated nonempty");
        let output = Linear {
            weights: Array2::zeros((1, last)),
            bias: Array1::from_elem(1, real(MID_RANGE_DEG / config.target_scale)),
        };
        Ok(Self {
            layers,
            output,
            mode: Mode::Train,
            config,
            cache: None,
        })
    }

    pub fn input_width(&self) -> usize {
        self.config.widths[0]
    }

    pub fn target_scale(&self) -> f64 {
        self.config.target_scale
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
        self.cache = None;
    }

    fn check_width(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.input_width() {
            return Err(Error::invalid(format!(
                "feature width {} does not match head input width {}",
                x.ncols(),
                self.input_width()
            )));
        }
        Ok(())
    }

    /// Forward pass in the current mode. Outputs are in scaled units
    /// (degrees / target_scale). Train mode draws dropout masks from `rng`,
    /// updates BatchNorm running statistics and caches intermediates for
    /// [`backward`](Self::backward).
    pub fn forward<R: Rng + ?Sized>(&mut self, x: ArrayView2<T>, rng: &mut R) -> Result<Array1<T>> {
        self.check_width(&x)?;
        if self.mode == Mode::Eval {
            self.cache = None;
            return self.predict(x);
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for layer in &mut self.layers {
            let (y, bn) = layer.bn.forward_train(a.view())?;
            let z = layer.fc.forward(y.view());
            let active = z.mapv(|v| v > T::zero());
            let r = relu(z.view());
            let (out, drop_mask) = if layer.dropout_p > 0.0 {
                let m = dropout_mask::<T, R>(r.dim(), layer.dropout_p, rng);
                (&r * &m, Some(m))
            } else {
                (r, None)
            };
            caches.push(LayerCache {
                bn,
                fc_input: y,
                active,
                drop_mask,
            });
            a = out;
        }
        let pred = self.output.forward(a.view()).remove_axis(Axis(1));
        self.cache = Some(ForwardCache {
            layers: caches,
            head_input: a,
        });
        Ok(pred)
    }

    /// Eval-mode prediction on an immutable model: running statistics, no
    /// dropout. Scaled units.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Array1<T>> {
        self.check_width(&x)?;
        let mut a = x.to_owned();
        for layer in &self.layers {
            let y = layer.bn.forward_eval(a.view());
            a = relu(layer.fc.forward(y.view()).view());
        }
        Ok(self.output.forward(a.view()).remove_axis(Axis(1)))
    }

    /// Eval-mode predictions converted to degrees.
    pub fn predict_degrees(&self, x: ArrayView2<T>) -> Result<Vec<f64>> {
        let scale = self.target_scale();
        let p = self.predict(x)?;
        let out: Vec<f64> = p
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN) * scale)
            .collect();
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite prediction for sample {i}")));
        }
        Ok(out)
    }

    /// Exact gradients for the most recent train-mode forward pass, given
    /// dLoss/dPrediction per sample. Consumes the cached pass.
    pub fn backward(&mut self, dpred: ArrayView1<T>) -> Result<GradientSet<T>> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::InvalidState("backward called without a cached train-mode forward pass".into())
        })?;
        if dpred.len() != cache.head_input.nrows() {
            return Err(Error::invalid(format!(
                "loss gradient has {} entries for a batch of {}",
                dpred.len(),
                cache.head_input.nrows()
            )));
        }
        let d = dpred.insert_axis(Axis(1));
        let out_weights = d.t().dot(&cache.head_input);
        let out_bias = d.sum_axis(Axis(0));
        let mut da = d.dot(&self.output.weights);

        let mut grads = Vec::with_capacity(self.layers.len());
        for (i, (layer, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let mut dz = match &lc.drop_mask {
                Some(m) => da * m,
                None => da,
            };
            dz.zip_mut_with(&lc.active, |g, &on| {
                if !on {
                    *g = T::zero();
                }
            });
            let weights = dz.t().dot(&lc.fc_input);
            let bias = dz.sum_axis(Axis(0));
            let dy = dz.dot(&layer.fc.weights);
            let (dx, gamma, beta) = layer.bn.backward(&lc.bn, dy.view(), i > 0);
            grads.push(LayerGrads {
                gamma,
                beta,
                weights,
                bias,
            });
            da = dx.unwrap_or_default();
        }
        grads.reverse();
        Ok(GradientSet {
            layers: grads,
            out_weights,
            out_bias,
        })
    }

    /// Mutable flat views of every trainable tensor: per layer gamma, beta,
    /// FC weights, FC bias; then the output weights and bias.
    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.cache = None;
        let mut v: Vec<&mut [T]> = Vec::with_capacity(4 * self.layers.len() + 2);
        for l in &mut self.layers {
            v.push(l.bn.gamma.as_slice_mut().expect("contiguous"));
            v.push(l.bn.beta.as_slice_mut().expect("contiguous"));
            v.push(l.fc.weights.as_slice_mut().expect("contiguous"));
            v.push(l.fc.bias.as_slice_mut().expect("contiguous"));
        }
        v.push(self.output.weights.as_slice_mut().expect("contiguous"));
        v.push(self.output.bias.as_slice_mut().expect("contiguous"));
        v
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| 2 * l.bn.width() + l.fc.weights.len() + l.fc.bias.len())
            .sum::<usize>()
            + self.output.weights.len()
            + 1
    }

    pub fn is_finite(&self) -> bool {
        let fin = |s: &[T]| s.iter().all(|v| v.is_finite());
        self.layers.iter().all(|l| {
            fin(l.bn.gamma.as_slice().unwrap())
                && fin(l.bn.beta.as_slice().unwrap())
                && fin(l.bn.running_mean.as_slice().unwrap())
                && fin(l.bn.running_var.as_slice().unwrap())
                && fin(l.fc.weights.as_slice().unwrap())
                && fin(l.fc.bias.as_slice().unwrap())
        }) && fin(self.output.weights.as_slice().unwrap())
            && fin(self.output.bias.as_slice().unwrap())
    }

    /// Same model at another precision.
    pub fn cast<U: Real>(&self) -> HeadModel<U> {
        let c1 = |a: &Array1<T>| a.mapv(|v| U::from_f64(v.to_f64().unwrap()).unwrap());
        let c2 = |a: &Array2<T>| a.mapv(|v| U::from_f64(v.to_f64().unwrap()).unwrap());
        HeadModel {
            layers: self
                .layers
                .iter()
                .map(|l| LayerModule {
                    bn: BatchNorm {
                        gamma: c1(&l.bn.gamma),
                        beta: c1(&l.bn.beta),
                        running_mean: c1(&l.bn.running_mean),
                        running_var: c1(&l.bn.running_var),
                        momentum: U::from_f64(l.bn.momentum.to_f64().unwrap()).unwrap(),
                        epsilon: U::from_f64(l.bn.epsilon.to_f64().unwrap()).unwrap(),
                    },
                    fc: Linear {
                        weights: c2(&l.fc.weights),
                        bias: c1(&l.fc.bias),
                    },
                    dropout_p: l.dropout_p,
                })
                .collect(),
            output: Linear {
                weights: c2(&self.output.weights),
                bias: c1(&self.output.bias),
            },
            mode: self.mode,
            config: self.config.clone(),
            cache: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small(dropout: f64, seed: u64) -> HeadModel<f64> {
        HeadModel::new(HeadConfig {
            widths: vec![6, 5, 4],
            dropout: vec![dropout, dropout],
            seed,
            ..HeadConfig::default()
        })
        .unwrap()
    }

    fn features(n: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, w), || rng.random_range(-2.0..2.0))
    }

    #[test]
    fn zero_depth_head_is_constant() {
        let mut m = HeadModel::<f64>::new(HeadConfig {
            widths: vec![3],
            dropout: vec![],
            ..HeadConfig::default()
        })
        .unwrap();
        m.output.weights.fill(0.0);
        m.output.bias[0] = 0.37;
        let x = features(5, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(m.forward(x.view(), &mut rng).unwrap().iter().all(|&v| v == 0.37));
        m.set_mode(Mode::Eval);
        assert!(m.forward(x.view(), &mut rng).unwrap().iter().all(|&v| v == 0.37));
    }

    #[test]
    fn eval_is_repeatable_and_train_is_seeded() {
        let x = features(8, 6, 2);
        let mut m = small(0.5, 3);
        let mut a = m.clone();
        let mut b = m.clone();
        let pa = a.forward(x.view(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let pb = b.forward(x.view(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(pa, pb);
        m.set_mode(Mode::Eval);
        let e1 = m.forward(x.view(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let e2 = m.forward(x.view(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn width_mismatch_rejected() {
        let mut m = small(0.0, 1);
        let x = features(4, 5, 0);
        assert!(m.forward(x.view(), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        assert!(m.predict(x.view()).is_err());
    }

    #[test]
    fn backward_needs_cached_pass() {
        let mut m = small(0.0, 1);
        let err = m.backward(array![1.0, 2.0].view()).unwrap_err();
        assert!(matches!(err, Error::InvalidState(_)));
        let x = features(4, 6, 0);
        m.forward(x.view(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        m.backward(Array1::zeros(4).view()).unwrap();
        // the cache is consumed by one backward pass
        assert!(m.backward(Array1::zeros(4).view()).is_err());
    }

    #[test]
    fn zero_loss_gradient_gives_zero_gradients() {
        let mut m = small(0.5, 4);
        let x = features(4, 6, 5);
        m.forward(x.view(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let g = m.backward(Array1::zeros(4).view()).unwrap();
        assert!(g.is_all_zero());
        assert_eq!(g.slices().len(), 10);
    }

    #[test]
    fn config_validation() {
        let bad = |c: HeadConfig| HeadModel::<f32>::new(c).is_err();
        let base = HeadConfig::default();
        assert!(bad(HeadConfig {
            dropout: vec![0.5],
            ..base.clone()
        }));
        assert!(bad(HeadConfig {
            dropout: vec![0.5, 1.0],
            ..base.clone()
        }));
        assert!(bad(HeadConfig {
            widths: vec![],
            dropout: vec![],
            ..base.clone()
        }));
        let m = HeadModel::<f32>::new(base).unwrap();
        assert_eq!(m.param_count(), 2 * 4096 + 4096 * 256 + 256 + 2 * 256 + 256 * 64 + 64 + 64 + 1);
    }
}
