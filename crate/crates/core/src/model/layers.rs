use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{real, Mode, Real};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
    /// Weight kept by the running statistics at each update.
    pub momentum: T,
    pub epsilon: T,
}

/// What the backward pass needs from a train-mode normalization.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Array2<T>,
    pub inv_std: Array1<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(width: usize, momentum: f64, epsilon: f64) -> Self {
        Self {
            gamma: Array1::from_elem(width, T::one()),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::from_elem(width, T::one()),
            momentum: real(momentum),
            epsilon: real(epsilon),
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes by batch statistics (population variance) and folds them
    /// into the running estimates.
    pub fn forward_train(&mut self, x: ArrayView2<T>) -> Result<(Array2<T>, BnCache<T>)> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::invalid(format!(
                "batch normalization in train mode needs batch size >= 2, got {n}"
            )));
        }
        let mean = x.mean_axis(Axis(0)).expect("nonempty batch");
        let centered = &x - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("nonempty batch");
        let inv_std = var.mapv(|v| T::one() / (v + self.epsilon).sqrt());
        let xhat = &centered * &inv_std;
        let y = &xhat * &self.gamma + &self.beta;

        let keep = self.momentum;
        let blend = T::one() - keep;
        self.running_mean = &self.running_mean * keep + &mean * blend;
        self.running_var = &self.running_var * keep + &var * blend;
        Ok((y, BnCache { xhat, inv_std }))
    }

    pub fn forward_eval(&self, x: ArrayView2<T>) -> Array2<T> {
        let inv_std = self
            .running_var
            .mapv(|v| T::one() / (v + self.epsilon).sqrt());
        (&x - &self.running_mean) * &inv_std * &self.gamma + &self.beta
    }

    /// Returns (d_input, d_gamma, d_beta).
    pub fn backward(
        &self,
        cache: &BnCache<T>,
        dy: ArrayView2<T>,
        need_input_grad: bool,
    ) -> (Option<Array2<T>>, Array1<T>, Array1<T>) {
        let dbeta = dy.sum_axis(Axis(0));
        let dgamma = (&dy * &cache.xhat).sum_axis(Axis(0));
        if !need_input_grad {
            return (None, dgamma, dbeta);
        }
        let n: T = real(dy.nrows() as f64);
        let dxhat = &dy * &self.gamma;
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        let dx = (dxhat * n - &sum_dxhat - &cache.xhat * &sum_dxhat_xhat) * &cache.inv_std / n;
        (Some(dx), dgamma, dbeta)
    }
}

/// Batch normalization in either mode. Train mode updates running stats.
pub fn batchnorm_forward<T: Real>(
    x: ArrayView2<T>,
    bn: &mut BatchNorm<T>,
    mode: Mode,
) -> Result<Array2<T>> {
    if x.ncols() != bn.width() {
        return Err(Error::invalid(format!(
            "batchnorm width {} != input width {}",
            bn.width(),
            x.ncols()
        )));
    }
    match mode {
        Mode::Train => bn.forward_train(x).map(|(y, _)| y),
        Mode::Eval => Ok(bn.forward_eval(x)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// out x in
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Linear<T> {
    pub fn in_width(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_width(&self) -> usize {
        self.weights.nrows()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        x.dot(&self.weights.t()) + &self.bias
    }
}

pub fn relu<T: Real>(x: ArrayView2<T>) -> Array2<T> {
    x.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, otherwise
/// `1 / (1 - p)`.
pub fn dropout_mask<T: Real, R: Rng + ?Sized>(
    shape: (usize, usize),
    p: f64,
    rng: &mut R,
) -> Array2<T> {
    let keep: T = real(1.0 / (1.0 - p));
    Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < p {
            T::zero()
        } else {
            keep
        }
    })
}

pub fn check_dropout_p(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "dropout probability must be in [0, 1), got {p}"
        )));
    }
    Ok(())
}

/// Inverted dropout. Identity in eval mode or when `p == 0`.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    x: ArrayView2<T>,
    p: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Array2<T>> {
    check_dropout_p(p)?;
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x.to_owned());
    }
    Ok(&x * &dropout_mask::<T, R>(x.dim(), p, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batchnorm_hand_example() {
        let mut bn = BatchNorm::<f64>::new(1, 0.9, 0.0);
        let x = array![[1.0], [2.0], [3.0]];
        let y = batchnorm_forward(x.view(), &mut bn, Mode::Train).unwrap();
        let expected = [-1.2247, 0.0, 1.2247];
        for (a, b) in y.iter().zip(expected) {
            assert!((a - b).abs() < 1e-4);
        }
        // running stats moved 10% toward mean 2, variance 2/3
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_standardizes_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_simple_fn((64, 5), || rng.random_range(-3.0..7.0));
        let mut bn = BatchNorm::<f64>::new(5, 0.9, 1e-5);
        let y = batchnorm_forward(x.view(), &mut bn, Mode::Train).unwrap();
        for col in y.columns() {
            let m = col.mean().unwrap();
            let v = col.mapv(|c| (c - m) * (c - m)).mean().unwrap();
            assert!(m.abs() <= 1e-6);
            assert!((v - 1.0).abs() <= 1e-4);
        }
    }

    #[test]
    fn batchnorm_eval_identity_with_unit_stats() {
        let mut bn = BatchNorm::<f64>::new(3, 0.9, 0.0);
        let x = array![[0.5, -2.0, 9.0]];
        let y = batchnorm_forward(x.view(), &mut bn, Mode::Eval).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn batchnorm_rejects_single_sample_training() {
        let mut bn = BatchNorm::<f64>::new(2, 0.9, 1e-5);
        let x = array![[1.0, 2.0]];
        assert!(batchnorm_forward(x.view(), &mut bn, Mode::Train).is_err());
    }

    #[test]
    fn relu_examples() {
        let x = array![[-1.0, 0.0, 2.0]];
        assert_eq!(relu(x.view()), array![[0.0, 0.0, 2.0]]);
        let neg = array![[-1.0, -5.0], [-0.1, -2.0]];
        assert!(relu(neg.view()).iter().all(|&v| v == 0.0));
        let once = relu(x.view());
        assert_eq!(relu(once.view()), once);
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(dropout(x.view(), 0.0, Mode::Train, &mut rng).unwrap(), x);
        assert_eq!(dropout(x.view(), 0.7, Mode::Eval, &mut rng).unwrap(), x);
        assert!(dropout(x.view(), 1.0, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::<f64>::ones((1, 100_000));
        let y = dropout(x.view(), 0.5, Mode::Train, &mut rng).unwrap();
        let mean = y.mean().unwrap();
        assert!((mean - 1.0).abs() <= 0.02, "mean {mean}");
        assert!(y.iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
