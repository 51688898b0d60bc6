#![allow(dead_code)]

use anglekit::model::{HeadConfig, HeadModel};
use anglekit::training::mse_loss;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded f64 head with widths 6 -> 5 -> 4 -> 1 and no dropout.
/// Output weights are randomized so every parameter receives gradient.
pub fn small_head(seed: u64) -> HeadModel<f64> {
    let mut m = HeadModel::new(HeadConfig {
        widths: vec![6, 5, 4],
        dropout: vec![0.0, 0.0],
        seed,
        ..HeadConfig::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    m.output.weights.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    for l in &mut m.layers {
        l.bn.gamma.mapv_inplace(|_| rng.random_range(0.5..1.5));
        l.bn.beta.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    m
}

pub fn random_batch(n: usize, width: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, width), || rng.random_range(-2.0..2.0));
    let y = Array1::from_shape_simple_fn(n, || rng.random_range(0.0..1.0));
    (x, y)
}

fn loss(model: &mut HeadModel<f64>, x: &Array2<f64>, y: &Array1<f64>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = model.forward(x.view(), &mut rng).unwrap();
    mse_loss(p.view(), y.view()).unwrap().0
}

/// Largest relative error between backpropagated gradients and central
/// finite differences, over every trainable parameter.
pub fn max_gradient_error(seed: u64, step: f64) -> f64 {
    let mut model = small_head(seed);
    let (x, y) = random_batch(4, 6, seed + 100);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = model.forward(x.view(), &mut rng).unwrap();
    let (_, g) = mse_loss(p.view(), y.view()).unwrap();
    let analytic: Vec<Vec<f64>> = model
        .backward(g.view())
        .unwrap()
        .slices()
        .iter()
        .map(|s| s.to_vec())
        .collect();

    let mut worst = 0.0f64;
    for (t, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = model.params_mut()[t][j];
            model.params_mut()[t][j] = orig + step;
            let up = loss(&mut model, &x, &y);
            model.params_mut()[t][j] = orig - step;
            let down = loss(&mut model, &x, &y);
            model.params_mut()[t][j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}
