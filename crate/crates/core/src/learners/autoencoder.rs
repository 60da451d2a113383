//! Reconstruction autoencoder: symmetric around a single 64-unit hidden
//! layer with rectified-linear activation, trained with MSE.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{Activation, Adam, DenseLayer, Mlp};
use super::{LearnError, TrainConfig};

/// Hidden (embedding) width of the autoencoder.
pub const AE_HIDDEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeNet {
    pub net: Mlp,
}

impl AeNet {
    pub fn new(n_features: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AeNet {
            net: Mlp {
                layers: vec![
                    DenseLayer::new(n_features, AE_HIDDEN, Activation::Relu, &mut rng),
                    DenseLayer::new(AE_HIDDEN, n_features, Activation::Linear, &mut rng),
                ],
            },
        }
    }

    pub fn n_features(&self) -> usize {
        self.net.n_in()
    }

    pub fn reconstruct(&self, sample: &[f64]) -> Vec<f64> {
        self.net.forward(sample)
    }
}

/// Mean squared deviation across features between the sample and its
/// reconstruction.
pub fn reconstruction_error(ae: &AeNet, sample: &[f64]) -> f64 {
    let out = ae.reconstruct(sample);
    let d = sample.len() as f64;
    sample
        .iter()
        .zip(&out)
        .map(|(&x, &r)| (x - r) * (x - r))
        .sum::<f64>()
        / d
}

/// Fit on benign rows with MSE; no early stopping (the epoch count is the
/// budget).
pub fn fit_autoencoder(rows: &[Vec<f64>], cfg: &TrainConfig) -> Result<AeNet, LearnError> {
    cfg.validate()?;
    if rows.len() < 2 {
        return Err(LearnError::EmptyTrainingSet);
    }
    let d = rows[0].len();
    let mut ae = AeNet::new(d, cfg.seed);
    let mut opt = Adam::new(&ae.net, cfg.learning_rate, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..rows.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = ae.net.zero_grads();
            for &i in batch {
                let x = &rows[i];
                let trace = ae.net.forward_trace(x);
                let out = trace.output();
                let mut d_out = vec![0.0; d];
                let mut loss = 0.0;
                for j in 0..d {
                    let diff = out[j] - x[j];
                    loss += diff * diff;
                    d_out[j] = 2.0 * diff / d as f64;
                }
                epoch_loss += loss / d as f64;
                let (g, _) = ae.net.backward(&trace, &d_out);
                for (a, b) in grads.iter_mut().zip(&g) {
                    a.add(b);
                }
            }
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.scale(inv));
            opt.step(&mut ae.net, &grads);
        }
        if !epoch_loss.is_finite() || !ae.net.params_finite() {
            return Err(LearnError::Diverged { epoch });
        }
    }
    Ok(ae)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ae_config(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 10,
            learning_rate: 1e-3,
            weight_decay: 1e-8,
            patience: 0,
            seed,
            batch_size: 16,
        }
    }

    #[test]
    fn identity_reconstruction_has_zero_error() {
        // Hand-built identity: encoder splits x into positive and negative
        // parts, decoder re-assembles them.
        let mut ae = AeNet::new(2, 0);
        let enc = &mut ae.net.layers[0];
        enc.w.iter_mut().for_each(|w| *w = 0.0);
        enc.w[0] = 1.0; // h0 = relu(x0)
        enc.w[2] = -1.0; // h1 = relu(-x0)
        enc.w[2 * 2 + 1] = 1.0; // h2 = relu(x1)
        enc.w[3 * 2 + 1] = -1.0; // h3 = relu(-x1)
        let dec = &mut ae.net.layers[1];
        dec.w.iter_mut().for_each(|w| *w = 0.0);
        dec.b.iter_mut().for_each(|b| *b = 0.0);
        dec.w[0] = 1.0;
        dec.w[1] = -1.0;
        dec.w[AE_HIDDEN + 2] = 1.0;
        dec.w[AE_HIDDEN + 3] = -1.0;
        for sample in [[0.5, -1.5], [-2.0, 3.0], [0.0, 0.0]] {
            assert!(reconstruction_error(&ae, &sample) < 1e-24);
        }
    }

    #[test]
    fn error_is_mean_squared_deviation() {
        let mut ae = AeNet::new(2, 0);
        // Zero all weights, bias the output at (1, 1).
        for layer in &mut ae.net.layers {
            layer.w.iter_mut().for_each(|w| *w = 0.0);
            layer.b.iter_mut().for_each(|b| *b = 0.0);
        }
        ae.net.layers[1].b = vec![1.0, 1.0];
        assert!((reconstruction_error(&ae, &[0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_row_rejected() {
        assert_eq!(
            fit_autoencoder(&[vec![1.0, 2.0]], &ae_config(0)).unwrap_err(),
            LearnError::EmptyTrainingSet
        );
    }

    #[test]
    fn trained_net_separates_near_from_far() {
        // Train on one repeated point (with microscopic jitter); the training
        // point must reconstruct better than a point 10 sigma away.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..4).map(|_| 1.0 + rng.gen_range(-0.01..0.01)).collect())
            .collect();
        let ae = fit_autoencoder(&rows, &ae_config(7)).unwrap();
        let near = reconstruction_error(&ae, &[1.0, 1.0, 1.0, 1.0]);
        let far = reconstruction_error(&ae, &[1.1, 1.1, 1.1, 1.1]);
        assert!(near < far, "near {near} !< far {far}");
    }
}
