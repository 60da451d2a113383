//! The attacker's surrogate: an embedding sub-model feeding a small
//! classification head. The embedding output doubles as the latent space in
//! which the transfer attack's distance regularizer operates.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{bce_loss, Activation, Adam, DenseLayer, LayerGrad, Mlp};
use super::{sigmoid, Classifier, LearnError, TrainConfig};
use crate::schema::Dataset;

/// Width of the embedding output; fixed by the architecture.
pub const EMBED_WIDTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

/// Architecture description. The embedding stack must end at width 16; the
/// head is dense 16 -> 16 with `head_activation`, dropout, then a linear
/// unit whose sigmoid is the class-1 probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateArch {
    pub embed: Vec<LayerSpec>,
    pub head_activation: Activation,
    pub dropout: f64,
}

impl Default for SurrogateArch {
    fn default() -> Self {
        SurrogateArch {
            embed: vec![
                LayerSpec {
                    width: 64,
                    activation: Activation::Relu,
                },
                LayerSpec {
                    width: EMBED_WIDTH,
                    activation: Activation::Linear,
                },
            ],
            head_activation: Activation::Relu,
            dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub embed: Mlp,
    pub head: Mlp,
    pub dropout: f64,
}

impl SurrogateModel {
    /// Build with seeded Glorot initialization. Fails if the embedding stack
    /// does not end at width 16.
    pub fn new(n_features: usize, arch: &SurrogateArch, seed: u64) -> Result<Self, LearnError> {
        if arch.embed.is_empty() {
            return Err(LearnError::BadConfig(
                "embedding needs at least one layer".into(),
            ));
        }
        if arch.embed.last().map(|l| l.width) != Some(EMBED_WIDTH) {
            return Err(LearnError::BadConfig(format!(
                "embedding must end at width {EMBED_WIDTH}"
            )));
        }
        if !(0.0..1.0).contains(&arch.dropout) {
            return Err(LearnError::BadConfig("dropout must be in [0, 1)".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut n_in = n_features;
        for spec in &arch.embed {
            layers.push(DenseLayer::new(n_in, spec.width, spec.activation, &mut rng));
            n_in = spec.width;
        }
        let embed = Mlp { layers };
        let head = Mlp {
            layers: vec![
                DenseLayer::new(EMBED_WIDTH, EMBED_WIDTH, arch.head_activation, &mut rng),
                DenseLayer::new(EMBED_WIDTH, 1, Activation::Linear, &mut rng),
            ],
        };
        Ok(SurrogateModel {
            embed,
            head,
            dropout: arch.dropout,
        })
    }

    pub fn logit(&self, sample: &[f64]) -> f64 {
        self.head.forward(&self.embed.forward(sample))[0]
    }
}

impl Classifier for SurrogateModel {
    fn n_features(&self) -> usize {
        self.embed.n_in()
    }

    fn predict_proba(&self, sample: &[f64]) -> f64 {
        assert_eq!(sample.len(), self.n_features(), "sample dimension mismatch");
        sigmoid(self.logit(sample))
    }
}

/// Deterministic embedding of a sample; dropout is inactive at inference.
pub fn forward_embed(m: &SurrogateModel, sample: &[f64]) -> Result<Vec<f64>, LearnError> {
    if sample.len() != m.n_features() {
        return Err(LearnError::DimensionMismatch {
            expected: m.n_features(),
            got: sample.len(),
        });
    }
    Ok(m.embed.forward(sample))
}

/// Exact reverse-mode gradient of the adversarial objective
/// `-BCE(M'(x_adv), y) + alpha * ||phi(x_adv) - phi(x)||_2`
/// with respect to `x_adv`. At `x_adv == x` the distance term contributes
/// the zero vector (subgradient choice).
pub fn grad_input(
    m: &SurrogateModel,
    x_adv: &[f64],
    x: &[f64],
    y: usize,
    alpha: f64,
) -> Result<Vec<f64>, LearnError> {
    if x_adv.len() != m.n_features() || x.len() != m.n_features() {
        return Err(LearnError::DimensionMismatch {
            expected: m.n_features(),
            got: x_adv.len(),
        });
    }
    let embed_trace = m.embed.forward_trace(x_adv);
    let head_trace = m.head.forward_trace(embed_trace.output());
    let logit = head_trace.output()[0];
    if !logit.is_finite() {
        return Err(LearnError::NonFinite("surrogate logit".into()));
    }
    let p = sigmoid(logit);
    // d(-BCE)/dlogit = y - p.
    let d_logit = y as f64 - p;
    let (_, mut d_embed) = m.head.backward(&head_trace, &[d_logit]);

    let e_x = m.embed.forward(x);
    let diff: Vec<f64> = embed_trace
        .output()
        .iter()
        .zip(&e_x)
        .map(|(a, b)| a - b)
        .collect();
    let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (d, v) in d_embed.iter_mut().zip(&diff) {
            *d += alpha * v / norm;
        }
    }
    let (_, d_x) = m.embed.backward(&embed_trace, &d_embed);
    if d_x.iter().any(|v| !v.is_finite()) {
        return Err(LearnError::NonFinite("input gradient".into()));
    }
    Ok(d_x)
}

/// Scalar value of the objective that [`grad_input`] differentiates.
pub fn adv_objective(
    m: &SurrogateModel,
    x_adv: &[f64],
    x: &[f64],
    y: usize,
    alpha: f64,
) -> Result<f64, LearnError> {
    if x_adv.len() != m.n_features() || x.len() != m.n_features() {
        return Err(LearnError::DimensionMismatch {
            expected: m.n_features(),
            got: x_adv.len(),
        });
    }
    let e_adv = m.embed.forward(x_adv);
    let e_x = m.embed.forward(x);
    let p = sigmoid(m.head.forward(&e_adv)[0]);
    let dist = e_adv
        .iter()
        .zip(&e_x)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let value = -bce_loss(p, y as f64) + alpha * dist;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(LearnError::NonFinite("adversarial objective".into()))
    }
}

/// Train with BCE loss, Adam, dropout on the head's hidden output, and early
/// stopping on a 10% held-out validation split (patience from the config;
/// the best-validation parameters are retained).
pub fn train_surrogate(
    train: &Dataset,
    arch: &SurrogateArch,
    cfg: &TrainConfig,
) -> Result<SurrogateModel, LearnError> {
    cfg.validate()?;
    if train.n_rows() == 0 {
        return Err(LearnError::EmptyTrainingSet);
    }
    if train.schema.n_classes != 2 {
        return Err(LearnError::NotBinary(train.schema.n_classes));
    }
    if train.n_rows() < 2 {
        return Err(LearnError::BadConfig(
            "need at least 2 rows to hold out validation".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut indices: Vec<usize> = (0..train.n_rows()).collect();
    indices.shuffle(&mut rng);
    let val_n = ((train.n_rows() as f64 * 0.1).round() as usize).clamp(1, train.n_rows() - 1);
    let (val_idx, train_idx) = indices.split_at(val_n);

    let mut model = SurrogateModel::new(train.n_features(), arch, cfg.seed)?;
    let mut opt_embed = Adam::new(&model.embed, cfg.learning_rate, cfg.weight_decay);
    let mut opt_head = Adam::new(&model.head, cfg.learning_rate, cfg.weight_decay);

    let val_loss = |m: &SurrogateModel| -> f64 {
        val_idx
            .iter()
            .map(|&i| bce_loss(m.predict_proba(&train.rows[i]), train.labels[i] as f64))
            .sum::<f64>()
            / val_idx.len() as f64
    };

    let mut best = model.clone();
    let mut best_val = val_loss(&model);
    let mut since_best = 0usize;
    let mut order: Vec<usize> = train_idx.to_vec();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut g_embed = model.embed.zero_grads();
            let mut g_head = model.head.zero_grads();
            for &i in batch {
                let y = train.labels[i] as f64;
                let (loss, ge, gh) =
                    forward_backward_train(&model, &train.rows[i], y, cfg.learning_rate, &mut rng)?;
                epoch_loss += loss;
                for (a, b) in g_embed.iter_mut().zip(&ge) {
                    a.add(b);
                }
                for (a, b) in g_head.iter_mut().zip(&gh) {
                    a.add(b);
                }
            }
            let inv = 1.0 / batch.len() as f64;
            g_embed.iter_mut().for_each(|g| g.scale(inv));
            g_head.iter_mut().for_each(|g| g.scale(inv));
            opt_embed.step(&mut model.embed, &g_embed);
            opt_head.step(&mut model.head, &g_head);
        }
        epoch_loss /= order.len() as f64;
        let val = val_loss(&model);
        if !epoch_loss.is_finite() || !val.is_finite() || !model.embed.params_finite() {
            return Err(LearnError::Diverged { epoch });
        }
        if val < best_val {
            best_val = val;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                break;
            }
        }
    }
    Ok(best)
}

/// One sample forward/backward with dropout on the head's hidden output.
/// Returns (loss, embed grads, head grads).
fn forward_backward_train(
    model: &SurrogateModel,
    x: &[f64],
    y: f64,
    _lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<LayerGrad>, Vec<LayerGrad>), LearnError> {
    let embed_trace = model.embed.forward_trace(x);
    let hidden_layer = &model.head.layers[0];
    let out_layer = &model.head.layers[1];
    let (h_pre, h_post) = hidden_layer.forward(embed_trace.output());

    // Inverted dropout: kept units scale by 1/(1-rate), so inference needs
    // no rescaling.
    let keep = 1.0 - model.dropout;
    let mask: Vec<f64> = h_post
        .iter()
        .map(|_| {
            if rng.gen::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
        .collect();
    let h_dropped: Vec<f64> = h_post.iter().zip(&mask).map(|(v, m)| v * m).collect();

    let (o_pre, _) = out_layer.forward(&h_dropped);
    let logit = o_pre[0];
    if !logit.is_finite() {
        return Err(LearnError::NonFinite("training logit".into()));
    }
    let p = sigmoid(logit);
    let loss = bce_loss(p, y);

    // dBCE/dlogit = p - y, then back through the head and the embed stack.
    let (g_out, d_h_dropped) = out_layer.backward(&h_dropped, &o_pre, &[p - y]);
    let d_h: Vec<f64> = d_h_dropped.iter().zip(&mask).map(|(d, m)| d * m).collect();
    let (g_hidden, d_embed) = hidden_layer.backward(embed_trace.output(), &h_pre, &d_h);
    let (g_embed, _) = model.embed.backward(&embed_trace, &d_embed);
    Ok((loss, g_embed, vec![g_hidden, g_out]))
}
