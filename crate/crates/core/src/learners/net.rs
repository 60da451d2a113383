//! Dense layers with manual backpropagation and an Adam optimizer. Small by
//! design: the surrogate and the autoencoder are the only consumers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    /// Rectifier with a learnable slope on the negative side, initialized
    /// at 0.25.
    PRelu,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major weights: `w[o * n_in + i]`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub activation: Activation,
    pub prelu_slope: f64,
}

impl DenseLayer {
    pub fn new(n_in: usize, n_out: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        // Glorot uniform.
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let w = (0..n_in * n_out)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        DenseLayer {
            n_in,
            n_out,
            w,
            b: vec![0.0; n_out],
            activation,
            prelu_slope: 0.25,
        }
    }

    /// Returns (pre-activation, post-activation).
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(x.len(), self.n_in);
        let mut pre = self.b.clone();
        for (o, slot) in pre.iter_mut().enumerate() {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *slot += acc;
        }
        let post = pre.iter().map(|&z| self.activate(z)).collect();
        (pre, post)
    }

    fn activate(&self, z: f64) -> f64 {
        match self.activation {
            Activation::Linear => z,
            Activation::Relu => z.max(0.0),
            Activation::PRelu => {
                if z > 0.0 {
                    z
                } else {
                    self.prelu_slope * z
                }
            }
            Activation::Sigmoid => super::sigmoid(z),
        }
    }

    fn activate_grad(&self, z: f64) -> f64 {
        match self.activation {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::PRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    self.prelu_slope
                }
            }
            Activation::Sigmoid => {
                let s = super::sigmoid(z);
                s * (1.0 - s)
            }
        }
    }

    /// Backpropagate `d_post` (gradient at the layer output). Returns the
    /// parameter gradients and the gradient at the layer input.
    pub fn backward(&self, x: &[f64], pre: &[f64], d_post: &[f64]) -> (LayerGrad, Vec<f64>) {
        let mut grad = LayerGrad::zeros(self.n_in, self.n_out);
        let mut d_x = vec![0.0; self.n_in];
        for o in 0..self.n_out {
            let d_pre = d_post[o] * self.activate_grad(pre[o]);
            grad.b[o] = d_pre;
            if self.activation == Activation::PRelu && pre[o] <= 0.0 {
                grad.slope += d_post[o] * pre[o];
            }
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            for i in 0..self.n_in {
                grad.w[o * self.n_in + i] = d_pre * x[i];
                d_x[i] += d_pre * row[i];
            }
        }
        (grad, d_x)
    }
}

#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub slope: f64,
}

impl LayerGrad {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        LayerGrad {
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
            slope: 0.0,
        }
    }

    pub fn add(&mut self, other: &LayerGrad) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
        self.slope += other.slope;
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.w {
            *v *= factor;
        }
        for v in &mut self.b {
            *v *= factor;
        }
        self.slope *= factor;
    }
}

/// A plain stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Forward pass cache: `inputs[l]` is the input to layer `l` (so
/// `inputs[0]` is the sample and `inputs[L]` is the network output), and
/// `pre[l]` is layer `l`'s pre-activation.
#[derive(Debug, Clone)]
pub struct Trace {
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().expect("trace has output")
    }
}

impl Mlp {
    pub fn n_in(&self) -> usize {
        self.layers.first().map_or(0, |l| l.n_in)
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.forward(&cur).1;
        }
        cur
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        let mut inputs = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (p, post) = layer.forward(inputs.last().expect("input"));
            pre.push(p);
            inputs.push(post);
        }
        Trace { inputs, pre }
    }

    /// Backpropagate `d_out` (gradient at the network output) through every
    /// layer. Returns per-layer parameter gradients and the gradient at the
    /// network input.
    pub fn backward(&self, trace: &Trace, d_out: &[f64]) -> (Vec<LayerGrad>, Vec<f64>) {
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        let mut d_cur = d_out.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (grad, d_in) = layer.backward(&trace.inputs[l], &trace.pre[l], &d_cur);
            grads.push(grad);
            d_cur = d_in;
        }
        grads.reverse();
        (grads, d_cur)
    }

    pub fn zero_grads(&self) -> Vec<LayerGrad> {
        self.layers
            .iter()
            .map(|l| LayerGrad::zeros(l.n_in, l.n_out))
            .collect()
    }

    pub fn params_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.w.iter().all(|v| v.is_finite())
                && l.b.iter().all(|v| v.is_finite())
                && l.prelu_slope.is_finite()
        })
    }
}

/// Adam with the usual PyTorch semantics: weight decay is added to the
/// gradient (L2 style), bias correction on both moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<AdamSlot>,
    v: Vec<AdamSlot>,
}

#[derive(Debug, Clone)]
struct AdamSlot {
    w: Vec<f64>,
    b: Vec<f64>,
    slope: f64,
}

impl Adam {
    pub fn new(mlp_shapes: &Mlp, learning_rate: f64, weight_decay: f64) -> Self {
        let zeros = |l: &DenseLayer| AdamSlot {
            w: vec![0.0; l.n_in * l.n_out],
            b: vec![0.0; l.n_out],
            slope: 0.0,
        };
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
            step: 0,
            m: mlp_shapes.layers.iter().map(zeros).collect(),
            v: mlp_shapes.layers.iter().map(zeros).collect(),
        }
    }

    pub fn step(&mut self, mlp: &mut Mlp, grads: &[LayerGrad]) {
        self.step += 1;
        let t = self.step as i32;
        let hyper = Hyper {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.epsilon,
            bc1: 1.0 - self.beta1.powi(t),
            bc2: 1.0 - self.beta2.powi(t),
        };
        let wd = self.weight_decay;
        for (l, layer) in mlp.layers.iter_mut().enumerate() {
            let g = &grads[l];
            let m = &mut self.m[l];
            let v = &mut self.v[l];
            for (i, w) in layer.w.iter_mut().enumerate() {
                let grad = g.w[i] + wd * *w;
                *w -= update(grad, &mut m.w[i], &mut v.w[i], hyper);
            }
            for (i, b) in layer.b.iter_mut().enumerate() {
                let grad = g.b[i] + wd * *b;
                *b -= update(grad, &mut m.b[i], &mut v.b[i], hyper);
            }
            if layer.activation == Activation::PRelu {
                layer.prelu_slope -= update(g.slope, &mut m.slope, &mut v.slope, hyper);
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Hyper {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
}

fn update(grad: f64, m: &mut f64, v: &mut f64, h: Hyper) -> f64 {
    *m = h.beta1 * *m + (1.0 - h.beta1) * grad;
    *v = h.beta2 * *v + (1.0 - h.beta2) * grad * grad;
    let m_hat = *m / h.bc1;
    let v_hat = *v / h.bc2;
    h.lr * m_hat / (v_hat.sqrt() + h.eps)
}

/// A flat-vector Adam used where the optimized quantity is a sample rather
/// than network parameters (the transfer attack's coordinate descent).
#[derive(Debug, Clone)]
pub struct VecAdam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl VecAdam {
    pub fn new(dim: usize, learning_rate: f64) -> Self {
        VecAdam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }

    /// One descent step on `x` along `grad`.
    pub fn step(&mut self, x: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..x.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            x[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Numerically checked loss helpers.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

pub fn finite_or(value: f64, what: &str) -> Result<f64, LearnError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(LearnError::NonFinite(what.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny_mlp(seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mlp {
            layers: vec![
                DenseLayer::new(3, 4, Activation::Relu, &mut rng),
                DenseLayer::new(4, 2, Activation::Linear, &mut rng),
            ],
        }
    }

    #[test]
    fn forward_zero_weights_gives_zero() {
        let mut mlp = tiny_mlp(0);
        for layer in &mut mlp.layers {
            layer.w.iter_mut().for_each(|w| *w = 0.0);
        }
        assert_eq!(mlp.forward(&[1.0, -2.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mlp = tiny_mlp(7);
        let x = [0.3, -0.7, 1.1];
        // Scalar objective: sum of outputs squared.
        let f = |net: &Mlp, x: &[f64]| -> f64 { net.forward(x).iter().map(|v| v * v).sum() };

        let trace = mlp.forward_trace(&x);
        let d_out: Vec<f64> = trace.output().iter().map(|&o| 2.0 * o).collect();
        let (grads, d_x) = mlp.backward(&trace, &d_out);

        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (f(&mlp, &xp) - f(&mlp, &xm)) / (2.0 * h);
            assert!(
                (fd - d_x[i]).abs() < 1e-5,
                "input grad {i}: {fd} vs {}",
                d_x[i]
            );
        }
        for (l, layer) in mlp.layers.iter().enumerate() {
            for wi in 0..layer.w.len().min(6) {
                let mut pert = mlp.clone();
                pert.layers[l].w[wi] += h;
                let mut pert2 = mlp.clone();
                pert2.layers[l].w[wi] -= h;
                let fd = (f(&pert, &x) - f(&pert2, &x)) / (2.0 * h);
                assert!((fd - grads[l].w[wi]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn prelu_slope_gradient_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mlp = Mlp {
            layers: vec![DenseLayer::new(2, 3, Activation::PRelu, &mut rng)],
        };
        let x = [-1.5, 0.4];
        let f = |net: &Mlp| -> f64 { net.forward(&x).iter().sum() };
        let trace = mlp.forward_trace(&x);
        let (grads, _) = mlp.backward(&trace, &[1.0, 1.0, 1.0]);
        let h = 1e-6;
        let mut up = mlp.clone();
        up.layers[0].prelu_slope += h;
        let mut down = mlp.clone();
        down.layers[0].prelu_slope -= h;
        let fd = (f(&up) - f(&down)) / (2.0 * h);
        assert!(
            (fd - grads[0].slope).abs() < 1e-6,
            "{fd} vs {}",
            grads[0].slope
        );
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut x = vec![5.0, -3.0];
        let mut opt = VecAdam::new(2, 0.1);
        for _ in 0..500 {
            let grad: Vec<f64> = x.iter().map(|&v| 2.0 * v).collect();
            opt.step(&mut x, &grad);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2), "{x:?}");
    }
}
