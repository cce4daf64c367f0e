//! Two-layer sigmoid MLP encoder, cluster prototypes and ADAM.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numerics::{l2_normalize_rows, sigmoid, Matrix};

/// Shapes of the encoder and prototype matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderShape {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub num_prototypes: usize,
}

/// Encoder weights and prototypes.
///
/// `w1` is `D_in × H`, `w2` is `H × D`, `prototypes` is `K × D`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub prototypes: Matrix,
}

/// Number of parameter tensors, in the order `w1, b1, w2, b2, prototypes`.
pub const NUM_TENSORS: usize = 5;
pub const PROTOTYPE_TENSOR: usize = 4;

impl EncoderParams {
    /// Xavier-uniform weights, zero biases, unit-norm Gaussian prototypes.
    pub fn init(shape: EncoderShape, rng: &mut impl Rng) -> Self {
        let xavier = |fan_in: usize, fan_out: usize, rng: &mut dyn rand::RngCore| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..bound))
        };
        let w1 = xavier(shape.input_dim, shape.hidden_dim, rng);
        let w2 = xavier(shape.hidden_dim, shape.embed_dim, rng);
        let raw = Matrix::from_fn(shape.num_prototypes, shape.embed_dim, |_, _| StandardNormal.sample(rng));
        Self {
            w1,
            b1: vec![0.0; shape.hidden_dim],
            w2,
            b2: vec![0.0; shape.embed_dim],
            prototypes: l2_normalize_rows(&raw).matrix,
        }
    }

    pub fn zeros(shape: EncoderShape) -> Self {
        Self {
            w1: Matrix::zeros(shape.input_dim, shape.hidden_dim),
            b1: vec![0.0; shape.hidden_dim],
            w2: Matrix::zeros(shape.hidden_dim, shape.embed_dim),
            b2: vec![0.0; shape.embed_dim],
            prototypes: Matrix::zeros(shape.num_prototypes, shape.embed_dim),
        }
    }

    pub fn shape(&self) -> EncoderShape {
        EncoderShape {
            input_dim: self.w1.rows(),
            hidden_dim: self.w1.cols(),
            embed_dim: self.w2.cols(),
            num_prototypes: self.prototypes.rows(),
        }
    }

    pub fn tensors(&self) -> [&[f64]; NUM_TENSORS] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2, self.prototypes.as_slice()]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; NUM_TENSORS] {
        [self.w1.as_mut_slice(), &mut self.b1, self.w2.as_mut_slice(), &mut self.b2, self.prototypes.as_mut_slice()]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `Z = σ(σ(X·W1 + b1)·W2 + b2)` together with the activations needed by [`backward`].
    pub fn forward(&self, x: &Matrix) -> (Matrix, ForwardCache) {
        assert_eq!(
            x.cols(),
            self.w1.rows(),
            "encoder input has {} features but W1 expects {}",
            x.cols(),
            self.w1.rows()
        );
        let mut hidden = x.matmul(&self.w1);
        hidden.add_row_vector(&self.b1);
        hidden.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut z = hidden.matmul(&self.w2);
        z.add_row_vector(&self.b2);
        z.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid(*v));
        let cache = ForwardCache { input: x.clone(), hidden, output: z.clone() };
        (z, cache)
    }

    /// Embeddings only, without keeping a cache.
    pub fn embed(&self, x: &Matrix) -> Matrix {
        self.forward(x).0
    }
}

/// Activations retained by [`EncoderParams::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Matrix,
    pub hidden: Matrix,
    pub output: Matrix,
}

/// Gradients with the same layout as [`EncoderParams`].
pub type EncoderGrads = EncoderParams;

impl EncoderGrads {
    pub fn accumulate(&mut self, other: &EncoderGrads) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
    }
}

/// Exact gradients of the encoder w.r.t. `W1, b1, W2, b2` given `dL/dZ`.
/// The prototype slot of the result is zero.
pub fn backward(params: &EncoderParams, cache: &ForwardCache, d_output: &Matrix) -> EncoderGrads {
    assert_eq!(cache.output.shape(), d_output.shape(), "dZ shape does not match the cached output");
    let mut d_pre2 = d_output.clone();
    for (d, &z) in d_pre2.as_mut_slice().iter_mut().zip(cache.output.as_slice()) {
        *d *= z * (1.0 - z);
    }
    let w2 = cache.hidden.t_matmul(&d_pre2);
    let b2 = d_pre2.col_sums();
    let mut d_pre1 = d_pre2.matmul_t(&params.w2);
    for (d, &h) in d_pre1.as_mut_slice().iter_mut().zip(cache.hidden.as_slice()) {
        *d *= h * (1.0 - h);
    }
    let w1 = cache.input.t_matmul(&d_pre1);
    let b1 = d_pre1.col_sums();
    EncoderGrads { w1, b1, w2, b2, prototypes: Matrix::zeros(params.prototypes.rows(), params.prototypes.cols()) }
}

/// ADAM with bias correction and decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: [Vec<f64>; NUM_TENSORS],
    pub second_moment: [Vec<f64>; NUM_TENSORS],
    /// Steps taken, counting frozen ones.
    pub step: u64,
    /// Steps in which the prototypes were actually updated.
    pub prototype_steps: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub prototypes_frozen: bool,
}

impl AdamState {
    pub fn new(params: &EncoderParams, lr: f64, weight_decay: f64) -> Self {
        let zeros = || params.tensors().map(|t| vec![0.0; t.len()]);
        Self {
            first_moment: zeros(),
            second_moment: zeros(),
            step: 0,
            prototype_steps: 0,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            prototypes_frozen: false,
        }
    }

    pub fn freeze_prototypes(&mut self, frozen: bool) {
        self.prototypes_frozen = frozen;
    }
}

/// One ADAM update. The prototype tensor and its moments are left untouched
/// while `state.prototypes_frozen` is set.
pub fn adam_step(params: &mut EncoderParams, grads: &EncoderGrads, state: &mut AdamState) {
    state.step += 1;
    if !state.prototypes_frozen {
        state.prototype_steps += 1;
    }
    let (lr, wd, b1, b2, eps) = (state.lr, state.weight_decay, state.beta1, state.beta2, state.eps);
    for (i, (param, grad)) in params.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
        let t = if i == PROTOTYPE_TENSOR {
            if state.prototypes_frozen {
                continue;
            }
            state.prototype_steps
        } else {
            state.step
        };
        let bias1 = 1.0 - b1.powi(t as i32);
        let bias2 = 1.0 - b2.powi(t as i32);
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        for j in 0..param.len() {
            let g = grad[j];
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            param[j] -= lr * m_hat / (v_hat.sqrt() + eps) + lr * wd * param[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape() -> EncoderShape {
        EncoderShape { input_dim: 4, hidden_dim: 5, embed_dim: 3, num_prototypes: 2 }
    }

    fn random_params(rng: &mut ChaCha8Rng) -> EncoderParams {
        let mut p = EncoderParams::init(shape(), rng);
        for v in p.b1.iter_mut().chain(p.b2.iter_mut()) {
            *v = rng.random_range(-0.5..0.5);
        }
        p
    }

    #[test]
    fn zero_params_give_half() {
        let p = EncoderParams::zeros(shape());
        let (z, _) = p.forward(&Matrix::filled(2, 4, 3.0));
        assert!(z.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn rows_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(&mut rng);
        let x = Matrix::from_fn(3, 4, |_, _| rng.random_range(-2.0..2.0));
        let batch = p.embed(&x);
        for r in 0..3 {
            let single = p.embed(&x.slice_rows(r, 1));
            assert_eq!(single.row(0), batch.row(r));
        }
        assert!(batch.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let params = random_params(&mut rng);
            let x = Matrix::from_fn(6, 4, |_, _| rng.random_range(-2.0..2.0));
            let weights = Matrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
            let f = |p: &EncoderParams| crate::numerics::dot(p.embed(&x).as_slice(), weights.as_slice());
            let (_, cache) = params.forward(&x);
            let grads = backward(&params, &cache, &weights);
            let h = 1e-5;
            for t in 0..PROTOTYPE_TENSOR {
                for j in 0..params.tensors()[t].len() {
                    let mut plus = params.clone();
                    plus.tensors_mut()[t][j] += h;
                    let mut minus = params.clone();
                    minus.tensors_mut()[t][j] -= h;
                    let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                    let an = grads.tensors()[t][j];
                    let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                    assert!(err < 1e-4, "tensor {t} entry {j}: fd {fd} analytic {an}");
                }
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = random_params(&mut rng);
        let x = Matrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let (z, cache) = params.forward(&x);
        let g = backward(&params, &cache, &Matrix::zeros(z.rows(), z.cols()));
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn duplicated_rows_double_the_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = random_params(&mut rng);
        let x = Matrix::from_fn(1, 4, |_, _| rng.random_range(-1.0..1.0));
        let dz = Matrix::from_fn(1, 3, |_, _| rng.random_range(-1.0..1.0));
        let (_, c1) = params.forward(&x);
        let g1 = backward(&params, &c1, &dz);
        let x2 = Matrix::from_rows(&[x.row(0), x.row(0)]);
        let dz2 = Matrix::from_rows(&[dz.row(0), dz.row(0)]);
        let (_, c2) = params.forward(&x2);
        let g2 = backward(&params, &c2, &dz2);
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((2.0 * x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = random_params(&mut rng);
        let before = params.clone();
        let mut state = AdamState::new(&params, 1e-3, 0.0);
        for _ in 0..10 {
            adam_step(&mut params, &EncoderParams::zeros(shape()), &mut state);
        }
        assert_eq!(params, before);
    }

    #[test]
    fn first_adam_step_moves_by_lr_against_gradient_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut params = random_params(&mut rng);
        let before = params.clone();
        let mut grads = EncoderParams::zeros(shape());
        for t in grads.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let mut state = AdamState::new(&params, 1e-3, 0.0);
        adam_step(&mut params, &grads, &mut state);
        for t in 0..NUM_TENSORS {
            for j in 0..grads.tensors()[t].len() {
                let g = grads.tensors()[t][j];
                let delta = params.tensors()[t][j] - before.tensors()[t][j];
                let expected = -1e-3 * g.signum() * g.abs() / (g.abs() + 1e-8);
                assert!((delta - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adam_decreases_a_convex_quadratic() {
        // f(w) = ‖w‖² over every tensor
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut params = random_params(&mut rng);
        let mut state = AdamState::new(&params, 1e-2, 1e-4);
        let loss = |p: &EncoderParams| p.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum::<f64>();
        let mut history = Vec::new();
        for _ in 0..100 {
            let mut grads = params.clone();
            grads.tensors_mut().into_iter().for_each(|t| t.iter_mut().for_each(|v| *v *= 2.0));
            adam_step(&mut params, &grads, &mut state);
            history.push(loss(&params));
        }
        for w in history[5..].windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn frozen_prototypes_stay_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut params = random_params(&mut rng);
        let c0 = params.prototypes.clone();
        let mut grads = EncoderParams::zeros(shape());
        grads.prototypes = Matrix::filled(2, 3, 0.5);
        grads.w1 = Matrix::filled(4, 5, 0.1);
        let mut state = AdamState::new(&params, 1e-3, 1e-4);
        state.freeze_prototypes(true);
        for _ in 0..25 {
            adam_step(&mut params, &grads, &mut state);
        }
        assert_eq!(params.prototypes, c0);
        assert!(state.first_moment[PROTOTYPE_TENSOR].iter().all(|&v| v == 0.0));
        state.freeze_prototypes(false);
        adam_step(&mut params, &grads, &mut state);
        assert_ne!(params.prototypes, c0);
    }
}
