//! A minimal dense tanh layer with hand-derived backpropagation, and the
//! teacher-student layer recovery task built on it.
//!
//! The task: a randomly initialized teacher layer R^10 -> R^4 labels 200
//! uniform inputs from [0,1]^10, split evenly into train and test; a fresh
//! student of the same shape is trained to recover it. Progress is measured
//! as the mean Euclidean distance between teacher and student outputs on the
//! test split.
//!
//! The training loss is that same mean Euclidean distance (not its square).
//! With an exact-capacity student the loss has a root at teacher recovery,
//! and its degree-1 homogeneity in the output error is what makes the
//! norm-adapted coefficient shrink with the remaining distance; the squared
//! loss keeps the coefficient roughly constant and none of the optimizer
//! separations materialize.

use rand_chacha::ChaCha8Rng;

use crate::rng;
use crate::vector::ParamVector;

/// Input width of the matching task.
pub const MATCH_INPUT_DIM: usize = 10;
/// Output width of the matching task.
pub const MATCH_OUTPUT_DIM: usize = 4;
/// Points sampled per task, split evenly into train and test.
pub const MATCH_TOTAL_POINTS: usize = 200;

/// Dense layer `x -> tanh(W x + b)` with row-major weights.
///
/// Its parameter vector is the row-major weights followed by the bias, so a
/// 10 -> 4 layer exposes 44 parameters to the optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "layer dims must be positive");
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Fan-in uniform init: every weight and bias drawn from
    /// [-1/sqrt(in_dim), 1/sqrt(in_dim)). Weights fill row-major before the
    /// bias, which pins the RNG consumption order.
    pub fn init_uniform(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = 1.0 / (in_dim as f64).sqrt();
        let mut layer = DenseLayer::zeros(in_dim, out_dim);
        for w in &mut layer.weights {
            *w = rng::uniform(rng, -limit, limit);
        }
        for b in &mut layer.bias {
            *b = rng::uniform(rng, -limit, limit);
        }
        layer
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn to_params(&self) -> ParamVector {
        let mut values = Vec::with_capacity(self.param_count());
        values.extend_from_slice(&self.weights);
        values.extend_from_slice(&self.bias);
        ParamVector::new(values)
    }

    /// Overwrites the layer from a flat parameter vector (row-major weights,
    /// then bias). Panics on length mismatch.
    pub fn set_params(&mut self, params: &ParamVector) {
        assert_eq!(
            params.len(),
            self.param_count(),
            "parameter length mismatch: {} vs {}",
            params.len(),
            self.param_count()
        );
        let (w, b) = params.as_slice().split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
    }

    /// `tanh(W x + b)`. Panics if `x` has the wrong length.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(
            x.len(),
            self.in_dim,
            "input length mismatch: {} vs {}",
            x.len(),
            self.in_dim
        );
        let mut out = Vec::with_capacity(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut z = self.bias[o];
            for (w, xi) in row.iter().zip(x.iter()) {
                z += w * xi;
            }
            out.push(z.tanh());
        }
        out
    }
}

/// Teacher-labelled dataset for one matching task instance.
#[derive(Debug, Clone)]
pub struct MatchingDataset {
    pub train: Vec<(Vec<f64>, Vec<f64>)>,
    pub test: Vec<(Vec<f64>, Vec<f64>)>,
    pub teacher: DenseLayer,
    pub seed: u64,
}

/// Builds the matching task for a seed: teacher init, 200 inputs, the
/// train/test split (first and second hundred), and the student init, all
/// from one ChaCha stream so the task is a pure function of the seed.
pub fn generate_task(seed: u64) -> (MatchingDataset, DenseLayer) {
    let mut rng = rng::stream(seed, rng::STREAM_TASK);
    let teacher = DenseLayer::init_uniform(MATCH_INPUT_DIM, MATCH_OUTPUT_DIM, &mut rng);
    let mut pairs = Vec::with_capacity(MATCH_TOTAL_POINTS);
    for _ in 0..MATCH_TOTAL_POINTS {
        let x: Vec<f64> = (0..MATCH_INPUT_DIM)
            .map(|_| rng::uniform(&mut rng, 0.0, 1.0))
            .collect();
        let y = teacher.forward(&x);
        pairs.push((x, y));
    }
    let test = pairs.split_off(MATCH_TOTAL_POINTS / 2);
    let student = DenseLayer::init_uniform(MATCH_INPUT_DIM, MATCH_OUTPUT_DIM, &mut rng);
    (
        MatchingDataset {
            train: pairs,
            test,
            teacher,
            seed,
        },
        student,
    )
}

/// Mean Euclidean output distance over a batch, with its gradient in the
/// layer's 44 flat parameters (row-major weights, then bias).
///
/// The distance is non-differentiable exactly at a zero-error sample; such a
/// sample contributes a zero gradient, which is also where a root-seeking
/// step should stop. Panics on an empty batch.
pub fn loss_and_grad(layer: &DenseLayer, batch: &[(Vec<f64>, Vec<f64>)]) -> (f64, ParamVector) {
    assert!(!batch.is_empty(), "loss_and_grad: empty batch");
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; layer.weights.len()];
    let mut grad_b = vec![0.0; layer.bias.len()];
    let scale = 1.0 / batch.len() as f64;
    for (x, y) in batch {
        let out = layer.forward(x);
        assert_eq!(y.len(), layer.out_dim, "target length mismatch");
        let mut dist_sq = 0.0;
        for (o, t) in out.iter().zip(y.iter()) {
            let e = o - t;
            dist_sq += e * e;
        }
        let dist = dist_sq.sqrt();
        loss += scale * dist;
        if dist == 0.0 {
            continue;
        }
        for k in 0..layer.out_dim {
            let e = out[k] - y[k];
            // d dist / d z_k = (e_k / dist) * tanh'(z_k), with tanh' read off
            // the activation itself
            let dz = e / dist * (1.0 - out[k] * out[k]);
            grad_b[k] += scale * dz;
            let row = k * layer.in_dim;
            for (i, xi) in x.iter().enumerate() {
                grad_w[row + i] += scale * dz * xi;
            }
        }
    }
    grad_w.extend_from_slice(&grad_b);
    (loss, ParamVector::new(grad_w))
}

/// Mean Euclidean distance between layer outputs and targets over a split.
/// Panics on an empty split.
pub fn avg_distance(layer: &DenseLayer, pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    assert!(!pairs.is_empty(), "avg_distance: empty split");
    let mut total = 0.0;
    for (x, y) in pairs {
        let out = layer.forward(x);
        let mut dist_sq = 0.0;
        for (o, t) in out.iter().zip(y.iter()) {
            let e = o - t;
            dist_sq += e * e;
        }
        total += dist_sq.sqrt();
    }
    total / pairs.len() as f64
}
