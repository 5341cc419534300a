//! The differentiable model `f = h(phi(x))`: a representation map `phi`
//! (affine, optionally followed by tanh) and a sigmoid head `h`, with forward
//! evaluation, logistic loss, and analytic gradients.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, Score};
use crate::error::{Error, Result};
use crate::numeric::{dot, sigmoid, softplus};
use crate::seeding::rng_for;
use crate::train::TrainConfig;

/// Representation architecture. `Linear` is an affine map; `Mlp` is one
/// hidden layer with tanh activation (the hidden width is the
/// representation dimension).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Linear,
    Mlp,
}

/// Immutable parameter snapshot. Training steps produce new snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub arch: Arch,
    pub input_dim: usize,
    pub repr_dim: usize,
    /// Row-major `repr_dim x input_dim`.
    pub repr_w: Vec<f64>,
    pub repr_b: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

/// Gradient with the same layout as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub repr_w: Vec<f64>,
    pub repr_b: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

impl Gradients {
    pub fn zeros(input_dim: usize, repr_dim: usize) -> Self {
        Self {
            repr_w: vec![0.0; repr_dim * input_dim],
            repr_b: vec![0.0; repr_dim],
            head_w: vec![0.0; repr_dim],
            head_b: 0.0,
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.repr_w.iter_mut().zip(&other.repr_w) {
            *a += scale * b;
        }
        for (a, b) in self.repr_b.iter_mut().zip(&other.repr_b) {
            *a += scale * b;
        }
        for (a, b) in self.head_w.iter_mut().zip(&other.head_w) {
            *a += scale * b;
        }
        self.head_b += scale * other.head_b;
    }

    /// Flat parameter view in the fixed order repr_w, repr_b, head_w, head_b.
    pub fn param(&self, i: usize) -> f64 {
        let nw = self.repr_w.len();
        let nb = self.repr_b.len();
        let nh = self.head_w.len();
        if i < nw {
            self.repr_w[i]
        } else if i < nw + nb {
            self.repr_b[i - nw]
        } else if i < nw + nb + nh {
            self.head_w[i - nw - nb]
        } else {
            self.head_b
        }
    }
}

/// Per-batch forward pass artifacts reused by the backward pass.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub reprs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Predictor {
    /// Random initialization: weights ~ N(0, 1/fan_in), biases zero.
    pub fn init(arch: Arch, input_dim: usize, repr_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || repr_dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dims",
                reason: "input_dim and repr_dim must be >= 1".into(),
            });
        }
        let mut rng = rng_for(seed, "predictor-init");
        let win = 1.0 / (input_dim as f64).sqrt();
        let wrep = 1.0 / (repr_dim as f64).sqrt();
        let repr_w = (0..repr_dim * input_dim)
            .map(|_| win * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let head_w = (0..repr_dim)
            .map(|_| wrep * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self {
            arch,
            input_dim,
            repr_dim,
            repr_w,
            repr_b: vec![0.0; repr_dim],
            head_w,
            head_b: 0.0,
        })
    }

    pub fn num_params(&self) -> usize {
        self.repr_w.len() + self.repr_b.len() + self.head_w.len() + 1
    }

    pub fn param(&self, i: usize) -> f64 {
        let nw = self.repr_w.len();
        let nb = self.repr_b.len();
        let nh = self.head_w.len();
        if i < nw {
            self.repr_w[i]
        } else if i < nw + nb {
            self.repr_b[i - nw]
        } else if i < nw + nb + nh {
            self.head_w[i - nw - nb]
        } else {
            self.head_b
        }
    }

    pub fn set_param(&mut self, i: usize, value: f64) {
        let nw = self.repr_w.len();
        let nb = self.repr_b.len();
        let nh = self.head_w.len();
        if i < nw {
            self.repr_w[i] = value;
        } else if i < nw + nb {
            self.repr_b[i - nw] = value;
        } else if i < nw + nb + nh {
            self.head_w[i - nw - nb] = value;
        } else {
            self.head_b = value;
        }
    }

    /// In-place SGD step: `theta <- theta - lr * grad`.
    pub fn step(&mut self, grad: &Gradients, lr: f64) {
        for (p, g) in self.repr_w.iter_mut().zip(&grad.repr_w) {
            *p -= lr * g;
        }
        for (p, g) in self.repr_b.iter_mut().zip(&grad.repr_b) {
            *p -= lr * g;
        }
        for (p, g) in self.head_w.iter_mut().zip(&grad.head_w) {
            *p -= lr * g;
        }
        self.head_b -= lr * grad.head_b;
    }

    /// Squared L2 norm of the weight matrices (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        dot(&self.repr_w, &self.repr_w) + dot(&self.head_w, &self.head_w)
    }

    /// Add `2 * l2 * w` for every weight entry (the gradient of
    /// `l2 * ||w||^2`).
    pub fn add_l2_gradient(&self, l2: f64, grad: &mut Gradients) {
        if l2 == 0.0 {
            return;
        }
        for (g, w) in grad.repr_w.iter_mut().zip(&self.repr_w) {
            *g += 2.0 * l2 * w;
        }
        for (g, w) in grad.head_w.iter_mut().zip(&self.head_w) {
            *g += 2.0 * l2 * w;
        }
    }

    pub fn forward_repr(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(self.repr_unchecked(x))
    }

    fn repr_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.repr_dim);
        for k in 0..self.repr_dim {
            let row = &self.repr_w[k * self.input_dim..(k + 1) * self.input_dim];
            let z = dot(row, x) + self.repr_b[k];
            out.push(match self.arch {
                Arch::Linear => z,
                Arch::Mlp => z.tanh(),
            });
        }
        out
    }

    pub fn head_logit(&self, repr: &[f64]) -> f64 {
        dot(&self.head_w, repr) + self.head_b
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        let r = self.forward_repr(x)?;
        Ok(sigmoid(self.head_logit(&r)))
    }

    pub fn forward_batch(&self, batch: &Dataset) -> Result<BatchForward> {
        if batch.feature_dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: batch.feature_dim(),
            });
        }
        let mut reprs = Vec::with_capacity(batch.len());
        let mut logits = Vec::with_capacity(batch.len());
        let mut probs = Vec::with_capacity(batch.len());
        for e in batch.iter() {
            let r = self.repr_unchecked(&e.features);
            let z = self.head_logit(&r);
            logits.push(z);
            probs.push(sigmoid(z));
            reprs.push(r);
        }
        Ok(BatchForward {
            reprs,
            logits,
            probs,
        })
    }

    /// Exact backpropagation. `dloss_dlogit[i]` is the derivative of the
    /// scalar objective with respect to example i's head logit;
    /// `dobj_drepr[i]`, when present, is an additional derivative with
    /// respect to example i's representation (the penalty path).
    pub fn backprop(
        &self,
        batch: &Dataset,
        fwd: &BatchForward,
        dloss_dlogit: &[f64],
        dobj_drepr: Option<&[Vec<f64>]>,
    ) -> Gradients {
        let mut grad = Gradients::zeros(self.input_dim, self.repr_dim);
        for (i, e) in batch.iter().enumerate() {
            let r = &fwd.reprs[i];
            let gz_head = dloss_dlogit[i];
            for (gw, rk) in grad.head_w.iter_mut().zip(r) {
                *gw += gz_head * rk;
            }
            grad.head_b += gz_head;

            for k in 0..self.repr_dim {
                let mut gr = gz_head * self.head_w[k];
                if let Some(extra) = dobj_drepr {
                    gr += extra[i][k];
                }
                let gz = match self.arch {
                    Arch::Linear => gr,
                    Arch::Mlp => gr * (1.0 - r[k] * r[k]),
                };
                if gz == 0.0 {
                    continue;
                }
                let row = &mut grad.repr_w[k * self.input_dim..(k + 1) * self.input_dim];
                for (g, x) in row.iter_mut().zip(&e.features) {
                    *g += gz * x;
                }
                grad.repr_b[k] += gz;
            }
        }
        grad
    }

    /// Mean (or weight-normalized mean) logistic loss and its exact gradient.
    pub fn loss_and_grad(
        &self,
        batch: &Dataset,
        per_example_weights: Option<&[f64]>,
    ) -> Result<(f64, Gradients)> {
        let norm = normalized_weights(batch.len(), per_example_weights)?;
        let fwd = self.forward_batch(batch)?;
        let (loss, dloss_dlogit) = logistic_loss_terms(batch, &fwd, &norm);
        let grad = self.backprop(batch, &fwd, &dloss_dlogit, None);
        Ok((loss, grad))
    }
}

impl Score for Predictor {
    fn score(&self, features: &[f64]) -> f64 {
        sigmoid(self.head_logit(&self.repr_unchecked(features)))
    }
}

/// Normalize optional per-example weights to sum to 1 (uniform when absent).
pub(crate) fn normalized_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Empty("batch"));
    }
    match weights {
        None => Ok(vec![1.0 / n as f64; n]),
        Some(ws) => {
            if ws.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: ws.len(),
                });
            }
            if ws.iter().any(|&w| w < 0.0 || !w.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "per_example_weights",
                    reason: "must be finite and nonnegative".into(),
                });
            }
            let total: f64 = ws.iter().sum();
            if total <= 0.0 {
                return Err(Error::AllZeroWeights);
            }
            Ok(ws.iter().map(|w| w / total).collect())
        }
    }
}

/// Weighted logistic loss from logits: `sum_i w_i * (softplus(z_i) - y_i z_i)`
/// with `d/dz_i = w_i (sigmoid(z_i) - y_i)`.
pub(crate) fn logistic_loss_terms(
    batch: &Dataset,
    fwd: &BatchForward,
    norm_weights: &[f64],
) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut dloss = Vec::with_capacity(batch.len());
    for (i, e) in batch.iter().enumerate() {
        let z = fwd.logits[i];
        let y = e.label as f64;
        loss += norm_weights[i] * (softplus(z) - y * z);
        dloss.push(norm_weights[i] * (fwd.probs[i] - y));
    }
    (loss, dloss)
}

// --- Checkpoint format ------------------------------------------------------

/// On-disk model snapshot: parameters plus the training configuration that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: Predictor,
    pub train_config: Option<TrainConfig>,
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), ckpt)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Example;
    use rand::Rng;

    fn toy_batch(seed: u64, n: usize, dim: usize) -> Dataset {
        let mut rng = rng_for(seed, "toy-batch");
        let rows = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                Example::new(x, rng.gen_range(0..2u8), rng.gen_range(0..2u8))
            })
            .collect();
        Dataset::new(rows).unwrap()
    }

    #[test]
    fn all_zero_parameters_score_half() {
        let mut p = Predictor::init(Arch::Linear, 3, 2, 0).unwrap();
        p.repr_w.iter_mut().for_each(|w| *w = 0.0);
        p.head_w.iter_mut().for_each(|w| *w = 0.0);
        assert_eq!(p.forward(&[1.0, -4.0, 2.5]).unwrap(), 0.5);

        let mut q = p.clone();
        q.arch = Arch::Mlp;
        assert_eq!(q.forward(&[1.0, -4.0, 2.5]).unwrap(), 0.5);
    }

    #[test]
    fn identity_linear_repr_returns_input() {
        let mut p = Predictor::init(Arch::Linear, 3, 3, 0).unwrap();
        p.repr_w = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        p.repr_b = vec![0.0; 3];
        let x = [0.25, -1.0, 3.5];
        assert_eq!(p.forward_repr(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn forward_matches_independent_formula() {
        let mut rng = rng_for(41, "fwd-oracle");
        for _ in 0..20 {
            for arch in [Arch::Linear, Arch::Mlp] {
                let p = Predictor::init(arch, 5, 3, rng.gen()).unwrap();
                let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
                // independent re-implementation
                let mut logit = p.head_b;
                for k in 0..3 {
                    let mut z = p.repr_b[k];
                    for (j, xj) in x.iter().enumerate() {
                        z += p.repr_w[k * 5 + j] * xj;
                    }
                    let r = if arch == Arch::Mlp { z.tanh() } else { z };
                    logit += p.head_w[k] * r;
                }
                let want = 1.0 / (1.0 + (-logit).exp());
                let got = p.forward(&x).unwrap();
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn output_monotone_in_head_bias() {
        let p = Predictor::init(Arch::Mlp, 4, 3, 9).unwrap();
        let x = [0.1, -0.4, 0.9, 0.0];
        let mut last = 0.0;
        for (i, b) in [-30.0, -1.0, 0.0, 1.0, 30.0].iter().enumerate() {
            let mut q = p.clone();
            q.head_b = *b;
            let v = q.forward(&x).unwrap();
            assert!(v > 0.0 && v < 1.0);
            if i > 0 {
                assert!(v > last);
            }
            last = v;
        }
    }

    #[test]
    fn half_confidence_loss_is_ln_two() {
        let mut p = Predictor::init(Arch::Linear, 2, 2, 0).unwrap();
        p.repr_w.iter_mut().for_each(|w| *w = 0.0);
        p.head_w.iter_mut().for_each(|w| *w = 0.0);
        let rows = vec![
            Example::new(vec![1.0, 2.0], 1, 0),
            Example::new(vec![-1.0, 0.5], 1, 1),
        ];
        let batch = Dataset::new(rows).unwrap();
        let (loss, _) = p.loss_and_grad(&batch, None).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (case, arch) in [(0u64, Arch::Linear), (1, Arch::Mlp)] {
            let p = Predictor::init(arch, 4, 3, 100 + case).unwrap();
            let batch = toy_batch(200 + case, 12, 4);
            let (_, grad) = p.loss_and_grad(&batch, None).unwrap();
            let step = 1e-5;
            for i in 0..p.num_params() {
                let mut plus = p.clone();
                plus.set_param(i, p.param(i) + step);
                let mut minus = p.clone();
                minus.set_param(i, p.param(i) - step);
                let (lp, _) = plus.loss_and_grad(&batch, None).unwrap();
                let (lm, _) = minus.loss_and_grad(&batch, None).unwrap();
                let fd = (lp - lm) / (2.0 * step);
                let g = grad.param(i);
                let denom = g.abs().max(fd.abs()).max(1e-8);
                assert!(
                    ((g - fd) / denom).abs() < 1e-4,
                    "param {i}: analytic {g} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn constant_weights_match_unweighted_gradient() {
        let p = Predictor::init(Arch::Mlp, 3, 2, 7).unwrap();
        let batch = toy_batch(8, 10, 3);
        let (l0, g0) = p.loss_and_grad(&batch, None).unwrap();
        let (l1, g1) = p.loss_and_grad(&batch, Some(&[2.5; 10])).unwrap();
        assert!((l0 - l1).abs() < 1e-12);
        for i in 0..p.num_params() {
            assert!((g0.param(i) - g1.param(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = Predictor::init(Arch::Mlp, 4, 2, 3).unwrap();
        let ckpt = Checkpoint {
            model: p,
            train_config: None,
        };
        let dir = std::env::temp_dir().join(format!("fairshift-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        save_checkpoint(&ckpt, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt);
        std::fs::remove_dir_all(&dir).ok();
    }
}
