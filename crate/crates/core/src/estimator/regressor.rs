//! Feed-forward regression head: tanh hidden layers, linear scalar output.

use crate::error::{Error, Result};
use crate::par;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Parameters are kept in one flat vector; layer `l` stores its
/// `outputs × inputs` weight matrix row-major, followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    /// (inputs, outputs) per layer; the last layer has one output.
    shapes: Vec<(usize, usize)>,
    params: Vec<f64>,
}

const GRAD_CHUNK: usize = 64;

impl Regressor {
    fn shapes_for(input_dim: usize, hidden: &[usize]) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input_dim;
        for &h in hidden {
            shapes.push((prev, h));
            prev = h;
        }
        shapes.push((prev, 1));
        shapes
    }

    /// Glorot-uniform weights and zero biases.
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let shapes = Self::shapes_for(input_dim, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for &(i, o) in &shapes {
            let limit = (6.0 / (i + o) as f64).sqrt();
            params.extend((0..i * o).map(|_| rng.random_range(-limit..limit)));
            params.extend(std::iter::repeat_n(0.0, o));
        }
        Self { shapes, params }
    }

    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        let shapes = Self::shapes_for(input_dim, hidden);
        let n = shapes.iter().map(|(i, o)| i * o + o).sum();
        Self {
            shapes,
            params: vec![0.0; n],
        }
    }

    /// Rebuilds a regressor from stored shapes and parameters.
    pub fn from_parts(shapes: Vec<(usize, usize)>, params: Vec<f64>) -> Result<Self> {
        let valid_chain = shapes.windows(2).all(|w| w[0].1 == w[1].0) && shapes.last().map(|s| s.1) == Some(1);
        let n: usize = shapes.iter().map(|(i, o)| i * o + o).sum();
        if !valid_chain {
            return Err(Error::Checkpoint(format!("invalid layer shapes {shapes:?}")));
        }
        if n != params.len() {
            return Err(Error::Checkpoint(format!("expected {n} parameters, found {}", params.len())));
        }
        Ok(Self { shapes, params })
    }

    pub fn input_dim(&self) -> usize {
        self.shapes[0].0
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Activations of every layer, input first; the last entry is the output.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        let last = self.shapes.len() - 1;
        for (l, &(i, o)) in self.shapes.iter().enumerate() {
            let w = &self.params[off..off + i * o];
            let b = &self.params[off + i * o..off + i * o + o];
            let input = acts.last().expect("non-empty");
            let z: Vec<f64> = (0..o)
                .map(|r| {
                    let row = &w[r * i..(r + 1) * i];
                    b[r] + row.iter().zip(input).map(|(a, v)| a * v).sum::<f64>()
                })
                .collect();
            acts.push(if l == last { z } else { z.into_iter().map(f64::tanh).collect() });
            off += i * o + o;
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.activations(x).last().expect("output layer")[0])
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        par::try_map(xs, |x| self.forward(x))
    }

    /// Adds `scale * d(output)/d(params)` for one input into `grad`.
    fn accumulate(&self, x: &[f64], scale: f64, grad: &mut [f64]) {
        let acts = self.activations(x);
        let mut delta = vec![scale];
        let mut offsets = Vec::with_capacity(self.shapes.len());
        let mut off = 0;
        for &(i, o) in &self.shapes {
            offsets.push(off);
            off += i * o + o;
        }
        for l in (0..self.shapes.len()).rev() {
            let (i, o) = self.shapes[l];
            let off = offsets[l];
            let input = &acts[l];
            for r in 0..o {
                let g = &mut grad[off + r * i..off + (r + 1) * i];
                g.iter_mut().zip(input).for_each(|(gw, a)| *gw += delta[r] * a);
                grad[off + i * o + r] += delta[r];
            }
            if l > 0 {
                let w = &self.params[off..off + i * o];
                delta = (0..i)
                    .map(|c| {
                        let back: f64 = (0..o).map(|r| w[r * i + c] * delta[r]).sum();
                        back * (1.0 - input[c] * input[c])
                    })
                    .collect();
            }
        }
    }

    /// Mean squared error over the batch and its gradient with respect to all
    /// parameters. Summation order is fixed, so the result does not depend on
    /// thread count.
    pub fn mse_gradient(&self, xs: &[&[f64]], ys: &[f64]) -> Result<(f64, Vec<f64>)> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch {
                left: xs.len(),
                right: ys.len(),
            });
        }
        if xs.is_empty() {
            return Err(Error::Empty("batch"));
        }
        for x in xs {
            self.check_input(x)?;
        }
        let n = xs.len() as f64;
        let chunks: Vec<usize> = (0..xs.len()).step_by(GRAD_CHUNK).collect();
        let partial = par::map(&chunks, |&start| {
            let end = (start + GRAD_CHUNK).min(xs.len());
            let mut grad = vec![0.0; self.params.len()];
            let mut loss = 0.0;
            for k in start..end {
                let pred = self.activations(xs[k]).last().expect("output")[0];
                let err = pred - ys[k];
                loss += err * err;
                self.accumulate(xs[k], 2.0 * err / n, &mut grad);
            }
            (loss, grad)
        });
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (l, g) in partial {
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        Ok((loss / n, grad))
    }

    pub fn mse(&self, xs: &[&[f64]], ys: &[f64]) -> Result<f64> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch {
                left: xs.len(),
                right: ys.len(),
            });
        }
        let preds = par::try_map(xs, |x| self.forward(x))?;
        Ok(preds.iter().zip(ys).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / xs.len().max(1) as f64)
    }
}

/// Adaptive-moment gradient descent.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}
