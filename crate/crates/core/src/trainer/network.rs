//! Dense ReLU network with a single sigmoid output, generic over the float
//! type so the same forward/backward code serves f32 training and the f64
//! gradient check.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, LinalgScalar};
use num_traits::Float;
use rand::Rng;

use crate::{Error, Result};

pub trait Real: Float + LinalgScalar + std::fmt::Debug + Send + Sync + 'static {}

impl<T: Float + LinalgScalar + std::fmt::Debug + Send + Sync + 'static> Real for T {}

/// Weights are `fan_out x fan_in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weights: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub layers: Vec<Dense<T>>,
}

/// Per-layer parameter gradients, same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn norm(&self) -> T {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .fold(T::zero(), |acc, g| acc + *g * *g)
            .sqrt()
    }
}

/// Layer widths from input to the single output unit.
pub fn layer_widths(input_dim: usize, hidden: &[usize]) -> Vec<usize> {
    let mut widths = Vec::with_capacity(hidden.len() + 2);
    widths.push(input_dim);
    widths.extend_from_slice(hidden);
    widths.push(1);
    widths
}

pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy from pre-sigmoid logits.
pub fn bce_with_logits<T: Real>(logits: ArrayView1<T>, labels: ArrayView1<T>) -> T {
    let n = T::from(logits.len().max(1)).unwrap();
    logits
        .iter()
        .zip(labels.iter())
        .fold(T::zero(), |acc, (&z, &y)| acc + softplus(z) - y * z)
        / n
}

/// Mean binary cross-entropy of probabilities, clamped away from 0 and 1.
pub fn bce_loss(probabilities: &[f32], labels: &[f32]) -> f64 {
    const EPS: f64 = 1e-7;
    let n = probabilities.len().max(1) as f64;
    probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = f64::from(p).clamp(EPS, 1.0 - EPS);
            let y = f64::from(y);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}

/// Activations recorded during a forward pass: `inputs[k]` feeds layer `k`,
/// `pre[k]` is its affine output.
pub struct Trace<T> {
    pub inputs: Vec<Array2<T>>,
    pub pre: Vec<Array2<T>>,
}

impl<T: Real> Network<T> {
    pub fn zeros(widths: &[usize]) -> Self {
        Network {
            layers: widths
                .windows(2)
                .map(|w| Dense::zeros(w[0], w[1]))
                .collect(),
        }
    }

    /// Uniform weights in `±1/sqrt(fan_in)`, zero biases.
    pub fn init_uniform<R: Rng>(widths: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(widths);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.fan_in() as f64).sqrt();
            layer
                .weights
                .iter_mut()
                .for_each(|w| *w = T::from(rng.random_range(-bound..bound)).unwrap());
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::fan_in)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_batch(&self, batch: &ArrayView2<T>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "classifier input".into(),
                expected: self.input_dim(),
                actual: batch.ncols(),
            });
        }
        Ok(())
    }

    pub fn forward_trace(&self, batch: ArrayView2<T>) -> Result<Trace<T>> {
        self.check_batch(&batch)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = batch.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = current.dot(&layer.weights.t()) + &layer.bias;
            inputs.push(current);
            current = if k + 1 < self.layers.len() {
                z.mapv(|v| v.max(T::zero()))
            } else {
                Array2::zeros((0, 0))
            };
            pre.push(z);
        }
        Ok(Trace { inputs, pre })
    }

    /// Pre-sigmoid scores, one per row.
    pub fn logits(&self, batch: ArrayView2<T>) -> Result<Array1<T>> {
        let trace = self.forward_trace(batch)?;
        Ok(trace
            .pre
            .last()
            .map(|z| z.column(0).to_owned())
            .unwrap_or_else(|| Array1::zeros(batch.nrows())))
    }

    pub fn forward(&self, batch: ArrayView2<T>) -> Result<Array1<T>> {
        Ok(self.logits(batch)?.mapv(sigmoid))
    }

    /// Exact gradients of the mean BCE loss; also returns that loss.
    pub fn backward(
        &self,
        batch: ArrayView2<T>,
        labels: ArrayView1<T>,
    ) -> Result<(Gradients<T>, T)> {
        if labels.len() != batch.nrows() {
            return Err(Error::DimensionMismatch {
                context: "labels".into(),
                expected: batch.nrows(),
                actual: labels.len(),
            });
        }
        let trace = self.forward_trace(batch)?;
        let logits = trace
            .pre
            .last()
            .expect("at least one layer")
            .column(0)
            .to_owned();
        let loss = bce_with_logits(logits.view(), labels);
        let n = T::from(batch.nrows().max(1)).unwrap();

        let mut delta: Array2<T> = Array2::zeros((batch.nrows(), 1));
        for (i, (&z, &y)) in logits.iter().zip(labels.iter()).enumerate() {
            delta[[i, 0]] = (sigmoid(z) - y) / n;
        }

        let mut grads: Vec<Dense<T>> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let weights = delta.t().dot(&trace.inputs[k]);
            let bias = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&self.layers[k].weights);
                back.zip_mut_with(&trace.pre[k - 1], |d, &z| {
                    if z <= T::zero() {
                        *d = T::zero();
                    }
                });
                delta = back;
            }
            grads.push(Dense { weights, bias });
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, loss))
    }

    /// Plain SGD: every parameter moves by `-lr * grad`.
    pub fn sgd_step(&mut self, grads: &Gradients<T>, lr: T) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.scaled_add(-lr, &g.weights);
            layer.bias.scaled_add(-lr, &g.bias);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weights: l.weights.mapv(|v| U::from(v).unwrap()),
                    bias: l.bias.mapv(|v| U::from(v).unwrap()),
                })
                .collect(),
        }
    }
}
