//! Central finite-difference check of the analytic gradients, run entirely in
//! f64 on a random network.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{layer_widths, Network};
use crate::Result;

pub const FD_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub params: usize,
    pub checked: usize,
    /// Parameters whose perturbation flipped a ReLU; finite differences are
    /// meaningless across a kink.
    pub skipped_at_kink: usize,
    pub max_rel_error: f64,
}

/// Loop-only loss evaluation, independent of the ndarray path; also returns
/// the sign pattern of every hidden pre-activation.
fn reference_loss(net: &Network<f64>, x: &Array2<f64>, y: &Array1<f64>) -> (f64, Vec<bool>) {
    let mut pattern = Vec::new();
    let mut total = 0.0;
    for (row, &label) in x.rows().into_iter().zip(y.iter()) {
        let mut a: Vec<f64> = row.to_vec();
        for (k, layer) in net.layers.iter().enumerate() {
            let last = k + 1 == net.layers.len();
            a = (0..layer.fan_out())
                .map(|o| {
                    let z = layer.bias[o]
                        + a.iter()
                            .enumerate()
                            .map(|(i, v)| layer.weights[[o, i]] * v)
                            .sum::<f64>();
                    if last {
                        z
                    } else {
                        pattern.push(z > 0.0);
                        z.max(0.0)
                    }
                })
                .collect();
        }
        let z = a[0];
        total += z.max(0.0) + (-z.abs()).exp().ln_1p() - label * z;
    }
    (total / x.nrows() as f64, pattern)
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Builds a random network (non-zero biases included) and batch, then
/// compares every analytic partial derivative with a central difference.
pub fn gradient_check(
    input_dim: usize,
    hidden: &[usize],
    batch: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net: Network<f64> = Network::init_uniform(&layer_widths(input_dim, hidden), &mut rng);
    for layer in &mut net.layers {
        layer
            .bias
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-0.5..0.5));
    }
    let x = Array2::from_shape_fn((batch, input_dim), |_| rng.random_range(-1.0..1.0));
    let y = Array1::from_shape_fn(batch, |_| f64::from(u8::from(rng.random_bool(0.5))));

    let (grads, _) = net.backward(x.view(), y.view())?;
    let (_, base_pattern) = reference_loss(&net, &x, &y);

    let mut report = GradCheckReport {
        params: net.param_count(),
        checked: 0,
        skipped_at_kink: 0,
        max_rel_error: 0.0,
    };
    for k in 0..net.layers.len() {
        let n_weights = net.layers[k].weights.len();
        let n_bias = net.layers[k].bias.len();
        for p in 0..n_weights + n_bias {
            let analytic = if p < n_weights {
                grads.layers[k].weights.as_slice().expect("standard layout")[p]
            } else {
                grads.layers[k].bias[p - n_weights]
            };
            let probe = |delta: f64| {
                let mut shifted = net.clone();
                if p < n_weights {
                    shifted.layers[k]
                        .weights
                        .as_slice_mut()
                        .expect("standard layout")[p] += delta;
                } else {
                    shifted.layers[k].bias[p - n_weights] += delta;
                }
                reference_loss(&shifted, &x, &y)
            };
            let (plus, plus_pattern) = probe(FD_EPSILON);
            let (minus, minus_pattern) = probe(-FD_EPSILON);
            if plus_pattern != base_pattern || minus_pattern != base_pattern {
                report.skipped_at_kink += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * FD_EPSILON);
            report.max_rel_error = report.max_rel_error.max(relative_error(analytic, numeric));
            report.checked += 1;
        }
    }
    Ok(report)
}
