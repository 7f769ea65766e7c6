//! The MLP detector head: configuration, learning-rate schedule, training
//! loop and checkpoints.

mod checkpoint;
mod gradcheck;
mod network;
mod train;

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use network::{
    bce_loss, bce_with_logits, layer_widths, sigmoid, Dense, Gradients, Network, Real,
};
pub use train::{feature_matrix, train, EpochRecord, TrainHistory};

use crate::{Error, Result};

fn default_hidden() -> Vec<usize> {
    vec![4096, 4096, 1024]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dims: Vec<usize>,
    pub lr_start: f64,
    pub lr_end: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs without a validation-AUC improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    /// Keep blank-caption records when training on image+text features.
    #[serde(default)]
    pub include_degenerate: bool,
}

impl MlpConfig {
    pub fn new(input_dim: usize) -> Self {
        MlpConfig {
            input_dim,
            hidden_dims: default_hidden(),
            lr_start: 0.1,
            lr_end: 0.001,
            max_epochs: 270,
            batch_size: 256,
            seed: 0,
            early_stop_patience: 20,
            include_degenerate: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.input_dim == 0 || self.hidden_dims.contains(&0) {
            return bad("layer widths must be positive");
        }
        if !(self.lr_end > 0.0 && self.lr_start >= self.lr_end) || !self.lr_start.is_finite() {
            return bad("learning rates must satisfy lr_start >= lr_end > 0");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        Ok(())
    }

    pub fn widths(&self) -> Vec<usize> {
        layer_widths(self.input_dim, &self.hidden_dims)
    }
}

/// Sum over layers of `(fan_in + 1) * fan_out`.
pub fn param_count(config: &MlpConfig) -> usize {
    config.widths().windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

/// Geometric decay from `lr_start` at epoch 0 to `lr_end` at the last epoch.
pub fn lr_at(epoch: usize, config: &MlpConfig) -> Result<f64> {
    if epoch >= config.max_epochs {
        return Err(Error::InvalidInput(format!(
            "epoch {epoch} outside schedule of {} epochs",
            config.max_epochs
        )));
    }
    let last = config.max_epochs - 1;
    if epoch == 0 {
        return Ok(config.lr_start);
    }
    if epoch == last {
        return Ok(config.lr_end);
    }
    let t = epoch as f64 / last as f64;
    Ok(config.lr_start * (config.lr_end / config.lr_start).powf(t))
}

/// A configured binary detector; outputs are P(generated).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub network: Network<f32>,
}

pub fn init_model(config: &MlpConfig) -> Result<MlpModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(MlpModel {
        config: config.clone(),
        network: Network::init_uniform(&config.widths(), &mut rng),
    })
}

impl MlpModel {
    pub fn forward(&self, batch: ArrayView2<f32>) -> Result<Array1<f32>> {
        self.network.forward(batch)
    }

    pub fn backward(
        &self,
        batch: ArrayView2<f32>,
        labels: ArrayView1<f32>,
    ) -> Result<Gradients<f32>> {
        Ok(self.network.backward(batch, labels)?.0)
    }

    pub fn sgd_step(&mut self, grads: &Gradients<f32>, lr: f32) {
        self.network.sgd_step(grads, lr);
    }

    pub fn param_count(&self) -> usize {
        self.network.param_count()
    }
}
