use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bce_loss, init_model, lr_at, MlpConfig, MlpModel};
use crate::corpus::{Manifest, SampleRecord, Split};
use crate::embedding::{EmbeddingStore, FeatureMode};
use crate::metrics;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    #[serde(rename = "val_acc")]
    pub val_accuracy: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    /// `epoch,lr,train_loss,val_acc,val_auc`, one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for rec in &self.epochs {
            w.serialize(rec).expect("in-memory csv");
        }
        if self.epochs.is_empty() {
            w.write_record(["epoch", "lr", "train_loss", "val_acc", "val_auc"])
                .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is UTF-8")
    }
}

/// Stacks the features of `records` into a matrix (rows in record order) and
/// returns the 0/1 labels alongside.
pub fn feature_matrix(
    store: &EmbeddingStore,
    records: &[&SampleRecord],
    mode: FeatureMode,
) -> Result<(Array2<f32>, Array1<f32>)> {
    if mode == FeatureMode::ImageText && !store.has_text() {
        return Err(Error::InvalidInput(
            "image+text mode needs an embedding store with text vectors".into(),
        ));
    }
    let dim = match mode {
        FeatureMode::ImageOnly => store.image_dim,
        FeatureMode::ImageText => store.image_dim + store.text_dim,
    };
    let mut x = Array2::<f32>::zeros((records.len(), dim));
    let mut y = Array1::<f32>::zeros(records.len());
    for (i, r) in records.iter().enumerate() {
        let e = store
            .get(&r.id)
            .ok_or_else(|| Error::InvalidInput(format!("no embedding for sample {:?}", r.id)))?;
        let mut row = x.row_mut(i);
        let image = ndarray::ArrayView1::from(&e.image_vec[..]);
        row.slice_mut(ndarray::s![..store.image_dim]).assign(&image);
        if mode == FeatureMode::ImageText {
            let text = e
                .text_vec
                .as_deref()
                .expect("store validated text presence");
            row.slice_mut(ndarray::s![store.image_dim..])
                .assign(&ndarray::ArrayView1::from(text));
        }
        y[i] = f32::from(r.label.as_binary());
    }
    Ok((x, y))
}

fn split_records<'a>(
    manifest: &'a Manifest,
    split: Split,
    mode: FeatureMode,
    config: &MlpConfig,
) -> Vec<&'a SampleRecord> {
    manifest
        .records()
        .iter()
        .filter(|r| r.split == split)
        .filter(|r| {
            mode == FeatureMode::ImageOnly || config.include_degenerate || !r.is_degenerate()
        })
        .collect()
}

/// Trains on the manifest's train split and keeps the parameters of the
/// epoch with the best validation AUC, ties broken by validation loss.
///
/// The result is a pure function of (store, manifest, config): batches are
/// shuffled by a generator seeded from `config.seed` and every reduction
/// runs in a fixed order.
pub fn train(
    store: &EmbeddingStore,
    manifest: &Manifest,
    config: &MlpConfig,
    mode: FeatureMode,
) -> Result<(MlpModel, TrainHistory)> {
    config.validate()?;
    let train_records = split_records(manifest, Split::Train, mode, config);
    let val_records = split_records(manifest, Split::Val, mode, config);
    if train_records.is_empty() || val_records.is_empty() {
        return Err(Error::InvalidInput(format!(
            "empty split: {} train / {} val records",
            train_records.len(),
            val_records.len()
        )));
    }
    let (train_x, train_y) = feature_matrix(store, &train_records, mode)?;
    let (val_x, val_y) = feature_matrix(store, &val_records, mode)?;
    if train_x.ncols() != config.input_dim {
        return Err(Error::DimensionMismatch {
            context: "feature width vs config.input_dim".into(),
            expected: config.input_dim,
            actual: train_x.ncols(),
        });
    }
    let val_labels: Vec<u8> = val_y.iter().map(|&v| v as u8).collect();
    if !val_labels.contains(&0) || !val_labels.contains(&1) {
        return Err(Error::InvalidInput(
            "validation split needs both classes".into(),
        ));
    }

    let mut model = init_model(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_x.nrows()).collect();

    let mut history = TrainHistory::default();
    // (val AUC, val loss, parameters); AUC ties go to the lower loss, since
    // AUC saturates long before the scores are calibrated on separable data.
    let mut best: Option<(f64, f64, MlpModel)> = None;

    for epoch in 0..config.max_epochs {
        let lr = lr_at(epoch, config)?;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            let xb = train_x.select(Axis(0), chunk);
            let yb = train_y.select(Axis(0), chunk);
            let (grads, loss) = model.network.backward(xb.view(), yb.view())?;
            if !loss.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "training diverged at epoch {epoch}"
                )));
            }
            loss_sum += f64::from(loss) * chunk.len() as f64;
            model.sgd_step(&grads, lr as f32);
        }
        if !model.network.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite parameters after epoch {epoch}"
            )));
        }

        let probs = model.forward(val_x.view())?;
        let scores: Vec<f64> = probs.iter().map(|&p| f64::from(p)).collect();
        let val_auc = metrics::roc_auc(&scores, &val_labels)?;
        let val_loss = bce_loss(
            probs.as_slice().expect("contiguous"),
            val_y.as_slice().expect("contiguous"),
        );
        let predictions = metrics::threshold_predictions(&scores, metrics::DEFAULT_THRESHOLD);
        let val_accuracy = metrics::accuracy(&predictions, &val_labels)?;
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train_x.nrows() as f64,
            val_accuracy,
            val_auc,
        });
        log::debug!("epoch {epoch}: lr {lr:.5} val_auc {val_auc:.2} val_acc {val_accuracy:.2}");

        let improved = best
            .as_ref()
            .is_none_or(|(auc, loss, _)| val_auc > *auc || (val_auc == *auc && val_loss < *loss));
        if improved {
            best = Some((val_auc, val_loss, model.clone()));
            history.best_epoch = epoch;
        }
        if config.early_stop_patience > 0
            && epoch - history.best_epoch >= config.early_stop_patience
        {
            break;
        }
    }
    let (_, _, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, history))
}
