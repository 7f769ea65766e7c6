//! Experiment grid: intra-generator cells, the cross-generator matrix,
//! per-category error analysis, and rendering of the resulting tables and
//! figures.

mod figure;
mod render;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Generator, Label, Manifest, RecordFilter, SampleRecord, Split};
use crate::embedding::{EmbeddingStore, FeatureMode};
use crate::io::sha256_hex;
use crate::metrics::{self, category_error_rates, CategoryErrorReport, CellMeta, EvalReport};
use crate::trainer::{feature_matrix, train, MlpConfig, MlpModel, TrainHistory};
use crate::{Error, Result};

pub use figure::{correlation_figure_data, render_heatmap, HeatmapRow};
pub use render::{
    parse_table_csv, render_category_table, render_tables, CategoryRow, TableFormat, TableLayout,
};

/// Optional overrides of the default classifier configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSettings {
    pub hidden_dims: Option<Vec<usize>>,
    pub lr_start: Option<f64>,
    pub lr_end: Option<f64>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub early_stop_patience: Option<usize>,
    pub include_degenerate: Option<bool>,
}

impl MlpSettings {
    pub fn apply(&self, mut cfg: MlpConfig) -> MlpConfig {
        if let Some(h) = &self.hidden_dims {
            cfg.hidden_dims = h.clone();
        }
        cfg.lr_start = self.lr_start.unwrap_or(cfg.lr_start);
        cfg.lr_end = self.lr_end.unwrap_or(cfg.lr_end);
        cfg.max_epochs = self.max_epochs.unwrap_or(cfg.max_epochs);
        cfg.batch_size = self.batch_size.unwrap_or(cfg.batch_size);
        cfg.early_stop_patience = self.early_stop_patience.unwrap_or(cfg.early_stop_patience);
        cfg.include_degenerate = self.include_degenerate.unwrap_or(cfg.include_degenerate);
        cfg
    }
}

fn default_model() -> String {
    "MLP-Base".into()
}

/// One cell of the grid. `test_generators` empty means "same as training".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default = "default_model")]
    pub model: String,
    pub dataset: Dataset,
    pub train_generator: Generator,
    #[serde(default)]
    pub test_generators: Vec<Generator>,
    pub mode: FeatureMode,
    pub backbone: String,
    /// Table label for the feature extractor; derived from `backbone` when absent.
    #[serde(default)]
    pub features: Option<String>,
    pub manifest: PathBuf,
    pub store: PathBuf,
    /// Falls back to the seed given on the command line.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mlp: MlpSettings,
}

impl ExperimentSpec {
    pub fn test_generators(&self) -> Vec<Generator> {
        if self.test_generators.is_empty() {
            vec![self.train_generator.clone()]
        } else {
            self.test_generators.clone()
        }
    }

    pub fn features_label(&self) -> String {
        self.features
            .clone()
            .unwrap_or_else(|| backbone_label(&self.backbone))
    }

    pub fn mlp_config(&self, input_dim: usize, seed: u64) -> MlpConfig {
        let base = MlpConfig {
            seed: self.seed.unwrap_or(seed),
            ..MlpConfig::new(input_dim)
        };
        self.mlp.apply(base)
    }

    fn with_relative_to(mut self, base: &Path) -> Self {
        if self.manifest.is_relative() {
            self.manifest = base.join(&self.manifest);
        }
        if self.store.is_relative() {
            self.store = base.join(&self.store);
        }
        self
    }
}

/// Table label of a backbone profile name.
pub fn backbone_label(backbone: &str) -> String {
    match backbone {
        "clip-vit" => "CLIP-VIT".into(),
        "clip-rn50" => "CLIP-R50".into(),
        other => other.to_uppercase(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "cell")]
    pub cells: Vec<ExperimentSpec>,
}

impl GridSpec {
    /// Parses TOML, or JSON when the file name ends in `.json`. Relative
    /// manifest and store paths are taken relative to the grid file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let grid: GridSpec = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let grid = GridSpec {
            cells: grid
                .cells
                .into_iter()
                .map(|c| c.with_relative_to(base))
                .collect(),
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Config("grid declares no cells".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for c in &self.cells {
            if c.name.is_empty() || c.name.contains(['/', '\\']) {
                return Err(Error::Config(format!("invalid cell name {:?}", c.name)));
            }
            if !names.insert(&c.name) {
                return Err(Error::Config(format!("duplicate cell name {:?}", c.name)));
            }
        }
        Ok(())
    }
}

/// A manifest and embedding store loaded together, with content hashes.
#[derive(Debug, Clone)]
pub struct CellData {
    pub manifest: Manifest,
    pub store: EmbeddingStore,
    pub manifest_sha256: String,
    pub store_sha256: String,
}

impl CellData {
    pub fn load(manifest: &Path, store: &Path) -> Result<Self> {
        Ok(Self::new(
            crate::corpus::parse_manifest(manifest)?,
            EmbeddingStore::read(store)?,
        ))
    }

    /// Hashes the canonical serializations, which equal the bytes of files
    /// written by this crate.
    pub fn new(manifest: Manifest, store: EmbeddingStore) -> Self {
        CellData {
            manifest_sha256: sha256_hex(manifest.to_jsonl().as_bytes()),
            store_sha256: sha256_hex(&store.to_bytes()),
            manifest,
            store,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: u8,
    pub score: f64,
    pub prediction: u8,
}

/// Test-time records of a manifest: those matching `filter`, minus
/// blank-caption records when text features are used without
/// `include_degenerate`.
pub fn eligible_records<'a>(
    manifest: &'a Manifest,
    filter: &RecordFilter,
    mode: FeatureMode,
    include_degenerate: bool,
) -> Vec<&'a SampleRecord> {
    manifest
        .records()
        .iter()
        .filter(|r| filter.matches(r))
        .filter(|r| mode == FeatureMode::ImageOnly || include_degenerate || !r.is_degenerate())
        .collect()
}

/// Scores `records` and thresholds at the default 0.5.
pub fn predict(
    model: &MlpModel,
    store: &EmbeddingStore,
    records: &[&SampleRecord],
    mode: FeatureMode,
) -> Result<Vec<Prediction>> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let (x, y): (_, Array1<f32>) = feature_matrix(store, records, mode)?;
    let scores = model.forward(x.view())?;
    Ok(records
        .iter()
        .zip(scores.iter().zip(y.iter()))
        .map(|(r, (&s, &l))| {
            let score = f64::from(s);
            Prediction {
                id: r.id.clone(),
                label: l as u8,
                score,
                prediction: u8::from(score >= metrics::DEFAULT_THRESHOLD),
            }
        })
        .collect())
}

pub fn report_from_predictions(predictions: &[Prediction], meta: CellMeta) -> Result<EvalReport> {
    let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
    let labels: Vec<u8> = predictions.iter().map(|p| p.label).collect();
    EvalReport::from_scores(&scores, &labels, metrics::DEFAULT_THRESHOLD, meta)
}

/// Output of one trained cell evaluated on one test generator.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub report: EvalReport,
    pub predictions: Vec<Prediction>,
}

/// A cell trained once, ready to be evaluated against any generator.
pub struct TrainedCell<'a> {
    pub spec: &'a ExperimentSpec,
    pub data: &'a CellData,
    pub model: MlpModel,
    pub history: TrainHistory,
}

fn has_generator(manifest: &Manifest, dataset: &Dataset, generator: &Generator) -> bool {
    manifest
        .records()
        .iter()
        .any(|r| r.label == Label::Generated && &r.generator == generator && &r.dataset == dataset)
}

/// Trains on the cell's dataset restricted to real images plus those of
/// the training generator; model selection uses the validation split.
pub fn train_cell<'a>(
    spec: &'a ExperimentSpec,
    data: &'a CellData,
    seed: u64,
) -> Result<TrainedCell<'a>> {
    if !has_generator(&data.manifest, &spec.dataset, &spec.train_generator) {
        return Err(Error::InvalidInput(format!(
            "cell {:?}: manifest has no {} samples from {}",
            spec.name, spec.dataset, spec.train_generator
        )));
    }
    let input_dim = match spec.mode {
        FeatureMode::ImageOnly => data.store.image_dim,
        FeatureMode::ImageText => data.store.image_dim + data.store.text_dim,
    };
    let config = spec.mlp_config(input_dim, seed);
    let filter = RecordFilter::real_and(spec.train_generator.clone())
        .and(&RecordFilter::any().dataset(spec.dataset.clone()));
    let subset = data.manifest.filter(&filter);
    let (model, history) = train(&data.store, &subset, &config, spec.mode)?;
    Ok(TrainedCell {
        spec,
        data,
        model,
        history,
    })
}

impl TrainedCell<'_> {
    pub fn evaluate(&self, test_generator: &Generator) -> Result<CellResult> {
        let spec = self.spec;
        if !has_generator(&self.data.manifest, &spec.dataset, test_generator) {
            return Err(Error::InvalidInput(format!(
                "cell {:?}: manifest has no {} samples from {}",
                spec.name, spec.dataset, test_generator
            )));
        }
        let filter = RecordFilter::real_and(test_generator.clone()).and(
            &RecordFilter::any()
                .dataset(spec.dataset.clone())
                .split(Split::Test),
        );
        let records = eligible_records(
            &self.data.manifest,
            &filter,
            spec.mode,
            self.model.config.include_degenerate,
        );
        let predictions = predict(&self.model, &self.data.store, &records, spec.mode)?;
        let meta = CellMeta {
            model: spec.model.clone(),
            dataset: spec.dataset.display_name().to_string(),
            mode: spec.mode.as_str().to_string(),
            features: spec.features_label(),
            train_generator: spec.train_generator.as_str().to_string(),
            test_generator: test_generator.as_str().to_string(),
            seed: Some(self.model.config.seed),
            manifest_sha256: Some(self.data.manifest_sha256.clone()),
            store_sha256: Some(self.data.store_sha256.clone()),
        };
        let report = report_from_predictions(&predictions, meta)?;
        Ok(CellResult {
            report,
            predictions,
        })
    }
}

/// Intra-generator cell: train and test on the same generator.
pub fn run_intra(spec: &ExperimentSpec, data: &CellData, seed: u64) -> Result<EvalReport> {
    let tests = spec.test_generators();
    if tests != [spec.train_generator.clone()] {
        return Err(Error::Config(format!(
            "cell {:?}: intra runs test on the training generator only",
            spec.name
        )));
    }
    Ok(train_cell(spec, data, seed)?
        .evaluate(&spec.train_generator)?
        .report)
}

/// Reports keyed by (training generator, testing generator).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CrossMatrix {
    pub cells: BTreeMap<(Generator, Generator), EvalReport>,
}

impl CrossMatrix {
    pub fn get(&self, train: &Generator, test: &Generator) -> Option<&EvalReport> {
        self.cells.get(&(train.clone(), test.clone()))
    }

    pub fn diagonal(&self) -> Vec<&EvalReport> {
        self.cells
            .iter()
            .filter(|((a, b), _)| a == b)
            .map(|(_, r)| r)
            .collect()
    }

    pub fn off_diagonal(&self) -> Vec<&EvalReport> {
        self.cells
            .iter()
            .filter(|((a, b), _)| a != b)
            .map(|(_, r)| r)
            .collect()
    }
}

/// Trains once per spec and evaluates every listed test generator.
pub fn run_cross(specs: &[ExperimentSpec], data: &CellData, seed: u64) -> Result<CrossMatrix> {
    let mut matrix = CrossMatrix::default();
    for spec in specs {
        let cell = train_cell(spec, data, seed)?;
        for test in spec.test_generators() {
            let report = cell.evaluate(&test)?.report;
            matrix
                .cells
                .insert((spec.train_generator.clone(), test), report);
        }
    }
    Ok(matrix)
}

/// FN%/FP% per macro-category; records missing from the manifest are an
/// error, and records without a category form the "unknown" bucket.
pub fn category_report(
    predictions: &[Prediction],
    manifest: &Manifest,
) -> Result<CategoryErrorReport> {
    let mut categories = Vec::with_capacity(predictions.len());
    for p in predictions {
        let r = manifest.get(&p.id).ok_or_else(|| {
            Error::InvalidInput(format!("prediction for unknown sample {:?}", p.id))
        })?;
        categories.push(r.macro_category.as_str());
    }
    let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
    let labels: Vec<u8> = predictions.iter().map(|p| p.label).collect();
    category_error_rates(&scores, &labels, &categories, metrics::DEFAULT_THRESHOLD)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

pub fn predictions_to_csv(predictions: &[Prediction]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if predictions.is_empty() {
        w.write_record(["id", "label", "score", "prediction"])
            .expect("in-memory csv");
    }
    for p in predictions {
        w.serialize(p).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is UTF-8")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}
