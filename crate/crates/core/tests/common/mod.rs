#![allow(dead_code)]

use std::collections::BTreeMap;

use diffdetect_core::corpus::{Dataset, Generator, SyntheticCorpus};
use diffdetect_core::embedding::{
    extract_corpus, BackboneProfile, BackendSpec, ExtractOptions, FeatureMode, PlantedBias,
    StubConfig,
};
use diffdetect_core::experiments::{CategoryRow, CellData, ExperimentSpec, MlpSettings};
use diffdetect_core::metrics::{
    CategoryErrorReport, CategoryErrors, CellMeta, ConfusionCounts, EvalReport,
};

/// Pairwise AUC oracle: ties count one half. Returns the doubled pair count
/// so callers can compare exactly.
pub fn brute_force_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut doubled = 0u128;
    let (mut pos, mut neg) = (0u128, 0u128);
    for (i, &li) in labels.iter().enumerate() {
        if li == 1 {
            pos += 1;
        } else {
            neg += 1;
        }
        if li != 1 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            if scores[i] > scores[j] {
                doubled += 2;
            } else if scores[i] == scores[j] {
                doubled += 1;
            }
        }
    }
    100.0 * doubled as f64 / (2 * pos * neg) as f64
}

/// Single-pass textbook Pearson formula.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Synthetic paired corpus embedded by the stub backbone, with a planted
/// coordinate per generator.
pub fn stub_cell(
    planted: &[(Generator, Option<usize>)],
    (train, val, test): (usize, usize, usize),
    beta: f32,
    seed: u64,
) -> CellData {
    let manifest = SyntheticCorpus {
        dataset: Dataset::Mscoco,
        generators: planted.iter().map(|(g, _)| g.clone()).collect(),
        train,
        val,
        test,
    }
    .build()
    .unwrap();
    let planted: BTreeMap<_, _> = planted
        .iter()
        .filter_map(|(g, idx)| {
            idx.map(|index| {
                (
                    g.clone(),
                    PlantedBias {
                        index,
                        magnitude: beta,
                    },
                )
            })
        })
        .collect();
    let spec = BackendSpec::Stub(StubConfig { seed, planted });
    let store = extract_corpus(
        &manifest,
        &spec,
        &BackboneProfile::stub(),
        FeatureMode::ImageOnly,
        &ExtractOptions::default(),
    )
    .unwrap();
    CellData::new(manifest, store)
}

/// Small classifier used by the synthetic fixtures; the default network is
/// sized for real embeddings and far too slow for tests.
pub fn small_mlp() -> MlpSettings {
    MlpSettings {
        hidden_dims: Some(vec![32]),
        max_epochs: Some(150),
        batch_size: Some(32),
        ..Default::default()
    }
}

pub fn cell_spec(name: &str, train: Generator, tests: Vec<Generator>, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        name: name.into(),
        model: "MLP-Base".into(),
        dataset: Dataset::Mscoco,
        train_generator: train,
        test_generators: tests,
        mode: FeatureMode::ImageOnly,
        backbone: "stub".into(),
        features: None,
        manifest: "unused.jsonl".into(),
        store: "unused.demb".into(),
        seed: Some(seed),
        mlp: small_mlp(),
    }
}

pub fn fixtures() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn table_report(model: &str, features: &str, accuracy: f64, auc: f64) -> EvalReport {
    EvalReport {
        meta: CellMeta {
            model: model.into(),
            dataset: "MSCOCO".into(),
            mode: "image_only".into(),
            features: features.into(),
            train_generator: "stable_diffusion".into(),
            test_generator: "stable_diffusion".into(),
            seed: None,
            manifest_sha256: None,
            store_sha256: None,
        },
        accuracy,
        auc,
        confusion: ConfusionCounts::default(),
        n: 0,
    }
}

/// The two reference rows used by the table golden files.
pub fn reference_reports() -> Vec<EvalReport> {
    vec![
        table_report("MLP-Base", "CLIP-VIT", 79.5, 88.8),
        table_report("Resnet50", "Resnet50", 97.1, 99.6),
    ]
}

fn bucket(fn_: u64, tp: u64, fp: u64, tn: u64) -> CategoryErrors {
    let confusion = ConfusionCounts { tp, fp, tn, fn_ };
    CategoryErrors {
        fn_pct: confusion.fn_pct(),
        fp_pct: confusion.fp_pct(),
        confusion,
    }
}

/// Confusion counts whose FN/FP rates are 6.0/3.0/5.8/4.0 on one generator
/// and 0.2/0.2/1.1/1.0 on the other.
pub fn reference_category_row() -> CategoryRow {
    let report = |animate, inanimate| CategoryErrorReport {
        threshold: 0.5,
        categories: BTreeMap::from([
            ("animate".to_string(), animate),
            ("inanimate".to_string(), inanimate),
        ]),
    };
    CategoryRow {
        model: "Resnet50".into(),
        mode: "image_only".into(),
        features: "Resnet50".into(),
        by_generator: vec![
            (
                "stable_diffusion".into(),
                report(bucket(6, 94, 3, 97), bucket(29, 471, 20, 480)),
            ),
            (
                "glide".into(),
                report(bucket(1, 499, 1, 499), bucket(11, 989, 10, 990)),
            ),
        ],
    }
}
