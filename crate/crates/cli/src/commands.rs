use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use diffdetect_core::corpus::{
    parse_manifest, write_manifest, Dataset, Generator, Label, Manifest, RecordFilter, Split,
    SyntheticCorpus,
};
use diffdetect_core::embedding::{
    extract_corpus, BackboneProfile, BackendSpec, EmbeddingStore, ExtractOptions, FeatureMode,
    PlantedBias, StubConfig,
};
use diffdetect_core::experiments::{
    category_report, eligible_records, predict, predictions_to_csv, read_predictions,
    render_category_table, render_heatmap, render_tables, report_from_predictions, train_cell,
    CategoryRow, CellData, GridSpec, HeatmapRow, TableFormat, TableLayout,
};
use diffdetect_core::io::{sha256_file, write_atomic};
use diffdetect_core::linguistics::{
    correlation_report, parse_annotations, CorrelationMeta, CorrelationReport, CorrelationTarget,
};
use diffdetect_core::metrics::CellMeta;
use diffdetect_core::trainer::{
    gradient_check, load_checkpoint, save_checkpoint, train, MlpConfig,
};

use crate::{
    AnalyzeCategoriesArgs, AnalyzeLinguisticsArgs, BuildManifestArgs, Command, CrossEvalArgs,
    EvalArgs, ExtractArgs, GradcheckArgs, MlpArgs, PlotArgs, TrainArgs,
};

/// A bad flag value detected after parsing; exits with the usage code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_flag<T: FromStr<Err = String>>(flag: &str, value: &str) -> Result<T> {
    value.parse().map_err(|e| usage(format!("--{flag}: {e}")))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildManifest(a) => build_manifest(a),
        Command::Extract(a) => extract(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::CrossEval(a) => cross_eval(a),
        Command::AnalyzeCategories(a) => analyze_categories(a),
        Command::AnalyzeLinguistics(a) => analyze_linguistics(a),
        Command::Plot(a) => plot(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn build_manifest(a: BuildManifestArgs) -> Result<()> {
    let manifest = if a.synthetic {
        let generators = a
            .generators
            .iter()
            .map(|g| parse_flag::<Generator>("generators", g))
            .collect::<Result<Vec<_>>>()?;
        if generators.contains(&Generator::None) {
            return Err(usage("--generators: \"none\" is not a generator"));
        }
        SyntheticCorpus {
            dataset: parse_flag("dataset", &a.dataset)?,
            generators,
            train: a.train,
            val: a.val,
            test: a.test,
        }
        .build()?
    } else {
        let parts = a
            .inputs
            .iter()
            .map(|p| parse_manifest(p).with_context(|| format!("reading {}", p.display())))
            .collect::<Result<Vec<_>>>()?;
        Manifest::merge(parts)?
    };
    if a.paired {
        manifest.check_paired()?;
    }
    write_manifest(&manifest, &a.out)?;
    for ((split, label), n) in manifest.split_counts() {
        log::info!("{split}/{label}: {n}");
    }
    Ok(())
}

fn load_profile(backbone: &str) -> Result<BackboneProfile> {
    if let Some(p) = BackboneProfile::builtin(backbone) {
        return Ok(p);
    }
    let path = Path::new(backbone);
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(BackboneProfile::from_json_file(path)?);
    }
    Err(usage(format!(
        "--backbone: unknown profile {backbone:?} (clip-vit, clip-rn50, stub or a .json file)"
    )))
}

fn parse_plant(spec: &str) -> Result<(Generator, PlantedBias)> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [g, index, magnitude] = parts[..] else {
        return Err(usage(format!(
            "--plant {spec:?}: expected GENERATOR:INDEX:MAGNITUDE"
        )));
    };
    let bad = || {
        usage(format!(
            "--plant {spec:?}: expected GENERATOR:INDEX:MAGNITUDE"
        ))
    };
    Ok((
        parse_flag("plant", g)?,
        PlantedBias {
            index: index.parse().map_err(|_| bad())?,
            magnitude: magnitude.parse().map_err(|_| bad())?,
        },
    ))
}

fn extract(a: ExtractArgs) -> Result<()> {
    let mode: FeatureMode = parse_flag("mode", &a.mode)?;
    let profile = load_profile(&a.backbone)?;
    if a.workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    let backend = if profile.name == "stub" {
        let planted = a
            .plant
            .iter()
            .map(|s| parse_plant(s))
            .collect::<Result<BTreeMap<_, _>>>()?;
        for bias in planted.values() {
            if bias.index >= profile.image_dim {
                return Err(usage(format!(
                    "--plant index {} outside image dimension {}",
                    bias.index, profile.image_dim
                )));
            }
        }
        BackendSpec::Stub(StubConfig {
            seed: a.stub_seed,
            planted,
        })
    } else {
        if !a.plant.is_empty() {
            return Err(usage("--plant only applies to the stub backbone"));
        }
        if a.image_model.is_none() {
            return Err(usage("--image-model is required for this backbone"));
        }
        if mode == FeatureMode::ImageText && a.text_model.is_none() {
            return Err(usage("--text-model is required for image-text mode"));
        }
        BackendSpec::Onnx {
            image_model: a.image_model.clone(),
            text_model: a.text_model.clone(),
        }
    };
    let manifest = parse_manifest(&a.manifest)?;
    log::info!("embedding {} records with {}", manifest.len(), profile.name);
    let options = ExtractOptions {
        image_root: a.image_root,
        workers: a.workers,
        l2_normalize: a.l2_normalize,
    };
    let store = extract_corpus(&manifest, &backend, &profile, mode, &options)?;
    store.write(&a.out)?;
    log::info!("wrote {} vectors to {}", store.len(), a.out.display());
    Ok(())
}

fn mlp_config(input_dim: usize, seed: u64, m: &MlpArgs) -> MlpConfig {
    let mut cfg = MlpConfig {
        seed,
        include_degenerate: m.include_degenerate,
        ..MlpConfig::new(input_dim)
    };
    if let Some(h) = &m.hidden {
        cfg.hidden_dims = h.clone();
    }
    cfg.max_epochs = m.epochs.unwrap_or(cfg.max_epochs);
    cfg.batch_size = m.batch_size.unwrap_or(cfg.batch_size);
    cfg.lr_start = m.lr_start.unwrap_or(cfg.lr_start);
    cfg.lr_end = m.lr_end.unwrap_or(cfg.lr_end);
    cfg.early_stop_patience = m.patience.unwrap_or(cfg.early_stop_patience);
    cfg
}

fn subset_filter(generator: Option<&str>, dataset: Option<&str>) -> Result<RecordFilter> {
    let mut filter = match generator {
        Some(g) => RecordFilter::real_and(parse_flag("generator", g)?),
        None => RecordFilter::any(),
    };
    if let Some(d) = dataset {
        filter = filter.dataset(parse_flag::<Dataset>("dataset", d)?);
    }
    Ok(filter)
}

fn feature_width(store: &EmbeddingStore, mode: FeatureMode) -> Result<usize> {
    match mode {
        FeatureMode::ImageOnly => Ok(store.image_dim),
        FeatureMode::ImageText if store.has_text() => Ok(store.image_dim + store.text_dim),
        FeatureMode::ImageText => Err(usage(
            "--mode image-text needs a store extracted in image-text mode",
        )),
    }
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mode: FeatureMode = parse_flag("mode", &a.mode)?;
    let store = EmbeddingStore::read(&a.features)?;
    let filter = subset_filter(a.generator.as_deref(), a.dataset.as_deref())?;
    let manifest = parse_manifest(&a.manifest)?.filter(&filter);
    let config = mlp_config(feature_width(&store, mode)?, a.seed, &a.mlp);
    config.validate().map_err(|e| usage(e.to_string()))?;
    log::info!(
        "training {} parameters for up to {} epochs",
        diffdetect_core::trainer::param_count(&config),
        config.max_epochs
    );
    let (model, history) = train(&store, &manifest, &config, mode)?;
    save_checkpoint(&model, &a.out)?;
    if let Some(path) = &a.history {
        write_atomic(path, history.to_csv().as_bytes())?;
    }
    let best = &history.epochs[history.best_epoch];
    log::info!(
        "kept epoch {} (val AUC {:.2}, val accuracy {:.2})",
        best.epoch,
        best.val_auc,
        best.val_accuracy
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let mode: FeatureMode = parse_flag("mode", &a.mode)?;
    let split = match a.split.as_str() {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => return Err(usage(format!("--split: unknown split {other:?}"))),
    };
    let model = load_checkpoint(&a.model)?;
    let data = CellData::load(&a.manifest, &a.features)?;
    let filter = subset_filter(a.generator.as_deref(), a.dataset.as_deref())?.split(split);
    let records = eligible_records(
        &data.manifest,
        &filter,
        mode,
        model.config.include_degenerate,
    );
    let predictions = predict(&model, &data.store, &records, mode)?;

    let single = |values: Vec<String>| {
        let mut values = values;
        values.sort();
        values.dedup();
        values.join("+")
    };
    let test_generator = a.generator.clone().unwrap_or_else(|| {
        single(
            records
                .iter()
                .filter(|r| r.label == Label::Generated)
                .map(|r| r.generator.as_str().to_string())
                .collect(),
        )
    });
    let meta = CellMeta {
        model: a.model_name,
        dataset: single(
            records
                .iter()
                .map(|r| r.dataset.display_name().to_string())
                .collect(),
        ),
        mode: mode.as_str().to_string(),
        features: a.features_label,
        train_generator: a.train_generator.unwrap_or_default(),
        test_generator,
        seed: Some(model.config.seed),
        manifest_sha256: Some(sha256_file(&a.manifest)?),
        store_sha256: Some(sha256_file(&a.features)?),
    };
    let report = report_from_predictions(&predictions, meta)?;
    write_json(&a.out, &report)?;
    if let Some(path) = &a.predictions {
        write_atomic(path, predictions_to_csv(&predictions).as_bytes())?;
    }
    log::info!(
        "accuracy {:.1} AUC {:.1} on {} samples",
        report.accuracy,
        report.auc,
        report.n
    );
    Ok(())
}

fn cross_eval(a: CrossEvalArgs) -> Result<()> {
    let grid = GridSpec::from_file(&a.grid).map_err(|e| usage(e.to_string()))?;
    let mut loaded: BTreeMap<(PathBuf, PathBuf), CellData> = BTreeMap::new();
    let mut intra = Vec::new();
    let mut cross = Vec::new();
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for spec in &grid.cells {
        let key = (spec.manifest.clone(), spec.store.clone());
        if !loaded.contains_key(&key) {
            loaded.insert(key.clone(), CellData::load(&spec.manifest, &spec.store)?);
        }
        let data = &loaded[&key];
        log::info!("cell {}: training on {}", spec.name, spec.train_generator);
        let cell =
            train_cell(spec, data, a.seed).with_context(|| format!("cell {:?}", spec.name))?;
        for test in spec.test_generators() {
            let result = cell
                .evaluate(&test)
                .with_context(|| format!("cell {:?}", spec.name))?;
            let path = a.out.join(format!("{}_{}.json", spec.name, test.as_str()));
            write_json(&path, &result.report)?;
            log::info!(
                "cell {} on {}: accuracy {:.1} AUC {:.1}",
                spec.name,
                test,
                result.report.accuracy,
                result.report.auc
            );
            if test == spec.train_generator {
                intra.push(result.report);
            } else {
                cross.push(result.report);
            }
        }
    }
    if let Some(dir) = &a.tables {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, reports, layout) in [
            ("intra", &intra, TableLayout::Intra),
            ("cross", &cross, TableLayout::Cross),
        ] {
            for format in [TableFormat::Markdown, TableFormat::Csv] {
                let path = dir.join(format!("{name}.{}", format.extension()));
                write_atomic(&path, render_tables(reports, layout, format).as_bytes())?;
            }
        }
    }
    Ok(())
}

fn table_format(path: &Path) -> TableFormat {
    if path.extension().is_some_and(|e| e == "csv") {
        TableFormat::Csv
    } else {
        TableFormat::Markdown
    }
}

fn analyze_categories(a: AnalyzeCategoriesArgs) -> Result<()> {
    let manifest = parse_manifest(&a.manifest)?;
    let mut by_generator = Vec::new();
    for path in &a.predictions {
        let predictions = read_predictions(path)?;
        let mut generators: Vec<&str> = predictions
            .iter()
            .filter_map(|p| manifest.get(&p.id))
            .filter(|r| r.label == Label::Generated)
            .map(|r| r.generator.as_str())
            .collect();
        generators.sort_unstable();
        generators.dedup();
        let name = match generators[..] {
            [g] => g.to_string(),
            [] => "none".to_string(),
            _ => generators.join("+"),
        };
        if by_generator.iter().any(|(g, _)| *g == name) {
            return Err(usage(format!(
                "two predictions files cover generator {name:?}"
            )));
        }
        let report = category_report(&predictions, &manifest)
            .with_context(|| format!("{}", path.display()))?;
        by_generator.push((name, report));
    }
    let json: BTreeMap<&str, _> = by_generator.iter().map(|(g, r)| (g.as_str(), r)).collect();
    write_json(&a.out, &json)?;
    if let Some(path) = &a.table {
        let row = CategoryRow {
            model: a.model_name,
            mode: parse_flag::<FeatureMode>("mode", &a.mode)?
                .as_str()
                .to_string(),
            features: a.features_label,
            by_generator,
        };
        write_atomic(
            path,
            render_category_table(&[row], table_format(path)).as_bytes(),
        )?;
    }
    Ok(())
}

fn analyze_linguistics(a: AnalyzeLinguisticsArgs) -> Result<()> {
    let target: CorrelationTarget = parse_flag("target", &a.target)?;
    let annotations = parse_annotations(&a.annotations)?;
    let predictions = read_predictions(&a.predictions)?;
    let profiles = annotations
        .iter()
        .map(|(id, ann)| (id.clone(), ann.profile()))
        .collect();
    let outcomes = predictions
        .iter()
        .map(|p| {
            let value = match target {
                CorrelationTarget::Correctness => u8::from(p.prediction == p.label),
                CorrelationTarget::PredictedLabel => p.prediction,
            };
            (p.id.clone(), value)
        })
        .collect();
    let report = correlation_report(
        &profiles,
        &outcomes,
        CorrelationMeta {
            model: a.model_name,
            generator: a.generator,
            dataset: a.dataset,
            target,
        },
    )?;
    log::info!(
        "{} samples, {} undefined features",
        report.n,
        report.undefined.len()
    );
    write_json(&a.out, &report)
}

fn plot(a: PlotArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &a.correlations {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let report: CorrelationReport =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        rows.push(HeatmapRow::from_report(&report));
    }
    write_atomic(&a.out, render_heatmap(&rows).as_bytes())?;
    Ok(())
}

#[derive(serde::Serialize)]
struct GradcheckSummary {
    trials: u64,
    max_rel_error: f64,
    checked: usize,
    skipped_at_kink: usize,
    passed: bool,
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    if a.input_dim == 0 || a.batch == 0 || a.hidden.contains(&0) {
        return Err(usage("dimensions must be positive"));
    }
    let mut summary = GradcheckSummary {
        trials: a.trials,
        max_rel_error: 0.0,
        checked: 0,
        skipped_at_kink: 0,
        passed: true,
    };
    for t in 0..a.trials {
        let r = gradient_check(a.input_dim, &a.hidden, a.batch, a.seed + t)?;
        summary.max_rel_error = summary.max_rel_error.max(r.max_rel_error);
        summary.checked += r.checked;
        summary.skipped_at_kink += r.skipped_at_kink;
    }
    summary.passed = summary.max_rel_error < 1e-4;
    println!("{}", serde_json::to_string(&summary)?);
    if let Some(path) = &a.out {
        write_json(path, &summary)?;
    }
    if !summary.passed {
        anyhow::bail!(
            "max relative error {:.3e} exceeds 1e-4",
            summary.max_rel_error
        );
    }
    Ok(())
}
