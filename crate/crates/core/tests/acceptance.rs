//! Acceptance suite. Runs as a plain binary so every criterion prints one
//! line; exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::{
    brute_force_auc, cell_spec, fixtures, pearson_oracle, reference_category_row,
    reference_reports, stub_cell,
};
use diffdetect_core::corpus::Generator;
use diffdetect_core::experiments::{
    render_category_table, render_tables, run_cross, train_cell, TableFormat, TableLayout,
};
use diffdetect_core::metrics::{
    category_error_rates, confusion_at_threshold, pearson, roc_auc, DEFAULT_THRESHOLD,
};
use diffdetect_core::trainer::{gradient_check, param_count, save_checkpoint, MlpConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, elapsed: Duration, detail: String) -> Outcome {
    ensure(elapsed <= limit, format!("{detail}; limit {limit:?}"))
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for trial in 0..50u64 {
        let input = rng.random_range(2..9);
        let hidden: Vec<usize> = (0..rng.random_range(1..4))
            .map(|_| rng.random_range(2..8))
            .collect();
        let batch = rng.random_range(1..7);
        let r = gradient_check(input, &hidden, batch, trial).map_err(|e| e.to_string())?;
        worst = worst.max(r.max_rel_error);
        checked += r.checked;
    }
    let detail = format!("max relative error {worst:.2e} over {checked} partials");
    ensure(worst < 1e-4, detail.clone())?;
    within(Duration::from_secs(30), start.elapsed(), detail)
}

fn random_scores(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u8>) {
    let n = rng.random_range(2..200);
    let levels = rng.random_range(2..20);
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
    labels[0] = 0;
    labels[1] = 1;
    // Few distinct levels force ties.
    let scores = (0..n)
        .map(|_| f64::from(rng.random_range(0..levels)) / 7.0)
        .collect();
    (scores, labels)
}

fn auc_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1000 {
        let (scores, labels) = random_scores(&mut rng);
        let got = roc_auc(&scores, &labels).map_err(|e| e.to_string())?;
        let want = brute_force_auc(&scores, &labels);
        if got != want {
            return Err(format!("instance {i}: {got} != {want}"));
        }
    }
    within(
        Duration::from_secs(10),
        start.elapsed(),
        "1000 instances exact".into(),
    )
}

fn pearson_oracle_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = rng.random_range(3..100);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let r = pearson(&x, &y).map_err(|e| e.to_string())?;
        worst = worst.max((r - pearson_oracle(&x, &y)).abs());
        if r != pearson(&y, &x).map_err(|e| e.to_string())? {
            return Err(format!("instance {i}: not symmetric"));
        }
        let (a, b) = (rng.random_range(0.1..5.0), rng.random_range(-5.0..5.0));
        let up: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let down: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
        let (ru, rd) = (pearson(&up, &x).unwrap(), pearson(&down, &x).unwrap());
        if ru <= 0.999_999 || rd >= -0.999_999 {
            return Err(format!("instance {i}: affine signs {ru} {rd}"));
        }
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:.1e}"))
}

fn separability() -> Outcome {
    let start = Instant::now();
    let data = stub_cell(
        &[(Generator::StableDiffusion, Some(0))],
        (200, 100, 100),
        0.5,
        11,
    );
    let n = data.manifest.len();
    let spec = cell_spec("separable", Generator::StableDiffusion, vec![], 0);
    let r = train_cell(&spec, &data, 0)
        .and_then(|c| c.evaluate(&Generator::StableDiffusion))
        .map_err(|e| e.to_string())?
        .report;
    let detail = format!("{n} samples, accuracy {:.1}, AUC {:.1}", r.accuracy, r.auc);
    ensure(
        n == 800 && r.accuracy >= 95.0 && r.auc >= 99.0,
        detail.clone(),
    )?;
    within(Duration::from_secs(120), start.elapsed(), detail)
}

fn cross_generalization() -> Outcome {
    let (sd, glide) = (Generator::StableDiffusion, Generator::Glide);
    let data = stub_cell(
        &[(sd.clone(), Some(0)), (glide.clone(), Some(1))],
        (200, 100, 500),
        0.5,
        3,
    );
    let specs = [
        cell_spec("sd", sd.clone(), vec![sd.clone(), glide.clone()], 0),
        cell_spec("glide", glide.clone(), vec![glide.clone(), sd.clone()], 0),
    ];
    let m = run_cross(&specs, &data, 0).map_err(|e| e.to_string())?;
    let auc = |a: &Generator, b: &Generator| m.get(a, b).map(|r| r.auc).unwrap_or(f64::NAN);
    let diag = [auc(&sd, &sd), auc(&glide, &glide)];
    let off = [auc(&sd, &glide), auc(&glide, &sd)];
    ensure(
        diag.iter().all(|&v| v >= 99.0) && off.iter().all(|&v| (v - 50.0).abs() <= 10.0),
        format!(
            "diagonal AUC {:.1}/{:.1}, off-diagonal AUC {:.1}/{:.1}",
            diag[0], diag[1], off[0], off[1]
        ),
    )
}

fn determinism() -> Outcome {
    let data = stub_cell(
        &[(Generator::StableDiffusion, Some(0))],
        (100, 50, 50),
        0.5,
        2,
    );
    let spec = cell_spec("det", Generator::StableDiffusion, vec![], 5);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for k in 0..2 {
        let cell = train_cell(&spec, &data, 0).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("{k}.dmlp"));
        save_checkpoint(&cell.model, &path).map_err(|e| e.to_string())?;
        let report = cell
            .evaluate(&Generator::StableDiffusion)
            .map_err(|e| e.to_string())?
            .report;
        runs.push((
            std::fs::read(&path).unwrap(),
            serde_json::to_string(&report).unwrap(),
        ));
    }
    ensure(
        runs[0] == runs[1],
        format!("{}-byte checkpoints and reports identical", runs[0].0.len()),
    )
}

fn parameter_budget() -> Outcome {
    let n = param_count(&MlpConfig::new(512));
    let rel = (n as f64 - 23e6).abs() / 23e6;
    ensure(
        n == 23_078_913 && rel <= 0.02,
        format!("{n} parameters, {:.2}% from 23M", 100.0 * rel),
    )
}

fn golden(name: &str, actual: &str) -> Outcome {
    let expected =
        std::fs::read_to_string(fixtures().join("golden").join(name)).map_err(|e| e.to_string())?;
    ensure(actual == expected, format!("{name} matches"))
}

fn table_rendering() -> Outcome {
    let reports = reference_reports();
    golden(
        "intra.md",
        &render_tables(&reports, TableLayout::Intra, TableFormat::Markdown),
    )?;
    golden(
        "intra.csv",
        &render_tables(&reports, TableLayout::Intra, TableFormat::Csv),
    )?;
    golden(
        "categories.md",
        &render_category_table(&[reference_category_row()], TableFormat::Markdown),
    )
    .map(|_| "intra.md, intra.csv, categories.md match".into())
}

fn category_analysis() -> Outcome {
    // Ten animate then ten inanimate samples. The 0.5 score is a positive call.
    let scores = [
        0.9, 0.8, 0.7, 0.4, 0.2, 0.5, 0.1, 0.6, 0.3, 0.5, //
        0.95, 0.3, 0.55, 0.05, 0.2, 0.49, 0.7, 0.1, 0.0, 0.35,
    ];
    let labels = [1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
    let categories: Vec<&str> = (0..20)
        .map(|i| if i < 10 { "animate" } else { "inanimate" })
        .collect();
    let r = category_error_rates(&scores, &labels, &categories, DEFAULT_THRESHOLD)
        .map_err(|e| e.to_string())?;
    // animate: 6 generated, 2 missed; 4 real, 2 flagged.
    // inanimate: 4 generated, 2 missed; 6 real, 1 flagged.
    let want = [
        ("animate", 200.0 / 6.0, 200.0 / 4.0),
        ("inanimate", 200.0 / 4.0, 100.0 / 6.0),
    ];
    for (name, fn_pct, fp_pct) in want {
        let got = &r.categories[name];
        if got.fn_pct != Some(fn_pct) || got.fp_pct != Some(fp_pct) {
            return Err(format!("{name}: FN {:?} FP {:?}", got.fn_pct, got.fp_pct));
        }
    }
    let global =
        confusion_at_threshold(&scores, &labels, DEFAULT_THRESHOLD).map_err(|e| e.to_string())?;
    ensure(
        r.total() == global && (global.tp, global.fn_, global.fp, global.tn) == (6, 4, 3, 7),
        format!("FN/FP animate 33.3/50.0, inanimate 50.0/16.7; buckets sum to {global:?}"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient correctness", gradients),
        ("AUC oracle equivalence", auc_oracle),
        ("Pearson oracle equivalence", pearson_oracle_check),
        ("separability end-to-end", separability),
        ("cross-generalization mechanism", cross_generalization),
        ("determinism", determinism),
        ("parameter budget", parameter_budget),
        ("table rendering", table_rendering),
        ("category analysis", category_analysis),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({secs:.2}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} ({secs:.2}s)");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
