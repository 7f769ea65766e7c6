use std::str::FromStr;

use crate::corpus::Generator;
use crate::embedding::FeatureMode;
use crate::metrics::{CategoryErrorReport, EvalReport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Markdown => "md",
            TableFormat::Csv => "csv",
        }
    }
}

/// Column layout: intra-generator results, or the cross-generator layout
/// with training and testing generator columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableLayout {
    Intra,
    Cross,
}

fn pct(v: f64) -> String {
    format!("{v:.1}")
}

fn opt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), pct)
}

fn generator_label(name: &str) -> String {
    Generator::from_str(name).map_or_else(|_| name.to_string(), |g| g.display_name().to_string())
}

fn mode_label(mode: &str, layout: TableLayout) -> String {
    match (FeatureMode::from_str(mode), layout) {
        (Ok(m), TableLayout::Intra) => m.display_name().to_string(),
        (Ok(FeatureMode::ImageOnly), TableLayout::Cross) => "Image-Only".to_string(),
        (Ok(FeatureMode::ImageText), TableLayout::Cross) => "Image+Text".to_string(),
        (Err(_), _) => mode.to_string(),
    }
}

fn category_mode_label(mode: &str) -> String {
    match FeatureMode::from_str(mode) {
        Ok(FeatureMode::ImageOnly) => "Image-Only".to_string(),
        Ok(FeatureMode::ImageText) => "Text+Image".to_string(),
        Err(_) => mode.to_string(),
    }
}

fn emit(header: &[&str], rows: &[Vec<String>], format: TableFormat) -> String {
    match format {
        TableFormat::Markdown => {
            let line = |cells: Vec<String>| format!("| {} |\n", cells.join(" | "));
            let mut out = line(header.iter().map(|h| h.to_string()).collect());
            out += &format!("|{}\n", "---|".repeat(header.len()));
            for row in rows {
                out += &line(row.iter().map(|c| c.replace('|', "\\|")).collect());
            }
            out
        }
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header).expect("in-memory csv");
            for row in rows {
                w.write_record(row).expect("in-memory csv");
            }
            String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is UTF-8")
        }
    }
}

/// One row per report, in the given order; percentages with one decimal.
pub fn render_tables(reports: &[EvalReport], layout: TableLayout, format: TableFormat) -> String {
    let (header, rows): (&[&str], Vec<Vec<String>>) = match layout {
        TableLayout::Intra => (
            &["Model", "Dataset", "Mode", "Features", "Accuracy", "AUC"],
            reports
                .iter()
                .map(|r| {
                    vec![
                        r.meta.model.clone(),
                        r.meta.dataset.clone(),
                        mode_label(&r.meta.mode, layout),
                        r.meta.features.clone(),
                        pct(r.accuracy),
                        pct(r.auc),
                    ]
                })
                .collect(),
        ),
        TableLayout::Cross => (
            &[
                "Model",
                "Training Method",
                "Testing Method",
                "Mode",
                "Features",
                "Accuracy",
                "AUC",
            ],
            reports
                .iter()
                .map(|r| {
                    vec![
                        r.meta.model.clone(),
                        generator_label(&r.meta.train_generator),
                        generator_label(&r.meta.test_generator),
                        mode_label(&r.meta.mode, layout),
                        r.meta.features.clone(),
                        pct(r.accuracy),
                        pct(r.auc),
                    ]
                })
                .collect(),
        ),
    };
    emit(header, &rows, format)
}

/// One row of the per-category error table: a classifier evaluated on one
/// or more generators.
#[derive(Debug, Clone)]
pub struct CategoryRow {
    pub model: String,
    pub mode: String,
    pub features: String,
    pub by_generator: Vec<(String, CategoryErrorReport)>,
}

/// FN/FP per generator and macro-category. Generator columns follow the
/// first row; undefined rates print as `n/a`.
pub fn render_category_table(rows: &[CategoryRow], format: TableFormat) -> String {
    let generators: Vec<String> = rows
        .first()
        .map(|r| r.by_generator.iter().map(|(g, _)| g.clone()).collect())
        .unwrap_or_default();
    let mut header = vec![
        "Model".to_string(),
        "Mode".to_string(),
        "Features".to_string(),
    ];
    for g in &generators {
        let g = generator_label(g);
        for bucket in ["Animated", "Inanimate"] {
            for kind in ["FN", "FP"] {
                header.push(format!("{g} {bucket} {kind}"));
            }
        }
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let mut cells = vec![
                row.model.clone(),
                category_mode_label(&row.mode),
                row.features.clone(),
            ];
            for g in &generators {
                let report = row
                    .by_generator
                    .iter()
                    .find(|(name, _)| name == g)
                    .map(|(_, r)| r);
                for bucket in ["animate", "inanimate"] {
                    let errors = report.and_then(|r| r.categories.get(bucket));
                    cells.push(opt_pct(errors.and_then(|e| e.fn_pct)));
                    cells.push(opt_pct(errors.and_then(|e| e.fp_pct)));
                }
            }
            cells
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    emit(&header, &body, format)
}

/// Header and rows of a rendered CSV table.
pub fn parse_table_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("table csv: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = reader
        .records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| Error::Format(format!("table csv: {e}")))
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{CellMeta, ConfusionCounts};

    fn report(model: &str, features: &str, acc: f64, auc: f64) -> EvalReport {
        EvalReport {
            meta: CellMeta {
                model: model.into(),
                dataset: "MSCOCO".into(),
                mode: "image_only".into(),
                features: features.into(),
                train_generator: "stable_diffusion".into(),
                test_generator: "glide".into(),
                ..Default::default()
            },
            accuracy: acc,
            auc,
            confusion: ConfusionCounts::default(),
            n: 0,
        }
    }

    #[test]
    fn empty_list_is_header_only() {
        let md = render_tables(&[], TableLayout::Intra, TableFormat::Markdown);
        assert_eq!(md.lines().count(), 2);
        let csv = render_tables(&[], TableLayout::Intra, TableFormat::Csv);
        assert_eq!(csv, "Model,Dataset,Mode,Features,Accuracy,AUC\n");
    }

    #[test]
    fn intra_row_layout() {
        let md = render_tables(
            &[report("MLP-Base", "CLIP-VIT", 79.5, 88.8)],
            TableLayout::Intra,
            TableFormat::Markdown,
        );
        assert!(
            md.contains("| MLP-Base | MSCOCO | Image Only | CLIP-VIT | 79.5 | 88.8 |"),
            "{md}"
        );
    }

    #[test]
    fn cross_row_layout() {
        let md = render_tables(
            &[report("MLP-Base", "CLIP-R50", 50.8, 50.3)],
            TableLayout::Cross,
            TableFormat::Markdown,
        );
        assert!(
            md.contains(
                "| MLP-Base | Stable Diffusion | GLIDE | Image-Only | CLIP-R50 | 50.8 | 50.3 |"
            ),
            "{md}"
        );
    }

    #[test]
    fn one_decimal_rounding() {
        let csv = render_tables(
            &[report("m", "f", 100.0 * 2.0 / 3.0, 99.96)],
            TableLayout::Intra,
            TableFormat::Csv,
        );
        assert!(csv.ends_with(",66.7,100.0\n"), "{csv}");
    }
}
