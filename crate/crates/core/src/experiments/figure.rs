//! Correlation heatmap as a standalone SVG document. Output bytes depend
//! only on the input values.

use std::fmt::Write;

use crate::corpus::Generator;
use crate::linguistics::CorrelationReport;

const CELL_W: usize = 40;
const CELL_H: usize = 32;
const LEFT: usize = 150;
const TOP: usize = 120;
const LEGEND_H: usize = 60;

const NEGATIVE: (f64, f64, f64) = (59.0, 76.0, 192.0);
const NEUTRAL: (f64, f64, f64) = (247.0, 247.0, 247.0);
const POSITIVE: (f64, f64, f64) = (180.0, 4.0, 38.0);

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapRow {
    pub label: String,
    /// Feature name and coefficient; `None` for undefined features.
    pub values: Vec<(String, Option<f64>)>,
}

impl HeatmapRow {
    pub fn from_report(report: &CorrelationReport) -> Self {
        let label = std::str::FromStr::from_str(&report.generator).map_or_else(
            |_| report.generator.clone(),
            |g: Generator| g.display_name().to_string(),
        );
        HeatmapRow {
            label,
            values: report
                .ordered()
                .into_iter()
                .map(|(f, v)| (f.to_string(), v))
                .collect(),
        }
    }
}

/// Diverging scale: -1 blue, 0 neutral grey-white, +1 red. Values outside
/// [-1, 1] are clamped.
pub(crate) fn diverging_color(value: f64) -> String {
    let v = value.clamp(-1.0, 1.0);
    let (end, t) = if v < 0.0 {
        (NEGATIVE, -v)
    } else {
        (POSITIVE, v)
    };
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(NEUTRAL.0, end.0),
        mix(NEUTRAL.1, end.1),
        mix(NEUTRAL.2, end.2)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// One row per report, one column per feature; undefined cells are hatched.
pub fn render_heatmap(rows: &[HeatmapRow]) -> String {
    let columns: Vec<&str> = rows
        .first()
        .map(|r| r.values.iter().map(|(f, _)| f.as_str()).collect())
        .unwrap_or_default();
    let width = LEFT + CELL_W * columns.len() + 20;
    let height = TOP + CELL_H * rows.len() + LEGEND_H;
    let mut s = String::new();
    let w = &mut s;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    w.push_str(concat!(
        r#"<defs><pattern id="undefined" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">"#,
        r##"<rect width="6" height="6" fill="#ffffff"/><line x1="0" y1="0" x2="0" y2="6" stroke="#999999" stroke-width="2"/>"##,
        "</pattern></defs>\n"
    ));
    for (j, name) in columns.iter().enumerate() {
        let x = LEFT + j * CELL_W + CELL_W / 2;
        let y = TOP - 6;
        writeln!(
            w,
            r#"<text x="{x}" y="{y}" transform="rotate(-60 {x} {y})">{}</text>"#,
            escape(name)
        )
        .unwrap();
    }
    for (i, row) in rows.iter().enumerate() {
        let y = TOP + i * CELL_H;
        writeln!(
            w,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 8,
            y + CELL_H / 2 + 4,
            escape(&row.label)
        )
        .unwrap();
        for (j, name) in columns.iter().enumerate() {
            let x = LEFT + j * CELL_W;
            let value = row
                .values
                .iter()
                .find(|(f, _)| f == name)
                .and_then(|(_, v)| *v);
            let fill = value.map_or_else(|| "url(#undefined)".to_string(), diverging_color);
            writeln!(
                w,
                r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{fill}" stroke="#ffffff"/>"##
            )
            .unwrap();
            if let Some(v) = value {
                writeln!(
                    w,
                    r#"<text x="{}" y="{}" text-anchor="middle" font-size="9">{v:.2}</text>"#,
                    x + CELL_W / 2,
                    y + CELL_H / 2 + 3
                )
                .unwrap();
            }
        }
    }
    // Legend: eleven swatches from -1 to 1.
    let ly = TOP + rows.len() * CELL_H + 20;
    for k in 0..=10 {
        let v = -1.0 + 0.2 * k as f64;
        let x = LEFT + k * 20;
        writeln!(
            w,
            r#"<rect x="{x}" y="{ly}" width="20" height="12" fill="{}"/>"#,
            diverging_color(v)
        )
        .unwrap();
    }
    writeln!(
        w,
        r#"<text x="{}" y="{}" text-anchor="middle">-1</text>"#,
        LEFT + 10,
        ly + 26
    )
    .unwrap();
    writeln!(
        w,
        r#"<text x="{}" y="{}" text-anchor="middle">0</text>"#,
        LEFT + 110,
        ly + 26
    )
    .unwrap();
    writeln!(
        w,
        r#"<text x="{}" y="{}" text-anchor="middle">+1</text>"#,
        LEFT + 210,
        ly + 26
    )
    .unwrap();
    writeln!(
        w,
        r#"<rect x="{}" y="{ly}" width="20" height="12" fill="url(#undefined)"/><text x="{}" y="{}">undefined</text>"#,
        LEFT + 250,
        LEFT + 275,
        ly + 10
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

/// The heatmap values of a single report (features x 1) and its SVG.
pub fn correlation_figure_data(report: &CorrelationReport) -> (HeatmapRow, String) {
    let row = HeatmapRow::from_report(report);
    let svg = render_heatmap(std::slice::from_ref(&row));
    (row, svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_anchors() {
        assert_eq!(diverging_color(0.0), "#f7f7f7");
        assert_eq!(diverging_color(-0.0), "#f7f7f7");
        assert_eq!(diverging_color(1.0), "#b40426");
        assert_eq!(diverging_color(-1.0), "#3b4cc0");
        assert_eq!(diverging_color(3.0), diverging_color(1.0));
    }

    #[test]
    fn undefined_cells_are_hatched() {
        let row = HeatmapRow {
            label: "GLIDE".into(),
            values: vec![("NOUN".into(), Some(0.0)), ("SYM".into(), None)],
        };
        let svg = render_heatmap(&[row]);
        assert_eq!(
            svg.matches(r#"fill="url(#undefined)""#).count(),
            2,
            "cell plus legend swatch"
        );
        assert!(svg.contains(r##"fill="#f7f7f7" stroke"##));
    }
}
