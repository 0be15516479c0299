use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalReport;
use crate::error::{Error, Result};
use crate::qa_classes::QaClass;

/// One entry of a CoQA prediction file, as read by the official evaluator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub turn_id: u32,
    pub answer: String,
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let json = serde_json::to_string_pretty(records)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::Parse {
        record: path.display().to_string(),
        message: e.to_string(),
    })
}

fn columns() -> Vec<&'static str> {
    std::iter::once("overall").chain(QaClass::ALL.iter().map(|c| c.column())).collect()
}

fn row_values(report: &EvalReport) -> Vec<Option<f64>> {
    std::iter::once(Some(report.overall_f1))
        .chain(QaClass::ALL.iter().map(|c| report.class(*c).and_then(|s| s.f1)))
        .collect()
}

fn size_row(report: &EvalReport) -> Vec<String> {
    std::iter::once(report.n_examples.to_string())
        .chain(
            QaClass::ALL
                .iter()
                .map(|c| report.class(*c).map_or("-".to_string(), |s| s.size.to_string())),
        )
        .collect()
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |v| format!("{v:.1}"))
}

fn render_rows(header: &str, rows: &[(String, Vec<String>)]) -> String {
    let cols = columns();
    let label_width = rows.iter().map(|(l, _)| l.len()).chain([header.len()]).max().unwrap_or(0);
    let widths: Vec<usize> = cols
        .iter()
        .enumerate()
        .map(|(i, c)| rows.iter().map(|(_, v)| v[i].len()).chain([c.len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{header:<label_width$}");
    for (c, w) in cols.iter().zip(&widths) {
        let _ = write!(out, "  {c:>w$}");
    }
    out.push('\n');
    for (label, values) in rows {
        let _ = write!(out, "{label:<label_width$}");
        for (v, w) in values.iter().zip(&widths) {
            let _ = write!(out, "  {v:>w$}");
        }
        out.push('\n');
    }
    out
}

/// Aligned text table in the column order overall, num, 1-5, ..., surp,
/// with a leading class-size row taken from the first report.
pub fn render_table(rows: &[(String, EvalReport)]) -> String {
    let mut lines = Vec::new();
    if let Some((_, first)) = rows.first() {
        lines.push(("size".to_string(), size_row(first)));
    }
    for (label, report) in rows {
        lines.push((label.clone(), row_values(report).into_iter().map(fmt_value).collect()));
    }
    render_rows("model", &lines)
}

/// Base vs enhanced rows plus a signed delta row.
pub fn render_comparison(base: (&str, &EvalReport), enhanced: (&str, &EvalReport)) -> String {
    let b = row_values(base.1);
    let e = row_values(enhanced.1);
    let delta: Vec<String> = b
        .iter()
        .zip(&e)
        .map(|(b, e)| match (b, e) {
            (Some(b), Some(e)) => format!("{:+.1}", e - b),
            _ => "-".to_string(),
        })
        .collect();
    let lines = vec![
        ("size".to_string(), size_row(base.1)),
        (base.0.to_string(), b.into_iter().map(fmt_value).collect()),
        (enhanced.0.to_string(), e.into_iter().map(fmt_value).collect()),
        ("delta".to_string(), delta),
    ];
    render_rows("model", &lines)
}

/// SVG heat map: one row per report, cells shaded by where the score falls
/// between that row's minimum and maximum (darker is higher).
pub fn render_heatmap_svg(rows: &[(String, EvalReport)]) -> String {
    const CELL_W: usize = 56;
    const CELL_H: usize = 24;
    const LABEL_W: usize = 120;
    let cols = columns();
    let width = LABEL_W + CELL_W * cols.len();
    let height = CELL_H * (rows.len() + 1);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"monospace\" font-size=\"11\">\n"
    );
    for (i, c) in cols.iter().enumerate() {
        let x = LABEL_W + i * CELL_W + CELL_W / 2;
        let _ = writeln!(svg, "<text x=\"{x}\" y=\"16\" text-anchor=\"middle\">{c}</text>");
    }
    for (r, (label, report)) in rows.iter().enumerate() {
        let y = CELL_H * (r + 1);
        let _ = writeln!(svg, "<text x=\"4\" y=\"{}\">{}</text>", y + 16, escape(label));
        let values = row_values(report);
        let present: Vec<f64> = values.iter().skip(1).flatten().copied().collect();
        let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (i, v) in values.iter().enumerate() {
            let x = LABEL_W + i * CELL_W;
            let shade = match v {
                Some(v) if i > 0 && hi > lo => (v - lo) / (hi - lo),
                Some(_) if i > 0 => 1.0,
                _ => 0.0,
            };
            let level = (255.0 - 175.0 * shade).round() as u8;
            let ink = if level < 140 { "#ffffff" } else { "#000000" };
            let _ = writeln!(
                svg,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL_W}\" height=\"{CELL_H}\" fill=\"rgb({level},{level},{level})\" stroke=\"#ccc\"/>"
            );
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{ink}\">{}</text>",
                x + CELL_W / 2,
                y + 16,
                fmt_value(*v)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::metrics::{ClassScore, EvalMode};

    fn report(overall: f64, neg: f64) -> EvalReport {
        let mut per_class = BTreeMap::new();
        for c in QaClass::ALL {
            per_class.insert(
                c.column().to_string(),
                ClassScore {
                    size: 2,
                    f1: Some(if c == QaClass::Neg { neg } else { overall }),
                },
            );
        }
        EvalReport {
            mode: EvalMode::SimpleMax,
            overall_f1: overall,
            n_examples: 4,
            per_class,
        }
    }

    #[test]
    fn table_has_class_columns_in_order() {
        let t = render_table(&[("base".into(), report(76.9, 68.9))]);
        let header: Vec<&str> = t.lines().next().unwrap().split_whitespace().collect();
        assert_eq!(
            header,
            [
                "model", "overall", "num", "1-5", "neg", "yes", "no", "sent", "ant", "ord", "srl-", "srl+", "hum",
                "loc", "ent", "surp"
            ]
        );
        assert!(t.lines().nth(1).unwrap().starts_with("size"));
        assert!(t.contains("68.9"));
    }

    #[test]
    fn comparison_has_delta_row() {
        let t = render_comparison(("base#", &report(70.0, 60.0)), ("negation#", &report(71.5, 65.0)));
        let delta = t.lines().last().unwrap();
        assert!(delta.starts_with("delta"));
        assert!(delta.contains("+1.5") && delta.contains("+5.0"));
    }

    #[test]
    fn heatmap_is_svg() {
        let svg = render_heatmap_svg(&[("a<b".into(), report(70.0, 60.0))]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
    }
}
