use std::fmt::Write;

use super::compare::ComparisonMatrix;
use super::metrics::MetricKind;

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    out
}

/// Plain-text table: one row per method, median and [min, max] rank-1 (in
/// percent) for each direction, followed by the reference rows.
pub fn render_text(m: &ComparisonMatrix) -> String {
    let has_map = m.cells.iter().any(|c| c.map.is_some());
    let mut header = vec!["method".to_string()];
    for d in &m.directions {
        header.push(format!("{} rank1", d.name()));
        header.push("[min, max]".into());
        if has_map {
            header.push(format!("{} mAP", d.name()));
        }
    }
    let mut rows = vec![header];
    for method in &m.methods {
        let mut r = vec![method.clone()];
        for &d in &m.directions {
            let s = m.summary(method, d, MetricKind::Rank1);
            r.push(pct(s.median));
            r.push(format!("[{}, {}]", pct(s.min), pct(s.max)));
            if has_map {
                r.push(pct(m.summary(method, d, MetricKind::MeanAp).median));
            }
        }
        rows.push(r);
    }
    let mut out = format!(
        "scenario {} | {} seed(s) | median rank-1 (%)\n",
        m.scenario,
        m.seeds.len()
    );
    out.push_str(&aligned(&rows));
    if !m.references.is_empty() {
        let mut refs = vec![vec!["reference".to_string(), "rank1".into()]];
        if has_map {
            refs[0].push("mAP".into());
        }
        for r in &m.references {
            let mut row = vec![r.label.clone(), pct(r.rank1)];
            if let Some(v) = r.map {
                row.push(pct(v));
            }
            refs.push(row);
        }
        out.push('\n');
        out.push_str(&aligned(&refs));
    }
    out
}

/// One CSV line per cell plus one per reference row.
pub fn render_csv(m: &ComparisonMatrix) -> String {
    let mut out = String::from("scenario,method,direction,seed,rank1,map\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for c in &m.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{}",
            m.scenario,
            c.method,
            c.direction.name(),
            c.seed,
            c.rank1,
            opt(c.map)
        );
    }
    for r in &m.references {
        let _ = writeln!(
            out,
            "{},{},,,{:.6},{}",
            m.scenario,
            r.label,
            r.rank1,
            opt(r.map)
        );
    }
    out
}
