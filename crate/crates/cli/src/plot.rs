//! Per-epoch maximum-flow accuracy (solid) and mean absolute flow error
//! (dashed) as a standalone SVG.

use std::fmt::Write as _;

use neuralff::trainer::History;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

pub struct Series {
    pub epochs: Vec<usize>,
    pub accuracy: Vec<f64>,
    pub flow_error: Vec<f64>,
}

/// Validation flow curves in epoch order; `None` if the history has none.
pub fn flow_series(h: &History) -> Option<Series> {
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    for r in h.rows.iter().filter(|r| r.task == "maxflow" && r.split == "val" && r.metric == "accuracy") {
        let err = h.get(r.epoch, "maxflow", "val", "flow_error").unwrap_or(0.0);
        rows.push((r.epoch, r.value, err));
    }
    if rows.is_empty() {
        return None;
    }
    rows.sort_by_key(|r| r.0);
    Some(Series {
        epochs: rows.iter().map(|r| r.0).collect(),
        accuracy: rows.iter().map(|r| r.1).collect(),
        flow_error: rows.iter().map(|r| r.2).collect(),
    })
}

fn polyline(points: &[(f64, f64)], colour: &str, dashed: bool) -> String {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
    let dash = if dashed { r#" stroke-dasharray="6,4""# } else { "" };
    format!(r#"<polyline fill="none" stroke="{colour}" stroke-width="2"{dash} points="{}"/>"#, pts.join(" "))
}

pub fn render_svg(title: &str, s: &Series) -> String {
    let max_epoch = *s.epochs.last().expect("non-empty series") as f64;
    let min_epoch = s.epochs[0] as f64;
    let span = (max_epoch - min_epoch).max(1.0);
    let max_err = s.flow_error.iter().copied().fold(0.0, f64::max).max(1e-9);
    let x = |e: usize| PAD + (e as f64 - min_epoch) / span * (W - 2.0 * PAD);
    let y = |v: f64| H - PAD - v * (H - 2.0 * PAD);
    let acc: Vec<_> = s.epochs.iter().zip(&s.accuracy).map(|(&e, &a)| (x(e), y(a))).collect();
    let err: Vec<_> = s.epochs.iter().zip(&s.flow_error).map(|(&e, &v)| (x(e), y(v / max_err))).collect();
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        out,
        r#"<path d="M{PAD},{PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{tick:.2}</text>"#, PAD - 6.0, y(tick) + 4.0);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}">{:.2}</text>"#,
            W - PAD + 6.0,
            y(tick) + 4.0,
            tick * max_err
        );
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(out, r#"<text x="{PAD}" y="{}">{}</text>"#, H - PAD + 16.0, s.epochs[0]);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, W - PAD, H - PAD + 16.0, max_epoch);
    let _ = writeln!(out, "{}", polyline(&acc, "#1f77b4", false));
    let _ = writeln!(out, "{}", polyline(&err, "#d62728", true));
    let _ = writeln!(out, r##"<text x="{}" y="40" fill="#1f77b4">accuracy (solid)</text>"##, PAD + 10.0);
    let _ = writeln!(out, r##"<text x="{}" y="56" fill="#d62728">flow error (dashed)</text>"##, PAD + 10.0);
    out.push_str("</svg>\n");
    out
}
