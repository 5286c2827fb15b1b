use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, ScalePoint, ScalingFit, SweepRow};
use crate::topology::TopologyKind;

/// Aggregate sweep output: the averaged points and one fit per kind.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub points: Vec<ScalePoint>,
    /// Fitted parameters, or the reason a kind could not be fitted.
    pub fits: BTreeMap<String, Result<ScalingFit, String>>,
}

impl SweepSummary {
    pub fn new(points: Vec<ScalePoint>) -> Self {
        let mut fits = BTreeMap::new();
        let mut kinds: Vec<TopologyKind> = points.iter().map(|p| p.kind).collect();
        kinds.dedup();
        for kind in kinds {
            let valid: Vec<ScalePoint> = points.iter().filter(|p| p.kind == kind && p.valid).cloned().collect();
            fits.insert(kind.as_str().to_string(), super::fit_scaling_curve(&valid).map_err(|e| e.to_string()));
        }
        Self { points, fits }
    }
}

/// Per-replicate CSV: `kind,n,replicate,quality,tokens_total,wall_seconds`.
/// Failed replicates leave `quality` empty.
pub fn rows_to_csv(rows: &[SweepRow]) -> Result<String, AnalysisError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "n", "replicate", "quality", "tokens_total", "wall_seconds"])?;
    for r in rows {
        w.write_record([
            r.kind.as_str().to_string(),
            r.n.to_string(),
            r.replicate.to_string(),
            r.quality.map(|q| q.to_string()).unwrap_or_default(),
            r.tokens_total.to_string(),
            format!("{:.6}", r.wall_seconds),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| AnalysisError::Input(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| AnalysisError::Input(e.to_string()))
}

#[derive(Deserialize)]
struct PointRecord {
    #[serde(default)]
    kind: Option<String>,
    n: f64,
    quality: Option<f64>,
}

/// Reads `(n, quality)` pairs from a CSV with at least the columns `n` and
/// `quality`, such as a sweep CSV. Rows with an empty quality are skipped.
pub fn read_points_csv(reader: impl Read) -> Result<Vec<(Option<String>, f64, f64)>, AnalysisError> {
    let mut out = Vec::new();
    for record in csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader).deserialize() {
        let r: PointRecord = record?;
        if let Some(q) = r.quality {
            out.push((r.kind, r.n, q));
        }
    }
    Ok(out)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Quality against log2 scale, one colour per kind, fitted curves overlaid.
pub fn render_svg(summary: &SweepSummary) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let valid: Vec<&ScalePoint> = summary.points.iter().filter(|p| p.valid).collect();
    let max_log = valid.iter().map(|p| (p.node_count as f64).log2()).fold(1.0, f64::max);
    let (mut lo, mut hi) = valid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.quality), b.max(p.quality)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let x = |lx: f64| pad + lx / max_log * (w - 2.0 * pad);
    let y = |q: f64| h - pad - (q - lo) / (hi - lo) * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="#333"/>"##,
        h - pad,
        w - pad
    );
    for k in 0..=max_log.ceil() as usize {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, x(k as f64), h - pad + 16.0, 1u64 << k);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">nodes (log scale)</text>"#, w / 2.0, h - 10.0);
    let _ = writeln!(s, r#"<text x="{pad}" y="{}" font-size="11" text-anchor="end">{lo:.3}</text>"#, h - pad);
    let _ = writeln!(s, r#"<text x="{pad}" y="{pad}" font-size="11" text-anchor="end">{hi:.3}</text>"#);

    for (i, (name, fit)) in summary.fits.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        for p in valid.iter().filter(|p| p.kind.as_str() == name) {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{colour}"/>"#,
                x((p.node_count as f64).log2()),
                y(p.quality)
            );
        }
        if let Ok(fit) = fit {
            let path: Vec<String> = (0..=100)
                .map(|k| {
                    let lx = max_log * k as f64 / 100.0;
                    format!("{:.2},{:.2}", x(lx), y(fit.predict(lx.exp2())).clamp(0.0, h))
                })
                .collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{colour}"/>"#, path.join(" "));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" fill="{colour}">{name}</text>"#, w - pad - 60.0, pad + 16.0 * i as f64);
    }
    s.push_str("</svg>\n");
    s
}
