use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::report::ExplanationReport;
use crate::error::{contract_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stacking {
    Single,
    Horizontal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub feature: String,
    pub value: f64,
    pub attribution: f64,
    pub start: f64,
    pub end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceSample {
    pub sample_id: usize,
    pub base_value: f64,
    pub output: f64,
    /// Red segments, largest first, stacked upward from the base value.
    pub positive: Vec<Segment>,
    /// Blue segments, largest first, stacked downward from the top of the red stack.
    pub negative: Vec<Segment>,
    pub efficiency_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForcePlot {
    pub stacking: Stacking,
    pub target: String,
    pub feature_space: Vec<String>,
    pub samples: Vec<ForceSample>,
}

fn segments(r: &ExplanationReport) -> ForceSample {
    let mut pos: Vec<_> = r.attributions.iter().filter(|a| a.attribution > 0.0).collect();
    let mut neg: Vec<_> = r.attributions.iter().filter(|a| a.attribution < 0.0).collect();
    pos.sort_by(|a, b| b.attribution.total_cmp(&a.attribution));
    neg.sort_by(|a, b| a.attribution.total_cmp(&b.attribution));
    let mut at = r.base_value;
    let mut stack = |list: Vec<&super::report::Attribution>| -> Vec<Segment> {
        list.into_iter()
            .map(|a| {
                let start = at;
                at += a.attribution;
                Segment { feature: a.feature.clone(), value: a.value, attribution: a.attribution, start, end: at }
            })
            .collect()
    };
    let positive = stack(pos);
    let negative = stack(neg);
    ForceSample {
        sample_id: r.sample_id,
        base_value: r.base_value,
        output: r.output,
        positive,
        negative,
        efficiency_gap: r.efficiency_gap(),
    }
}

/// Force-plot document for one report (`Single`) or a stack of reports
/// (`Horizontal`). All reports must share a feature space.
pub fn force_plot_data(reports: &[ExplanationReport], stacking: Stacking) -> Result<ForcePlot> {
    let first = reports.first().ok_or_else(|| contract_err!("force plot needs at least one report"))?;
    if stacking == Stacking::Single && reports.len() != 1 {
        return Err(contract_err!("single stacking takes one report, got {}", reports.len()));
    }
    if let Some(r) = reports.iter().find(|r| r.feature_space != first.feature_space || r.target != first.target) {
        return Err(contract_err!("report for sample {} uses a different feature space or target", r.sample_id));
    }
    Ok(ForcePlot {
        stacking,
        target: first.target.clone(),
        feature_space: first.feature_space.clone(),
        samples: reports.iter().map(segments).collect(),
    })
}

const RED: &str = "#ff0051";
const BLUE: &str = "#008bfb";

/// Self-contained SVG rendering of a force plot.
pub fn render_svg(plot: &ForcePlot) -> String {
    let (w, h) = (960.0, 360.0);
    let (left, right, top, bottom) = (60.0, 20.0, 30.0, 40.0);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &plot.samples {
        for v in s.positive.iter().chain(&s.negative).flat_map(|g| [g.start, g.end]).chain([s.base_value, s.output]) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(svg, r#"<text x="{left}" y="18">{}</text>"#, escape(&plot.target));
    match plot.stacking {
        Stacking::Single => {
            let s = &plot.samples[0];
            let x = |v: f64| left + (v - lo) / (hi - lo) * (w - left - right);
            let y = h / 2.0 - 15.0;
            for (seg, colour) in s.positive.iter().map(|g| (g, RED)).chain(s.negative.iter().map(|g| (g, BLUE))) {
                let (a, b) = (x(seg.start.min(seg.end)), x(seg.start.max(seg.end)));
                let _ = writeln!(
                    svg,
                    r#"<rect x="{a:.2}" y="{y:.2}" width="{:.2}" height="30" fill="{colour}" stroke="white"><title>{} = {:.4} ({:+.4})</title></rect>"#,
                    (b - a).max(0.5),
                    escape(&seg.feature),
                    seg.value,
                    seg.attribution
                );
            }
            for (label, v, dy) in [("base value", s.base_value, -12.0), ("f(x)", s.output, 50.0)] {
                let _ = writeln!(svg, r#"<line x1="{0:.2}" x2="{0:.2}" y1="{1:.2}" y2="{2:.2}" stroke="black"/>"#, x(v), y - 6.0, y + 36.0);
                let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{label} {v:.4}</text>"#, x(v), y + dy);
            }
        }
        Stacking::Horizontal => {
            let n = plot.samples.len().max(1) as f64;
            let col = (w - left - right) / n;
            let y = |v: f64| h - bottom - (v - lo) / (hi - lo) * (h - top - bottom);
            for (i, s) in plot.samples.iter().enumerate() {
                let x0 = left + i as f64 * col;
                for (seg, colour) in s.positive.iter().map(|g| (g, RED)).chain(s.negative.iter().map(|g| (g, BLUE))) {
                    let (a, b) = (y(seg.start.max(seg.end)), y(seg.start.min(seg.end)));
                    let _ = writeln!(svg, r#"<rect x="{x0:.2}" y="{a:.2}" width="{:.2}" height="{:.2}" fill="{colour}"/>"#, col.max(0.5), (b - a).max(0.1));
                }
            }
            let base = plot.samples.first().map_or(0.0, |s| s.base_value);
            let _ = writeln!(svg, r#"<line x1="{left}" x2="{0:.2}" y1="{1:.2}" y2="{1:.2}" stroke="black" stroke-dasharray="4 3"/>"#, w - right, y(base));
            let _ = writeln!(svg, r#"<text x="4" y="{:.2}">base {base:.3}</text>"#, y(base) + 4.0);
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
