//! Standalone SVG charts. Output depends only on the inputs, so identical
//! data renders to identical bytes.

use std::fmt::Write;

use super::{RocCurve, ScoreSet};

const W: f64 = 520.0;
const H: f64 = 380.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Chart {
    x: (f64, f64),
    y: (f64, f64),
    body: String,
    legend: Vec<(String, &'static str)>,
}

fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn extent(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    widen((lo, hi))
}

impl Chart {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            x: widen(x),
            y: widen(y),
            body: String::new(),
            legend: Vec::new(),
        }
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, dashed: bool) {
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        let dash = if dashed { r#" stroke-dasharray="4 4""# } else { "" };
        writeln!(
            self.body,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            coords.join(" ")
        )
        .unwrap();
    }

    fn dot(&mut self, x: f64, y: f64, color: &str) {
        writeln!(
            self.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}" fill-opacity="0.6"/>"#,
            self.px(x),
            self.py(y)
        )
        .unwrap();
    }

    fn bar(&mut self, x0: f64, x1: f64, h: f64, color: &str) {
        let (l, r) = (self.px(x0), self.px(x1));
        let (t, b) = (self.py(h), self.py(self.y.0));
        writeln!(
            self.body,
            r#"<rect x="{l:.2}" y="{t:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.45"/>"#,
            r - l,
            b - t
        )
        .unwrap();
    }

    fn render(&self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        )
        .unwrap();
        writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        writeln!(
            s,
            r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y1 - y0
        )
        .unwrap();
        for i in 0..=TICKS {
            let f = i as f64 / TICKS as f64;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let (tx, ty) = (self.px(xv), self.py(yv));
            writeln!(s, r#"<line x1="{tx:.2}" y1="{y1}" x2="{tx:.2}" y2="{}" stroke="black"/>"#, y1 + 4.0).unwrap();
            writeln!(s, r#"<text x="{tx:.2}" y="{}" text-anchor="middle">{}</text>"#, y1 + 16.0, tick(xv)).unwrap();
            writeln!(s, r#"<line x1="{}" y1="{ty:.2}" x2="{x0}" y2="{ty:.2}" stroke="black"/>"#, x0 - 4.0).unwrap();
            writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 6.0, ty + 4.0, tick(yv)).unwrap();
        }
        writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, escape(title)).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 12.0, escape(xlabel)).unwrap();
        writeln!(
            s,
            r#"<text x="14" y="{0}" text-anchor="middle" transform="rotate(-90 14 {0})">{1}</text>"#,
            (y0 + y1) / 2.0,
            escape(ylabel)
        )
        .unwrap();
        s.push_str(&self.body);
        for (i, (name, color)) in self.legend.iter().enumerate() {
            let ly = y0 + 14.0 + 16.0 * i as f64;
            writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, x1 - 120.0, ly - 9.0).unwrap();
            writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, x1 - 105.0, escape(name)).unwrap();
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// ROC curves (TAR against FAR) with the chance diagonal.
pub fn roc_svg(curves: &[(&str, &RocCurve)]) -> String {
    let mut c = Chart::new((0.0, 1.0), (0.0, 1.0));
    c.polyline(&[(0.0, 0.0), (1.0, 1.0)], "#999999", true);
    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.far, p.tar)).collect();
        c.polyline(&pts, color, false);
        c.legend.push((name.to_string(), color));
    }
    c.render("ROC", "FAR", "TAR")
}

/// Overlaid histograms of the positive and negative scores.
pub fn histogram_svg(set: &ScoreSet, bins: usize, names: (&str, &str)) -> String {
    let bins = bins.max(1);
    let (lo, hi) = extent(set.scores.iter().copied());
    let width = (hi - lo) / bins as f64;
    let count = |vals: &[f64]| {
        let mut h = vec![0usize; bins];
        for &v in vals.iter().filter(|v| v.is_finite()) {
            h[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
        h
    };
    let groups = [(names.0, count(&set.positives())), (names.1, count(&set.negatives()))];
    let top = groups.iter().flat_map(|(_, h)| h.iter().copied()).max().unwrap_or(0).max(1);
    let mut c = Chart::new((lo, hi), (0.0, top as f64));
    for (i, (name, h)) in groups.iter().enumerate() {
        let color = PALETTE[i];
        for (b, &n) in h.iter().enumerate() {
            if n > 0 {
                c.bar(lo + b as f64 * width, lo + (b + 1) as f64 * width, n as f64, color);
            }
        }
        c.legend.push((name.to_string(), color));
    }
    c.render("Logit score distribution", "score", "count")
}

/// Fade-in weights against training step.
pub fn alpha_svg(steps: &[(f64, f64, f64)]) -> String {
    let x = extent(steps.iter().map(|s| s.0));
    let y = extent(steps.iter().flat_map(|s| [s.1, s.2]).chain([0.0, 1.0]));
    let mut c = Chart::new(x, y);
    let alpha: Vec<(f64, f64)> = steps.iter().map(|s| (s.0, s.1)).collect();
    let beta: Vec<(f64, f64)> = steps.iter().map(|s| (s.0, s.2)).collect();
    c.polyline(&[(x.0, 0.5), (x.1, 0.5)], "#999999", true);
    c.polyline(&alpha, PALETTE[0], false);
    c.polyline(&beta, PALETTE[1], false);
    c.legend.push(("alpha".into(), PALETTE[0]));
    c.legend.push(("beta".into(), PALETTE[1]));
    c.render("Fade-in weights", "step", "weight")
}

/// Scatter of 2-D points coloured by class.
pub fn pca_svg(points: &[Vec<f64>], labels: &[usize], class_names: &[String]) -> String {
    let x = extent(points.iter().map(|p| p[0]));
    let y = extent(points.iter().map(|p| p.get(1).copied().unwrap_or(0.0)));
    let mut c = Chart::new(x, y);
    for (p, &l) in points.iter().zip(labels) {
        c.dot(p[0], p.get(1).copied().unwrap_or(0.0), PALETTE[l % PALETTE.len()]);
    }
    for (i, name) in class_names.iter().enumerate() {
        c.legend.push((name.clone(), PALETTE[i % PALETTE.len()]));
    }
    c.render("PCA of logits", "PC1", "PC2")
}
