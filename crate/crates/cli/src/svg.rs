//! Minimal deterministic SVG charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

#[derive(Debug, Clone)]
pub struct Axis {
    pub label: String,
    pub min: f64,
    pub max: f64,
    pub log: bool,
}

impl Axis {
    pub fn linear(label: &str, min: f64, max: f64) -> Self {
        Self { label: label.into(), min, max, log: false }
    }

    pub fn log(label: &str, min: f64, max: f64) -> Self {
        Self { label: label.into(), min, max, log: true }
    }

    /// Linear axis spanning `values` with a little headroom.
    pub fn fit(label: &str, values: impl IntoIterator<Item = f64>) -> Self {
        let (lo, hi) = bounds(values);
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 1.0 };
        Self::linear(label, lo - pad, hi + pad)
    }

    /// Log axis covering `values` (non-positive values ignored), rounded out
    /// to whole decades.
    pub fn fit_log(label: &str, values: impl IntoIterator<Item = f64>) -> Self {
        let (lo, hi) = bounds(values.into_iter().filter(|v| *v > 0.0));
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (1.0, 10.0) };
        let lo = 10f64.powf(lo.log10().floor());
        let hi = 10f64.powf(hi.log10().ceil()).max(lo * 10.0);
        Self::log(label, lo, hi)
    }

    fn frac(&self, v: f64) -> f64 {
        if self.log {
            (v.max(self.min * 1e-3).log10() - self.min.log10()) / (self.max.log10() - self.min.log10())
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.min.log10().round() as i32, self.max.log10().round() as i32);
            return (a..=b).map(|e| 10f64.powi(e)).collect();
        }
        let span = self.max - self.min;
        if !(span > 0.0) {
            return vec![self.min];
        }
        let raw = span / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 8.0).unwrap_or(10.0 * mag);
        let first = (self.min / step).ceil() as i64;
        let last = (self.max / step).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn bounds(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    values.into_iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.0e}");
    }
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

#[derive(Debug, Clone, Copy)]
pub enum Style {
    Line,
    Markers,
    Dashed,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub style: Style,
}

pub struct Chart {
    pub title: String,
    pub x: Axis,
    pub y: Axis,
    pub series: Vec<Series>,
}

impl Chart {
    fn px(&self, x: f64) -> f64 {
        LEFT + self.x.frac(x) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - self.y.frac(y) * (H - TOP - BOTTOM)
    }

    pub fn render(&self) -> String {
        let mut s = header(&self.title);
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(s, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
        for t in self.x.ticks() {
            let x = self.px(t);
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, y1 + 5.0);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y1 + 20.0, fmt_num(t));
        }
        for t in self.y.ticks() {
            let y = self.py(t);
            let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#, x0 - 5.0);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 8.0, y + 4.0, fmt_num(t));
        }
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 15.0, esc(&self.x.label));
        let _ = writeln!(
            s,
            r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            (y0 + y1) / 2.0,
            esc(&self.y.label)
        );
        let _ = writeln!(s, r#"<clipPath id="plot"><rect x="{x0}" y="{y0}" width="{}" height="{}"/></clipPath>"#, x1 - x0, y1 - y0);
        let _ = writeln!(s, r#"<g clip-path="url(#plot)">"#);
        for series in &self.series {
            let pts: Vec<(f64, f64)> = series
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.y.log || *y > 0.0) && (!self.x.log || *x > 0.0))
                .map(|&(x, y)| (self.px(x), self.py(y)))
                .collect();
            match series.style {
                Style::Markers => {
                    for (x, y) in pts {
                        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{}"/>"#, series.color);
                    }
                }
                Style::Line | Style::Dashed => {
                    let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let dash = if matches!(series.style, Style::Dashed) { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
                        path.join(" "),
                        series.color
                    );
                }
            }
        }
        s.push_str("</g>\n");
        for (k, series) in self.series.iter().enumerate() {
            let y = y0 + 16.0 + 16.0 * k as f64;
            let _ = writeln!(s, r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{}"/>"#, x1 - 200.0, y - 9.0, series.color);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x1 - 185.0, esc(&series.label));
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Colour map of a row-major matrix with per-cell labels.
pub fn heatmap(title: &str, values: &[Vec<f64>], labels: &[Vec<String>]) -> String {
    let rows = values.len();
    let cols = values.first().map_or(0, Vec::len);
    let (lo, hi) = bounds(values.iter().flatten().copied());
    let cell = ((H - TOP - 20.0) / rows.max(1) as f64).min((W - 2.0 * LEFT) / cols.max(1) as f64);
    let x0 = (W - cell * cols as f64) / 2.0;
    let mut s = header(title);
    for (r, row) in values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 1.0 };
            let (x, y) = (x0 + c as f64 * cell, TOP + r as f64 * cell);
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="{}" stroke="white"/>"#,
                colormap(t)
            );
            if let Some(label) = labels.get(r).and_then(|l| l.get(c)) {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10" fill="{}">{}</text>"#,
                    x + cell / 2.0,
                    y + cell / 2.0 + 3.0,
                    if t > 0.6 { "black" } else { "white" },
                    esc(label)
                );
            }
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">min {} / max {}</text>"#,
        W / 2.0,
        H - 8.0,
        fmt_num(lo),
        fmt_num(hi)
    );
    s.push_str("</svg>\n");
    s
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        esc(title)
    )
}

/// Dark blue to yellow.
fn colormap(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let stops = [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let x = t * (stops.len() - 1) as f64;
    let i = (x.floor() as usize).min(stops.len() - 2);
    let f = x - i as f64;
    let mix = |a: f64, b: f64| (a + f * (b - a)).round() as u8;
    let (a, b) = (stops[i], stops[i + 1]);
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_ticks_are_round() {
        let a = Axis::linear("x", 0.0, 1.0);
        let labels: Vec<String> = a.ticks().into_iter().map(fmt_num).collect();
        assert_eq!(labels, ["0", "0.2", "0.4", "0.6", "0.8", "1"]);
        assert_eq!(Axis::fit_log("y", [3.0, 450.0]).ticks(), vec![1.0, 10.0, 100.0, 1000.0]);
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.25), "0.25");
        assert_eq!(fmt_num(1e6), "1e6");
        assert_eq!(fmt_num(12.0), "12");
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), "#440154");
        assert_eq!(colormap(1.0), "#fde725");
    }
}
