//! Minimal deterministic SVG line and scatter plots.

use std::fmt::Write;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 280.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 14.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 44.0;
const LEGEND_ROW: f64 = 16.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mark {
    Line,
    Dots,
    Crosses,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub mark: Mark,
    pub points: Vec<(f64, f64)>,
    /// Shaded `(x, lower, upper)` band drawn beneath the series.
    pub band: Option<Vec<(f64, f64, f64)>>,
}

impl Series {
    pub fn new(label: impl Into<String>, color: &'static str, mark: Mark, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), color, mark, points, band: None }
    }

    pub fn with_band(mut self, band: Vec<(f64, f64, f64)>) -> Self {
        self.band = Some(band);
        self
    }
}

#[derive(Clone, Debug, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

impl Panel {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), ..Self::default() }
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn push(&mut self, s: Series) {
        self.series.push(s);
    }
}

/// Values below this fraction of the largest one are dropped from log-scale panels.
const LOG_FLOOR_REL: f64 = 1e-14;

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if log {
            (lo, hi) = (lo.floor(), hi.ceil());
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
            (lo, hi) = (lo - pad, hi + pad);
        }
        Self { lo, hi, log }
    }

    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let step = ((self.hi - self.lo) / 6.0).ceil().max(1.0);
            let mut out = Vec::new();
            let mut e = self.lo;
            while e <= self.hi + 1e-9 {
                out.push((10f64.powf(e), format!("1e{}", e as i64)));
                e += step;
            }
            return out;
        }
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last).map(|i| i as f64 * step).map(|v| (v, label(v, step))).collect()
    }
}

fn label(v: f64, step: f64) -> String {
    let digits = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
    format!("{v:.digits$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders panels side by side into one SVG document.
pub fn render(panels: &[Panel]) -> String {
    let legend_rows = panels.iter().map(|p| p.series.len()).max().unwrap_or(0);
    let width = PANEL_W * panels.len().max(1) as f64;
    let height = PANEL_H + LEGEND_ROW * legend_rows as f64 + 8.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
        w = fmt(width),
        h = fmt(height)
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, panel) in panels.iter().enumerate() {
        draw_panel(&mut out, panel, i as f64 * PANEL_W);
    }
    out.push_str("</svg>\n");
    out
}

fn draw_panel(out: &mut String, panel: &Panel, x0: f64) {
    let keep = |y: f64, floor: f64| y.is_finite() && (!panel.log_y || y > floor);
    let y_max = panel
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1).chain(s.band.iter().flatten().map(|b| b.2)))
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = if panel.log_y { (y_max * LOG_FLOOR_REL).max(f64::MIN_POSITIVE) } else { f64::NEG_INFINITY };
    let xs = panel.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let ys = panel
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1).chain(s.band.iter().flatten().flat_map(|b| [b.1, b.2])))
        .filter(|&y| keep(y, floor));
    let (xa, ya) = (Axis::fit(xs, false), Axis::fit(ys, panel.log_y));
    let (left, top) = (x0 + MARGIN_L, MARGIN_T);
    let (w, h) = (PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
    let px = |x: f64| left + xa.unit(x) * w;
    let py = |y: f64| top + (1.0 - ya.unit(y)) * h;

    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="12">{}</text>"#,
        fmt(left + w / 2.0),
        escape(&panel.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        fmt(left),
        fmt(top),
        fmt(w),
        fmt(h)
    );
    for (v, text) in xa.ticks() {
        let x = px(v);
        let _ = writeln!(out, r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#444"/>"##, fmt(x), fmt(top + h), fmt(top + h + 4.0));
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, fmt(x), fmt(top + h + 16.0), text);
    }
    for (v, text) in ya.ticks() {
        let y = py(v);
        let _ = writeln!(out, r##"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="#444"/>"##, fmt(left - 4.0), fmt(y), fmt(left));
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, fmt(left - 6.0), fmt(y + 4.0), text);
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        fmt(left + w / 2.0),
        fmt(top + h + 34.0),
        escape(&panel.x_label)
    );
    let (lx, ly) = (x0 + 14.0, top + h / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{0}" y="{1}" text-anchor="middle" transform="rotate(-90 {0} {1})">{2}</text>"#,
        fmt(lx),
        fmt(ly),
        escape(&panel.y_label)
    );

    for s in &panel.series {
        if let Some(band) = &s.band {
            let upper = band.iter().filter(|b| keep(b.2, floor)).map(|b| format!("{},{}", fmt(px(b.0)), fmt(py(b.2))));
            let lower =
                band.iter().rev().filter(|b| keep(b.1, floor)).map(|b| format!("{},{}", fmt(px(b.0)), fmt(py(b.1))));
            let pts: Vec<String> = upper.chain(lower).collect();
            if !pts.is_empty() {
                let _ = writeln!(out, r#"<polygon points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"#, pts.join(" "), s.color);
            }
        }
        let pts: Vec<(f64, f64)> = s.points.iter().filter(|p| keep(p.1, floor)).map(|&(x, y)| (px(x), py(y))).collect();
        match s.mark {
            Mark::Line => {
                let path: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", fmt(*x), fmt(*y))).collect();
                let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, path.join(" "), s.color);
            }
            Mark::Dots => {
                for (x, y) in &pts {
                    let _ = writeln!(out, r#"<circle cx="{}" cy="{}" r="2" fill="{}"/>"#, fmt(*x), fmt(*y), s.color);
                }
            }
            Mark::Crosses => {
                for (x, y) in &pts {
                    let _ = writeln!(
                        out,
                        r#"<path d="M{} {}l6 6m0 -6l-6 6" stroke="{}" fill="none"/>"#,
                        fmt(x - 3.0),
                        fmt(y - 3.0),
                        s.color
                    );
                }
            }
        }
    }

    for (i, s) in panel.series.iter().enumerate() {
        let y = PANEL_H + LEGEND_ROW * i as f64 + 4.0;
        let _ = writeln!(out, r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/>"#, fmt(left), fmt(y), s.color);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, fmt(left + 16.0), fmt(y + 9.0), escape(&s.label));
    }
}
