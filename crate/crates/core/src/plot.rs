//! Austen plot document and its reference SVG rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bootstrap::Band;
use crate::calibration::CovariateInfluence;
use crate::error::{Error, Result};
use crate::sensitivity::BiasCurve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Labels {
    pub title: String,
    pub x_axis: String,
    pub y_axis: String,
    pub annotation: String,
}

impl Labels {
    pub fn for_curve(curve: &BiasCurve) -> Self {
        Self {
            title: "Austen plot".into(),
            x_axis: "Influence on treatment (alpha)".into(),
            y_axis: "Influence on outcome (partial R²)".into(),
            annotation: format!("{} bias = {}", curve.estimand, format_number(curve.target_bias)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Style {
    pub width: f64,
    pub height: f64,
    pub font_size: f64,
    pub curve_color: String,
    pub band_color: String,
    pub infeasible_color: String,
    pub dot_radius: f64,
    pub dot_colors: Vec<String>,
}

impl Default for Style {
    fn default() -> Self {
        Self {
            width: 640.0,
            height: 480.0,
            font_size: 12.0,
            curve_color: "#000000".into(),
            band_color: "#bdbdbd".into(),
            infeasible_color: "#f2dede".into(),
            dot_radius: 5.0,
            dot_colors: ["#d62728", "#ff7f0e", "#2ca02c", "#1f77b4", "#9467bd", "#8c564b"]
                .map(String::from)
                .to_vec(),
        }
    }
}

/// Everything needed to draw one Austen plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotData {
    pub schema_version: u32,
    pub curve: BiasCurve,
    pub dots: Vec<CovariateInfluence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<Band>,
    pub labels: Labels,
    #[serde(default)]
    pub style: Style,
    /// True when no alpha on the grid reaches the target with R² <= 1.
    pub feasible_region_empty: bool,
}

impl PlotData {
    pub fn validate(&self) -> Result<()> {
        if self.curve.points.is_empty() {
            return Err(Error::InvalidInput("empty curve".into()));
        }
        if let Some(band) = &self.band {
            let aligned = band.alpha.len() == self.curve.points.len()
                && band.r2_lo.len() == band.alpha.len()
                && band.r2_hi.len() == band.alpha.len()
                && band.alpha.iter().zip(self.curve.alphas()).all(|(a, b)| *a == b);
            if !aligned {
                return Err(Error::InvalidInput(
                    "band is not aligned with the curve's alpha grid".into(),
                ));
            }
            if band.r2_lo.iter().zip(&band.r2_hi).any(|(l, h)| l > h) {
                return Err(Error::InvalidInput("band has r2_lo > r2_hi".into()));
            }
        }
        if !(self.style.width > 0.0 && self.style.height > 0.0 && self.style.font_size > 0.0) {
            return Err(Error::InvalidInput("plot dimensions must be positive".into()));
        }
        if self.style.dot_colors.is_empty() {
            return Err(Error::InvalidInput("style needs at least one dot color".into()));
        }
        Ok(())
    }
}

pub fn build_plot_data(
    curve: BiasCurve,
    dots: Vec<CovariateInfluence>,
    band: Option<Band>,
    labels: Labels,
) -> Result<PlotData> {
    let feasible_region_empty = !curve.has_feasible_point();
    let data = PlotData {
        schema_version: crate::io::SCHEMA_VERSION,
        curve,
        dots,
        band,
        labels,
        style: Style::default(),
        feasible_region_empty,
    };
    data.validate()?;
    Ok(data)
}

const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;

/// Map between data coordinates on the unit square and SVG pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisTransform {
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
}

impl AxisTransform {
    pub fn for_style(style: &Style) -> Self {
        Self {
            left: MARGIN_LEFT,
            right: style.width - MARGIN_RIGHT,
            top: MARGIN_TOP,
            bottom: style.height - MARGIN_BOTTOM,
        }
    }

    pub fn to_px(&self, alpha: f64, r2: f64) -> (f64, f64) {
        (
            self.left + alpha * (self.right - self.left),
            self.bottom - r2 * (self.bottom - self.top),
        )
    }

    pub fn from_px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.left) / (self.right - self.left),
            (self.bottom - y) / (self.bottom - self.top),
        )
    }
}

fn format_number(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn px(v: f64) -> String {
    format!("{v:.6}")
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn overlaps(&self, o: &Rect) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }
}

/// Where a dot's label ended up.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPlacement {
    /// Clockwise slot index starting east: 0 = E, 1 = SE, 2 = S, ... 7 = NE.
    pub slot: usize,
    /// How many rings outward the label had to move.
    pub ring: usize,
    pub x: f64,
    pub y: f64,
    pub anchor: &'static str,
}

const SLOTS: usize = 8;
const RINGS: usize = 4;

fn dot_position(t: &AxisTransform, dot: &CovariateInfluence) -> ((f64, f64), bool) {
    let a = dot.alpha_hat.clamp(0.0, 1.0);
    let r = dot.r2_hat.clamp(0.0, 1.0);
    let out_of_range = a != dot.alpha_hat || r != dot.r2_hat;
    (t.to_px(a, r), out_of_range)
}

fn label_candidate(cx: f64, cy: f64, slot: usize, ring: usize, text: &str, style: &Style) -> (LabelPlacement, Rect) {
    let fs = style.font_size;
    let radius = style.dot_radius + 4.0 + ring as f64 * fs;
    let angle = slot as f64 * std::f64::consts::FRAC_PI_4;
    let (dx, dy) = (angle.cos(), angle.sin());
    let (ax, ay) = (cx + radius * dx, cy + radius * dy);
    let width = 0.6 * fs * text.chars().count() as f64;
    let (anchor, x0) = if dx > 0.3 {
        ("start", ax)
    } else if dx < -0.3 {
        ("end", ax - width)
    } else {
        ("middle", ax - width / 2.0)
    };
    let y0 = if dy > 0.3 {
        ay
    } else if dy < -0.3 {
        ay - fs
    } else {
        ay - fs / 2.0
    };
    let rect = Rect {
        x0,
        y0,
        x1: x0 + width,
        y1: y0 + fs,
    };
    // baseline sits ~0.8 em below the box top
    let placement = LabelPlacement {
        slot,
        ring,
        x: ax,
        y: y0 + 0.8 * fs,
        anchor,
    };
    (placement, rect)
}

/// Label positions for every dot. Each label takes the first slot, going
/// clockwise from east and then outward ring by ring, whose box avoids
/// earlier labels and other dots.
pub fn place_labels(data: &PlotData) -> Vec<LabelPlacement> {
    let t = AxisTransform::for_style(&data.style);
    let style = &data.style;
    let centers: Vec<(f64, f64)> = data.dots.iter().map(|d| dot_position(&t, d).0).collect();
    let mut taken: Vec<Rect> = Vec::new();
    let mut out = Vec::with_capacity(data.dots.len());
    for (k, dot) in data.dots.iter().enumerate() {
        let (cx, cy) = centers[k];
        let r = style.dot_radius;
        let blockers: Vec<Rect> = centers
            .iter()
            .enumerate()
            .filter(|(j, c)| *j != k && **c != (cx, cy))
            .map(|(_, &(x, y))| Rect {
                x0: x - r,
                y0: y - r,
                x1: x + r,
                y1: y + r,
            })
            .collect();
        let mut chosen = None;
        'search: for ring in 0..RINGS {
            for slot in 0..SLOTS {
                let (p, rect) = label_candidate(cx, cy, slot, ring, &dot.group, style);
                if !taken.iter().chain(&blockers).any(|o| o.overlaps(&rect)) {
                    chosen = Some((p, rect));
                    break 'search;
                }
            }
        }
        let (p, rect) = chosen.unwrap_or_else(|| label_candidate(cx, cy, 0, 0, &dot.group, style));
        taken.push(rect);
        out.push(p);
    }
    out
}

fn polyline_points(t: &AxisTransform, pts: &[(f64, f64)]) -> String {
    pts.iter()
        .map(|&(a, r)| {
            let (x, y) = t.to_px(a, r);
            format!("{},{}", px(x), px(y))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Render the plot as a standalone SVG 1.1 document. Output is a pure
/// function of the input.
pub fn render_svg(data: &PlotData) -> Result<String> {
    data.validate()?;
    let style = &data.style;
    let t = AxisTransform::for_style(style);
    let fs = style.font_size;
    let mut s = String::new();
    let w = &mut s;

    let _ = writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="{}">"#,
        format_number(style.width),
        format_number(style.height),
        format_number(style.width),
        format_number(style.height),
        format_number(fs)
    );
    let _ = writeln!(w, "<title>{}</title>", escape(&data.labels.title));
    let _ = writeln!(
        w,
        r##"<rect x="0" y="0" width="{}" height="{}" fill="#ffffff"/>"##,
        format_number(style.width),
        format_number(style.height)
    );

    // columns where the target bias needs R² > 1
    let points = &data.curve.points;
    let step = if points.len() > 1 {
        (points[points.len() - 1].alpha - points[0].alpha) / (points.len() - 1) as f64
    } else {
        0.0
    };
    let _ = writeln!(w, r#"<g class="infeasible">"#);
    let mut i = 0;
    while i < points.len() {
        if points[i].feasible {
            i += 1;
            continue;
        }
        let start = i;
        while i < points.len() && !points[i].feasible {
            i += 1;
        }
        let a0 = (points[start].alpha - step / 2.0).max(0.0);
        let a1 = (points[i - 1].alpha + step / 2.0).min(1.0);
        let (x0, y0) = t.to_px(a0, 1.0);
        let (x1, y1) = t.to_px(a1, 0.0);
        let _ = writeln!(
            w,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            px(x0),
            px(y0),
            px(x1 - x0),
            px(y1 - y0),
            escape(&style.infeasible_color)
        );
    }
    let _ = writeln!(w, "</g>");

    if let Some(band) = &data.band {
        let mut pts: Vec<(f64, f64)> = band
            .alpha
            .iter()
            .zip(&band.r2_hi)
            .map(|(&a, &h)| (a, h.clamp(0.0, 1.0)))
            .collect();
        pts.extend(
            band.alpha
                .iter()
                .zip(&band.r2_lo)
                .rev()
                .map(|(&a, &l)| (a, l.clamp(0.0, 1.0))),
        );
        let _ = writeln!(
            w,
            r#"<polygon class="band" points="{}" fill="{}" fill-opacity="0.6" stroke="none"/>"#,
            polyline_points(&t, &pts),
            escape(&style.band_color)
        );
    }

    // axes, ticks, grid
    let _ = writeln!(
        w,
        r##"<rect class="axes" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333333"/>"##,
        px(t.left),
        px(t.top),
        px(t.right - t.left),
        px(t.bottom - t.top)
    );
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let label = format_number(v);
        let (x, _) = t.to_px(v, 0.0);
        let (_, y) = t.to_px(0.0, v);
        let _ = writeln!(
            w,
            r##"<line x1="{x}" y1="{b}" x2="{x}" y2="{b6}" stroke="#333333"/><text x="{x}" y="{bl}" text-anchor="middle">{label}</text>"##,
            x = px(x),
            b = px(t.bottom),
            b6 = px(t.bottom + 6.0),
            bl = px(t.bottom + 6.0 + fs),
        );
        let _ = writeln!(
            w,
            r##"<line x1="{l6}" y1="{y}" x2="{l}" y2="{y}" stroke="#333333"/><text x="{lt}" y="{yt}" text-anchor="end">{label}</text>"##,
            l6 = px(t.left - 6.0),
            l = px(t.left),
            y = px(y),
            lt = px(t.left - 9.0),
            yt = px(y + fs * 0.35),
        );
    }
    let _ = writeln!(
        w,
        r#"<text class="x-caption" x="{}" y="{}" text-anchor="middle">{}</text>"#,
        px((t.left + t.right) / 2.0),
        px(style.height - 15.0),
        escape(&data.labels.x_axis)
    );
    let (cx, cy) = (20.0, (t.top + t.bottom) / 2.0);
    let _ = writeln!(
        w,
        r#"<text class="y-caption" x="{x}" y="{y}" text-anchor="middle" transform="rotate(-90 {x} {y})">{}</text>"#,
        escape(&data.labels.y_axis),
        x = px(cx),
        y = px(cy),
    );
    let _ = writeln!(
        w,
        r#"<text class="title" x="{}" y="{}" text-anchor="middle" font-size="{}">{}</text>"#,
        px((t.left + t.right) / 2.0),
        px(t.top - 20.0),
        format_number(fs * 1.25),
        escape(&data.labels.title)
    );
    let _ = writeln!(
        w,
        r#"<text class="annotation" x="{}" y="{}" text-anchor="end">{}</text>"#,
        px(t.right - 8.0),
        px(t.top + fs + 6.0),
        escape(&data.labels.annotation)
    );

    // curve: a segment is dashed when either end is infeasible; consecutive
    // segments of one kind share a polyline
    let seg_feasible = |k: usize| points[k].feasible && points[k + 1].feasible;
    let mut runs: Vec<(bool, usize, usize)> = Vec::new();
    if points.len() == 1 {
        runs.push((points[0].feasible, 0, 0));
    }
    for k in 0..points.len().saturating_sub(1) {
        let f = seg_feasible(k);
        match runs.last_mut() {
            Some((kind, _, end)) if *kind == f => *end = k + 1,
            _ => runs.push((f, k, k + 1)),
        }
    }
    for (feasible, start, end) in runs {
        let run: Vec<(f64, f64)> = points[start..=end].iter().map(|p| (p.alpha, p.r2)).collect();
        let dash = if feasible { "" } else { r#" stroke-dasharray="6 4""# };
        let class = if feasible { "curve" } else { "curve infeasible" };
        let _ = writeln!(
            w,
            r#"<polyline class="{class}" points="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#,
            polyline_points(&t, &run),
            escape(&style.curve_color)
        );
    }

    if let Some(band) = &data.band {
        for di in &band.dots {
            if let Some(dot) = data.dots.iter().find(|d| d.group == di.group) {
                let (x, y) = dot_position(&t, dot).0;
                let (xl, _) = t.to_px(di.alpha_lo.clamp(0.0, 1.0), 0.0);
                let (xh, _) = t.to_px(di.alpha_hi.clamp(0.0, 1.0), 0.0);
                let (_, yl) = t.to_px(0.0, di.r2_lo.clamp(0.0, 1.0));
                let (_, yh) = t.to_px(0.0, di.r2_hi.clamp(0.0, 1.0));
                let _ = writeln!(
                    w,
                    r##"<path class="dot-interval" d="M{} {}H{}M{} {}V{}" stroke="#555555" fill="none"/>"##,
                    px(xl),
                    px(y),
                    px(xh),
                    px(x),
                    px(yl),
                    px(yh)
                );
            }
        }
    }

    let labels = place_labels(data);
    for (k, (dot, label)) in data.dots.iter().zip(&labels).enumerate() {
        let ((x, y), out_of_range) = dot_position(&t, dot);
        let color = escape(&style.dot_colors[k % style.dot_colors.len()]);
        let _ = writeln!(
            w,
            r##"<circle class="dot" cx="{}" cy="{}" r="{}" fill="{color}" stroke="#000000" stroke-width="0.5"/>"##,
            px(x),
            px(y),
            format_number(style.dot_radius)
        );
        if out_of_range {
            let r = style.dot_radius + 3.0;
            let _ = writeln!(
                w,
                r##"<rect class="clipped-marker" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#000000"/>"##,
                px(x - r),
                px(y - r),
                px(2.0 * r),
                px(2.0 * r)
            );
        }
        let _ = writeln!(
            w,
            r#"<text class="dot-label" x="{}" y="{}" text-anchor="{}">{}</text>"#,
            px(label.x),
            px(label.y),
            label.anchor,
            escape(&dot.group)
        );
    }
    let _ = writeln!(w, "</svg>");
    Ok(s)
}
