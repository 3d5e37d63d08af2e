use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::AdesseExplanation;
use crate::advisor::action_displacement;
use crate::predictor::Domain;
use crate::scalar::Scalar;

const CELL: f64 = 40.0;
/// Gray level of a zero-importance arrow; importance 1 is black.
const LIGHTEST_GRAY: f64 = 220.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorStop {
    /// Position in `[0, 1]` after the value range is applied.
    pub at: f64,
    /// `#rrggbb`.
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub name: String,
    pub stops: Vec<ColorStop>,
    /// Value mapped to the first and last stop; `None` spans zero to the
    /// largest value on the grid.
    pub range: Option<(f64, f64)>,
}

fn stop(at: f64, color: &str) -> ColorStop {
    ColorStop {
        at,
        color: color.to_string(),
    }
}

impl Palette {
    /// Zero demand-supply index is the darkest red.
    pub fn taxi() -> Self {
        Self {
            name: "taxi".into(),
            stops: vec![
                stop(0.0, "#67000d"),
                stop(0.35, "#d7301f"),
                stop(0.7, "#fdae61"),
                stop(1.0, "#ffffcc"),
            ],
            range: None,
        }
    }

    /// Darkest red at -1, darkest green at 1.
    pub fn wildfire() -> Self {
        Self {
            name: "wildfire".into(),
            stops: vec![stop(0.0, "#67000d"), stop(0.5, "#f7f7f7"), stop(1.0, "#00441b")],
            range: Some((-1.0, 1.0)),
        }
    }

    pub fn for_domain(domain: Domain) -> Self {
        match domain {
            Domain::Taxi => Self::taxi(),
            Domain::Wildfire => Self::wildfire(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Fill colour of `value` given the grid's largest value.
    pub fn color(&self, value: f64, grid_max: f64) -> String {
        let (lo, hi) = self.range.unwrap_or((0.0, grid_max));
        let t = if hi > lo { ((value - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
        let stops = &self.stops;
        let Some(first) = stops.first() else {
            return "#000000".into();
        };
        if t <= first.at {
            return first.color.clone();
        }
        for w in stops.windows(2) {
            if t <= w[1].at {
                let u = (t - w[0].at) / (w[1].at - w[0].at).max(f64::EPSILON);
                let (a, b) = (rgb(&w[0].color), rgb(&w[1].color));
                let mix = |i: usize| (a[i] + (b[i] - a[i]) * u).round() as u8;
                return format!("#{:02x}{:02x}{:02x}", mix(0), mix(1), mix(2));
            }
        }
        stops.last().unwrap().color.clone()
    }
}

fn rgb(hex: &str) -> [f64; 3] {
    let h = hex.trim_start_matches('#');
    let c = |i: usize| u8::from_str_radix(h.get(i..i + 2).unwrap_or("00"), 16).unwrap_or(0) as f64;
    [c(0), c(2), c(4)]
}

/// Arrow colour for a normalized importance: linear gray ramp, darkest at 1.
pub fn arrow_gray(delta: f64) -> String {
    let v = (LIGHTEST_GRAY * (1.0 - delta.clamp(0.0, 1.0))).round() as u8;
    format!("#{v:02x}{v:02x}{v:02x}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub svg: String,
    pub json: String,
}

pub fn render_heatmap<T>(e: &AdesseExplanation<T>, palette: &Palette) -> Rendered
where
    T: Scalar + Serialize + for<'de> Deserialize<'de>,
{
    let (w, h) = (e.grid.width(), e.grid.height());
    let grid_max = e.indices.iter().map(|v| v.as_f64()).fold(0.0, f64::max);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        w as f64 * CELL,
        h as f64 * CELL,
        w as f64 * CELL,
        h as f64 * CELL
    );
    for (i, g) in e.grid.cells().enumerate() {
        let (x, y) = (g.x as f64 * CELL, g.y as f64 * CELL);
        let fill = palette.color(e.indices[i].as_f64(), grid_max);
        let _ = writeln!(
            s,
            r#"<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" data-index="{}"/>"#,
            e.indices[i]
        );
    }
    for (i, g) in e.grid.cells().enumerate() {
        let arrow = &e.arrows[i];
        let color = arrow_gray(arrow.shade.as_f64());
        let (cx, cy) = ((g.x as f64 + 0.5) * CELL, (g.y as f64 + 0.5) * CELL);
        match action_displacement(e.domain, arrow.action).filter(|d| !d.is_stay()) {
            None => {
                let _ = writeln!(
                    s,
                    r#"<circle class="arrow stay" cx="{cx}" cy="{cy}" r="4" fill="{color}" data-action="{}"/>"#,
                    arrow.action
                );
            }
            Some(d) => {
                let (dx, dy) = (d.dx as f64, d.dy as f64);
                let norm = (dx * dx + dy * dy).sqrt();
                let len = CELL * (0.2 + 0.12 * d.reach() as f64);
                let (ux, uy) = (dx / norm, dy / norm);
                let (tx, ty) = (cx + ux * len, cy + uy * len);
                let (bx, by) = (cx - ux * len * 0.6, cy - uy * len * 0.6);
                let (px, py) = (-uy * 5.0, ux * 5.0);
                let (hx, hy) = (tx - ux * 8.0, ty - uy * 8.0);
                let _ = writeln!(
                    s,
                    r#"<g class="arrow" data-action="{}"><line x1="{bx:.1}" y1="{by:.1}" x2="{hx:.1}" y2="{hy:.1}" stroke="{color}" stroke-width="2.5"/><polygon points="{tx:.1},{ty:.1} {:.1},{:.1} {:.1},{:.1}" fill="{color}"/></g>"#,
                    arrow.action,
                    hx + px,
                    hy + py,
                    hx - px,
                    hy - py
                );
            }
        }
    }
    let (ax, ay) = (e.agent.x as f64 * CELL, e.agent.y as f64 * CELL);
    let _ = writeln!(
        s,
        r##"<rect class="agent" x="{ax}" y="{ay}" width="{CELL}" height="{CELL}" fill="none" stroke="#1f5fff" stroke-width="3"/>"##
    );
    for fl in &e.feature_lists {
        let (x, y) = (fl.cell.x as f64 * CELL + 3.0, fl.cell.y as f64 * CELL + 13.0);
        let _ = writeln!(
            s,
            r##"<text class="label" x="{x}" y="{y}" font-family="sans-serif" font-size="12" font-weight="bold" fill="#ffffff" stroke="#000000" stroke-width="0.6">{}</text>"##,
            fl.label
        );
    }
    s.push_str("</svg>\n");
    Rendered { svg: s, json: e.to_json() }
}
