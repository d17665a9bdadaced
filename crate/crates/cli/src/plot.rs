//! Minimal deterministic SVG emitters: line plots and heatmaps, no external
//! renderer. All coordinates are formatted with fixed precision so repeated
//! runs produce identical bytes.

use crate::error::{CliError, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#000000", "#9467bd", "#8c564b"];

pub struct Series<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

fn fmt(x: f64) -> String {
    format!("{x:.3}")
}

fn tick_label(x: f64) -> String {
    if x != 0.0 && (x.abs() >= 1e4 || x.abs() < 1e-3) {
        format!("{x:.2e}")
    } else {
        format!("{x:.3}")
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.03 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn sx(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn axes(svg: &mut String, frame: &Frame, title: &str, x_label: &str, y_label: &str) {
    use std::fmt::Write;
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    let _ = write!(
        svg,
        "<rect x='{}' y='{}' width='{}' height='{}' fill='none' stroke='black'/>",
        fmt(x0),
        fmt(y1),
        fmt(x1 - x0),
        fmt(y0 - y1)
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = frame.x_lo + f * (frame.x_hi - frame.x_lo);
        let yv = frame.y_lo + f * (frame.y_hi - frame.y_lo);
        let sx = frame.sx(xv);
        let sy = frame.sy(yv);
        let _ = write!(
            svg,
            "<line x1='{0}' y1='{1}' x2='{0}' y2='{2}' stroke='black'/>\
             <text x='{0}' y='{3}' font-size='12' text-anchor='middle'>{4}</text>",
            fmt(sx),
            fmt(y0),
            fmt(y0 + 5.0),
            fmt(y0 + 20.0),
            tick_label(xv)
        );
        let _ = write!(
            svg,
            "<line x1='{0}' y1='{1}' x2='{2}' y2='{1}' stroke='black'/>\
             <text x='{3}' y='{4}' font-size='12' text-anchor='end'>{5}</text>",
            fmt(x0 - 5.0),
            fmt(sy),
            fmt(x0),
            fmt(x0 - 8.0),
            fmt(sy + 4.0),
            tick_label(yv)
        );
    }
    let _ = write!(
        svg,
        "<text x='{}' y='24' font-size='15' text-anchor='middle'>{}</text>\
         <text x='{}' y='{}' font-size='13' text-anchor='middle'>{}</text>\
         <text x='20' y='{}' font-size='13' text-anchor='middle' transform='rotate(-90 20 {})'>{}</text>",
        fmt((x0 + x1) / 2.0),
        title,
        fmt((x0 + x1) / 2.0),
        fmt(HEIGHT - 15.0),
        x_label,
        fmt((y0 + y1) / 2.0),
        fmt((y0 + y1) / 2.0),
        y_label
    );
}

pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    use std::fmt::Write;
    if series.is_empty() || series.iter().any(|s| s.x.is_empty() || s.x.len() != s.y.len()) {
        return Err(CliError::Schema("line plot needs nonempty aligned series".into()));
    }
    let (x_lo, x_hi) = range(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y_lo, y_hi) = range(series.iter().flat_map(|s| s.y.iter().copied()));
    let frame = Frame { x_lo, x_hi, y_lo, y_hi };
    let mut svg = svg_open();
    axes(&mut svg, &frame, title, x_label, y_label);
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut points = String::new();
        for (&x, &y) in s.x.iter().zip(s.y) {
            let _ = write!(points, "{},{} ", fmt(frame.sx(x)), fmt(frame.sy(y)));
        }
        let _ = write!(
            svg,
            "<polyline points='{}' fill='none' stroke='{}' stroke-width='1.5'/>",
            points.trim_end(),
            color
        );
        let ly = MARGIN_T + 18.0 * k as f64 + 14.0;
        let _ = write!(
            svg,
            "<line x1='{0}' y1='{1}' x2='{2}' y2='{1}' stroke='{3}' stroke-width='2'/>\
             <text x='{4}' y='{5}' font-size='12'>{6}</text>",
            fmt(WIDTH - MARGIN_R + 10.0),
            fmt(ly - 4.0),
            fmt(WIDTH - MARGIN_R + 34.0),
            color,
            fmt(WIDTH - MARGIN_R + 40.0),
            fmt(ly),
            s.label
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

// Five-stop dark-to-bright colormap, linearly interpolated.
fn colormap(f: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (0.267, 0.005, 0.329),
        (0.229, 0.322, 0.545),
        (0.128, 0.565, 0.551),
        (0.369, 0.788, 0.383),
        (0.993, 0.906, 0.144),
    ];
    let f = f.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (f.floor() as usize).min(STOPS.len() - 2);
    let u = f - i as f64;
    let mix = |a: f64, b: f64| ((a + (b - a) * u) * 255.0).round() as u8;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heatmap over the grid `xs` x `ys`; `values[iy][ix]` is the cell value.
pub fn heatmap(
    title: &str,
    x_label: &str,
    y_label: &str,
    xs: &[f64],
    ys: &[f64],
    values: &[Vec<f64>],
) -> Result<String> {
    use std::fmt::Write;
    if xs.is_empty() || ys.is_empty() || values.len() != ys.len() {
        return Err(CliError::Schema("heatmap needs a full value grid".into()));
    }
    if values.iter().any(|row| row.len() != xs.len()) {
        return Err(CliError::Schema("heatmap rows must match the x grid".into()));
    }
    let (v_lo, v_hi) = range(values.iter().flatten().copied());
    let frame = Frame {
        x_lo: xs[0],
        x_hi: *xs.last().unwrap(),
        y_lo: ys[0],
        y_hi: *ys.last().unwrap(),
    };
    let mut svg = svg_open();
    // cells first, frame on top
    for (iy, row) in values.iter().enumerate() {
        for (ix, &v) in row.iter().enumerate() {
            let x0 = if ix == 0 { frame.x_lo } else { 0.5 * (xs[ix - 1] + xs[ix]) };
            let x1 = if ix + 1 == xs.len() { frame.x_hi } else { 0.5 * (xs[ix] + xs[ix + 1]) };
            let y0 = if iy == 0 { frame.y_lo } else { 0.5 * (ys[iy - 1] + ys[iy]) };
            let y1 = if iy + 1 == ys.len() { frame.y_hi } else { 0.5 * (ys[iy] + ys[iy + 1]) };
            let f = if v_hi > v_lo { (v - v_lo) / (v_hi - v_lo) } else { 0.5 };
            let _ = write!(
                svg,
                "<rect x='{}' y='{}' width='{}' height='{}' fill='{}'/>",
                fmt(frame.sx(x0)),
                fmt(frame.sy(y1)),
                fmt(frame.sx(x1) - frame.sx(x0)),
                fmt(frame.sy(y0) - frame.sy(y1)),
                colormap(f)
            );
        }
    }
    axes(&mut svg, &frame, title, x_label, y_label);
    // colorbar
    let bar_x = WIDTH - MARGIN_R + 30.0;
    for i in 0..64 {
        let f = i as f64 / 63.0;
        let y = HEIGHT - MARGIN_B - f * (HEIGHT - MARGIN_T - MARGIN_B);
        let h = (HEIGHT - MARGIN_T - MARGIN_B) / 63.0;
        let _ = write!(
            svg,
            "<rect x='{}' y='{}' width='18' height='{}' fill='{}'/>",
            fmt(bar_x),
            fmt(y - h),
            fmt(h + 0.5),
            colormap(f)
        );
    }
    let _ = write!(
        svg,
        "<text x='{0}' y='{1}' font-size='12'>{2}</text>\
         <text x='{0}' y='{3}' font-size='12'>{4}</text>",
        fmt(bar_x + 24.0),
        fmt(HEIGHT - MARGIN_B),
        tick_label(v_lo),
        fmt(MARGIN_T + 10.0),
        tick_label(v_hi)
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn svg_open() -> String {
    format!(
        "<svg xmlns='http://www.w3.org/2000/svg' width='{WIDTH}' height='{HEIGHT}' \
         viewBox='0 0 {WIDTH} {HEIGHT}' font-family='sans-serif'>\
         <rect width='{WIDTH}' height='{HEIGHT}' fill='white'/>"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_contains_series() {
        let x = [0.0, 1.0, 2.0];
        let y = [0.0, 1.0, 0.5];
        let svg =
            line_plot("t", "x", "y", &[Series { label: "a", x: &x, y: &y }]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains(">a<"));
    }

    #[test]
    fn line_plot_rejects_empty() {
        assert!(line_plot("t", "x", "y", &[]).is_err());
        let x = [0.0];
        let y: [f64; 0] = [];
        assert!(line_plot("t", "x", "y", &[Series { label: "a", x: &x, y: &y }]).is_err());
    }

    #[test]
    fn heatmap_shape_checks() {
        let xs = [0.0, 1.0];
        let ys = [0.0, 1.0, 2.0];
        let good = vec![vec![0.0, 1.0]; 3];
        assert!(heatmap("t", "x", "y", &xs, &ys, &good).is_ok());
        let ragged = vec![vec![0.0]; 3];
        assert!(heatmap("t", "x", "y", &xs, &ys, &ragged).is_err());
    }

    #[test]
    fn deterministic_output() {
        let x = [0.0, 0.5, 1.0];
        let y = [0.3, 0.7, 0.1];
        let s = [Series { label: "s", x: &x, y: &y }];
        assert_eq!(line_plot("t", "x", "y", &s).unwrap(), line_plot("t", "x", "y", &s).unwrap());
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), "#440154");
        assert_eq!(colormap(1.0), "#fde725");
    }
}
