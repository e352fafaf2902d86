//! Minimal SVG line charts: axes, tick labels and polylines.

use std::fmt::Write as _;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Rounds a raw step to 1, 2 or 5 times a power of ten.
fn nice_step(span: f64, target_ticks: usize) -> f64 {
    let raw = span / target_ticks.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn ticks(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let (mut lo, mut hi) = (lo, hi);
    if !(hi > lo) {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        lo -= pad;
        hi += pad;
    }
    let step = nice_step(hi - lo, 5);
    let start = (lo / step).floor() * step;
    let end = (hi / step).ceil() * step;
    let n = ((end - start) / step).round() as usize;
    let values = (0..=n).map(|i| start + i as f64 * step).collect();
    (start, end, values)
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(chart: &Chart) -> ((f64, f64), (f64, f64)) {
    let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
    let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in chart.series.iter().flat_map(|s| s.points.iter()) {
        if x.is_finite() && y.is_finite() {
            xr = (xr.0.min(*x), xr.1.max(*x));
            yr = (yr.0.min(*y), yr.1.max(*y));
        }
    }
    if !xr.0.is_finite() {
        xr = (0.0, 1.0);
        yr = (0.0, 1.0);
    }
    (xr, yr)
}

/// Renders `chart` into the rectangle `(x0, y0, w, h)` of an enclosing SVG.
fn render_into(out: &mut String, chart: &Chart, x0: f64, y0: f64, w: f64, h: f64) {
    let (left, right, top, bottom) = (70.0, 20.0, 30.0, 45.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let ((xmin, xmax), (ymin, ymax)) = bounds(chart);
    let (xlo, xhi, xt) = ticks(xmin, xmax);
    let (ylo, yhi, yt) = ticks(ymin, ymax);
    let sx = |x: f64| x0 + left + (x - xlo) / (xhi - xlo) * pw;
    let sy = |y: f64| y0 + top + ph - (y - ylo) / (yhi - ylo) * ph;

    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"##,
        x0 + left + pw / 2.0,
        y0 + top - 10.0,
        escape(&chart.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{:.2}" y="{:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#000"/>"##,
        x0 + left,
        y0 + top
    );
    for &t in &xt {
        let x = sx(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"##,
            y0 + top + ph,
            y0 + top + ph + 5.0,
            y0 + top + ph + 18.0,
            format_tick(t)
        );
    }
    for &t in &yt {
        let y = sy(t);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#000"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{}</text>"##,
            x0 + left - 5.0,
            x0 + left,
            x0 + left - 8.0,
            y + 4.0,
            format_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"##,
        x0 + left + pw / 2.0,
        y0 + h - 8.0,
        escape(&chart.x_label)
    );
    let (lx, ly) = (x0 + 16.0, y0 + top + ph / 2.0);
    let _ = writeln!(
        out,
        r##"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"##,
        escape(&chart.y_label)
    );

    for (i, s) in chart.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = String::new();
        for &(x, y) in s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let _ = write!(pts, "{:.2},{:.2} ", sx(x), sy(y));
        }
        let _ = writeln!(
            out,
            r##"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"##,
            pts.trim_end()
        );
        if chart.series.len() > 1 {
            let (lx, ly) = (x0 + left + pw - 110.0, y0 + top + 14.0 + 14.0 * i as f64);
            let _ = writeln!(
                out,
                r##"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{ly:.2}" font-size="10">{}</text>"##,
                ly - 4.0,
                lx + 16.0,
                ly - 4.0,
                lx + 20.0,
                escape(&s.label)
            );
        }
    }
}

fn document(width: f64, height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n{body}</svg>\n"
    )
}

pub fn render(chart: &Chart, width: f64, height: f64) -> String {
    let mut body = String::new();
    render_into(&mut body, chart, 0.0, 0.0, width, height);
    document(width, height, &body)
}

/// Lays charts out on a grid with `columns` columns.
pub fn render_grid(charts: &[Chart], columns: usize, cell_width: f64, cell_height: f64) -> String {
    let columns = columns.max(1);
    let rows = charts.len().div_ceil(columns);
    let mut body = String::new();
    for (i, c) in charts.iter().enumerate() {
        let (r, col) = (i / columns, i % columns);
        render_into(&mut body, c, col as f64 * cell_width, r as f64 * cell_height, cell_width, cell_height);
    }
    document(columns as f64 * cell_width, rows as f64 * cell_height, &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step(10.0, 5), 2.0);
        assert_eq!(nice_step(240.0, 5), 50.0);
        assert_eq!(nice_step(0.7, 5), 0.2);
    }

    #[test]
    fn ticks_cover_the_range() {
        let (lo, hi, t) = ticks(0.13, 9.7);
        assert!(lo <= 0.13 && hi >= 9.7);
        assert_eq!(t.first(), Some(&lo));
        assert!(t.len() >= 3);
    }

    #[test]
    fn flat_series_still_renders() {
        let chart = Chart {
            title: "flat".into(),
            x_label: "t".into(),
            y_label: "y".into(),
            series: vec![Series {
                label: "a".into(),
                points: vec![(0.0, 1.0), (1.0, 1.0)],
            }],
        };
        let svg = render(&chart, 400.0, 300.0);
        assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn grid_places_every_chart() {
        let c = Chart {
            title: "T <cells>".into(),
            x_label: "t".into(),
            y_label: "y".into(),
            series: vec![],
        };
        let svg = render_grid(&[c.clone(), c.clone(), c], 2, 300.0, 200.0);
        assert_eq!(svg.matches("<rect x=").count(), 3);
        assert!(svg.contains("T &lt;cells&gt;"));
        assert!(svg.contains("height=\"400\""));
    }
}
