//! Minimal self-contained SVG line charts for experiment outputs.
//!
//! Supports linear and log10 y axes, dashed reference lines, a legend, and
//! automatic 1-2-5 tick placement. Series longer than the pixel budget are
//! downsampled by stride, always keeping the first and last points.

use std::fmt::Write as _;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 46.0;
const MARGIN_BOTTOM: f64 = 58.0;
const MAX_POINTS: usize = 1500;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineStyle {
    Solid,
    Dashed,
    Dotted,
}

impl LineStyle {
    fn dash_array(self) -> Option<&'static str> {
        match self {
            LineStyle::Solid => None,
            LineStyle::Dashed => Some("8,5"),
            LineStyle::Dotted => Some("2,4"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: LineStyle,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
            style: LineStyle::Solid,
        }
    }

    pub fn styled(label: impl Into<String>, points: Vec<(f64, f64)>, style: LineStyle) -> Self {
        Series {
            label: label.into(),
            points,
            style,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

impl Chart {
    pub fn new(
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
    ) -> Self {
        Chart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_y: false,
            series: Vec::new(),
        }
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn with_series(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    /// Renders the chart. Non-finite points are dropped, as are
    /// non-positive y values on a log axis; an all-empty chart still
    /// renders with axes and a note.
    pub fn render(&self) -> String {
        let cleaned: Vec<(usize, Vec<(f64, f64)>)> = self
            .series
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let pts: Vec<(f64, f64)> = s
                    .points
                    .iter()
                    .copied()
                    .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_y || *y > 0.0))
                    .map(|(x, y)| (x, if self.log_y { y.log10() } else { y }))
                    .collect();
                (i, downsample(pts))
            })
            .collect();

        let mut x_lo = f64::INFINITY;
        let mut x_hi = f64::NEG_INFINITY;
        let mut y_lo = f64::INFINITY;
        let mut y_hi = f64::NEG_INFINITY;
        for (_, pts) in &cleaned {
            for &(x, y) in pts {
                x_lo = x_lo.min(x);
                x_hi = x_hi.max(x);
                y_lo = y_lo.min(y);
                y_hi = y_hi.max(y);
            }
        }
        let have_data = x_lo.is_finite();
        if !have_data {
            (x_lo, x_hi, y_lo, y_hi) = (0.0, 1.0, 0.0, 1.0);
        }
        if x_hi - x_lo < 1e-12 {
            x_lo -= 0.5;
            x_hi += 0.5;
        }
        if y_hi - y_lo < 1e-12 {
            y_lo -= 0.5;
            y_hi += 0.5;
        }

        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let to_px = |x: f64, y: f64| -> (f64, f64) {
            (
                MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w,
                MARGIN_TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h,
            )
        };

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(
            svg,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );

        // axes
        let (x0, y0) = (MARGIN_LEFT, MARGIN_TOP + plot_h);
        let _ = writeln!(
            svg,
            r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
            MARGIN_LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN_TOP}" stroke="black"/>"#
        );

        for tick in nice_ticks(x_lo, x_hi, 8) {
            let (px, _) = to_px(tick, y_lo);
            let _ = writeln!(
                svg,
                r#"<line x1="{px}" y1="{y0}" x2="{px}" y2="{}" stroke="black"/>"#,
                y0 + 5.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{px}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
                y0 + 19.0,
                format_tick(tick)
            );
        }
        let y_ticks = if self.log_y {
            log_ticks(y_lo, y_hi)
        } else {
            nice_ticks(y_lo, y_hi, 7)
        };
        for tick in y_ticks {
            let (_, py) = to_px(x_lo, tick);
            let _ = writeln!(
                svg,
                r#"<line x1="{}" y1="{py}" x2="{x0}" y2="{py}" stroke="black"/>"#,
                x0 - 5.0
            );
            let _ = writeln!(
                svg,
                r##"<line x1="{x0}" y1="{py}" x2="{}" y2="{py}" stroke="#dddddd"/>"##,
                MARGIN_LEFT + plot_w
            );
            let label = if self.log_y {
                format!("1e{}", tick.round() as i64)
            } else {
                format_tick(tick)
            };
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{label}</text>"#,
                x0 - 8.0,
                py + 4.0
            );
        }

        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="20" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            escape(&self.y_label)
        );

        for (idx, pts) in &cleaned {
            if pts.is_empty() {
                continue;
            }
            let color = PALETTE[idx % PALETTE.len()];
            let style = self.series[*idx].style;
            let mut coords = String::new();
            for &(x, y) in pts {
                let (px, py) = to_px(x, y);
                let _ = write!(coords, "{px:.2},{py:.2} ");
            }
            let dash = style
                .dash_array()
                .map(|d| format!(r#" stroke-dasharray="{d}""#))
                .unwrap_or_default();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.6"{dash} points="{}"/>"#,
                coords.trim_end()
            );
            if pts.len() == 1 {
                let (px, py) = to_px(pts[0].0, pts[0].1);
                let _ = writeln!(svg, r#"<circle cx="{px}" cy="{py}" r="3" fill="{color}"/>"#);
            }
        }

        // legend, top-right inside the plot area
        let legend_x = MARGIN_LEFT + plot_w - 230.0;
        let mut legend_y = MARGIN_TOP + 10.0;
        for (idx, s) in self.series.iter().enumerate() {
            let color = PALETTE[idx % PALETTE.len()];
            let dash = s
                .style
                .dash_array()
                .map(|d| format!(r#" stroke-dasharray="{d}""#))
                .unwrap_or_default();
            let _ = writeln!(
                svg,
                r#"<line x1="{legend_x}" y1="{legend_y}" x2="{}" y2="{legend_y}" stroke="{color}" stroke-width="1.6"{dash}/>"#,
                legend_x + 28.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
                legend_x + 34.0,
                legend_y + 4.0,
                escape(&s.label)
            );
            legend_y += 18.0;
        }
        if !have_data {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">no data</text>"#,
                MARGIN_LEFT + plot_w / 2.0,
                MARGIN_TOP + plot_h / 2.0
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn downsample(points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points;
    }
    let stride = points.len().div_ceil(MAX_POINTS);
    let last = *points.last().unwrap();
    let mut out: Vec<(f64, f64)> = points.into_iter().step_by(stride).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

/// Tick positions on a 1-2-5 progression covering [lo, hi].
fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    debug_assert!(hi > lo);
    let raw_step = (hi - lo) / target.max(2) as f64;
    let mag = 10f64.powf(raw_step.log10().floor());
    let norm = raw_step / mag;
    let step = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    } * mag;
    let mut ticks = Vec::new();
    let mut t = (lo / step).ceil() * step;
    while t <= hi + step * 1e-9 {
        // snap tiny residues so 0 prints as 0
        if t.abs() < step * 1e-9 {
            t = 0.0;
        }
        ticks.push(t);
        t += step;
    }
    ticks
}

/// Integer powers of ten spanning a log10-transformed range.
fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let first = lo.ceil() as i64;
    let last = hi.floor() as i64;
    if first > last {
        return vec![lo, hi];
    }
    let mut step = 1i64;
    while (last - first) / step > 9 {
        step += 1;
    }
    (first..=last)
        .step_by(step as usize)
        .map(|p| p as f64)
        .collect()
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.0e}")
    } else if (v - v.round()).abs() < 1e-9 * a.max(1.0) {
        format!("{}", v.round() as i64)
    } else {
        format!("{v}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_axes_series_and_legend() {
        let chart = Chart::new("demo & check", "x", "y")
            .with_series(Series::new(
                "first",
                vec![(0.0, 1.0), (1.0, 2.0), (2.0, 1.5)],
            ))
            .with_series(Series::styled(
                "reference",
                vec![(0.0, 1.8), (2.0, 1.8)],
                LineStyle::Dashed,
            ));
        let svg = chart.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("demo &amp; check"));
        assert!(svg.contains("first"));
        assert!(svg.contains("reference"));
    }

    #[test]
    fn log_axis_drops_nonpositive_points() {
        let chart = Chart::new("log", "x", "y")
            .log_y()
            .with_series(Series::new("s", vec![(0.0, 0.0), (1.0, 10.0), (2.0, 0.1)]));
        let svg = chart.render();
        // two usable points remain on one polyline
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("1e1") || svg.contains("1e0"));
    }

    #[test]
    fn empty_chart_still_renders() {
        let svg = Chart::new("empty", "x", "y").render();
        assert!(svg.contains("no data"));
        assert!(svg.contains("</svg>"));
    }

    #[test]
    fn long_series_are_downsampled_keeping_endpoints() {
        let points: Vec<(f64, f64)> = (0..50_000).map(|i| (i as f64, (i % 7) as f64)).collect();
        let out = downsample(points.clone());
        assert!(out.len() <= MAX_POINTS + 1);
        assert_eq!(out[0], points[0]);
        assert_eq!(*out.last().unwrap(), *points.last().unwrap());
    }

    #[test]
    fn tick_progressions_are_sane() {
        let ticks = nice_ticks(0.0, 10.0, 8);
        assert!(ticks.contains(&0.0) && ticks.contains(&10.0));
        for pair in ticks.windows(2) {
            assert!(pair[1] > pair[0]);
        }
        let ticks = nice_ticks(-3.7, 2.1, 6);
        assert!(ticks.contains(&0.0));
        let lt = log_ticks(-3.2, 0.9);
        assert_eq!(lt, vec![-3.0, -2.0, -1.0, 0.0]);
    }
}
