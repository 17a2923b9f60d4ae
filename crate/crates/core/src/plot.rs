//! Headless SVG charts of a trajectory report.

use std::fmt::Write as _;

use crate::eval::TrajectoryReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Dots,
    Line,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    /// File stem, e.g. `closing_time`.
    pub name: &'static str,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<PlotSeries>,
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Roughly `count` tick positions at 1/2/5 x 10^k spacing covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo || count == 0 {
        return vec![lo];
    }
    let raw = (hi - lo) / count as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw * (1.0 - 1e-9))
        .unwrap_or(10.0 * mag);
    // tolerate rounding in the quotients so end ticks are kept
    let first = (lo / step - 1e-9).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

impl Figure {
    pub fn to_svg(&self) -> String {
        let points = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = bounds(points().map(|p| p.0));
        let (y0, y1) = bounds(points().map(|p| p.1));
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333"/>"##
        );
        for t in nice_ticks(x0, x1, 8) {
            let x = sx(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                TOP + plot_h,
                TOP + plot_h + 5.0,
                TOP + plot_h + 20.0,
                fmt_tick(t)
            );
        }
        for t in nice_ticks(y0, y1, 6) {
            let y = sy(t);
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#333"/><line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT - 5.0,
                LEFT + plot_w,
                LEFT - 8.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            HEIGHT - 15.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate(20 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            TOP + plot_h / 2.0,
            escape(&self.y_label)
        );

        for (k, series) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let _ = writeln!(s, r#"<g fill="{color}" stroke="{color}">"#);
            match series.mark {
                Mark::Dots => {
                    for &(x, y) in &series.points {
                        let _ = writeln!(
                            s,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="1.5" stroke="none"/>"#,
                            sx(x),
                            sy(y)
                        );
                    }
                }
                Mark::Line => {
                    let pts: Vec<String> = series
                        .points
                        .iter()
                        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                        .collect();
                    let _ = writeln!(s, r#"<polyline fill="none" points="{}"/>"#, pts.join(" "));
                }
            }
            let ly = TOP + 15.0 + 16.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" stroke="none"/><text x="{:.2}" y="{:.2}" stroke="none" fill="black">{}</text>"#,
                LEFT + plot_w - 150.0,
                ly - 9.0,
                LEFT + plot_w - 135.0,
                ly,
                escape(&series.name)
            );
            let _ = writeln!(s, "</g>");
        }
        s.push_str("</svg>\n");
        s
    }
}

fn fmt_tick(t: f64) -> String {
    let r = (t * 1e6).round() / 1e6;
    if r == r.trunc() {
        format!("{}", r as i64)
    } else {
        format!("{r}")
    }
}

fn dots(name: &str, points: Vec<(f64, f64)>) -> PlotSeries {
    PlotSeries {
        name: name.to_string(),
        points,
        mark: Mark::Dots,
    }
}

fn as_xy(points: &[(i64, f64)]) -> Vec<(f64, f64)> {
    points.iter().map(|&(i, v)| (i as f64, v)).collect()
}

/// Closing time, key moments, residuals and key-moment interval against
/// operation number.
pub fn report_figures(report: &TrajectoryReport) -> Vec<Figure> {
    let pick = |f: fn(&crate::eval::OperationOutcome) -> Option<f64>| -> Vec<(f64, f64)> {
        report
            .ops
            .iter()
            .filter_map(|o| f(o).map(|v| (o.op_number as f64, v)))
            .collect()
    };
    let x_label = "operation number i".to_string();
    vec![
        Figure {
            name: "closing_time",
            title: "Closing time from contact separation".into(),
            x_label: x_label.clone(),
            y_label: "t_c [ms]".into(),
            series: vec![dots("t_c", pick(|o| o.t_c_ms))],
        },
        Figure {
            name: "key_moments",
            title: "Detected key moments".into(),
            x_label: x_label.clone(),
            y_label: "time [ms]".into(),
            series: vec![dots("t1", pick(|o| o.t1_ms)), dots("t2", pick(|o| o.t2_ms))],
        },
        Figure {
            name: "residuals",
            title: "Residual against closing time".into(),
            x_label: x_label.clone(),
            y_label: "residual [ms]".into(),
            series: vec![
                dots("t_c - t2", as_xy(&report.residual_t2.points)),
                dots("t_c - t_cp", as_xy(&report.residual_cp.points)),
            ],
        },
        Figure {
            name: "interval",
            title: "Interval between key moments".into(),
            x_label,
            y_label: "t2 - t1 [ms]".into(),
            series: vec![dots("t2 - t1", as_xy(&report.interval_t2_t1.points))],
        },
    ]
}
