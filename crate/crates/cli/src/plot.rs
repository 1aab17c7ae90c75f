//! Static SVG chart of a series with change points and segment trends.

use std::fmt::Write;

use sigfatigue::{ChangePointReport, TimeSeries};

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render(series: &TimeSeries, report: &ChangePointReport, title: &str) -> String {
    let days: Vec<f64> = series.day_offsets().into_iter().map(|d| d as f64).collect();
    let values = series.values();
    let span = days.last().copied().unwrap_or(0.0).max(1.0);
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        lo -= 0.5 * lo.abs().max(1e-3);
        hi += 0.5 * hi.abs().max(1e-3);
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |d: f64| LEFT + plot_w * d / span;
    let y = |v: f64| TOP + plot_h * (1.0 - (v - lo) / (hi - lo));
    let first = series.first_date();
    let day_of = |date: chrono::NaiveDate| (date - first).num_days() as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    // axes
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        svg,
        r##"<path d="M{x0:.1},{y0:.1} L{x0:.1},{y1:.1} L{x1:.1},{y1:.1}" fill="none" stroke="#333"/>"##
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * f64::from(i) / 4.0;
        let _ = writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="end" fill="#333">{v:.4}</text>"##,
            LEFT - 6.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r##"<text x="{x0:.1}" y="{:.1}" fill="#333">{first}</text><text x="{x1:.1}" y="{:.1}" text-anchor="end" fill="#333">{}</text>"##,
        y1 + 18.0,
        y1 + 18.0,
        series.last_date()
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(series.metric().name())
    );

    // segment trend labels
    for seg in &report.segments {
        let mid = (day_of(seg.start_date) + day_of(seg.end_date)) / 2.0;
        let colour = match seg.trend {
            sigfatigue::Trend::Improving => "#2a7d2a",
            sigfatigue::Trend::Declining => "#b22222",
            sigfatigue::Trend::Stable => "#555555",
        };
        let _ = writeln!(
            svg,
            r#"<text class="trend" x="{:.1}" y="{:.1}" text-anchor="middle" fill="{colour}">{}</text>"#,
            x(mid.clamp(0.0, span)),
            TOP - 4.0 + 16.0,
            seg.trend.as_str()
        );
    }

    // series
    let pts: Vec<String> = days
        .iter()
        .zip(&values)
        .map(|(&d, &v)| format!("{:.2},{:.2}", x(d), y(v)))
        .collect();
    let _ = writeln!(
        svg,
        r##"<polyline class="series" points="{}" fill="none" stroke="#1f5fa8" stroke-width="1.5"/>"##,
        pts.join(" ")
    );

    // change points
    for cp in &report.change_points {
        let cx = x(day_of(cp.date));
        let _ = writeln!(
            svg,
            r##"<line class="change-point" x1="{cx:.2}" y1="{y0:.1}" x2="{cx:.2}" y2="{y1:.1}" stroke="#d62728" stroke-width="1.5" stroke-dasharray="6,4"><title>{}</title></line>"##,
            cp.date
        );
    }
    svg.push_str("</svg>\n");
    svg
}
