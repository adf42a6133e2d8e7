//! Self-contained SVG plots of the metric CSVs.

use std::fmt::Write as _;
use std::io::Read;

use crate::error::{Error, Result};
use crate::eval::{BoxStats, PrCurve, PrPoint};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn field(rec: &csv::StringRecord, i: usize) -> Result<f64> {
    rec.get(i)
        .ok_or_else(|| Error::Format(format!("missing column {i}")))?
        .parse()
        .map_err(|_| Error::Format(format!("non-numeric value in column {i}")))
}

/// Reads the CSV written by [`crate::eval::write_rte`].
pub fn read_rte<R: Read>(r: R) -> Result<Vec<(f64, BoxStats)>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        out.push((
            field(&rec, 0)?,
            BoxStats {
                count: field(&rec, 1)? as usize,
                median: field(&rec, 2)?,
                q1: field(&rec, 3)?,
                q3: field(&rec, 4)?,
                whisker_low: field(&rec, 5)?,
                whisker_high: field(&rec, 6)?,
            },
        ));
    }
    Ok(out)
}

/// Reads the CSV written by [`crate::eval::write_pr_curve`].
pub fn read_pr_curve<R: Read>(r: R) -> Result<PrCurve> {
    let mut rd = csv::Reader::from_reader(r);
    let mut points = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        points.push(PrPoint {
            threshold: field(&rec, 0)?,
            precision: field(&rec, 1)?,
            recall: field(&rec, 2)?,
            f1: field(&rec, 3)?,
        });
    }
    let f1max = points.iter().map(|p| p.f1).fold(0.0, f64::max);
    Ok(PrCurve { points, f1max })
}

struct Frame {
    y_max: f64,
}

impl Frame {
    fn px(&self, fx: f64) -> f64 {
        LEFT + fx * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y / self.y_max) * (H - TOP - BOTTOM)
    }
}

fn header(svg: &mut String, title: &str) {
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn axes(svg: &mut String, f: &Frame, x_label: &str, y_label: &str, y_ticks: usize) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = write!(svg, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#);
    for k in 0..=y_ticks {
        let v = f.y_max * k as f64 / y_ticks as f64;
        let y = f.py(v);
        let _ = write!(
            svg,
            r##"<line x1="{x0}" y1="{y:.1}" x2="{x1}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
            x0 - 6.0,
            y + 4.0,
            tick(v)
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 16.0,
        escape(x_label)
    );
    let _ = write!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Precision against recall, with F1max in the legend.
pub fn pr_curve_svg(curves: &[(String, PrCurve)], title: &str) -> String {
    let f = Frame { y_max: 1.0 };
    let mut svg = String::new();
    header(&mut svg, title);
    axes(&mut svg, &f, "recall", "precision", 5);
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            f.px(v),
            H - BOTTOM + 16.0,
            tick(v)
        );
    }
    for (i, (name, c)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts: Vec<(f64, f64)> = c.points.iter().map(|p| (p.recall, p.precision)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        let path: Vec<String> = pts.iter().map(|(r, p)| format!("{:.1},{:.1}", f.px(*r), f.py(*p))).collect();
        let _ = write!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        let y = TOP + 14.0 + 16.0 * i as f64;
        let _ = write!(
            svg,
            r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/><text x="{}" y="{}">{} (F1max {:.3})</text>"#,
            W - RIGHT - 190.0,
            y - 4.0,
            W - RIGHT - 172.0,
            y,
            escape(name),
            c.f1max
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Grouped box plots of error per segment length, one colour per series.
pub fn rte_boxplot_svg(series: &[(String, Vec<(f64, BoxStats)>)], title: &str) -> String {
    let mut lengths: Vec<f64> = series.iter().flat_map(|(_, b)| b.iter().map(|x| x.0)).collect();
    lengths.sort_by(f64::total_cmp);
    lengths.dedup();
    let top = series
        .iter()
        .flat_map(|(_, b)| b.iter().map(|x| x.1.whisker_high))
        .fold(0.0, f64::max);
    let f = Frame {
        y_max: if top > 0.0 { top * 1.1 } else { 1.0 },
    };
    let mut svg = String::new();
    header(&mut svg, title);
    axes(&mut svg, &f, "segment length (m)", "relative translation error (m)", 5);
    let groups = lengths.len().max(1) as f64;
    let slot = 1.0 / groups;
    let width = slot * 0.8 / series.len().max(1) as f64;
    for (g, len) in lengths.iter().enumerate() {
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            f.px((g as f64 + 0.5) * slot),
            H - BOTTOM + 16.0,
            tick(*len)
        );
        for (i, (_, bins)) in series.iter().enumerate() {
            let Some((_, b)) = bins.iter().find(|x| x.0 == *len) else {
                continue;
            };
            let color = COLORS[i % COLORS.len()];
            let x0 = f.px(g as f64 * slot + slot * 0.1 + i as f64 * width);
            let x1 = f.px(g as f64 * slot + slot * 0.1 + (i as f64 + 1.0) * width) - 2.0;
            let xm = (x0 + x1) / 2.0;
            let _ = write!(
                svg,
                r#"<line x1="{xm:.1}" y1="{:.1}" x2="{xm:.1}" y2="{:.1}" stroke="{color}"/>"#,
                f.py(b.whisker_low),
                f.py(b.whisker_high)
            );
            let _ = write!(
                svg,
                r#"<rect x="{x0:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>"#,
                f.py(b.q3),
                x1 - x0,
                (f.py(b.q1) - f.py(b.q3)).max(0.5)
            );
            let _ = write!(
                svg,
                r#"<line x1="{x0:.1}" y1="{:.1}" x2="{x1:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
                f.py(b.median),
                f.py(b.median)
            );
        }
    }
    for (i, (name, _)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let y = TOP + 14.0 + 16.0 * i as f64;
        let _ = write!(
            svg,
            r#"<rect x="{}" y="{}" width="12" height="10" fill="{color}" fill-opacity="0.35" stroke="{color}"/><text x="{}" y="{}">{}</text>"#,
            LEFT + 12.0,
            y - 9.0,
            LEFT + 30.0,
            y,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
