//! CSV tables, SVG line plots and PGM/PPM frame strips.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::io::write_pnm;
use crate::error::{shape_err, Error, Result};
use crate::harness::evaluate::{MetricPoint, MetricSeries};
use crate::harness::train::csv_error;
use crate::tensor::Tensor;

pub const CSV_HEADER: [&str; 5] = ["model", "t", "psnr", "ssim", "count"];

pub fn write_metrics_csv(series: &[MetricSeries], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_error(path, e))?;
    for s in series {
        for p in &s.points {
            let rec = [s.model.clone(), p.t.to_string(), format!("{:?}", p.psnr), format!("{:?}", p.ssim), p.count.to_string()];
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads series back, grouping rows by model in first-seen order. The table
/// does not carry the dataset, so the caller names it.
pub fn read_metrics_csv(path: &Path, dataset: &str) -> Result<Vec<MetricSeries>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Format(format!("{}: expected columns {}", path.display(), CSV_HEADER.join(","))));
    }
    let mut out: Vec<MetricSeries> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let bad = |field: &str| Error::Format(format!("{}: bad {field} in {rec:?}", path.display()));
        let point = MetricPoint {
            t: rec[1].parse().map_err(|_| bad("t"))?,
            psnr: rec[2].parse().map_err(|_| bad("psnr"))?,
            ssim: rec[3].parse().map_err(|_| bad("ssim"))?,
            count: rec[4].parse().map_err(|_| bad("count"))?,
        };
        match out.iter_mut().find(|s| s.model == rec[0]) {
            Some(s) => s.points.push(point),
            None => out.push(MetricSeries { model: rec[0].to_string(), dataset: dataset.to_string(), points: vec![point] }),
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Psnr,
    Ssim,
}

impl Metric {
    fn of(self, p: &MetricPoint) -> f64 {
        match self {
            Metric::Psnr => p.psnr,
            Metric::Ssim => p.ssim,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::Psnr => "PSNR (dB)",
            Metric::Ssim => "SSIM",
        }
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line plot of `metric` against the middle-frame index, one polyline per
/// series. Infinite PSNR values are left out of the line.
pub fn svg_plot(series: &[MetricSeries], metric: Metric, title: &str) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 150.0, 40.0, 50.0);
    let values: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| metric.of(p))).filter(|v| v.is_finite()).collect();
    let (mut lo, mut hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    let (lo, hi) = (lo - pad, hi + pad);
    let ts = || series.iter().flat_map(|s| s.points.iter().map(|p| p.t));
    let t_min = ts().min().unwrap_or(1);
    let t_max = ts().max().unwrap_or(1).max(t_min + 1);
    let span = (t_max - t_min) as f64;
    let x = |t: f64| left + (t - t_min as f64) / span * (w - left - right);
    let y = |v: f64| top + (hi - v) / (hi - lo) * (h - top - bottom);

    let mut s = String::new();
    let mut line = |text: String| s.push_str(&(text + "\n"));
    line(format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#));
    line(format!(r#"<rect width="{w}" height="{h}" fill="white"/>"#));
    line(format!(r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (w - right + left) / 2.0, escape(title)));
    line(format!(
        r#"<path d="M{left} {top} V{} H{}" fill="none" stroke="black"/>"#,
        h - bottom,
        w - right
    ));
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        line(format!(r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, left - 6.0, y(v) + 4.0));
    }
    for t in t_min..=t_max {
        line(format!(r#"<text x="{:.1}" y="{}" text-anchor="middle">{t}</text>"#, x(t as f64), h - bottom + 16.0));
    }
    line(format!(r#"<text x="{}" y="{}" text-anchor="middle">timestep t</text>"#, (w - right + left) / 2.0, h - 12.0));
    line(format!(
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (h - bottom + top) / 2.0,
        (h - bottom + top) / 2.0,
        metric.label()
    ));
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|p| metric.of(p).is_finite())
            .map(|p| format!("{:.1},{:.1}", x(p.t as f64), y(metric.of(p))))
            .collect();
        line(format!(r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" ")));
        let ly = top + 16.0 * i as f64;
        line(format!(r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, w - right + 10.0, w - right + 30.0));
        line(format!(r#"<text x="{}" y="{}">{}</text>"#, w - right + 36.0, ly + 4.0, escape(&ser.model)));
    }
    line("</svg>".into());
    s
}

/// Tiles rows of equally sized frames into one image with 1-pixel white gutters.
pub fn frame_strip(rows: &[Vec<Tensor>]) -> Result<Tensor> {
    let first = rows.first().and_then(|r| r.first()).ok_or_else(|| shape_err!("empty frame strip"))?;
    let (c, h, w) = first.chw()?;
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let (sh, sw) = (rows.len() * (h + 1) - 1, cols * (w + 1) - 1);
    let mut out = Tensor::full(&[c, sh, sw], 1.0);
    for (r, row) in rows.iter().enumerate() {
        for (k, frame) in row.iter().enumerate() {
            if frame.shape() != first.shape() {
                return Err(shape_err!("strip frame {:?} differs from {:?}", frame.shape(), first.shape()));
            }
            let d = frame.data();
            let o = out.data_mut();
            for ch in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        o[ch * sh * sw + (r * (h + 1) + i) * sw + k * (w + 1) + j] = d[(ch * h + i) * w + j];
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn write_frame_strip(rows: &[Vec<Tensor>], path: &Path) -> Result<()> {
    write_pnm(path, &frame_strip(rows)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `metrics.csv`, `ssim.svg`, `psnr.svg` and a `provenance.txt`
/// holding `provenance` (typically the effective config) into `dir`.
pub fn write_report(series: &[MetricSeries], dir: &Path, title: &str, provenance: &str) -> Result<()> {
    if series.is_empty() {
        return Err(Error::Data("nothing to report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut datasets: Vec<&str> = series.iter().map(|s| s.dataset.as_str()).collect();
    datasets.dedup();
    write_text(&dir.join("provenance.txt"), &format!("# datasets: {}\n{provenance}", datasets.join(", ")))?;
    write_metrics_csv(series, &dir.join("metrics.csv"))?;
    write_text(&dir.join("ssim.svg"), &svg_plot(series, Metric::Ssim, title))?;
    write_text(&dir.join("psnr.svg"), &svg_plot(series, Metric::Psnr, title))?;
    Ok(())
}

/// A plain-text table of mean scores, one model per line.
pub fn summary_table(series: &[MetricSeries]) -> String {
    let mut s = format!("{:<16} {:>9} {:>8}\n", "model", "psnr", "ssim");
    for ser in series {
        writeln!(s, "{:<16} {:>9.3} {:>8.4}", ser.model, ser.mean_psnr(), ser.mean_ssim()).expect("string write");
    }
    s
}
