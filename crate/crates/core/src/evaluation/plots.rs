//! Static figures for a report: class distribution bars, cross-client
//! heatmap and round-accuracy curves, each as CSV plus a minimal SVG.
//!
//! Rendering is best-effort; callers log failures and carry on.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::report::ExperimentReport;
use super::CrossClientMatrix;
use crate::dataset::{GestureLabel, NUM_CLASSES};
use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 40.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        W / 2.0
    )
}

/// Grouped bars of per-client class counts.
pub fn class_distribution_svg(clients: &[(String, [usize; NUM_CLASSES])]) -> String {
    let mut s = svg_open("Class distribution per client");
    let max = clients.iter().flat_map(|(_, h)| h.iter()).copied().max().unwrap_or(1).max(1) as f64;
    let group_w = (W - 2.0 * PAD) / NUM_CLASSES as f64;
    let bar_w = group_w / (clients.len().max(1) as f64 + 1.0);
    for (c, l) in GestureLabel::ALL.iter().enumerate() {
        let x0 = PAD + c as f64 * group_w;
        for (k, (_, hist)) in clients.iter().enumerate() {
            let h = (H - 2.0 * PAD) * hist[c] as f64 / max;
            let hue = 360.0 * k as f64 / clients.len().max(1) as f64;
            let _ = writeln!(
                s,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{bar_w:.1}\" height=\"{h:.1}\" fill=\"hsl({hue:.0},60%,55%)\"/>",
                x0 + k as f64 * bar_w,
                H - PAD - h
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            x0 + group_w / 2.0,
            H - PAD + 14.0,
            l.name()
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn class_distribution_csv(clients: &[(String, [usize; NUM_CLASSES])]) -> String {
    let mut s = String::from("client");
    for l in GestureLabel::ALL {
        s.push(',');
        s.push_str(l.name());
    }
    s.push('\n');
    for (id, h) in clients {
        s.push_str(id);
        for v in h {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Grey-scale heatmap; darker is more accurate.
pub fn cross_client_svg(m: &CrossClientMatrix) -> String {
    let mut s = svg_open("Cross-client accuracy");
    let rows = m.k();
    let cols = rows + 1;
    let cell = ((W - 2.0 * PAD) / cols as f64).min((H - 2.0 * PAD) / rows.max(1) as f64);
    for (i, row) in m.accuracy.iter().enumerate() {
        for (j, &a) in row.iter().enumerate() {
            let shade = (255.0 * (1.0 - a.clamp(0.0, 1.0))).round();
            let (x, y) = (PAD + j as f64 * cell, PAD + i as f64 * cell);
            let text = if shade < 128.0 { "white" } else { "black" };
            let _ = writeln!(
                s,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell:.1}\" height=\"{cell:.1}\" fill=\"rgb({shade},{shade},{shade})\"/>\n\
                 <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"{text}\">{:.2}</text>",
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                a
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Global validation and test accuracy per round, round 0 included.
pub fn round_accuracy_csv(report: &ExperimentReport) -> Option<String> {
    let fed = report.federation.as_ref()?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from("round,val_acc,test_acc\n");
    let _ = writeln!(s, "0,{},{}", opt(fed.initial_metrics.val_acc), opt(fed.initial_metrics.test_acc));
    for r in &fed.records {
        let _ = writeln!(s, "{},{},{}", r.round, opt(r.metrics.val_acc), opt(r.metrics.test_acc));
    }
    Some(s)
}

pub fn round_accuracy_svg(report: &ExperimentReport) -> Option<String> {
    let fed = report.federation.as_ref()?;
    let mut points: Vec<(usize, f64)> = fed.initial_metrics.test_acc.map(|a| (0, a)).into_iter().collect();
    points.extend(fed.records.iter().filter_map(|r| r.metrics.test_acc.map(|a| (r.round, a))));
    let mut s = svg_open("Global test accuracy per round");
    let last = points.last().map_or(1, |p| p.0).max(1) as f64;
    let coords: Vec<String> = points
        .iter()
        .map(|&(r, a)| {
            format!(
                "{:.1},{:.1}",
                PAD + (W - 2.0 * PAD) * r as f64 / last,
                H - PAD - (H - 2.0 * PAD) * a.clamp(0.0, 1.0)
            )
        })
        .collect();
    let _ = writeln!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>",
        coords.join(" ")
    );
    s.push_str("</svg>\n");
    Some(s)
}

/// Writes every figure that applies to `report` into `dir` and returns the
/// paths written.
pub fn render_plots(
    report: &ExperimentReport,
    class_counts: &[(String, [usize; NUM_CLASSES])],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(&str, String)> = vec![
        ("class_distribution.csv", class_distribution_csv(class_counts)),
        ("class_distribution.svg", class_distribution_svg(class_counts)),
    ];
    if let Some(m) = &report.cross_client {
        files.push(("cross_client.svg", cross_client_svg(m)));
    }
    if let (Some(csv), Some(svg)) = (round_accuracy_csv(report), round_accuracy_svg(report)) {
        files.push(("round_accuracy.csv", csv));
        files.push(("round_accuracy.svg", svg));
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
