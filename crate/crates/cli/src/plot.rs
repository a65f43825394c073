//! Hand-written SVG line charts. Output depends only on the input CSV text,
//! so identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::PlotKind;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

type Curve = Vec<(f64, f64)>;
type Series = (String, Curve);

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn render(kind: PlotKind, inputs: &[PathBuf]) -> Result<String> {
    match kind {
        PlotKind::Generalisation => {
            let series = inputs.iter().map(|p| accuracy_by_n(p)).collect::<Result<Vec<_>>>()?;
            Ok(document(&[Panel {
                title: "Generalisation",
                x_label: "n",
                y_label: "argmax accuracy",
                series,
            }]))
        }
        PlotKind::Training => {
            let mut grad = Vec::new();
            let mut loss = Vec::new();
            for p in inputs {
                for (label, g, l) in training_curves(p)? {
                    grad.push((label.clone(), g));
                    loss.push((label, l));
                }
            }
            Ok(document(&[
                Panel {
                    title: "Gradient magnitude",
                    x_label: "step",
                    y_label: "mean |dL/dθ|",
                    series: grad,
                },
                Panel {
                    title: "Loss",
                    x_label: "step",
                    y_label: "loss",
                    series: loss,
                },
            ]))
        }
    }
}

/// Mean accuracy per graph size from an eval or cross-validation CSV.
fn accuracy_by_n(path: &Path) -> Result<Series> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let n_col = col("n").with_context(|| format!("{} has no `n` column", path.display()))?;
    let acc_col = col("argmax_acc")
        .or_else(|| col("accuracy_mean"))
        .with_context(|| format!("{} has no accuracy column", path.display()))?;
    let mut sums: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for record in reader.records() {
        let record = record?;
        // skip the pooled "all" row
        let Ok(n) = record[n_col].parse::<usize>() else { continue };
        let acc: f64 = record[acc_col]
            .parse()
            .with_context(|| format!("bad accuracy `{}` in {}", &record[acc_col], path.display()))?;
        let slot = sums.entry(n).or_default();
        slot.0 += acc;
        slot.1 += 1;
    }
    if sums.is_empty() {
        bail!("{} has no data rows", path.display());
    }
    Ok((stem(path), sums.into_iter().map(|(n, (s, k))| (n as f64, s / k as f64)).collect()))
}

/// `(label, grad curve, loss curve)` per run id in a training metrics CSV.
fn training_curves(path: &Path) -> Result<Vec<(String, Curve, Curve)>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = qgnn::observables::read_metric_rows(file).with_context(|| format!("reading {}", path.display()))?;
    if rows.is_empty() {
        bail!("{} has no data rows", path.display());
    }
    let mut runs: Vec<(String, Curve, Curve)> = Vec::new();
    for r in &rows {
        let idx = match runs.iter().position(|(id, _, _)| *id == r.run_id) {
            Some(i) => i,
            None => {
                runs.push((r.run_id.clone(), Vec::new(), Vec::new()));
                runs.len() - 1
            }
        };
        runs[idx].1.push((r.step as f64, r.grad_norm_mean));
        runs[idx].2.push((r.step as f64, r.loss));
    }
    let base = stem(path);
    let single = runs.len() == 1;
    Ok(runs
        .into_iter()
        .map(|(id, g, l)| (if single { base.clone() } else { format!("{base} {id}") }, g, l))
        .collect())
}

struct Panel {
    title: &'static str,
    x_label: &'static str,
    y_label: &'static str,
    series: Vec<Series>,
}

fn document(panels: &[Panel]) -> String {
    let height = PANEL_HEIGHT * panels.len() as f64;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for (i, p) in panels.iter().enumerate() {
        panel(&mut s, i as f64 * PANEL_HEIGHT, p);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Range padded so flat series still get a visible axis.
fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn tick_label(v: f64) -> String {
    let text = if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    };
    // drop trailing zeros of fixed-point labels
    if text.contains('.') && !text.contains('e') {
        text.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        text
    }
}

fn panel(s: &mut String, top: f64, p: &Panel) {
    let (x0, x1) = bounds(p.series.iter().flat_map(|(_, pts)| pts.iter().map(|q| q.0)));
    let (y0, y1) = bounds(p.series.iter().flat_map(|(_, pts)| pts.iter().map(|q| q.1)));
    let left = MARGIN_LEFT;
    let right = WIDTH - MARGIN_RIGHT;
    let upper = top + MARGIN_TOP;
    let lower = top + PANEL_HEIGHT - MARGIN_BOTTOM;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
    let sy = |y: f64| lower - (y - y0) / (y1 - y0) * (lower - upper);

    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#,
        (left + right) / 2.0,
        top + 24.0,
        escape(p.title)
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect x="{left:.1}" y="{upper:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        right - left,
        lower - upper
    )
    .unwrap();
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        writeln!(
            s,
            r#"<line x1="{px:.1}" y1="{lower:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            lower + 5.0,
            lower + 18.0,
            tick_label(xv)
        )
        .unwrap();
        writeln!(
            s,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{left:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 5.0,
            left - 8.0,
            py + 4.0,
            tick_label(yv)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        lower + 38.0,
        escape(p.x_label)
    )
    .unwrap();
    let mid = (upper + lower) / 2.0;
    writeln!(
        s,
        r#"<text x="16" y="{mid:.1}" text-anchor="middle" transform="rotate(-90 16 {mid:.1})">{}</text>"#,
        escape(p.y_label)
    )
    .unwrap();

    for (i, (label, pts)) in p.series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        )
        .unwrap();
        if pts.len() <= 30 {
            for &(x, y) in pts.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
                writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{colour}"/>"#, sx(x), sy(y)).unwrap();
            }
        }
        let ly = upper + 10.0 + 18.0 * i as f64;
        writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            right + 12.0,
            right + 32.0,
            right + 38.0,
            ly + 4.0,
            escape(label)
        )
        .unwrap();
    }
}
