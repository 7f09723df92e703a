//! Self-contained SVG line charts of greedy-return curves. Groups of
//! seed runs are drawn as a mean line with a 25–75% percentile band;
//! single runs as a plain line. No external renderer is involved; the
//! output is a complete `<svg>` document.

use crate::metrics::{read_metrics, MetricsError};
use crate::runner::percentile;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("plot io ({path}): {err}")]
    Io { path: String, err: std::io::Error },
    #[error("{path}: {err}")]
    Metrics { path: String, err: MetricsError },
    #[error("plot: {0}")]
    NoData(String),
}

/// One charted entity: a label and one or more evaluation curves
/// (several curves arise from several seeds of the same setting).
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub curves: Vec<Vec<(f64, f64)>>,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];
const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;

/// Label for a metrics file: seed directories collapse onto their parent
/// (`out/der/seed-3/metrics.csv` -> `der`), so sibling seeds group into
/// one banded series; anything else keeps its own name.
fn label_for(path: &Path) -> String {
    let parent_name = |p: &Path| {
        p.parent()
            .and_then(Path::file_name)
            .map(|s| s.to_string_lossy().into_owned())
    };
    if let Some(parent) = parent_name(path) {
        if parent.starts_with("seed-") {
            if let Some(grand) = path.parent().and_then(parent_name) {
                return grand;
            }
        }
        if path.file_name().map(|f| f == "metrics.csv").unwrap_or(false) {
            return parent;
        }
    }
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// A directory input stands for every `metrics.csv` beneath it; the walk
/// is sorted so the resulting chart is deterministic.
fn expand_input(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), PlotError> {
    if !path.is_dir() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let as_io = |err| PlotError::Io { path: path.display().to_string(), err };
    let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(as_io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(as_io)?;
    entries.sort();
    for entry in entries {
        if entry.is_dir() {
            expand_input(&entry, out)?;
        } else if entry.file_name().map(|f| f == "metrics.csv").unwrap_or(false) {
            out.push(entry);
        }
    }
    Ok(())
}

/// Read evaluation curves from metrics files and group them by label.
/// Directories are searched recursively for `metrics.csv` files.
pub fn collect_series(paths: &[impl AsRef<Path>]) -> Result<Vec<Series>, PlotError> {
    let mut resolved = Vec::new();
    for p in paths {
        let before = resolved.len();
        expand_input(p.as_ref(), &mut resolved)?;
        if resolved.len() == before {
            return Err(PlotError::NoData(format!(
                "no metrics.csv under {}",
                p.as_ref().display()
            )));
        }
    }
    let mut series: Vec<Series> = Vec::new();
    for path in &resolved {
        let path: &Path = path;
        let display = path.display().to_string();
        let file = File::open(path).map_err(|err| PlotError::Io { path: display.clone(), err })?;
        let rows = read_metrics(BufReader::new(file))
            .map_err(|err| PlotError::Metrics { path: display.clone(), err })?;
        let curve: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| r.eval_return.map(|v| (r.t_step as f64, v)))
            .collect();
        if curve.is_empty() {
            return Err(PlotError::NoData(format!("{display} has no evaluation points")));
        }
        let label = label_for(path);
        match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s.curves.push(curve),
            None => series.push(Series { label, curves: vec![curve] }),
        }
    }
    Ok(series)
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.abs().log10().floor());
    let norm = raw / mag;
    let nice = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn fmt_tick(v: f64) -> String {
    if v == v.round() && v.abs() < 1e12 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A group's pointwise aggregate: x (mean of the seeds' step counters at
/// each evaluation index, which coincide up to episode overshoot), mean,
/// p25, p75. Curves are truncated to the shortest one in the group.
fn aggregate(curves: &[Vec<(f64, f64)>]) -> Vec<(f64, f64, f64, f64)> {
    let n = curves.iter().map(Vec::len).min().unwrap_or(0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let xs: f64 = curves.iter().map(|c| c[i].0).sum::<f64>() / curves.len() as f64;
        let mut ys: Vec<f64> = curves.iter().map(|c| c[i].1).collect();
        ys.sort_by(f64::total_cmp);
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        out.push((xs, mean, percentile(&ys, 0.25), percentile(&ys, 0.75)));
    }
    out
}

/// Render the chart. Errors if there is nothing to draw.
pub fn plot_svg(series: &[Series]) -> Result<String, PlotError> {
    if series.is_empty() || series.iter().all(|s| s.curves.is_empty()) {
        return Err(PlotError::NoData("no series to draw".into()));
    }
    let aggregates: Vec<(String, Vec<(f64, f64, f64, f64)>, bool)> = series
        .iter()
        .map(|s| (s.label.clone(), aggregate(&s.curves), s.curves.len() > 1))
        .collect();

    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, pts, banded) in &aggregates {
        for &(x, mean, p25, p75) in pts {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            let (lo, hi) = if *banded { (p25, p75) } else { (mean, mean) };
            y_min = y_min.min(lo.min(mean));
            y_max = y_max.max(hi.max(mean));
        }
    }
    if !x_min.is_finite() {
        return Err(PlotError::NoData("no points to draw".into()));
    }
    if x_max == x_min {
        x_max += 1.0;
    }
    let pad = ((y_max - y_min) * 0.05).max(1e-9);
    y_min -= pad;
    y_max += pad;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = move |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = move |y: f64| MARGIN_T + (y_max - y) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // Grid and ticks.
    let x_step = nice_step(x_max - x_min);
    let y_step = nice_step(y_max - y_min);
    let mut t = (x_min / x_step).ceil() * x_step;
    while t <= x_max + 1e-9 {
        let px = sx(t);
        svg.push_str(&format!(
            "<line x1=\"{px:.1}\" y1=\"{}\" x2=\"{px:.1}\" y2=\"{}\" stroke=\"#ddd\"/>\n",
            MARGIN_T,
            MARGIN_T + plot_h
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_T + plot_h + 18.0,
            fmt_tick(t)
        ));
        t += x_step;
    }
    let mut t = (y_min / y_step).ceil() * y_step;
    while t <= y_max + 1e-9 {
        let py = sy(t);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py:.1}\" x2=\"{}\" y2=\"{py:.1}\" stroke=\"#ddd\"/>\n",
            MARGIN_L,
            MARGIN_L + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 8.0,
            py + 4.0,
            fmt_tick(t)
        ));
        t += y_step;
    }
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#333\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">environment steps</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.1})\">greedy return</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    ));

    // Bands first so every line stays visible on top of them.
    for (idx, (_, pts, banded)) in aggregates.iter().enumerate() {
        if !banded || pts.len() < 2 {
            continue;
        }
        let color = PALETTE[idx % PALETTE.len()];
        let mut d = String::from("M");
        for &(x, _, _, p75) in pts {
            d.push_str(&format!(" {:.1} {:.1}", sx(x), sy(p75)));
        }
        for &(x, _, p25, _) in pts.iter().rev() {
            d.push_str(&format!(" L {:.1} {:.1}", sx(x), sy(p25)));
        }
        d.push_str(" Z");
        svg.push_str(&format!(
            "<path d=\"{d}\" fill=\"{color}\" fill-opacity=\"0.18\" stroke=\"none\" \
             class=\"band\"/>\n"
        ));
    }
    for (idx, (_, pts, _)) in aggregates.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let points: Vec<String> = pts
            .iter()
            .map(|&(x, mean, _, _)| format!("{:.1},{:.1}", sx(x), sy(mean)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            points.join(" ")
        ));
    }

    // Legend.
    for (idx, (label, _, _)) in aggregates.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let y = MARGIN_T + 10.0 + idx as f64 * 18.0;
        let x = MARGIN_L + plot_w - 150.0;
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n",
            x + 24.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            x + 30.0,
            y + 4.0,
            escape(label)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Read, group, and render in one step.
pub fn plot_files(paths: &[impl AsRef<Path>]) -> Result<String, PlotError> {
    let series = collect_series(paths)?;
    plot_svg(&series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::METRICS_HEADER;
    use std::io::Write;

    fn write_metrics(path: &Path, evals: &[(u64, f64)]) {
        let mut f = File::create(path).unwrap();
        writeln!(f, "{METRICS_HEADER}").unwrap();
        for &(t, v) in evals {
            writeln!(f, "{t},0.5,1,0.2,0.8,0.3,10,{v}").unwrap();
        }
    }

    #[test]
    fn seed_directories_group_into_one_banded_series() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        for seed in 0..3 {
            let d = dir.path().join("der").join(format!("seed-{seed}"));
            std::fs::create_dir_all(&d).unwrap();
            let p = d.join("metrics.csv");
            write_metrics(&p, &[(100, 1.0 + seed as f64), (200, 2.0 + seed as f64)]);
            paths.push(p);
        }
        let series = collect_series(&paths).unwrap();
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].label, "der");
        assert_eq!(series[0].curves.len(), 3);

        let svg = plot_svg(&series).unwrap();
        assert!(svg.contains("class=\"band\""), "expected a percentile band");
        assert!(svg.contains("<polyline"));
        assert!(svg.contains(">der<"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn directory_inputs_expand_to_their_metrics_files() {
        let dir = tempfile::tempdir().unwrap();
        for mode in ["alpha", "beta"] {
            for seed in 0..2 {
                let d = dir.path().join(mode).join(format!("seed-{seed}"));
                std::fs::create_dir_all(&d).unwrap();
                write_metrics(&d.join("metrics.csv"), &[(100, 1.0), (200, 2.0)]);
            }
        }
        // Distractor file that must not be picked up.
        std::fs::write(dir.path().join("alpha").join("summary.csv"), "x\n").unwrap();

        let series = collect_series(&[dir.path()]).unwrap();
        let mut labels: Vec<&str> = series.iter().map(|s| s.label.as_str()).collect();
        labels.sort();
        assert_eq!(labels, ["alpha", "beta"]);
        assert!(series.iter().all(|s| s.curves.len() == 2));

        let empty = dir.path().join("empty");
        std::fs::create_dir_all(&empty).unwrap();
        let err = collect_series(&[empty]).unwrap_err();
        assert!(matches!(err, PlotError::NoData(_)), "got {err:?}");
    }

    #[test]
    fn lone_files_stay_separate_lines_without_band() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("baseline.csv");
        let b = dir.path().join("ours.csv");
        write_metrics(&a, &[(100, 1.0), (200, 1.5)]);
        write_metrics(&b, &[(100, 2.0), (200, 2.5)]);
        let svg = plot_files(&[&a, &b]).unwrap();
        assert!(!svg.contains("class=\"band\""));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">baseline<") && svg.contains(">ours<"));
    }

    #[test]
    fn malformed_rows_surface_the_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metrics.csv");
        let mut f = File::create(&p).unwrap();
        writeln!(f, "{METRICS_HEADER}").unwrap();
        writeln!(f, "10,0.5,1,0.2,0.8,0.3,10,1.5").unwrap();
        writeln!(f, "garbage row").unwrap();
        drop(f);
        let err = plot_files(&[&p]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("metrics.csv"), "{msg}");
    }

    #[test]
    fn files_without_eval_points_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metrics.csv");
        let mut f = File::create(&p).unwrap();
        writeln!(f, "{METRICS_HEADER}").unwrap();
        writeln!(f, "10,0.5,1,0.2,0.8,0.3,10,").unwrap();
        drop(f);
        let err = plot_files(&[&p]).unwrap_err();
        assert!(matches!(err, PlotError::NoData(_)), "{err}");
    }

    #[test]
    fn tick_formatting_is_compact() {
        assert_eq!(fmt_tick(20000.0), "20000");
        assert_eq!(fmt_tick(0.25), "0.25");
        assert_eq!(fmt_tick(2.5), "2.5");
        assert_eq!(fmt_tick(-3.0), "-3");
    }
}
