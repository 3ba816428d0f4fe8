use std::fmt::Write as _;
use std::path::Path;

use adacong::record::{mean_std, read_csv, RunRecord};

use crate::error::{HarnessError, Result};

/// Inter-seed mean and standard deviation of one method's series.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub method: String,
    pub seeds: usize,
    pub steps: Vec<u64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Method part of a `<hash>-<method>-s<seed>` run id.
pub fn method_of(run_id: &str) -> &str {
    let rest = run_id.split_once('-').map_or(run_id, |(_, r)| r);
    rest.rsplit_once('-').map_or(rest, |(m, _)| m)
}

/// Reads every `runs/*.csv` under `dir`, sorted by file name.
pub fn load_runs(dir: &Path) -> Result<Vec<RunRecord>> {
    let runs = dir.join("runs");
    let entries = std::fs::read_dir(&runs).map_err(|e| HarnessError::io(&runs, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let file = std::fs::File::open(&p).map_err(|e| HarnessError::io(&p, e))?;
        out.extend(read_csv(file).map_err(|e| HarnessError::Run(format!("{}: {e}", p.display())))?);
    }
    Ok(out)
}

fn trailing_mean(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Groups records by method (in `order` when given, else first appearance)
/// and averages `metric` across seeds step by step. `smooth` applies a
/// trailing mean to each run before averaging.
pub fn curves(records: &[RunRecord], metric: &str, smooth: usize, order: &[String]) -> Result<Vec<Curve>> {
    if records.is_empty() {
        return Err(HarnessError::Run("no records to render".into()));
    }
    let mut groups: Vec<(String, Vec<Vec<(u64, f64)>>)> = order.iter().map(|m| (m.clone(), Vec::new())).collect();
    for r in records {
        let series = r.series(metric);
        if series.is_empty() {
            return Err(HarnessError::Run(format!("run `{}` has no metric `{metric}`", r.run_id)));
        }
        let values = trailing_mean(&series.iter().map(|p| p.1).collect::<Vec<_>>(), smooth);
        let series: Vec<(u64, f64)> = series.iter().map(|p| p.0).zip(values).collect();
        let m = method_of(&r.run_id);
        match groups.iter_mut().find(|g| g.0 == m) {
            Some(g) => g.1.push(series),
            None => groups.push((m.to_string(), vec![series])),
        }
    }
    Ok(groups
        .into_iter()
        .filter(|g| !g.1.is_empty())
        .map(|(method, runs)| {
            let mut steps: Vec<u64> = runs.iter().flatten().map(|p| p.0).collect();
            steps.sort_unstable();
            steps.dedup();
            let (mean, std) = steps
                .iter()
                .map(|s| {
                    let at: Vec<f64> = runs.iter().filter_map(|r| r.iter().find(|p| p.0 == *s).map(|p| p.1)).collect();
                    mean_std(&at)
                })
                .unzip();
            Curve { method, seeds: runs.len(), steps, mean, std }
        })
        .collect())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

/// Standalone SVG: one mean line per curve with a shaded one-std band when
/// the curve has more than one seed.
pub fn render_svg(curves: &[Curve], title: &str) -> Result<String> {
    if curves.is_empty() {
        return Err(HarnessError::Run("no curves to render".into()));
    }
    let (w, h) = (760.0, 460.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);

    let finite = |v: &f64| v.is_finite();
    let x_min = curves.iter().flat_map(|c| c.steps.first()).min().copied().unwrap_or(0) as f64;
    let x_max = curves.iter().flat_map(|c| c.steps.last()).max().copied().unwrap_or(1) as f64;
    let lo = curves.iter().flat_map(|c| c.mean.iter().zip(&c.std).map(|(m, s)| m - s)).filter(finite).fold(f64::INFINITY, f64::min);
    let hi = curves.iter().flat_map(|c| c.mean.iter().zip(&c.std).map(|(m, s)| m + s)).filter(finite).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    let (y_min, y_max) = (lo - pad, hi + pad);
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let sx = |x: f64| left + (x - x_min) / x_span * pw;
    let sy = |y: f64| top + (y_max - y) / (y_max - y_min) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" style="fill:#ffffff"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" style="font:15px sans-serif;text-anchor:middle">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<path d="M{left},{top} V{} H{}" style="fill:none;stroke:#333333;stroke-width:1"/>"##,
        top + ph,
        left + pw
    );
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (xv, yv) = (x_min + f * x_span, y_min + f * (y_max - y_min));
        let (x, y) = (sx(xv), sy(yv));
        let _ = writeln!(s, r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" style="stroke:#333333"/>"##, top + ph, top + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x}" y="{}" style="font:11px sans-serif;text-anchor:middle">{}</text>"#, top + ph + 18.0, nice(xv));
        let _ = writeln!(s, r##"<line x1="{}" y1="{y}" x2="{left}" y2="{y}" style="stroke:#333333"/>"##, left - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" style="font:11px sans-serif;text-anchor:end">{}</text>"#, left - 8.0, y + 4.0, nice(yv));
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" style="font:12px sans-serif;text-anchor:middle">step</text>"#,
        left + pw / 2.0,
        h - 10.0
    );

    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64, f64)> = c
            .steps
            .iter()
            .zip(c.mean.iter().zip(&c.std))
            .filter(|(_, (m, _))| m.is_finite())
            .map(|(&st, (&m, &sd))| (st as f64, m, sd))
            .collect();
        if c.seeds > 1 {
            let upper = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1 + p.2)));
            let lower = pts.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1 - p.2)));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(s, r#"<polygon points="{}" style="fill:{color};fill-opacity:0.2;stroke:none"/>"#, poly.join(" "));
        }
        let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" style="fill:none;stroke:{color};stroke-width:1.5"/>"#, line.join(" "));
        let ly = top + 10.0 + 20.0 * i as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" style="stroke:{color};stroke-width:3"/>"#, lx + 20.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" style="font:12px sans-serif">{} (n={})</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&c.method),
            c.seeds
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
