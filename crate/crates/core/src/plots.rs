//! Plot-ready CSV series (and optional SVG sketches) derived from a
//! validation report.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::binning::Scheme;
use crate::error::{Error, Result};
use crate::report::{Block, LzBlock, ValidationReport};
use crate::stats::StatKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    Average,
    Homoscedasticity,
    Lz,
    Acf,
    FvSummary,
    Reliability,
    All,
}

impl PlotKind {
    pub const PANELS: [PlotKind; 6] = [
        PlotKind::Average,
        PlotKind::Homoscedasticity,
        PlotKind::Lz,
        PlotKind::Acf,
        PlotKind::FvSummary,
        PlotKind::Reliability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Average => "average",
            PlotKind::Homoscedasticity => "homoscedasticity",
            PlotKind::Lz => "lz",
            PlotKind::Acf => "acf",
            PlotKind::FvSummary => "fv-summary",
            PlotKind::Reliability => "reliability",
            PlotKind::All => "all",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        PlotKind::PANELS
            .into_iter()
            .chain([PlotKind::All])
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown plot kind `{s}` (average|homoscedasticity|lz|acf|fv-summary|reliability|all)"
                ))
            })
    }
}

/// Group labels of the `f_v` summary panel.
pub const FV_NOMINAL: &str = "nominal";
pub const FV_RANDOM: &str = "random";
pub const FV_RANDOM_BINOMIAL: &str = "random+binomial";
pub const FV_STRATIFIED: &str = "stratified";

fn file_token(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct Table {
    header: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &'static [&'static str]) -> Self {
        Self { header, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Config(format!("{other:?}")),
        })?;
        w.write_record(self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// One named panel file plus an optional SVG sketch.
struct Panel {
    stem: String,
    table: Table,
    svg: Option<String>,
}

fn average_panel(report: &ValidationReport) -> Result<Vec<Panel>> {
    let avg = report
        .average
        .ok()
        .ok_or_else(|| Error::Config("report has no average-calibration results".into()))?;
    let mut t = Table::new(&["statistic", "value", "low", "high", "target", "valid"]);
    let mut points = Vec::new();
    for (i, kind) in StatKind::ALL.into_iter().enumerate() {
        let e = avg.get(kind);
        t.push(vec![
            kind.to_string(),
            e.value.to_string(),
            e.interval.low.to_string(),
            e.interval.high.to_string(),
            e.target.to_string(),
            e.valid.to_string(),
        ]);
        points.push((i as f64, e.value, e.interval.low, e.interval.high));
    }
    let svg = svg::errorbars("average calibration", &points, &[0.0, 1.0]);
    Ok(vec![Panel { stem: "average".into(), table: t, svg: Some(svg) }])
}

fn homoscedasticity_panels(report: &ValidationReport) -> Vec<Panel> {
    let mut out = Vec::new();
    for block in &report.variables {
        let Some(h) = block.homoscedasticity.ok() else { continue };
        let mut t = Table::new(&["series", "x", "y"]);
        for (x, z) in h.x.iter().zip(&h.z) {
            t.push(vec!["z".into(), x.to_string(), z.to_string()]);
        }
        let r = &h.running;
        for (x, y) in r.x.iter().zip(&r.mean) {
            t.push(vec!["running_mean".into(), x.to_string(), y.to_string()]);
        }
        for (x, y) in r.x.iter().zip(&r.mean_squares) {
            t.push(vec!["running_mean_squares".into(), x.to_string(), y.to_string()]);
        }
        let cloud: Vec<(f64, f64)> = h.x.iter().copied().zip(h.z.iter().copied()).collect();
        let line: Vec<(f64, f64)> = r.x.iter().copied().zip(r.mean_squares.iter().copied()).collect();
        let name = block.variable.name();
        out.push(Panel {
            stem: format!("homoscedasticity_{}", file_token(name)),
            table: t,
            svg: Some(svg::scatter(&format!("Z vs {name}"), &cloud, &line, &[-1.0, 0.0, 1.0])),
        });
    }
    out
}

fn lz_blocks(report: &ValidationReport) -> Vec<(String, Scheme, &LzBlock)> {
    let mut out = Vec::new();
    for block in &report.variables {
        for scheme in block.schemes.iter().filter_map(Block::ok) {
            for lz in scheme.statistics.iter().filter_map(Block::ok) {
                out.push((block.variable.name().to_string(), scheme.scheme, lz));
            }
        }
    }
    out
}

fn lz_panels(report: &ValidationReport) -> Vec<Panel> {
    lz_blocks(report)
        .into_iter()
        .map(|(var, scheme, lz)| {
            let mut t = Table::new(&[
                "bin", "representative", "low", "high", "count", "value", "ci_low", "ci_high", "valid",
            ]);
            let mut points = Vec::new();
            for (i, b) in lz.bins.iter().enumerate() {
                let e = b.estimate;
                t.push(vec![
                    i.to_string(),
                    b.representative.to_string(),
                    b.low.to_string(),
                    b.high.to_string(),
                    b.count.to_string(),
                    opt(e.map(|e| e.value)),
                    opt(e.map(|e| e.interval.low)),
                    opt(e.map(|e| e.interval.high)),
                    e.map(|e| e.valid.to_string()).unwrap_or_default(),
                ]);
                if let Some(e) = e {
                    points.push((b.representative, e.value, e.interval.low, e.interval.high));
                }
            }
            let title = format!("{} vs {var} ({scheme})", lz.kind);
            Panel {
                stem: format!("lz_{}_{}_{}", file_token(&var), scheme, lz.kind),
                table: t,
                svg: Some(svg::errorbars(&title, &points, &[lz.kind.target()])),
            }
        })
        .collect()
}

fn acf_panels(report: &ValidationReport) -> Vec<Panel> {
    lz_blocks(report)
        .into_iter()
        .filter_map(|(var, scheme, lz)| {
            let a = lz.acf.ok()?;
            let mut t = Table::new(&["lag", "value", "band"]);
            let points: Vec<(f64, f64, f64, f64)> = a
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| (k as f64, *v, *v, *v))
                .collect();
            for (k, v) in a.values.iter().enumerate() {
                t.push(vec![k.to_string(), v.to_string(), a.band.to_string()]);
            }
            Some(Panel {
                stem: format!("acf_{}_{}_{}", file_token(&var), scheme, lz.kind),
                table: t,
                svg: Some(svg::errorbars(
                    &format!("ACF of {} vs {var} ({scheme})", lz.kind),
                    &points,
                    &[-a.band, 0.0, a.band],
                )),
            })
        })
        .collect()
}

fn fv_summary_panel(report: &ValidationReport) -> Vec<Panel> {
    let mut t = Table::new(&["variable", "statistic", "group", "value", "low", "high"]);
    let mut points = Vec::new();
    let mut row = |var: &str, kind: StatKind, group: &str, v: f64, lo: f64, hi: f64| {
        points.push((points.len() as f64, v, lo, hi));
        t.push(vec![
            var.to_string(),
            kind.to_string(),
            group.to_string(),
            v.to_string(),
            lo.to_string(),
            hi.to_string(),
        ]);
    };
    for block in &report.variables {
        let var = block.variable.name();
        for &kind in &report.config.kinds {
            let nominal = |scheme| {
                report
                    .lz(var, scheme, kind)
                    .and_then(|l| l.fraction_valid)
            };
            if let Some(fv) = nominal(Scheme::EqualCount) {
                row(var, kind, FV_NOMINAL, fv.value, fv.interval.low, fv.interval.high);
            }
            if let Some(p) = block
                .perturbations
                .iter()
                .filter_map(Block::ok)
                .find(|p| p.kind == kind)
            {
                row(var, kind, FV_RANDOM, p.mean, p.interval.low, p.interval.high);
                row(
                    var,
                    kind,
                    FV_RANDOM_BINOMIAL,
                    p.combined_mean,
                    p.combined_interval.low,
                    p.combined_interval.high,
                );
            }
            if let Some(fv) = nominal(Scheme::Stratified) {
                row(var, kind, FV_STRATIFIED, fv.value, fv.interval.low, fv.interval.high);
            }
        }
    }
    if t.rows.is_empty() {
        return Vec::new();
    }
    let target = report.config.level;
    let svg = svg::errorbars("fraction of valid bins", &points, &[target]);
    vec![Panel { stem: "fv_summary".into(), table: t, svg: Some(svg) }]
}

fn reliability_panel(report: &ValidationReport) -> Vec<Panel> {
    let Some(curve) = report.reliability.as_ref().and_then(Block::ok) else {
        return Vec::new();
    };
    let mut t = Table::new(&["bin", "count", "rmv", "rmse", "rce"]);
    for (i, b) in curve.bins.iter().enumerate() {
        t.push(vec![
            i.to_string(),
            b.count.to_string(),
            b.rmv.to_string(),
            b.rmse.to_string(),
            b.rce.to_string(),
        ]);
    }
    t.push(vec![
        "all".into(),
        report.dataset.size.to_string(),
        String::new(),
        String::new(),
        curve.rce.to_string(),
    ]);
    let pts: Vec<(f64, f64)> = curve.bins.iter().map(|b| (b.rmv, b.rmse)).collect();
    let diag: Vec<(f64, f64)> = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => vec![(a.0, a.0), (b.0, b.0)],
        _ => Vec::new(),
    };
    vec![Panel {
        stem: "reliability".into(),
        table: t,
        svg: Some(svg::scatter("RMSE vs RMV", &pts, &diag, &[])),
    }]
}

fn panels(report: &ValidationReport, kind: PlotKind) -> Result<Vec<Panel>> {
    Ok(match kind {
        PlotKind::Average => average_panel(report)?,
        PlotKind::Homoscedasticity => homoscedasticity_panels(report),
        PlotKind::Lz => lz_panels(report),
        PlotKind::Acf => acf_panels(report),
        PlotKind::FvSummary => fv_summary_panel(report),
        PlotKind::Reliability => reliability_panel(report),
        PlotKind::All => {
            let mut all = average_panel(report).unwrap_or_default();
            for k in &PlotKind::PANELS[1..] {
                all.extend(panels(report, *k)?);
            }
            all
        }
    })
}

/// Write the series of one panel kind (or all) as CSV files into `out_dir`,
/// with SVG sketches when `svg` is set. Returns the written paths.
pub fn emit_plot_series(
    report: &ValidationReport,
    kind: PlotKind,
    out_dir: impl AsRef<Path>,
    svg: bool,
) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    let panels = panels(report, kind)?;
    if panels.is_empty() && kind != PlotKind::All {
        return Err(Error::Config(format!("report has no data for the `{kind}` panel")));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for p in panels {
        let path = out_dir.join(format!("{}.csv", p.stem));
        p.table.write(&path)?;
        written.push(path);
        if let (true, Some(text)) = (svg, p.svg) {
            let path = out_dir.join(format!("{}.svg", p.stem));
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Bare-bones SVG rendering; enough to eyeball a panel.
mod svg {
    use super::*;

    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 48.0;

    struct Frame {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
    }

    impl Frame {
        fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
            let (x0, x1) = range(xs);
            let (y0, y1) = range(ys);
            Self { x0, x1, y0, y1 }
        }

        fn px(&self, x: f64) -> f64 {
            PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
        }

        fn py(&self, y: f64) -> f64 {
            H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
        }
    }

    fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
        let (lo, hi) = v
            .filter(|x| x.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if !lo.is_finite() {
            return (0.0, 1.0);
        }
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
        (lo - pad, hi + pad)
    }

    fn open(title: &str, f: &Frame, refs: &[f64]) -> String {
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{PAD}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n\
             <rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
            escape(title),
            W - 2.0 * PAD,
            H - 2.0 * PAD
        );
        for &r in refs {
            if r >= f.y0 && r <= f.y1 {
                let y = f.py(r);
                let _ = writeln!(
                    s,
                    "<line x1=\"{PAD}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"gray\" stroke-dasharray=\"4\"/>",
                    W - PAD
                );
            }
        }
        let _ = writeln!(
            s,
            "<text x=\"4\" y=\"{:.2}\" font-size=\"10\">{:.3}</text><text x=\"4\" y=\"{:.2}\" font-size=\"10\">{:.3}</text>",
            f.py(f.y1) + 10.0,
            f.y1,
            f.py(f.y0),
            f.y0
        );
        s
    }

    fn escape(s: &str) -> String {
        s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
    }

    /// Points with vertical error bars: (x, value, low, high).
    pub fn errorbars(title: &str, pts: &[(f64, f64, f64, f64)], refs: &[f64]) -> String {
        let f = Frame::fit(
            pts.iter().map(|p| p.0),
            pts.iter().flat_map(|p| [p.2, p.3]).chain(refs.iter().copied()),
        );
        let mut s = open(title, &f, refs);
        for &(x, v, lo, hi) in pts {
            let (cx, cy) = (f.px(x), f.py(v));
            let _ = writeln!(
                s,
                "<line x1=\"{cx:.2}\" y1=\"{:.2}\" x2=\"{cx:.2}\" y2=\"{:.2}\" stroke=\"steelblue\"/><circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"2.5\" fill=\"steelblue\"/>",
                f.py(lo),
                f.py(hi)
            );
        }
        s.push_str("</svg>\n");
        s
    }

    /// Point cloud with an overlaid polyline.
    pub fn scatter(title: &str, cloud: &[(f64, f64)], line: &[(f64, f64)], refs: &[f64]) -> String {
        let all = || cloud.iter().chain(line);
        let f = Frame::fit(all().map(|p| p.0), all().map(|p| p.1).chain(refs.iter().copied()));
        let mut s = open(title, &f, refs);
        for &(x, y) in cloud {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1\" fill=\"steelblue\" fill-opacity=\"0.4\"/>",
                f.px(x),
                f.py(y)
            );
        }
        if !line.is_empty() {
            let path: Vec<String> = line
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
                .collect();
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"darkred\" stroke-width=\"1.5\"/>",
                path.join(" ")
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
