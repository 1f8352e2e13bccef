//! Study outputs: the rows table, its summary, SVG plots and the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{median, median_ci_ranks, ols_slope};

pub const ROWS_HEADER: &str = "realization,K,target_n,achieved_n,l1_error,converged,runtime_s";
pub const SUMMARY_HEADER: &str = "K,target_n,mae,lo90,hi90";

/// One fitted (realization, K, window) work item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub realization: usize,
    pub k: usize,
    pub target_n: usize,
    pub achieved_n: usize,
    /// `‖θ̂ − θ*‖₁`; NaN when the window could not be fitted.
    pub l1_error: f64,
    pub converged: bool,
    pub runtime_s: f64,
}

impl StudyRow {
    pub fn key(&self) -> (usize, usize, usize) {
        (self.realization, self.k, self.target_n)
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.realization,
            self.k,
            self.target_n,
            self.achieved_n,
            self.l1_error,
            self.converged,
            self.runtime_s
        )
    }

    pub fn parse(line: &str) -> Option<StudyRow> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return None;
        }
        Some(StudyRow {
            realization: f[0].parse().ok()?,
            k: f[1].parse().ok()?,
            target_n: f[2].parse().ok()?,
            achieved_n: f[3].parse().ok()?,
            l1_error: f[4].parse().ok()?,
            converged: f[5].parse().ok()?,
            runtime_s: f[6].parse().ok()?,
        })
    }
}

/// Reads the rows written so far. A trailing line cut short by an
/// interrupted write is ignored; any other malformed line is an error.
pub fn read_rows(path: &Path) -> Result<Vec<StudyRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let Some((header, body)) = lines.split_first() else {
        return Ok(rows);
    };
    if header != ROWS_HEADER {
        return Err(Error::Config(format!("{} has an unexpected header", path.display())));
    }
    for (idx, line) in body.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        match StudyRow::parse(line) {
            Some(r) => rows.push(r),
            None if idx + 1 == body.len() => {}
            None => {
                return Err(Error::Config(format!(
                    "{}: malformed row {}",
                    path.display(),
                    idx + 2
                )))
            }
        }
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from(ROWS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub k: usize,
    pub target_n: usize,
    pub mae: f64,
    pub lo90: f64,
    pub hi90: f64,
    /// Realizations contributing to the cell.
    pub count: usize,
}

/// Median error per `(K, target_n)` with a distribution-free 90% interval
/// from order statistics. Rows with a non-finite error are left out.
pub fn summarize(rows: &[StudyRow]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        if r.l1_error.is_finite() {
            cells.entry((r.k, r.target_n)).or_default().push(r.l1_error);
        }
    }
    cells
        .into_iter()
        .map(|((k, target_n), mut errs)| {
            errs.sort_by(f64::total_cmp);
            let (l, u) = median_ci_ranks(errs.len(), 0.9);
            SummaryRow {
                k,
                target_n,
                mae: median(&errs).expect("non-empty"),
                lo90: errs[l - 1],
                hi90: errs[u - 1],
                count: errs.len(),
            }
        })
        .collect()
}

pub fn summary_to_csv(summary: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in summary {
        let _ = writeln!(out, "{},{},{},{},{}", s.k, s.target_n, s.mae, s.lo90, s.hi90);
    }
    out
}

/// Least-squares slope of `log₁₀ MAE` against `log₁₀ N` for one `K`.
pub fn mae_slope(summary: &[SummaryRow], k: usize) -> Result<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = summary
        .iter()
        .filter(|s| s.k == k && s.mae > 0.0)
        .map(|s| ((s.target_n as f64).log10(), s.mae.log10()))
        .unzip();
    if x.len() < 3 {
        return Err(Error::InsufficientEvents {
            needed: 3,
            available: x.len(),
        });
    }
    Ok(ols_slope(&x, &y))
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    const W: f64 = 640.0;
    const H: f64 = 440.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 120.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 60.0;

    fn new(xs: &[f64], ys: &[f64]) -> Self {
        let span = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
            (lo - pad, hi + pad)
        };
        let (x0, x1) = span(xs);
        let (y0, y1) = span(ys);
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        Self::LEFT + (x - self.x0) / (self.x1 - self.x0) * (Self::W - Self::LEFT - Self::RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        Self::H - Self::BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (Self::H - Self::TOP - Self::BOTTOM)
    }

    fn open(&self, title: &str) -> String {
        let (w, h) = (Self::W, Self::H);
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{}\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
            w / 2.0
        );
        let (l, r, t, b) = (Self::LEFT, w - Self::RIGHT, Self::TOP, h - Self::BOTTOM);
        let _ = writeln!(
            s,
            "<rect x=\"{l}\" y=\"{t}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            r - l,
            b - t
        );
        for i in 0..=4 {
            let xv = self.x0 + (self.x1 - self.x0) * i as f64 / 4.0;
            let yv = self.y0 + (self.y1 - self.y0) * i as f64 / 4.0;
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{xv:.2}</text>",
                self.px(xv),
                b + 16.0
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{yv:.2}</text>",
                l - 6.0,
                self.py(yv) + 4.0
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">log₁₀N</text>",
            (l + r) / 2.0,
            h - 18.0
        );
        let _ = writeln!(
            s,
            "<text x=\"18\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">log₁₀MAE</text>",
            (t + b) / 2.0,
            (t + b) / 2.0
        );
        s
    }
}

fn series(summary: &[SummaryRow]) -> BTreeMap<usize, Vec<&SummaryRow>> {
    let mut by_k: BTreeMap<usize, Vec<&SummaryRow>> = BTreeMap::new();
    for s in summary.iter().filter(|s| s.mae > 0.0) {
        by_k.entry(s.k).or_default().push(s);
    }
    by_k
}

fn legend(out: &mut String, idx: usize, k: usize) {
    let x = Frame::W - Frame::RIGHT + 15.0;
    let y = Frame::TOP + 20.0 + 20.0 * idx as f64;
    let c = PALETTE[idx % PALETTE.len()];
    let _ = writeln!(
        out,
        "<line x1=\"{x}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{c}\" stroke-width=\"2\"/><text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">K = {k}</text>",
        x + 20.0,
        x + 26.0,
        y + 4.0
    );
}

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let mut s = format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
        pts.join(" ")
    );
    for (x, y) in points {
        let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{color}\"/>");
    }
    s
}

/// Writes `mae.svg` (MAE against N, log-log, one series per K) and
/// `mae_ci90.svg` (the same with 90% bands for the median).
pub fn emit_plots(summary: &[SummaryRow], output_dir: &Path) -> Result<Vec<PathBuf>> {
    let by_k = series(summary);
    if by_k.is_empty() {
        return Err(Error::invalid("nothing to plot"));
    }
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let log_n = |s: &SummaryRow| (s.target_n as f64).log10();
    let xs: Vec<f64> = by_k.values().flatten().map(|s| log_n(s)).collect();

    let ys: Vec<f64> = by_k.values().flatten().map(|s| s.mae.log10()).collect();
    let frame = Frame::new(&xs, &ys);
    let mut plain = frame.open("Median absolute error");
    for (idx, (k, rows)) in by_k.iter().enumerate() {
        let pts: Vec<(f64, f64)> = rows.iter().map(|s| (frame.px(log_n(s)), frame.py(s.mae.log10()))).collect();
        plain.push_str(&polyline(&pts, PALETTE[idx % PALETTE.len()]));
        legend(&mut plain, idx, *k);
    }
    plain.push_str("</svg>\n");

    let band_ys: Vec<f64> = by_k
        .values()
        .flatten()
        .flat_map(|s| [s.lo90, s.hi90, s.mae])
        .filter(|v| *v > 0.0)
        .map(f64::log10)
        .collect();
    let frame = Frame::new(&xs, &band_ys);
    let mut banded = frame.open("Median absolute error with 90% intervals");
    for (idx, (k, rows)) in by_k.iter().enumerate() {
        let c = PALETTE[idx % PALETTE.len()];
        let bounded: Vec<&&SummaryRow> = rows.iter().filter(|s| s.lo90 > 0.0).collect();
        if !bounded.is_empty() {
            let mut pts: Vec<String> = bounded
                .iter()
                .map(|s| format!("{:.2},{:.2}", frame.px(log_n(s)), frame.py(s.hi90.log10())))
                .collect();
            pts.extend(
                bounded
                    .iter()
                    .rev()
                    .map(|s| format!("{:.2},{:.2}", frame.px(log_n(s)), frame.py(s.lo90.log10()))),
            );
            let _ = writeln!(
                banded,
                "<polygon points=\"{}\" fill=\"{c}\" fill-opacity=\"0.2\" stroke=\"none\"/>",
                pts.join(" ")
            );
        }
        let pts: Vec<(f64, f64)> = rows.iter().map(|s| (frame.px(log_n(s)), frame.py(s.mae.log10()))).collect();
        banded.push_str(&polyline(&pts, c));
        legend(&mut banded, idx, *k);
    }
    banded.push_str("</svg>\n");

    let mut paths = Vec::new();
    for (name, body) in [("mae.svg", plain), ("mae_ci90.svg", banded)] {
        let p = output_dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        paths.push(p);
    }
    Ok(paths)
}
