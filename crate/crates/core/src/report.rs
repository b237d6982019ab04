//! Static plots and summary tables for a `mitune` run directory. Everything
//! is written under `<run>/report`; run data is only read.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{CsvData, CsvTable};
use crate::metrics::Metric;
use crate::pipeline::{read_metrics_csv, Provenance, RoundMetrics, ScoreTable};
use crate::run::RunLock;
use crate::schedule::NoiseSchedule;

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl ReportSummary {
    pub fn to_json(&self) -> Value {
        json!({"command": "report", "dir": self.dir, "files": self.files})
    }
}

/// Histogram over `[lo, hi]` with equal-width bins; the top edge belongs to
/// the last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut counts = vec![0; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let i = ((v - lo) / width).floor();
            let i = if i.is_nan() { 0 } else { (i.max(0.0) as usize).min(bins - 1) };
            counts[i] += 1;
        }
        Self { lo, hi, counts }
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + i as f64 * w, self.lo + (i + 1) as f64 * w)
    }
}

fn plot_err<E: Display>(path: &Path, e: E) -> Error {
    Error::file(path, format!("plot: {e}"))
}

/// Files a run directory must contain before a report can be made.
pub fn expected_files(run_dir: &Path) -> Vec<PathBuf> {
    let mut files = vec![run_dir.join("config.toml"), run_dir.join("metrics.csv")];
    if let Ok(rows) = read_metrics_csv(&run_dir.join("metrics.csv")) {
        files.extend(
            rows.iter()
                .map(|m| run_dir.join(format!("round_{}", m.round)).join("scores.csv")),
        );
    }
    files
}

pub fn generate(run_dir: &Path) -> Result<ReportSummary> {
    let missing: Vec<String> = expected_files(run_dir)
        .into_iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::file(
            run_dir,
            format!("not a complete run directory; missing {}", missing.join(", ")),
        ));
    }
    let config_path = run_dir.join("config.toml");
    let text = fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
    let cfg = RunConfig::from_toml(&text).map_err(|e| Error::file(&config_path, e.to_string()))?;
    let schedule = cfg
        .schedule
        .build()
        .map_err(|e| Error::file(&config_path, e.to_string()))?;
    let metrics = read_metrics_csv(&run_dir.join("metrics.csv"))?;
    let mut rounds = Vec::new();
    for m in &metrics {
        let path = run_dir.join(format!("round_{}", m.round)).join("scores.csv");
        rounds.push((m.round, ScoreTable::read_csv(&path)?));
    }
    let agreement_path = run_dir.join("agreement.csv");
    let agreement = if agreement_path.is_file() {
        Some(read_tau_matrix(&agreement_path)?)
    } else {
        None
    };

    let _lock = RunLock::acquire(run_dir)?;
    let dir = run_dir.join("report");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = Vec::new();

    let p = dir.join("schedule.csv");
    write_schedule_csv(&p, &schedule)?;
    files.push(p);
    let p = dir.join("schedule.svg");
    plot_schedule(&p, &schedule)?;
    files.push(p);

    let p = dir.join("mi_histogram.csv");
    let hists = write_histograms(&p, &rounds)?;
    files.push(p);
    for (round, per_label) in &hists {
        let p = dir.join(format!("mi_histogram_round_{round}.svg"));
        plot_histograms(&p, *round, per_label)?;
        files.push(p);
    }

    let p = dir.join("alignment.csv");
    write_alignment_csv(&p, &metrics)?;
    files.push(p);
    let p = dir.join("alignment.svg");
    plot_alignment(&p, &metrics)?;
    files.push(p);

    if let Some(matrix) = agreement {
        let p = dir.join("tau_matrix.csv");
        write_tau_csv(&p, &matrix)?;
        files.push(p);
        let p = dir.join("tau_matrix.svg");
        plot_tau(&p, &matrix)?;
        files.push(p);
    }
    Ok(ReportSummary { dir, files })
}

fn write_schedule_csv(path: &Path, s: &NoiseSchedule) -> Result<()> {
    let mut t = CsvTable::create(path, "schedule", &["t", "beta", "alpha_bar", "kappa"])?;
    for step in 1..=s.steps() {
        t.row(&[
            step.to_string(),
            s.beta(step).to_string(),
            s.alpha_bar(step).to_string(),
            s.kappa(step).to_string(),
        ])?;
    }
    t.finish()
}

fn plot_schedule(path: &Path, s: &NoiseSchedule) -> Result<()> {
    let e = |x| plot_err(path, x);
    let steps = s.steps() as f64;
    let root = SVGBackend::new(path, (960, 400)).into_drawing_area();
    root.fill(&WHITE).map_err(e)?;
    let (left, right) = root.split_horizontally(480);
    let mut chart = ChartBuilder::on(&left)
        .caption("alpha_bar_t", ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(32)
        .y_label_area_size(48)
        .build_cartesian_2d(1f64..steps, 0f64..1f64)
        .map_err(e)?;
    chart.configure_mesh().x_desc("t").draw().map_err(e)?;
    chart
        .draw_series(LineSeries::new((1..=s.steps()).map(|t| (t as f64, s.alpha_bar(t))), &BLUE))
        .map_err(e)?;

    let kappas: Vec<f64> = (1..=s.steps()).map(|t| s.kappa(t)).collect();
    let kmin = kappas.iter().cloned().fold(f64::INFINITY, f64::min);
    let kmax = kappas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut chart = ChartBuilder::on(&right)
        .caption("kappa_t (log scale)", ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(32)
        .y_label_area_size(56)
        .build_cartesian_2d(1f64..steps, (kmin * 0.9..kmax * 1.1).log_scale())
        .map_err(e)?;
    chart.configure_mesh().x_desc("t").draw().map_err(e)?;
    chart
        .draw_series(LineSeries::new(kappas.iter().enumerate().map(|(i, &k)| ((i + 1) as f64, k)), &RED))
        .map_err(e)?;
    root.present().map_err(e)
}

type RoundHistograms = Vec<(usize, Vec<(usize, Histogram)>)>;

fn write_histograms(path: &Path, rounds: &[(usize, ScoreTable)]) -> Result<RoundHistograms> {
    let mut t = CsvTable::create(path, "mi-histogram", &["round", "label", "bin", "lo", "hi", "count"])?;
    let mut out = Vec::new();
    for (round, table) in rounds {
        let generated: Vec<_> = table
            .rows
            .iter()
            .filter(|r| r.provenance == Provenance::Generated)
            .collect();
        let mut lo = generated.iter().map(|r| r.mi).fold(f64::INFINITY, f64::min);
        let mut hi = generated.iter().map(|r| r.mi).fold(f64::NEG_INFINITY, f64::max);
        if !(lo.is_finite() && hi.is_finite()) {
            (lo, hi) = (0.0, 1.0);
        } else if hi <= lo {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        let mut by_label: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &generated {
            by_label.entry(r.label).or_default().push(r.mi);
        }
        let mut per_label = Vec::new();
        for (label, values) in by_label {
            let h = Histogram::new(&values, lo, hi, HISTOGRAM_BINS);
            for (i, &c) in h.counts.iter().enumerate() {
                let (a, b) = h.edges(i);
                t.row(&[
                    round.to_string(),
                    label.to_string(),
                    i.to_string(),
                    a.to_string(),
                    b.to_string(),
                    c.to_string(),
                ])?;
            }
            per_label.push((label, h));
        }
        out.push((*round, per_label));
    }
    t.finish()?;
    Ok(out)
}

fn plot_histograms(path: &Path, round: usize, per_label: &[(usize, Histogram)]) -> Result<()> {
    let e = |x| plot_err(path, x);
    let n = per_label.len().max(1);
    let root = SVGBackend::new(path, (320 * n as u32, 320)).into_drawing_area();
    root.fill(&WHITE).map_err(e)?;
    let panels = root.split_evenly((1, n));
    for ((label, h), area) in per_label.iter().zip(&panels) {
        let top = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let mut chart = ChartBuilder::on(area)
            .caption(format!("round {round}, label {label}"), ("sans-serif", 16))
            .margin(10)
            .x_label_area_size(30)
            .y_label_area_size(40)
            .build_cartesian_2d(h.lo..h.hi, 0f64..top * 1.05)
            .map_err(e)?;
        chart.configure_mesh().x_desc("MI (nats)").draw().map_err(e)?;
        chart
            .draw_series(h.counts.iter().enumerate().map(|(i, &c)| {
                let (a, b) = h.edges(i);
                Rectangle::new([(a, 0.0), (b, c as f64)], Palette99::pick(*label).filled())
            }))
            .map_err(e)?;
    }
    root.present().map_err(e)
}

fn write_alignment_csv(path: &Path, metrics: &[RoundMetrics]) -> Result<()> {
    let mut t = CsvTable::create(
        path,
        "alignment",
        &["round", "alignment_pre", "alignment_pre_stderr", "alignment_post", "alignment_post_stderr"],
    )?;
    for m in metrics {
        t.row(&[
            m.round.to_string(),
            m.alignment_pre.fraction.to_string(),
            m.alignment_pre.stderr.to_string(),
            m.alignment_post.fraction.to_string(),
            m.alignment_post.stderr.to_string(),
        ])?;
    }
    t.finish()
}

fn plot_alignment(path: &Path, metrics: &[RoundMetrics]) -> Result<()> {
    let e = |x| plot_err(path, x);
    let root = SVGBackend::new(path, (640, 400)).into_drawing_area();
    root.fill(&WHITE).map_err(e)?;
    let n = metrics.len() as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption("alignment per round (blue: before, green: after)", ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(32)
        .y_label_area_size(48)
        .build_cartesian_2d(0.5f64..n + 0.5, 0f64..1f64)
        .map_err(e)?;
    chart
        .configure_mesh()
        .x_desc("round")
        .y_desc("alignment score")
        .draw()
        .map_err(e)?;
    for (i, m) in metrics.iter().enumerate() {
        let x = (i + 1) as f64;
        for (offset, a, color) in [(-0.35, m.alignment_pre, BLUE), (0.0, m.alignment_post, GREEN)] {
            let (x0, x1) = (x + offset, x + offset + 0.35);
            chart
                .draw_series([Rectangle::new([(x0, 0.0), (x1, a.fraction)], color.filled())])
                .map_err(e)?;
            let mid = (x0 + x1) / 2.0;
            chart
                .draw_series(LineSeries::new(
                    [(mid, a.fraction - a.stderr), (mid, a.fraction + a.stderr)],
                    &BLACK,
                ))
                .map_err(e)?;
        }
    }
    root.present().map_err(e)
}

/// Symmetric matrix of mean tau over [`Metric::ALL`].
pub type TauMatrix = [[f64; 4]; 4];

fn metric_index(m: Metric) -> usize {
    Metric::ALL.iter().position(|&x| x == m).expect("listed metric")
}

pub fn read_tau_matrix(path: &Path) -> Result<TauMatrix> {
    let data = CsvData::read(path)?;
    let first = data.column("first")?;
    let second = data.column("second")?;
    let tau = data.f64_column("mean_tau")?;
    let mut m = [[f64::NAN; 4]; 4];
    for (row, &v) in data.rows.iter().zip(&tau) {
        let parse = |s: &str| {
            Metric::from_name(s).ok_or_else(|| Error::file(path, format!("unknown metric '{s}'")))
        };
        let (a, b) = (metric_index(parse(&row[first])?), metric_index(parse(&row[second])?));
        m[a][b] = v;
        m[b][a] = v;
    }
    Ok(m)
}

fn write_tau_csv(path: &Path, m: &TauMatrix) -> Result<()> {
    let mut header = vec!["metric".to_string()];
    header.extend(Metric::ALL.iter().map(|x| x.name().to_string()));
    let mut t = CsvTable::create(path, "tau-matrix", &header)?;
    for (i, a) in Metric::ALL.iter().enumerate() {
        let mut row = vec![a.name().to_string()];
        row.extend(m[i].iter().map(|v| v.to_string()));
        t.row(&row)?;
    }
    t.finish()
}

fn plot_tau(path: &Path, m: &TauMatrix) -> Result<()> {
    let e = |x| plot_err(path, x);
    let root = SVGBackend::new(path, (520, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(e)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("mean Kendall tau", ("sans-serif", 18))
        .margin(12)
        .build_cartesian_2d(-1f64..4f64, -1f64..4f64)
        .map_err(e)?;
    // metric names in a left column and a bottom row
    for (k, m) in Metric::ALL.iter().enumerate() {
        chart
            .draw_series([
                Text::new(m.name().to_string(), (-0.95, (3 - k) as f64 + 0.55), ("sans-serif", 15)),
                Text::new(m.name().to_string(), (k as f64 + 0.1, -0.45), ("sans-serif", 15)),
            ])
            .map_err(e)?;
    }
    for i in 0..4 {
        for j in 0..4 {
            let v = m[i][j];
            let color = if v.is_nan() {
                RGBColor(200, 200, 200)
            } else {
                // blue for -1, white for 0, red for 1
                let a = v.clamp(-1.0, 1.0);
                let fade = |c: f64| (255.0 * (1.0 - a.abs()) + c * a.abs()) as u8;
                if a >= 0.0 {
                    RGBColor(fade(220.0), fade(40.0), fade(40.0))
                } else {
                    RGBColor(fade(40.0), fade(70.0), fade(220.0))
                }
            };
            let (x, y) = (j as f64, (3 - i) as f64);
            chart
                .draw_series([Rectangle::new([(x, y), (x + 1.0, y + 1.0)], color.filled())])
                .map_err(e)?;
            chart
                .draw_series([Text::new(
                    if v.is_nan() { "-".to_string() } else { format!("{v:.2}") },
                    (x + 0.35, y + 0.55),
                    ("sans-serif", 16),
                )])
                .map_err(e)?;
        }
    }
    root.present().map_err(e)
}
