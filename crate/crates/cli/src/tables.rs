//! CSV schemas shared by the commands and the report.

use std::collections::HashMap;
use std::path::Path;

use jamloc::train::{MetricsReport, MetricsSummary, PositionRecord, SweepRow, RowKind};

use crate::{CliError, CliResult};

pub const METRIC_NAMES: [&str; 9] = [
    "mae_x",
    "mae_y",
    "mae_z",
    "delta_d",
    "mean_euclidean",
    "azimuth_mae",
    "elevation_mae",
    "accuracy_classes",
    "accuracy_subclasses",
];

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metric_header() -> impl Iterator<Item = String> {
    METRIC_NAMES
        .iter()
        .map(|n| n.to_string())
        .chain(METRIC_NAMES.iter().map(|n| format!("{n}_std")))
}

fn report_cells(r: &MetricsReport) -> Vec<String> {
    let mut v: Vec<String> = r.fields().into_iter().map(|(_, x)| num(x)).collect();
    v.extend(std::iter::repeat_n(String::new(), METRIC_NAMES.len()));
    v
}

fn summary_cells(s: &MetricsSummary) -> Vec<String> {
    let mut v: Vec<String> = s.mean.iter().map(|(_, x)| num(*x)).collect();
    v.extend(s.std.iter().map(|(_, x)| num(*x)));
    v
}

fn writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

/// One metrics.csv row: a single run or the mean/std over several runs.
pub enum MetricsEntry<'a> {
    Run { tag: &'a str, seed: Option<u64>, report: &'a MetricsReport },
    Summary { tag: &'a str, n: usize, summary: &'a MetricsSummary },
}

/// `row,tag,seed,runs,n,<metrics>,<metrics>_std`
pub fn write_metrics(path: &Path, rows: &[MetricsEntry]) -> CliResult<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = ["row", "tag", "seed", "runs", "n"].iter().map(|s| s.to_string()).collect();
    header.extend(metric_header());
    w.write_record(&header)?;
    for row in rows {
        let rec = match row {
            MetricsEntry::Run { tag, seed, report } => {
                let mut r = vec!["run".into(), tag.to_string(), seed.map(|s| s.to_string()).unwrap_or_default(), "1".into(), report.n.to_string()];
                r.extend(report_cells(report));
                r
            }
            MetricsEntry::Summary { tag, n, summary } => {
                let mut r = vec!["summary".into(), tag.to_string(), String::new(), summary.runs.to_string(), n.to_string()];
                r.extend(summary_cells(summary));
                r
            }
        };
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::Io { path: path.into(), source: e })?;
    Ok(())
}

/// `row,gamma,p_pre,p_post,seed,runs,n,<metrics>,<metrics>_std`
pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> CliResult<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = ["row", "gamma", "p_pre", "p_post", "seed", "runs", "n"].iter().map(|s| s.to_string()).collect();
    header.extend(metric_header());
    w.write_record(&header)?;
    let mut last_n = 0;
    for row in rows {
        let c = row.cell;
        let cell = [c.gamma.to_string(), c.p_pre.to_string(), c.p_post.to_string()];
        let rec: Vec<String> = match &row.kind {
            RowKind::Run { seed, report } => {
                last_n = report.n;
                let mut r = vec!["run".to_string()];
                r.extend(cell);
                r.extend([seed.to_string(), "1".into(), report.n.to_string()]);
                r.extend(report_cells(report));
                r
            }
            RowKind::Summary(s) => {
                let mut r = vec!["summary".to_string()];
                r.extend(cell);
                r.extend([String::new(), s.runs.to_string(), last_n.to_string()]);
                r.extend(summary_cells(s));
                r
            }
        };
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::Io { path: path.into(), source: e })?;
    Ok(())
}

/// One confusion matrix in long form.
pub struct Confusion<'a> {
    pub seed: Option<u64>,
    pub level: &'a str,
    pub matrix: &'a [Vec<u64>],
}

/// `seed,level,truth,predicted,count`, one row per matrix cell.
pub fn write_confusion(path: &Path, mats: &[Confusion]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["seed", "level", "truth", "predicted", "count"])?;
    for m in mats {
        let seed = m.seed.map(|s| s.to_string()).unwrap_or_default();
        for (t, row) in m.matrix.iter().enumerate() {
            for (p, count) in row.iter().enumerate() {
                w.write_record([seed.clone(), m.level.to_string(), t.to_string(), p.to_string(), count.to_string()])?;
            }
        }
    }
    w.flush().map_err(|e| CliError::Io { path: path.into(), source: e })?;
    Ok(())
}

/// `seed,tag,dx,dy,dz,azimuth_error`
pub fn write_positions(path: &Path, rows: &[(Option<u64>, &PositionRecord)]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["seed", "tag", "dx", "dy", "dz", "azimuth_error"])?;
    for (seed, p) in rows {
        w.write_record([
            seed.map(|s| s.to_string()).unwrap_or_default(),
            p.tag.clone(),
            p.dx.to_string(),
            p.dy.to_string(),
            p.dz.to_string(),
            p.azimuth_error.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::Io { path: path.into(), source: e })?;
    Ok(())
}

/// A CSV file as header-keyed string maps, in file order.
pub fn read_rows(path: &Path) -> CliResult<Vec<HashMap<String, String>>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(header.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect());
    }
    Ok(out)
}
