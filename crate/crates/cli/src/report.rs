//! Markdown summary of run directories.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::commands::Options;
use crate::tables::read_rows;
use crate::{CliError, CliResult};

type Row = HashMap<String, String>;

const COLUMNS: [(&str, &str); 8] = [
    ("mae_x", "x [m]"),
    ("mae_y", "y [m]"),
    ("mae_z", "z [m]"),
    ("delta_d", "Δd [m]"),
    ("azimuth_mae", "α [°]"),
    ("elevation_mae", "β [°]"),
    ("accuracy_classes", "class acc [%]"),
    ("accuracy_subclasses", "subclass acc [%]"),
];

fn cell(row: &Row, name: &str) -> String {
    let get = |k: &str| row.get(k).and_then(|v| v.parse::<f64>().ok());
    match (get(name), get(&format!("{name}_std"))) {
        (Some(m), Some(s)) => format!("{m:.3} ± {s:.3}"),
        (Some(m), None) => format!("{m:.3}"),
        _ => "–".into(),
    }
}

fn header(out: &mut String, first: &str, extra: &[&str]) {
    let names: Vec<&str> = std::iter::once(first).chain(extra.iter().copied()).chain(COLUMNS.iter().map(|c| c.1)).collect();
    let _ = writeln!(out, "| {} |", names.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(names.len()));
}

fn metric_cells(row: &Row) -> String {
    COLUMNS.iter().map(|(k, _)| cell(row, k)).collect::<Vec<_>>().join(" | ")
}

/// The summary row for `tag` if present, else its first run row.
fn pick<'a>(rows: &'a [Row], tag: &str) -> Option<&'a Row> {
    let of_tag = |kind: &str| rows.iter().find(|r| r["tag"] == tag && r["row"] == kind);
    of_tag("summary").or_else(|| of_tag("run"))
}

fn tags_in(rows: &[Row]) -> Vec<String> {
    let mut tags: Vec<String> = Vec::new();
    for r in rows {
        if !tags.contains(&r["tag"]) {
            tags.push(r["tag"].clone());
        }
    }
    tags
}

fn run_label(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string())
}

fn models_table(out: &mut String, runs: &[(String, Vec<Row>)]) {
    let _ = writeln!(out, "## Models\n");
    header(out, "Run", &["Tag", "Seeds"]);
    for (label, rows) in runs {
        let tags = tags_in(rows);
        let tag = tags.iter().find(|t| *t == "Random").or(tags.first());
        if let Some(r) = tag.and_then(|t| pick(rows, t)) {
            let _ = writeln!(out, "| {label} | {} | {} | {} |", r["tag"], r["runs"], metric_cells(r));
        }
    }
    out.push('\n');
}

fn scenario_table(out: &mut String, label: &str, rows: &[Row]) {
    let _ = writeln!(out, "## Scenarios: {label}\n");
    header(out, "Scenario", &["Seeds", "n"]);
    for tag in tags_in(rows) {
        if let Some(r) = pick(rows, &tag) {
            let _ = writeln!(out, "| {tag} | {} | {} | {} |", r["runs"], r["n"], metric_cells(r));
        }
    }
    out.push('\n');
}

fn sweep_table(out: &mut String, label: &str, rows: &[Row], best: Option<(String, String, String)>) {
    let _ = writeln!(out, "## Sweep: {label}\n");
    header(out, "γ", &["p_pre", "p_post", "Seeds"]);
    for r in rows.iter().filter(|r| r["row"] == "summary") {
        let key = (r["gamma"].clone(), r["p_pre"].clone(), r["p_post"].clone());
        let mark = if best.as_ref() == Some(&key) { " (best)" } else { "" };
        let _ = writeln!(out, "| {}{mark} | {} | {} | {} | {} |", key.0, key.1, key.2, r["runs"], metric_cells(r));
    }
    out.push('\n');
}

fn confusion_tables(out: &mut String, label: &str, rows: &[Row]) -> CliResult<()> {
    let mut mats: BTreeMap<(String, String), BTreeMap<(usize, usize), u64>> = BTreeMap::new();
    for r in rows {
        let parse = |k: &str| r[k].parse::<u64>().map_err(|_| CliError::Usage(format!("confusion.csv: bad {k} {:?}", r[k])));
        mats.entry((r["level"].clone(), r["seed"].clone()))
            .or_default()
            .insert((parse("truth")? as usize, parse("predicted")? as usize), parse("count")?);
    }
    for ((level, seed), m) in mats {
        let n = m.keys().map(|k| k.0.max(k.1) + 1).max().unwrap_or(0);
        let _ = writeln!(out, "## Confusion ({level}, seed {seed}): {label}\n");
        let _ = writeln!(out, "| truth \\ pred | {} |", (0..n).map(|i| i.to_string()).collect::<Vec<_>>().join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(n + 1));
        for t in 0..n {
            let cells: Vec<String> = (0..n).map(|p| m.get(&(t, p)).copied().unwrap_or(0).to_string()).collect();
            let _ = writeln!(out, "| {t} | {} |", cells.join(" | "));
        }
        out.push('\n');
    }
    Ok(())
}

/// Mean azimuth error on a 1 m grid of (dx, dy), per seed and tag.
fn position_grid(rows: &[Row], path: &Path) -> CliResult<()> {
    let mut bins: BTreeMap<(String, String, i64, i64), (u64, f64)> = BTreeMap::new();
    for r in rows {
        let f = |k: &str| r[k].parse::<f64>().map_err(|_| CliError::Usage(format!("per_position.csv: bad {k} {:?}", r[k])));
        let key = (r["seed"].clone(), r["tag"].clone(), f("dx")?.floor() as i64, f("dy")?.floor() as i64);
        let e = bins.entry(key).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += f("azimuth_error")?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "tag", "dx_bin", "dy_bin", "count", "mean_azimuth_error"])?;
    for ((seed, tag, x, y), (count, sum)) in bins {
        w.write_record([seed, tag, x.to_string(), y.to_string(), count.to_string(), (sum / count as f64).to_string()])?;
    }
    w.flush().map_err(|source| CliError::Io { path: path.into(), source })?;
    Ok(())
}

fn read_best(dir: &Path) -> Option<(String, String, String)> {
    let text = fs::read_to_string(dir.join("best.toml")).ok()?;
    let table: toml::Table = toml::from_str(&text).ok()?;
    let get = |k: &str| table.get(k).and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64))).map(|v| v.to_string());
    Some((get("gamma")?, get("p_pre")?, get("p_post")?))
}

pub fn report(opts: &Options, runs: &[std::path::PathBuf], out: Option<&Path>) -> CliResult<()> {
    let mut text = String::from("# Run report\n\n");
    let mut metrics = Vec::new();
    let mut found = false;
    for dir in runs {
        if !dir.is_dir() {
            return Err(CliError::MissingPath(dir.clone()));
        }
        let label = run_label(dir);
        let m = dir.join("metrics.csv");
        if m.exists() {
            metrics.push((label.clone(), read_rows(&m)?));
        }
    }
    if !metrics.is_empty() {
        found = true;
        models_table(&mut text, &metrics);
        for (label, rows) in &metrics {
            if tags_in(rows).len() > 1 {
                scenario_table(&mut text, label, rows);
            }
        }
    }
    let out_dir = out.unwrap_or(&runs[0]);
    fs::create_dir_all(out_dir).map_err(|source| CliError::Io { path: out_dir.into(), source })?;
    let path = out_dir.join("report.md");
    if path.exists() && !opts.overwrite {
        return Err(CliError::OutputExists(path));
    }
    for dir in runs {
        let label = run_label(dir);
        let s = dir.join("sweep.csv");
        if s.exists() {
            found = true;
            sweep_table(&mut text, &label, &read_rows(&s)?, read_best(dir));
        }
        let c = dir.join("confusion.csv");
        if c.exists() {
            found = true;
            confusion_tables(&mut text, &label, &read_rows(&c)?)?;
        }
        let p = dir.join("per_position.csv");
        if p.exists() {
            found = true;
            let name = if runs.len() == 1 { "per_position_grid.csv".to_string() } else { format!("per_position_grid_{label}.csv") };
            position_grid(&read_rows(&p)?, &out_dir.join(&name))?;
            let _ = writeln!(text, "Per-position azimuth errors of {label} binned into `{name}`.\n");
        }
    }
    if !found {
        return Err(CliError::Usage("no metrics.csv, sweep.csv, confusion.csv or per_position.csv in the given runs".into()));
    }
    fs::write(&path, text).map_err(|source| CliError::Io { path: path.clone(), source })?;
    log::info!("wrote {}", path.display());
    Ok(())
}
