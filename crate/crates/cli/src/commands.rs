use std::fs;
use std::path::{Path, PathBuf};

use jamloc::config::{Preset, RunConfig, Scale, SweepGrid};
use jamloc::dataset_io::{read_dataset, read_features, write_dataset, write_features};
use jamloc::dsp::{featurize_with, FeatureBundle};
use jamloc::model::{ModelConfig, TrainedModel};
use jamloc::sigsim::{make_dataset, RANDOM_TAG};
use jamloc::train::{
    confusion_matrix, dropout_grid, full_grid, gamma_grid, scenario_eval, sweep as run_sweep, tags_of, train_seeds,
    MetricsSummary,
};
use rayon::prelude::*;

use crate::tables::{write_confusion, write_metrics, write_positions, write_sweep, Confusion, MetricsEntry};
use crate::{CliError, CliResult, GridArg};

pub const CONFIG_FILE: &str = "config.toml";
pub const TRAIN_DATA: &str = "train.gjld";
pub const TEST_DATA: &str = "test.gjld";
pub const TRAIN_FEATURES: &str = "train.feat";
pub const TEST_FEATURES: &str = "test.feat";

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub seed: Option<u64>,
    pub overwrite: bool,
    pub scale: Scale,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn require(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingPath(path.to_path_buf()))
    }
}

/// Creates `dir`, refusing to reuse a non-empty one unless `overwrite`.
pub fn prepare_out(dir: &Path, overwrite: bool) -> CliResult<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(io_err(dir))?;
        if entries.next().is_some() && !overwrite {
            return Err(CliError::OutputExists(dir.to_path_buf()));
        }
    }
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Loads `explicit`, else the configuration stored next to the inputs, else
/// the localization preset. `--seed` wins over the file.
pub fn load_config(opts: &Options, explicit: Option<&Path>, inputs: Option<&Path>) -> CliResult<RunConfig> {
    let stored = inputs.map(|d| d.join(CONFIG_FILE)).filter(|p| p.exists());
    let mut cfg = match explicit.map(Path::to_path_buf).or(stored) {
        Some(path) => {
            require(&path)?;
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            RunConfig::from_toml(&text, opts.scale)?
        }
        None => RunConfig::preset(Preset::Localization, opts.scale),
    };
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn echo_config(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let path = out.join(CONFIG_FILE);
    fs::write(&path, cfg.to_toml()?).map_err(io_err(&path))
}

fn load_features(dir: &Path, name: &str) -> CliResult<Vec<FeatureBundle>> {
    let path = dir.join(name);
    require(&path)?;
    Ok(read_features(&path)?)
}

pub fn simulate(opts: &Options, config: Option<&Path>, out: &Path) -> CliResult<()> {
    let cfg = load_config(opts, config, None)?;
    prepare_out(out, opts.overwrite)?;
    let ds = make_dataset(&cfg.sim, cfg.seed)?;
    write_dataset(out.join(TRAIN_DATA), &ds.train, cfg.sim.sample_rate)?;
    write_dataset(out.join(TEST_DATA), &ds.test, cfg.sim.sample_rate)?;
    echo_config(&cfg, out)?;
    log::info!("simulated {} train and {} test snapshots into {}", ds.train.len(), ds.test.len(), out.display());
    Ok(())
}

pub fn featurize(opts: &Options, data: &Path, config: Option<&Path>, out: &Path) -> CliResult<()> {
    require(data)?;
    let cfg = load_config(opts, config, Some(data))?;
    let mut splits = Vec::new();
    for name in [TRAIN_DATA, TEST_DATA] {
        let path = data.join(name);
        require(&path)?;
        let (_, snaps) = read_dataset(&path)?;
        let feats = snaps
            .par_iter()
            .map(|s| featurize_with(s, &cfg.features))
            .collect::<jamloc::Result<Vec<_>>>()?;
        splits.push(feats);
    }
    prepare_out(out, opts.overwrite)?;
    write_features(out.join(TRAIN_FEATURES), &splits[0])?;
    write_features(out.join(TEST_FEATURES), &splits[1])?;
    echo_config(&cfg, out)?;
    log::info!("featurized {} + {} snapshots into {}", splits[0].len(), splits[1].len(), out.display());
    Ok(())
}

/// Random-tagged test items, the split used for checkpoint selection.
fn selection_split(test: &[FeatureBundle]) -> CliResult<Vec<&FeatureBundle>> {
    let sel: Vec<&FeatureBundle> = test.iter().filter(|b| b.scenario_tag == RANDOM_TAG).collect();
    if sel.is_empty() {
        return Err(CliError::Usage(format!("test split has no {RANDOM_TAG:?} snapshots for checkpoint selection")));
    }
    Ok(sel)
}

pub fn checkpoint_name(seed: u64) -> String {
    format!("model_seed{seed}.gjw")
}

pub fn train(opts: &Options, data: &Path, config: Option<&Path>, out: &Path) -> CliResult<()> {
    require(data)?;
    let cfg = load_config(opts, config, Some(data))?;
    let train_set = load_features(data, TRAIN_FEATURES)?;
    let test = load_features(data, TEST_FEATURES)?;
    let select = selection_split(&test)?;
    prepare_out(out, opts.overwrite)?;
    let outcome = train_seeds(&cfg.model, &train_set, &select, &cfg.train, cfg.seed)?;

    let mut history = csv::Writer::from_path(out.join("history.csv"))?;
    history.write_record(["seed", "epoch", "train_loss", "delta_d", "azimuth_mae", "elevation_mae", "accuracy_classes"])?;
    let mut rows = Vec::new();
    for run in &outcome.runs {
        let seed = run.model.train_seed.unwrap_or_default();
        run.model.save(out.join(checkpoint_name(seed)))?;
        for h in &run.history {
            let t = h.test.as_ref();
            let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            history.write_record([
                seed.to_string(),
                h.epoch.to_string(),
                h.train_loss.to_string(),
                f(t.map(|r| r.delta_d)),
                f(t.map(|r| r.azimuth_mae)),
                f(t.map(|r| r.elevation_mae)),
                f(t.and_then(|r| r.accuracy_classes)),
            ])?;
        }
        rows.push(MetricsEntry::Run { tag: RANDOM_TAG, seed: Some(seed), report: &run.report });
    }
    history.flush().map_err(io_err(out))?;
    let n = outcome.runs[0].report.n;
    rows.push(MetricsEntry::Summary { tag: RANDOM_TAG, n, summary: &outcome.summary });
    write_metrics(&out.join("metrics.csv"), &rows)?;
    echo_config(&cfg, out)?;
    log::info!(
        "trained {} seed(s): azimuth {:.3} deg, delta_d {:.3} m (mean)",
        outcome.runs.len(),
        outcome.summary.mean_of("azimuth_mae").unwrap_or(f64::NAN),
        outcome.summary.mean_of("delta_d").unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn eval(opts: &Options, checkpoints: &[PathBuf], data: &Path, tags: &[String], out: &Path) -> CliResult<()> {
    require(data)?;
    let test = load_features(data, TEST_FEATURES)?;
    let models = checkpoints
        .iter()
        .map(|p| {
            require(p)?;
            Ok(TrainedModel::load(p)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let only = if tags.is_empty() { None } else { Some(tags) };
    let evals = models
        .iter()
        .map(|m| scenario_eval(m, &test, only))
        .collect::<jamloc::Result<Vec<_>>>()?;
    prepare_out(out, opts.overwrite)?;

    let mut rows = Vec::new();
    for (m, e) in models.iter().zip(&evals) {
        for (tag, report) in &e.reports {
            rows.push(MetricsEntry::Run { tag, seed: m.train_seed, report });
        }
    }
    let tag_order: Vec<String> = match only {
        Some(t) => t.to_vec(),
        None => tags_of(&test),
    };
    let mut summaries = Vec::new();
    if models.len() > 1 {
        for tag in &tag_order {
            let reports: Vec<_> = evals
                .iter()
                .filter_map(|e| e.reports.iter().find(|(t, _)| t == tag).map(|(_, r)| r.clone()))
                .collect();
            summaries.push((tag.as_str(), reports[0].n, MetricsSummary::of(&reports)?));
        }
    }
    for (tag, n, summary) in &summaries {
        rows.push(MetricsEntry::Summary { tag, n: *n, summary });
    }
    write_metrics(&out.join("metrics.csv"), &rows)?;

    let positions: Vec<_> = models
        .iter()
        .zip(&evals)
        .flat_map(|(m, e)| e.positions.iter().map(move |p| (m.train_seed, p)))
        .collect();
    write_positions(&out.join("per_position.csv"), &positions)?;

    let items: Vec<&FeatureBundle> = test.iter().filter(|b| tag_order.contains(&b.scenario_tag)).collect();
    let mut mats = Vec::new();
    for m in &models {
        let preds = m.predict(&items, 256)?;
        let levels = [
            ("class", preds.iter().map(|p| p.class()).collect::<Option<Vec<_>>>(), m.class_count()),
            ("subclass", preds.iter().map(|p| p.subclass()).collect::<Option<Vec<_>>>(), m.subclass_count()),
        ];
        for (level, predicted, n) in levels {
            if let (Some(predicted), Some(n)) = (predicted, n) {
                let truth: Vec<usize> = items
                    .iter()
                    .map(|b| if level == "class" { b.label.class as usize } else { b.label.subclass as usize })
                    .collect();
                mats.push((m.train_seed, level, confusion_matrix(&predicted, &truth, n)?));
            }
        }
    }
    if !mats.is_empty() {
        let conf: Vec<Confusion> = mats.iter().map(|(seed, level, m)| Confusion { seed: *seed, level, matrix: m }).collect();
        write_confusion(&out.join("confusion.csv"), &conf)?;
    }
    log::info!("evaluated {} checkpoint(s) on {} tag(s)", models.len(), tag_order.len());
    Ok(())
}

pub fn sweep(opts: &Options, data: &Path, config: Option<&Path>, grid: Option<GridArg>, out: &Path) -> CliResult<()> {
    require(data)?;
    let cfg = load_config(opts, config, Some(data))?;
    let ModelConfig::Fusion(fusion) = &cfg.model else {
        return Err(CliError::Usage("sweep needs model.kind = \"fusion\"".into()));
    };
    let grid = match grid {
        Some(GridArg::Gamma) => SweepGrid::Gamma,
        Some(GridArg::Dropout) => SweepGrid::Dropout,
        Some(GridArg::Full) => SweepGrid::Full,
        None => cfg.sweep.grid,
    };
    let cells = match grid {
        SweepGrid::Gamma => gamma_grid(&cfg.train, fusion.dropout_pre_concat, fusion.dropout_post_head),
        SweepGrid::Dropout => dropout_grid(&cfg.train, cfg.train.gamma),
        SweepGrid::Full => full_grid(&cfg.train),
    };
    let train_set = load_features(data, TRAIN_FEATURES)?;
    let test = load_features(data, TEST_FEATURES)?;
    let select = selection_split(&test)?;
    prepare_out(out, opts.overwrite)?;
    let result = run_sweep(&cfg.model, &train_set, &select, &cfg.train, &cells, &cfg.sweep.objective, cfg.seed)?;
    write_sweep(&out.join("sweep.csv"), &result.rows)?;
    let best = out.join("best.toml");
    let b = result.best;
    fs::write(&best, format!("gamma = {}\np_pre = {}\np_post = {}\n", b.gamma, b.p_pre, b.p_post)).map_err(io_err(&best))?;
    echo_config(&cfg, out)?;
    log::info!("sweep over {} cells: best gamma={} p_pre={} p_post={}", cells.len(), b.gamma, b.p_pre, b.p_post);
    Ok(())
}
