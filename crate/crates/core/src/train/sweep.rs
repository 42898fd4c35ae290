use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{MetricsReport, MetricsSummary};
use super::trainer::{run_seed, train, TrainConfig};
use crate::dsp::features::FeatureBundle;
use crate::error::{invalid, Result};
use crate::model::ModelConfig;

/// One hyper-parameter combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub gamma: f64,
    pub p_pre: f64,
    pub p_post: f64,
}

/// Grid over `gamma` with the model's dropout left as configured.
pub fn gamma_grid(cfg: &TrainConfig, p_pre: f64, p_post: f64) -> Vec<SweepCell> {
    cfg.gammas.iter().map(|&gamma| SweepCell { gamma, p_pre, p_post }).collect()
}

/// Every dropout rate applied either before concatenation or after the
/// head's hidden layer, at a fixed `gamma`.
pub fn dropout_grid(cfg: &TrainConfig, gamma: f64) -> Vec<SweepCell> {
    let pre = cfg.dropout_rates.iter().map(|&p| SweepCell { gamma, p_pre: p, p_post: 0.0 });
    let post = cfg.dropout_rates.iter().map(|&p| SweepCell { gamma, p_pre: 0.0, p_post: p });
    pre.chain(post).collect()
}

/// Cross product of the gamma grid and the dropout grid.
pub fn full_grid(cfg: &TrainConfig) -> Vec<SweepCell> {
    cfg.gammas.iter().flat_map(|&g| dropout_grid(cfg, g)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RowKind {
    Run { seed: u64, report: MetricsReport },
    Summary(MetricsSummary),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub kind: RowKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Per cell: one row per seed followed by its summary row.
    pub rows: Vec<SweepRow>,
    pub best: SweepCell,
}

/// Index of the cell with the smallest objective; ties go to the smaller
/// gamma, then the smaller total dropout, then the smaller pre-concat rate.
pub fn best_cell(cells: &[SweepCell], objective: &[f64]) -> Result<usize> {
    if cells.is_empty() || cells.len() != objective.len() {
        return invalid("best_cell needs one objective value per cell");
    }
    let key = |i: usize| (objective[i], cells[i].gamma, cells[i].p_pre + cells[i].p_post, cells[i].p_pre);
    let mut best = 0;
    for i in 1..cells.len() {
        let (a, b) = (key(i), key(best));
        let less = a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
            .then(a.3.total_cmp(&b.3))
            .is_lt();
        if less {
            best = i;
        }
    }
    Ok(best)
}

/// Trains `n_seeds` fusion models per cell. `objective` names a metric
/// column (e.g. `delta_d`, `azimuth_mae`) whose seed-mean picks the best cell.
pub fn sweep(
    model_cfg: &ModelConfig,
    train_set: &[FeatureBundle],
    select: &[&FeatureBundle],
    tcfg: &TrainConfig,
    cells: &[SweepCell],
    objective: &str,
    seed: u64,
) -> Result<SweepResult> {
    if cells.is_empty() {
        return invalid("sweep grid is empty");
    }
    let ModelConfig::Fusion(base) = model_cfg else {
        return invalid("the gamma/dropout sweep applies to the fusion model");
    };
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..tcfg.n_seeds).map(move |k| (c, k))).collect();
    let reports = jobs
        .par_iter()
        .map(|&(c, k)| {
            let cell = cells[c];
            let mut m = base.clone();
            m.dropout_pre_concat = cell.p_pre;
            m.dropout_post_head = cell.p_post;
            let t = TrainConfig { gamma: cell.gamma, ..tcfg.clone() };
            let s = run_seed(seed, k);
            log::info!("sweep cell {c} gamma={} p_pre={} p_post={} seed={s}", cell.gamma, cell.p_pre, cell.p_post);
            train(&ModelConfig::Fusion(m), train_set, select, &t, s).map(|o| (s, o.report))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut scores = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        let runs: Vec<&(u64, MetricsReport)> = jobs.iter().zip(&reports).filter(|(j, _)| j.0 == c).map(|(_, r)| r).collect();
        for (s, r) in &runs {
            rows.push(SweepRow { cell: *cell, kind: RowKind::Run { seed: *s, report: r.clone() } });
        }
        let summary = MetricsSummary::of(&runs.iter().map(|r| r.1.clone()).collect::<Vec<_>>())?;
        let score = summary
            .mean_of(objective)
            .ok_or_else(|| crate::error::Error::Config(format!("unknown sweep objective {objective}")))?;
        scores.push(score);
        rows.push(SweepRow { cell: *cell, kind: RowKind::Summary(summary) });
    }
    let best = cells[best_cell(cells, &scores)?];
    Ok(SweepResult { rows, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let cfg = TrainConfig::default();
        assert_eq!(gamma_grid(&cfg, 0.5, 0.0).len(), 6);
        assert_eq!(dropout_grid(&cfg, 1.0).len(), 6);
        assert_eq!(full_grid(&cfg).len(), 36);
    }

    #[test]
    fn ties_prefer_small_gamma_then_small_dropout() {
        let c = |gamma, p_pre, p_post| SweepCell { gamma, p_pre, p_post };
        let cells = [c(1.0, 0.1, 0.0), c(0.1, 0.3, 0.0), c(0.1, 0.1, 0.0), c(0.1, 0.0, 0.1)];
        assert_eq!(best_cell(&cells, &[1.0, 1.0, 1.0, 1.0]).unwrap(), 3);
        assert_eq!(best_cell(&cells, &[0.5, 1.0, 1.0, 1.0]).unwrap(), 0);
        assert!(best_cell(&cells, &[1.0]).is_err());
    }
}
