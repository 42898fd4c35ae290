use serde::{Deserialize, Serialize};

use super::metrics::{angular_mae, MetricsReport};
use crate::dsp::features::FeatureBundle;
use crate::error::{invalid, Result};
use crate::model::TrainedModel;

/// Azimuth error of one test pose, for spatial error maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionRecord {
    pub tag: String,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub azimuth_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEval {
    /// One report per tag, in order of first appearance.
    pub reports: Vec<(String, MetricsReport)>,
    pub positions: Vec<PositionRecord>,
}

/// Tags in order of first appearance.
pub fn tags_of(items: &[FeatureBundle]) -> Vec<String> {
    let mut tags: Vec<String> = Vec::new();
    for b in items {
        if !tags.contains(&b.scenario_tag) {
            tags.push(b.scenario_tag.clone());
        }
    }
    tags
}

/// Per-tag metrics. `only` restricts the evaluation to the listed tags, each
/// of which must occur in `items`.
pub fn scenario_eval(model: &TrainedModel, items: &[FeatureBundle], only: Option<&[String]>) -> Result<ScenarioEval> {
    let present = tags_of(items);
    let tags: Vec<String> = match only {
        Some(list) => {
            for t in list {
                if !present.contains(t) {
                    return invalid(format!("unknown scenario tag {t:?}"));
                }
            }
            list.to_vec()
        }
        None => present,
    };
    let mut reports = Vec::new();
    let mut positions = Vec::new();
    for tag in tags {
        let subset: Vec<&FeatureBundle> = items.iter().filter(|b| b.scenario_tag == tag).collect();
        let preds = model.predict(&subset, 256)?;
        let labels: Vec<_> = subset.iter().map(|b| b.label).collect();
        for (p, l) in preds.iter().zip(&labels) {
            positions.push(PositionRecord {
                tag: tag.clone(),
                dx: l.disp[0],
                dy: l.disp[1],
                dz: l.disp[2],
                azimuth_error: angular_mae(&[p.alpha_deg], &[l.alpha_deg], 360.0)?,
            });
        }
        reports.push((tag, MetricsReport::compute(&preds, &labels)?));
    }
    Ok(ScenarioEval { reports, positions })
}
