use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::Prediction;
use crate::sigsim::Label;

/// Mean wrapped absolute difference `min(|d|, period - |d|)`.
pub fn angular_mae(pred_deg: &[f64], true_deg: &[f64], period: f64) -> Result<f64> {
    if pred_deg.is_empty() || pred_deg.len() != true_deg.len() {
        return invalid("angular_mae needs equally long, non-empty inputs");
    }
    let s: f64 = pred_deg
        .iter()
        .zip(true_deg)
        .map(|(p, t)| {
            let d = (p - t).rem_euclid(period);
            d.min(period - d)
        })
        .sum();
    Ok(s / pred_deg.len() as f64)
}

/// Plain mean absolute difference.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return invalid("mae needs equally long, non-empty inputs");
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Aggregate distance error as the norm of the per-axis MAEs.
pub fn dist_error(mae_x: f64, mae_y: f64, mae_z: f64) -> f64 {
    (mae_x * mae_x + mae_y * mae_y + mae_z * mae_z).sqrt()
}

/// `m[truth][pred]` counts.
pub fn confusion_matrix(preds: &[usize], truths: &[usize], n: usize) -> Result<Vec<Vec<u64>>> {
    if preds.len() != truths.len() {
        return invalid("confusion_matrix inputs differ in length");
    }
    let mut m = vec![vec![0u64; n]; n];
    for (&p, &t) in preds.iter().zip(truths) {
        if p >= n || t >= n {
            return invalid(format!("class id {} outside [0, {n})", p.max(t)));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Trace over total, in percent.
pub fn accuracy(m: &[Vec<u64>]) -> f64 {
    let total: u64 = m.iter().flatten().sum();
    let diag: u64 = (0..m.len()).map(|i| m[i][i]).sum();
    if total == 0 {
        0.0
    } else {
        100.0 * diag as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub mae_x: f64,
    pub mae_y: f64,
    pub mae_z: f64,
    pub delta_d: f64,
    /// Mean per-sample Euclidean error, reported alongside `delta_d`.
    pub mean_euclidean: f64,
    pub azimuth_mae: f64,
    pub elevation_mae: f64,
    pub accuracy_classes: Option<f64>,
    pub accuracy_subclasses: Option<f64>,
}

impl MetricsReport {
    pub fn compute(preds: &[Prediction], labels: &[Label]) -> Result<Self> {
        if preds.is_empty() || preds.len() != labels.len() {
            return invalid("metrics need equally long, non-empty predictions and labels");
        }
        let axis = |i: usize| -> Result<f64> {
            let p: Vec<f64> = preds.iter().map(|p| p.disp[i]).collect();
            let t: Vec<f64> = labels.iter().map(|l| l.disp[i]).collect();
            mae(&p, &t)
        };
        let (mae_x, mae_y, mae_z) = (axis(0)?, axis(1)?, axis(2)?);
        let mean_euclidean = preds
            .iter()
            .zip(labels)
            .map(|(p, l)| (0..3).map(|i| (p.disp[i] - l.disp[i]).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / preds.len() as f64;
        let pa: Vec<f64> = preds.iter().map(|p| p.alpha_deg).collect();
        let ta: Vec<f64> = labels.iter().map(|l| l.alpha_deg).collect();
        let pb: Vec<f64> = preds.iter().map(|p| p.beta_deg).collect();
        let tb: Vec<f64> = labels.iter().map(|l| l.beta_deg).collect();
        let acc = |get: &dyn Fn(&Prediction) -> Option<usize>, truth: &dyn Fn(&Label) -> u32| -> Option<f64> {
            let p: Option<Vec<usize>> = preds.iter().map(get).collect();
            p.map(|p| {
                let hits = p.iter().zip(labels).filter(|(a, l)| **a == truth(l) as usize).count();
                100.0 * hits as f64 / p.len() as f64
            })
        };
        Ok(MetricsReport {
            n: preds.len(),
            mae_x,
            mae_y,
            mae_z,
            delta_d: dist_error(mae_x, mae_y, mae_z),
            mean_euclidean,
            azimuth_mae: angular_mae(&pa, &ta, 360.0)?,
            elevation_mae: mae(&pb, &tb)?,
            accuracy_classes: acc(&|p| p.class(), &|l| l.class),
            accuracy_subclasses: acc(&|p| p.subclass(), &|l| l.subclass),
        })
    }

    /// Named scalar fields, in CSV column order.
    pub fn fields(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("mae_x", Some(self.mae_x)),
            ("mae_y", Some(self.mae_y)),
            ("mae_z", Some(self.mae_z)),
            ("delta_d", Some(self.delta_d)),
            ("mean_euclidean", Some(self.mean_euclidean)),
            ("azimuth_mae", Some(self.azimuth_mae)),
            ("elevation_mae", Some(self.elevation_mae)),
            ("accuracy_classes", self.accuracy_classes),
            ("accuracy_subclasses", self.accuracy_subclasses),
        ]
    }
}

/// Mean and population std of each metric over several runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub runs: usize,
    pub mean: Vec<(String, Option<f64>)>,
    pub std: Vec<(String, Option<f64>)>,
}

impl MetricsSummary {
    pub fn of(reports: &[MetricsReport]) -> Result<Self> {
        if reports.is_empty() {
            return invalid("cannot summarize zero runs");
        }
        let names: Vec<&str> = reports[0].fields().iter().map(|f| f.0).collect();
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for (k, name) in names.iter().enumerate() {
            let vals: Option<Vec<f64>> = reports.iter().map(|r| r.fields()[k].1).collect();
            match vals {
                Some(v) => {
                    let m = v.iter().sum::<f64>() / v.len() as f64;
                    let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
                    mean.push((name.to_string(), Some(m)));
                    std.push((name.to_string(), Some(s)));
                }
                None => {
                    mean.push((name.to_string(), None));
                    std.push((name.to_string(), None));
                }
            }
        }
        Ok(MetricsSummary { runs: reports.len(), mean, std })
    }

    pub fn mean_of(&self, name: &str) -> Option<f64> {
        self.mean.iter().find(|(n, _)| n == name).and_then(|(_, v)| *v)
    }

    pub fn std_of(&self, name: &str) -> Option<f64> {
        self.std.iter().find(|(n, _)| n == name).and_then(|(_, v)| *v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraparound() {
        assert_eq!(angular_mae(&[179.0], &[-179.0], 360.0).unwrap(), 2.0);
        assert_eq!(angular_mae(&[10.0], &[10.0], 360.0).unwrap(), 0.0);
        assert!(angular_mae(&[], &[], 360.0).is_err());
    }

    #[test]
    fn confusion_rows_and_range() {
        let m = confusion_matrix(&[0, 1, 1, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(m, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 1, 1]]);
        assert_eq!(accuracy(&m), 75.0);
        assert!(confusion_matrix(&[3], &[0], 3).is_err());
    }

    #[test]
    fn zero_distance_error() {
        assert_eq!(dist_error(0.0, 0.0, 0.0), 0.0);
    }
}
