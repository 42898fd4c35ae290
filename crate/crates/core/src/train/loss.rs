use jamloc_nn::{Float, Graph, NodeId};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{Batch, DispNorm, Outputs, Prediction};
use crate::sigsim::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mse,
    L1,
}

/// How far past the tanh range (in units of 180 deg) a wrapped target may lie.
pub const SEAM_MARGIN: f64 = 1.0 / 36.0;

/// The representative of `alpha/180 + 2k`, `k in {-1, 0, 1}`, closest to
/// `pred_raw`, among those within `1 + SEAM_MARGIN` of zero. Targets further
/// out cannot be reached by the bounded head and would pin it at +-1.
pub fn circular_alpha_target(pred_raw: f64, alpha_deg: f64) -> f64 {
    let t = alpha_deg / 180.0;
    [t - 2.0, t, t + 2.0]
        .into_iter()
        .filter(|c| *c == t || c.abs() <= 1.0 + SEAM_MARGIN)
        .min_by(|a, b| (a - pred_raw).abs().total_cmp(&(b - pred_raw).abs()))
        .unwrap()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return invalid(format!("distance weight gamma must be positive, got {gamma}"));
    }
    Ok(())
}

/// Per-sample loss:
/// `gamma * mean_xyz((d - d*)^2) + (a0 - alpha*/180)^2 + (a1 - beta/90)^2 + CE terms`.
pub fn loss_value(pred: &Prediction, label: &Label, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let disp = (0..3).map(|i| (pred.disp[i] - label.disp[i]).powi(2)).sum::<f64>() / 3.0;
    let ta = circular_alpha_target(pred.angle_raw[0], label.alpha_deg);
    let angle = (pred.angle_raw[0] - ta).powi(2) + (pred.angle_raw[1] - label.beta_deg / 90.0).powi(2);
    let ce = |logits: &Option<Vec<f64>>, t: u32| {
        logits.as_ref().map_or(0.0, |l| {
            let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + l.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - l[t as usize]
        })
    };
    Ok(gamma * disp + angle + ce(&pred.class_logits, label.class) + ce(&pred.subclass_logits, label.subclass))
}

/// Scalar training loss on the graph, batch-averaged form of [`loss_value`].
/// The displacement head works in normalized units, so its term is weighted
/// by `scale^2` (`scale` for L1) to stay in metres.
pub fn loss_graph<T: Float>(
    g: &mut Graph<'_, T>,
    out: &Outputs,
    batch: &Batch<T>,
    disp_norm: &DispNorm,
    gamma: f64,
    kind: LossKind,
) -> Result<NodeId> {
    check_gamma(gamma)?;
    let s = disp_norm.scale;
    let disp_t: Vec<T> = batch
        .disp
        .chunks(3)
        .flat_map(|d| (0..3).map(move |i| T::from_f64((d[i] - disp_norm.offset[i]) / s)))
        .collect();
    let angle_now = g.value(out.angle).to_vec();
    let angle_t: Vec<T> = (0..batch.n)
        .flat_map(|i| {
            let a = circular_alpha_target(angle_now[2 * i].as_f64(), batch.alpha_deg[i]);
            [T::from_f64(a), T::from_f64(batch.beta_deg[i] / 90.0)]
        })
        .collect();
    let mut terms = match kind {
        LossKind::Mse => vec![
            g.mse(out.disp, disp_t, T::from_f64(gamma * s * s))?,
            g.mse(out.angle, angle_t, T::from_f64(2.0))?,
        ],
        LossKind::L1 => vec![
            g.l1(out.disp, disp_t, T::from_f64(gamma * s))?,
            g.l1(out.angle, angle_t, T::from_f64(2.0))?,
        ],
    };
    if let Some(c) = out.class {
        terms.push(g.cross_entropy(c, batch.class.clone(), T::one())?);
    }
    if let Some(c) = out.subclass {
        terms.push(g.cross_entropy(c, batch.subclass.clone(), T::one())?);
    }
    Ok(g.add_scalars(&terms)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps_to_nearest_representative() {
        let t = circular_alpha_target(0.99, -179.0);
        assert!((t - (2.0 - 179.0 / 180.0)).abs() < 1e-12);
        assert_eq!(circular_alpha_target(0.2, 36.0), 0.2);
        // Across the seam but out of reach: pull back through the interior.
        assert_eq!(circular_alpha_target(-0.99, 93.6), 93.6 / 180.0);
        assert_eq!(circular_alpha_target(0.99, -160.0), -160.0 / 180.0);
    }

    #[test]
    fn rejects_nonpositive_gamma() {
        let label = Label::from_displacement([1.0, 1.0, 1.0], 0, 0);
        let p = Prediction {
            disp: label.disp,
            angle_raw: [0.25, 0.0],
            alpha_deg: 45.0,
            beta_deg: 0.0,
            class_logits: None,
            subclass_logits: None,
        };
        assert!(loss_value(&p, &label, 0.0).is_err());
        assert!(loss_value(&p, &label, -1.0).is_err());
    }
}
