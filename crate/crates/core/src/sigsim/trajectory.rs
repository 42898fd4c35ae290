use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::types::Vec3;
use crate::error::{invalid, Result};

pub const DEFAULT_HEIGHTS: [f64; 4] = [3.9, 4.4, 4.9, 5.4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Trajectory {
    /// Concentric circles around `center`, one set per height.
    Circles { center: [f64; 2], radii: Vec<f64>, points_per_circle: usize },
    /// The same circle set repeated around each of a 2x2 grid of centres.
    GridCircles { origin: [f64; 2], spacing: [f64; 2], radii: Vec<f64>, points_per_circle: usize },
    /// Boustrophedon rows along x, stepping in y.
    Meander { x_range: [f64; 2], y_range: [f64; 2], rows: usize, points_per_row: usize },
}

fn circle_points(center: [f64; 2], radii: &[f64], points: usize, heights: &[f64], out: &mut Vec<Vec3>) -> Result<()> {
    if radii.iter().any(|&r| r <= 0.0 || !r.is_finite()) {
        return invalid("circle radii must be positive");
    }
    for &z in heights {
        for &r in radii {
            for i in 0..points {
                let a = 2.0 * PI * i as f64 / points as f64;
                out.push([center[0] + r * a.cos(), center[1] + r * a.sin(), z]);
            }
        }
    }
    Ok(())
}

/// Poses for a trajectory, ordered height-major.
pub fn gen_trajectory(kind: &Trajectory, heights: &[f64]) -> Result<Vec<Vec3>> {
    if heights.is_empty() {
        return invalid("trajectory heights must not be empty");
    }
    let mut out = Vec::new();
    match kind {
        Trajectory::Circles { center, radii, points_per_circle } => {
            circle_points(*center, radii, *points_per_circle, heights, &mut out)?;
        }
        Trajectory::GridCircles { origin, spacing, radii, points_per_circle } => {
            for gy in 0..2 {
                for gx in 0..2 {
                    let c = [origin[0] + gx as f64 * spacing[0], origin[1] + gy as f64 * spacing[1]];
                    circle_points(c, radii, *points_per_circle, heights, &mut out)?;
                }
            }
        }
        Trajectory::Meander { x_range, y_range, rows, points_per_row } => {
            if *rows == 0 || *points_per_row < 2 || x_range[1] <= x_range[0] || y_range[1] < y_range[0] {
                return invalid("meander needs rows >= 1, >= 2 points per row and a non-empty rectangle");
            }
            for &z in heights {
                for r in 0..*rows {
                    let y = if *rows == 1 {
                        y_range[0]
                    } else {
                        y_range[0] + (y_range[1] - y_range[0]) * r as f64 / (*rows - 1) as f64
                    };
                    for i in 0..*points_per_row {
                        let f = i as f64 / (*points_per_row - 1) as f64;
                        let f = if r % 2 == 0 { f } else { 1.0 - f };
                        out.push([x_range[0] + f * (x_range[1] - x_range[0]), y, z]);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_count() {
        let t = Trajectory::Circles { center: [0.0, 0.0], radii: vec![1.0, 2.0, 3.0, 4.0, 5.0], points_per_circle: 100 };
        assert_eq!(gen_trajectory(&t, &DEFAULT_HEIGHTS).unwrap().len(), 2000);
    }

    #[test]
    fn grid_has_four_centres() {
        let t = Trajectory::GridCircles { origin: [0.0, 0.0], spacing: [10.0, 10.0], radii: vec![1.0], points_per_circle: 3 };
        assert_eq!(gen_trajectory(&t, &[4.0]).unwrap().len(), 12);
    }

    #[test]
    fn errors() {
        let t = Trajectory::Circles { center: [0.0, 0.0], radii: vec![1.0, 0.0], points_per_circle: 3 };
        assert!(gen_trajectory(&t, &[4.0]).is_err());
        let t = Trajectory::Circles { center: [0.0, 0.0], radii: vec![1.0], points_per_circle: 3 };
        assert!(gen_trajectory(&t, &[]).is_err());
    }

    #[test]
    fn meander_rows_are_monotone_in_x() {
        let t = Trajectory::Meander { x_range: [0.0, 10.0], y_range: [0.0, 5.0], rows: 4, points_per_row: 6 };
        let p = gen_trajectory(&t, &[4.0]).unwrap();
        for (r, row) in p.chunks(6).enumerate() {
            for w in row.windows(2) {
                assert_eq!(w[0][1], w[1][1]);
                if r % 2 == 0 {
                    assert!(w[1][0] > w[0][0]);
                } else {
                    assert!(w[1][0] < w[0][0]);
                }
            }
        }
    }
}
