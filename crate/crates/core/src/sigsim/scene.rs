use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::types::{norm, sub, ArrayGeometry, IQSnapshot, JammerProfile, Label, Vec3, N_PATCHES, SPEED_OF_LIGHT};
use crate::error::{invalid, Result};

/// Vertical rectangular panel standing on the floor between two xy endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallSegment {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub height: f64,
    pub transmission_loss_db: f64,
    pub reflection_coeff: f64,
}

/// Infinite plane used for floor, ceiling and hall walls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneReflector {
    pub name: String,
    pub point: Vec3,
    pub normal: Vec3,
    pub reflection_coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub hall_extent: Vec3,
    pub antenna_position: Vec3,
    #[serde(default)]
    pub wall_segments: Vec<WallSegment>,
    #[serde(default)]
    pub ambient_reflectors: Vec<PlaneReflector>,
    pub noise_floor_dbm: f64,
    pub sample_rate: f64,
    pub snapshot_len: usize,
}

impl SceneConfig {
    /// Reflectors for the six bounding surfaces of the hall.
    pub fn hall_reflectors(extent: Vec3, floor: f64, ceiling: f64, side: f64, back: f64, front: f64) -> Vec<PlaneReflector> {
        let p = |name: &str, point: Vec3, normal: Vec3, c: f64| PlaneReflector {
            name: name.into(),
            point,
            normal,
            reflection_coeff: c,
        };
        vec![
            p("floor", [0.0, 0.0, 0.0], [0.0, 0.0, 1.0], floor),
            p("ceiling", [0.0, 0.0, extent[2]], [0.0, 0.0, -1.0], ceiling),
            p("left", [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], side),
            p("right", [extent[0], 0.0, 0.0], [-1.0, 0.0, 0.0], side),
            p("back", [0.0, 0.0, 0.0], [0.0, 1.0, 0.0], back),
            p("front", [0.0, extent[1], 0.0], [0.0, -1.0, 0.0], front),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.hall_extent.iter().any(|&v| v <= 0.0) {
            return invalid("hall extent must be positive");
        }
        if !self.inside(self.antenna_position) {
            return invalid("antenna outside the hall");
        }
        if self.sample_rate <= 0.0 || self.snapshot_len == 0 {
            return invalid("sample rate and snapshot length must be positive");
        }
        for w in &self.wall_segments {
            if !(0.0..=1.0).contains(&w.reflection_coeff) || w.transmission_loss_db < 0.0 || w.height <= 0.0 {
                return invalid(format!("invalid wall segment {w:?}"));
            }
            if w.a == w.b {
                return invalid("wall segment endpoints coincide");
            }
        }
        for r in &self.ambient_reflectors {
            if !(0.0..=1.0).contains(&r.reflection_coeff) || norm(r.normal) == 0.0 {
                return invalid(format!("invalid reflector {}", r.name));
            }
        }
        Ok(())
    }

    pub fn inside(&self, p: Vec3) -> bool {
        (0..3).all(|i| p[i] >= 0.0 && p[i] <= self.hall_extent[i])
    }
}

/// One propagation path from jammer to array centre.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub length: f64,
    /// Unit vector from the array towards the apparent source.
    pub direction: Vec3,
    /// Product of reflection coefficients and wall transmission factors (amplitude).
    pub attenuation: f64,
    pub bounces: usize,
}

impl Path {
    pub fn delay(&self) -> f64 {
        self.length / SPEED_OF_LIGHT
    }
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn lerp(p: Vec3, q: Vec3, t: f64) -> Vec3 {
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]), p[2] + t * (q[2] - p[2])]
}

fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Parameters `(t, s)` where the xy projection of `p -> q` meets `a -> b`.
fn intersect_xy(p: Vec3, q: Vec3, a: [f64; 2], b: [f64; 2]) -> Option<(f64, f64)> {
    let r = [q[0] - p[0], q[1] - p[1]];
    let s = [b[0] - a[0], b[1] - a[1]];
    let den = cross2(r, s);
    if den.abs() < 1e-12 {
        return None;
    }
    let ap = [a[0] - p[0], a[1] - p[1]];
    let t = cross2(ap, s) / den;
    let u = cross2(ap, r) / den;
    Some((t, u))
}

/// Amplitude factor from every wall the segment `p -> q` passes through.
fn transmission(walls: &[WallSegment], skip: Option<usize>, p: Vec3, q: Vec3) -> f64 {
    let mut f = 1.0;
    for (i, w) in walls.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        if let Some((t, u)) = intersect_xy(p, q, w.a, w.b) {
            if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
                let z = p[2] + t * (q[2] - p[2]);
                if (0.0..=w.height).contains(&z) {
                    f *= 10f64.powf(-w.transmission_loss_db / 20.0);
                }
            }
        }
    }
    f
}

fn direction(from: Vec3, to: Vec3) -> Vec3 {
    let d = sub(to, from);
    scale(d, 1.0 / norm(d))
}

/// Mirror of `s` across the plane through `point` with normal `n`.
pub fn image_point(s: Vec3, point: Vec3, n: Vec3) -> Vec3 {
    let nn = scale(n, 1.0 / norm(n));
    let d = dot(sub(s, point), nn);
    sub(s, scale(nn, 2.0 * d))
}

/// Direct path plus all valid single-bounce image-source paths.
pub fn trace_paths(scene: &SceneConfig, source: Vec3) -> Vec<Path> {
    let rx = scene.antenna_position;
    let walls = &scene.wall_segments;
    let mut paths = vec![Path {
        length: norm(sub(source, rx)),
        direction: direction(rx, source),
        attenuation: transmission(walls, None, source, rx),
        bounces: 0,
    }];

    for r in &scene.ambient_reflectors {
        let n = r.normal;
        let ds = dot(sub(source, r.point), n);
        let dr = dot(sub(rx, r.point), n);
        if ds * dr <= 0.0 {
            continue;
        }
        let img = image_point(source, r.point, n);
        // reflection point on the plane along image -> receiver
        let di = dot(sub(img, r.point), n);
        let t = di / (di - dr);
        let hit = lerp(img, rx, t);
        let att = r.reflection_coeff * transmission(walls, None, source, hit) * transmission(walls, None, hit, rx);
        paths.push(Path {
            length: norm(sub(img, rx)),
            direction: direction(rx, img),
            attenuation: att,
            bounces: 1,
        });
    }

    for (i, w) in walls.iter().enumerate() {
        let dir = [w.b[0] - w.a[0], w.b[1] - w.a[1]];
        let side = |p: Vec3| cross2(dir, [p[0] - w.a[0], p[1] - w.a[1]]);
        if side(source) * side(rx) <= 0.0 {
            continue;
        }
        let n = [-dir[1], dir[0], 0.0];
        let img = image_point(source, [w.a[0], w.a[1], 0.0], n);
        let Some((t, u)) = intersect_xy(img, rx, w.a, w.b) else { continue };
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&t) {
            continue;
        }
        let hit = lerp(img, rx, t);
        if !(0.0..=w.height).contains(&hit[2]) {
            continue;
        }
        let att = w.reflection_coeff * transmission(walls, Some(i), source, hit) * transmission(walls, Some(i), hit, rx);
        paths.push(Path {
            length: norm(sub(img, rx)),
            direction: direction(rx, img),
            attenuation: att,
            bounces: 1,
        });
    }
    paths
}

/// Number of extra leading waveform samples `propagate` needs for `paths`.
pub fn required_margin(scene: &SceneConfig, paths: &[Path]) -> usize {
    paths
        .iter()
        .map(|p| (p.delay() * scene.sample_rate).round() as usize)
        .max()
        .unwrap_or(0)
}

/// Received 4-channel snapshot. `waveform` must hold at least
/// `snapshot_len + required_margin` unit-power samples; it is scaled to
/// the profile's power (sample power in mW). The label takes class and
/// subclass from the profile.
pub fn propagate<R: Rng + ?Sized>(
    scene: &SceneConfig,
    geometry: &ArrayGeometry,
    jammer_pos: Vec3,
    waveform: &[Complex64],
    profile: &JammerProfile,
    tag: &str,
    rng: &mut R,
) -> Result<IQSnapshot> {
    if !scene.inside(jammer_pos) {
        return invalid(format!("jammer position {jammer_pos:?} outside the hall"));
    }
    let disp = sub(jammer_pos, scene.antenna_position);
    if norm(disp) < 1e-9 {
        return invalid("jammer coincides with the antenna");
    }
    let n = scene.snapshot_len;
    let paths = trace_paths(scene, jammer_pos);
    let margin = required_margin(scene, &paths);
    if waveform.len() < n + margin {
        return invalid(format!("waveform has {} samples, needs {}", waveform.len(), n + margin));
    }
    let lead = waveform.len() - n;
    let lam = geometry.wavelength();
    let amp_tx = 10f64.powf(profile.power_dbm / 20.0);
    let mut acc = vec![vec![Complex64::default(); n]; N_PATCHES];
    for p in &paths {
        if p.attenuation == 0.0 {
            continue;
        }
        let g = amp_tx * p.attenuation * lam / (4.0 * PI * p.length);
        let tau = p.delay();
        let shift = (tau * scene.sample_rate).round() as usize;
        let carrier = Complex64::from_polar(g, -2.0 * PI * geometry.carrier_frequency * tau);
        let steer = geometry.steering(p.direction);
        for (ch, a) in acc.iter_mut().zip(steer) {
            let c = carrier * a;
            let src = &waveform[lead - shift..lead - shift + n];
            for (o, w) in ch.iter_mut().zip(src) {
                *o += c * w;
            }
        }
    }
    if scene.noise_floor_dbm.is_finite() {
        let sigma = (10f64.powf(scene.noise_floor_dbm / 10.0) / 2.0).sqrt();
        for ch in acc.iter_mut() {
            for v in ch.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *v += Complex64::new(re * sigma, im * sigma);
            }
        }
    }
    let samples: Vec<Vec<Complex32>> = acc
        .into_iter()
        .map(|c| c.into_iter().map(|v| Complex32::new(v.re as f32, v.im as f32)).collect())
        .collect();
    let snap = IQSnapshot {
        samples,
        label: Label::from_displacement(disp, profile.class.index() as u32, profile.subclass_id),
        scenario_tag: tag.to_string(),
    };
    snap.validate()?;
    Ok(snap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> SceneConfig {
        SceneConfig {
            hall_extent: [30.0, 40.0, 8.0],
            antenna_position: [15.0, 1.0, 1.5],
            wall_segments: vec![],
            ambient_reflectors: vec![],
            noise_floor_dbm: f64::NEG_INFINITY,
            sample_rate: 1e8,
            snapshot_len: 64,
        }
    }

    #[test]
    fn image_path_length_matches_geometry() {
        let mut s = scene();
        s.ambient_reflectors = SceneConfig::hall_reflectors(s.hall_extent, 0.5, 0.3, 0.3, 0.2, 0.3);
        let src = [10.0, 20.0, 4.4];
        let paths = trace_paths(&s, src);
        let floor = &paths[1];
        let img = [10.0, 20.0, -4.4];
        assert!((floor.length - norm(sub(img, s.antenna_position))).abs() < 1e-12);
        assert_eq!(paths.len(), 7);
        assert!(paths[1..].iter().all(|p| p.length > paths[0].length));
    }

    #[test]
    fn wall_blocks_direct_path() {
        let mut s = scene();
        s.wall_segments.push(WallSegment {
            a: [14.0, 3.0],
            b: [16.0, 3.0],
            height: 3.0,
            transmission_loss_db: 20.0,
            reflection_coeff: 0.1,
        });
        let p = trace_paths(&s, [15.0, 20.0, 4.4]);
        assert!((p[0].attenuation - 0.1).abs() < 1e-15);
        // source beside the wall: unobstructed
        let p = trace_paths(&s, [25.0, 20.0, 4.4]);
        assert_eq!(p[0].attenuation, 1.0);
        // same-side reflection off the wall face
        let p = trace_paths(&s, [15.0, 2.0, 1.5]);
        assert_eq!(p.len(), 2);
    }
}
