mod common;

use std::f64::consts::PI;

use jamloc::sigsim::{
    angles_of, gen_baseband, image_point, make_dataset, propagate, required_margin, trace_paths, ArrayGeometry,
    IQSnapshot, JammerClass, JammerProfile, SceneConfig, Vec3, WallSegment, GPS_L1_HZ,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn free_space() -> SceneConfig {
    SceneConfig {
        hall_extent: [30.0, 40.0, 8.0],
        antenna_position: [15.0, 1.0, 1.5],
        wall_segments: Vec::new(),
        ambient_reflectors: Vec::new(),
        noise_floor_dbm: f64::NEG_INFINITY,
        sample_rate: 100e6,
        snapshot_len: 1024,
    }
}

fn dist(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn simulate(scene: &SceneConfig, pos: Vec3, seed: u64) -> IQSnapshot {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profile = JammerProfile::new(JammerClass::Chirp, 20e6, 0.0);
    let margin = required_margin(scene, &trace_paths(scene, pos));
    let wave = gen_baseband(&profile, scene.snapshot_len + margin, scene.sample_rate, &mut rng).unwrap();
    propagate(scene, &ArrayGeometry::square(GPS_L1_HZ), pos, &wave, &profile, "t", &mut rng).unwrap()
}

/// Phase of `sum(a * conj(b))`.
fn phase_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum::<Complex64>().arg()
}

#[test]
fn interferometric_azimuth_within_one_degree() {
    let scene = free_space();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let a = scene.antenna_position;
    for i in 0..20 {
        let alpha: f64 = rng.random_range(15.0..165.0);
        let r: f64 = rng.random_range(3.0..12.0);
        let dz: f64 = rng.random_range(-1.0..2.0);
        let pos = [a[0] + r * alpha.to_radians().cos(), a[1] + r * alpha.to_radians().sin(), a[2] + dz];
        let snap = simulate(&scene, pos, i);
        let ch = snap.channels_f64();
        // Half-wavelength baselines: patch 1 - patch 0 along +x, patch 0 - patch 2 along +z.
        let ux = -phase_diff(&ch[1], &ch[0]) / PI;
        let uz = -phase_diff(&ch[0], &ch[2]) / PI;
        let uy = (1.0 - ux * ux - uz * uz).max(0.0).sqrt();
        let est = uy.atan2(ux).to_degrees();
        assert!((est - snap.label.alpha_deg).abs() < 1.0, "true {} est {est}", snap.label.alpha_deg);
        assert!((snap.label.alpha_deg - alpha).abs() < 1e-9);
    }
}

#[test]
fn steering_phase_differences_match_geometry() {
    let geo = ArrayGeometry::square(GPS_L1_HZ);
    let lam = geo.wavelength();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let v: Vec3 = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let u = [v[0] / n, v[1] / n, v[2] / n];
        let s = geo.steering(u);
        for i in 0..4 {
            for j in 0..4 {
                let (ei, ej) = (geo.element_positions[i], geo.element_positions[j]);
                let want = -2.0 * PI * ((ei[0] - ej[0]) * u[0] + (ei[1] - ej[1]) * u[1] + (ei[2] - ej[2]) * u[2]) / lam;
                let got = (s[i] * s[j].conj()).arg();
                let diff = (got - want).rem_euclid(2.0 * PI);
                assert!(diff.min(2.0 * PI - diff) < 1e-9);
            }
        }
    }
}

#[test]
fn twenty_db_wall_cuts_direct_power_a_hundredfold() {
    let mut scene = free_space();
    let src = [15.0, 10.0, 1.5];
    let open = trace_paths(&scene, src)[0].attenuation;
    scene.wall_segments.push(WallSegment {
        a: [10.0, 5.0],
        b: [20.0, 5.0],
        height: 3.0,
        transmission_loss_db: 20.0,
        reflection_coeff: 0.0,
    });
    let blocked = trace_paths(&scene, src)[0].attenuation;
    assert!((open.powi(2) / blocked.powi(2) - 100.0).abs() < 1e-9);
}

#[test]
fn walls_never_raise_direct_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let mut scene = free_space();
        let src = [rng.random_range(1.0..29.0), rng.random_range(2.0..39.0), rng.random_range(0.5..4.0)];
        let before = trace_paths(&scene, src)[0].attenuation;
        let x0 = rng.random_range(0.0..25.0);
        let y = rng.random_range(1.5..20.0);
        scene.wall_segments.push(WallSegment {
            a: [x0, y],
            b: [x0 + 5.0, y],
            height: rng.random_range(0.5..5.0),
            transmission_loss_db: rng.random_range(0.1..30.0),
            reflection_coeff: 0.3,
        });
        assert!(trace_paths(&scene, src)[0].attenuation <= before);
    }
}

#[test]
fn reflected_length_equals_image_distance() {
    let mut scene = free_space();
    scene.ambient_reflectors = SceneConfig::hall_reflectors(scene.hall_extent, 0.5, 0.3, 0.3, 0.2, 0.3);
    let src = [7.0, 22.0, 2.0];
    let paths = trace_paths(&scene, src);
    assert_eq!(paths.len(), 7);
    let rx = scene.antenna_position;
    for (p, r) in paths[1..].iter().zip(&scene.ambient_reflectors) {
        let img = image_point(src, r.point, r.normal);
        assert!((p.length - dist(img, rx)).abs() < 1e-9, "{}", r.name);
        assert!(p.length > paths[0].length);
        // The mirror keeps the distance to the plane.
        let d = |q: Vec3| (0..3).map(|i| (q[i] - r.point[i]) * r.normal[i]).sum::<f64>();
        assert!((d(img) + d(src)).abs() < 1e-9);
    }
}

#[test]
fn stored_angles_match_displacements() {
    let ds = make_dataset(&common::small_sim(40, 10), 3).unwrap();
    for s in ds.train.iter().chain(&ds.test) {
        let (a, b) = angles_of(s.label.disp);
        assert!((a - s.label.alpha_deg).abs() < 1e-9);
        assert!((b - s.label.beta_deg).abs() < 1e-9);
        assert!((-180.0..180.0).contains(&s.label.alpha_deg));
    }
}

#[test]
fn datasets_are_deterministic_per_seed() {
    let cfg = common::small_sim(12, 4);
    let a = make_dataset(&cfg, 21).unwrap();
    let b = make_dataset(&cfg, 21).unwrap();
    let c = make_dataset(&cfg, 22).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.train[0].samples, c.train[0].samples);
    assert_eq!(a.train.len(), 12);
    assert_eq!(a.test.len(), 4);
}

#[test]
fn noise_free_channels_differ_only_by_steering() {
    let scene = free_space();
    let snap = simulate(&scene, [20.0, 9.0, 2.0], 4);
    let ch = snap.channels_f64();
    let mags: Vec<f64> = ch.iter().map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>()).collect();
    for m in &mags[1..] {
        assert!((m / mags[0] - 1.0).abs() < 1e-5);
    }
}
