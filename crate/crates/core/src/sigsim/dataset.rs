use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::{propagate, required_margin, trace_paths, PlaneReflector, SceneConfig, WallSegment};
use super::trajectory::{gen_trajectory, Trajectory};
use super::types::{ArrayGeometry, IQSnapshot, JammerClass, JammerProfile, Vec3};
use super::waveform::gen_baseband;
use crate::error::{invalid, Result};

pub const RANDOM_TAG: &str = "Random";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimTask {
    /// Fixed jammer profile; Random train/test plus held-out wall scenarios.
    Localization,
    /// Balanced class x bandwidth-bucket profiles on the Random poses only.
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomScenario {
    pub trajectory: Trajectory,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutScenario {
    pub tag: String,
    pub walls: Vec<WallSegment>,
    pub trajectory: Trajectory,
    /// Number of poses kept, spread evenly along the trajectory.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfiles {
    /// One subclass per (class, bandwidth) pair.
    pub bandwidths_hz: Vec<f64>,
    pub power_dbm: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub task: SimTask,
    pub sample_rate: f64,
    pub snapshot_len: usize,
    pub carrier_frequency: f64,
    pub noise_floor_dbm: f64,
    pub hall_extent: Vec3,
    pub antenna_position: Vec3,
    pub reflectors: Vec<PlaneReflector>,
    pub heights: Vec<f64>,
    pub profile: JammerProfile,
    pub classification: ClassProfiles,
    pub random: RandomScenario,
    pub scenarios: Vec<HeldOutScenario>,
}

impl SimConfig {
    pub fn scene(&self, walls: &[WallSegment]) -> SceneConfig {
        SceneConfig {
            hall_extent: self.hall_extent,
            antenna_position: self.antenna_position,
            wall_segments: walls.to_vec(),
            ambient_reflectors: self.reflectors.clone(),
            noise_floor_dbm: self.noise_floor_dbm,
            sample_rate: self.sample_rate,
            snapshot_len: self.snapshot_len,
        }
    }

    pub fn n_subclasses(&self) -> usize {
        JammerClass::ALL.len() * self.classification.bandwidths_hz.len()
    }

    /// Profile for the `i`-th snapshot of a split.
    fn profile_for(&self, i: usize, rng: &mut ChaCha8Rng) -> JammerProfile {
        match self.task {
            SimTask::Localization => self.profile.clone(),
            SimTask::Classification => {
                let nb = self.classification.bandwidths_hz.len();
                let sub = i % self.n_subclasses();
                let [lo, hi] = self.classification.power_dbm;
                let mut p = JammerProfile::new(
                    JammerClass::ALL[sub / nb],
                    self.classification.bandwidths_hz[sub % nb],
                    if hi > lo { rng.random_range(lo..hi) } else { lo },
                );
                p.subclass_id = sub as u32;
                p
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene(&[]).validate()?;
        if self.heights.is_empty() {
            return invalid("sim.heights must not be empty");
        }
        match self.task {
            SimTask::Localization => self.profile.validate()?,
            SimTask::Classification => {
                if self.classification.bandwidths_hz.is_empty() {
                    return invalid("classification needs at least one bandwidth");
                }
                for &b in &self.classification.bandwidths_hz {
                    let [lo, hi] = self.classification.power_dbm;
                    for p in [lo, hi] {
                        JammerProfile::new(JammerClass::Chirp, b, p).validate()?;
                    }
                }
            }
        }
        for s in &self.scenarios {
            self.scene(&s.walls).validate()?;
            if s.tag == RANDOM_TAG {
                return invalid("held-out scenario may not reuse the Random tag");
            }
        }
        Ok(())
    }
}

/// Simulated splits: `train` holds Random only, `test` holds the Random
/// test poses followed by every held-out scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDatasets {
    pub train: Vec<IQSnapshot>,
    pub test: Vec<IQSnapshot>,
}

/// Mixes a seed with stream identifiers (splitmix64 finalizer).
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Job<'a> {
    scene: &'a SceneConfig,
    pos: Vec3,
    tag: &'a str,
    stream: u64,
    index: usize,
}

fn run_job(cfg: &SimConfig, geometry: &ArrayGeometry, seed: u64, job: &Job) -> Result<IQSnapshot> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, job.stream, job.index as u64));
    let profile = cfg.profile_for(job.index, &mut rng);
    let paths = trace_paths(job.scene, job.pos);
    let len = cfg.snapshot_len + required_margin(job.scene, &paths);
    let wave = gen_baseband(&profile, len, cfg.sample_rate, &mut rng)?;
    propagate(job.scene, geometry, job.pos, &wave, &profile, job.tag, &mut rng)
}

fn evenly(poses: Vec<Vec3>, count: usize) -> Vec<Vec3> {
    if count >= poses.len() {
        return poses;
    }
    (0..count).map(|i| poses[i * poses.len() / count]).collect()
}

/// Generates every snapshot described by `cfg`. Output is identical for a
/// given seed regardless of the rayon pool size.
pub fn make_dataset(cfg: &SimConfig, seed: u64) -> Result<SimDatasets> {
    cfg.validate()?;
    let geometry = ArrayGeometry::square(cfg.carrier_frequency);
    let base = cfg.scene(&[]);

    let mut poses = gen_trajectory(&cfg.random.trajectory, &cfg.heights)?;
    let need = cfg.random.train + cfg.random.test;
    if poses.is_empty() || need == 0 {
        return invalid("random scenario produced no poses");
    }
    if need > poses.len() {
        return invalid(format!("random scenario has {} poses, {need} requested", poses.len()));
    }
    poses.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX, 0)));
    let (train_poses, rest) = poses.split_at(cfg.random.train);
    let test_poses = &rest[..cfg.random.test];

    let mut held: Vec<(SceneConfig, Vec<Vec3>, &str)> = Vec::new();
    if cfg.task == SimTask::Localization {
        for s in &cfg.scenarios {
            let p = evenly(gen_trajectory(&s.trajectory, &cfg.heights)?, s.count);
            if p.is_empty() {
                return invalid(format!("scenario {} has an empty trajectory", s.tag));
            }
            held.push((cfg.scene(&s.walls), p, &s.tag));
        }
    }

    let mk = |scene, poses: &[Vec3], tag, stream| -> Vec<Job> {
        poses
            .iter()
            .enumerate()
            .map(|(index, &pos)| Job { scene, pos, tag, stream, index })
            .collect()
    };
    let train_jobs = mk(&base, train_poses, RANDOM_TAG, 0);
    let mut test_jobs = mk(&base, test_poses, RANDOM_TAG, 1);
    for (k, (scene, p, tag)) in held.iter().enumerate() {
        test_jobs.extend(mk(scene, p, tag, 2 + k as u64));
    }
    let run = |jobs: &[Job]| -> Result<Vec<IQSnapshot>> {
        jobs.par_iter().map(|j| run_job(cfg, &geometry, seed, j)).collect()
    };
    Ok(SimDatasets { train: run(&train_jobs)?, test: run(&test_jobs)? })
}
