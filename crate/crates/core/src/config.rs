//! Experiment configuration: a TOML document with `sim`, `features`, `model`,
//! `train` and `sweep` sections plus a top-level `seed`.
//!
//! A user file is layered over a preset chosen by `preset` (in the file) and
//! the scale. Tables merge key by key; arrays and scalars replace. A table
//! whose `kind` differs from the preset's is replaced wholesale, so switching
//! `model.kind` does not inherit the other model's fields.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::dsp::FeatureConfig;
use crate::error::{Error, Result};
use crate::model::{FusionConfig, McaffConfig, ModelConfig};
use crate::sigsim::trajectory::DEFAULT_HEIGHTS;
use crate::sigsim::{
    ClassProfiles, HeldOutScenario, JammerClass, JammerProfile, RandomScenario, SceneConfig, SimConfig, SimTask,
    Trajectory, WallSegment, GPS_L1_HZ,
};
use crate::train::{Selection, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Full,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            _ => Err(Error::Config(format!("unknown scale {s:?} (expected desk or full)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Fusion model on Random plus the wall and meander scenarios.
    Localization,
    /// McAFF with class and subclass heads on balanced synthetic profiles.
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepGrid {
    Gamma,
    Dropout,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub grid: SweepGrid,
    /// Metric column minimised when picking the best cell.
    pub objective: String,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { grid: SweepGrid::Gamma, objective: "delta_d".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub sim: SimConfig,
    pub features: FeatureConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

fn wall(a: [f64; 2], b: [f64; 2], height: f64, tl: f64, refl: f64) -> WallSegment {
    WallSegment { a, b, height, transmission_loss_db: tl, reflection_coeff: refl }
}

fn boxed_walls(tl: f64, refl: f64) -> Vec<WallSegment> {
    vec![
        wall([13.0, 3.0], [17.0, 3.0], 2.5, tl, refl),
        wall([13.0, 1.0], [13.0, 3.0], 2.5, tl, refl),
        wall([17.0, 1.0], [17.0, 3.0], 2.5, tl, refl),
    ]
}

fn scenarios(scale: Scale) -> Vec<HeldOutScenario> {
    let (ppc, count, rows, per_row) = match scale {
        Scale::Desk => (4, 300, 5, 5),
        Scale::Full => (45, 3600, 13, 17),
    };
    let grid = Trajectory::GridCircles {
        origin: [10.0, 10.0],
        spacing: [10.0, 10.0],
        radii: vec![0.5, 1.0, 1.5, 2.0, 2.5],
        points_per_circle: ppc,
    };
    let big = |tl, refl| vec![wall([8.0, 5.0], [22.0, 5.0], 3.0, tl, refl)];
    let held = |tag: &str, walls: Vec<WallSegment>| HeldOutScenario {
        tag: tag.into(),
        walls,
        trajectory: grid.clone(),
        count,
    };
    vec![
        held("Wall 1", vec![wall([13.0, 3.0], [17.0, 3.0], 2.5, 20.0, 0.1)]),
        held("Wall 2", boxed_walls(20.0, 0.1)),
        held("Wall 3", boxed_walls(15.0, 0.6)),
        held("Wall 4", big(15.0, 0.6)),
        held("Wall 5", big(25.0, 0.1)),
        HeldOutScenario {
            tag: "Meander".into(),
            walls: big(25.0, 0.1),
            trajectory: Trajectory::Meander {
                x_range: [6.0, 24.0],
                y_range: [8.0, 28.0],
                rows,
                points_per_row: per_row,
            },
            count: rows * per_row * DEFAULT_HEIGHTS.len(),
        },
    ]
}

impl SimConfig {
    pub fn preset(preset: Preset, scale: Scale) -> SimConfig {
        let hall_extent = [30.0, 40.0, 8.0];
        let (ppc, train, test) = match scale {
            Scale::Desk => (125, 2000, 500),
            Scale::Full => (1447, 23140, 5790),
        };
        SimConfig {
            task: match preset {
                Preset::Localization => SimTask::Localization,
                Preset::Classification => SimTask::Classification,
            },
            sample_rate: 100e6,
            snapshot_len: 1024,
            carrier_frequency: GPS_L1_HZ,
            noise_floor_dbm: -90.0,
            hall_extent,
            antenna_position: [15.0, 1.0, 1.5],
            reflectors: SceneConfig::hall_reflectors(hall_extent, 0.5, 0.3, 0.3, 0.2, 0.3),
            heights: DEFAULT_HEIGHTS.to_vec(),
            profile: JammerProfile::new(JammerClass::Chirp, 20e6, 0.0),
            classification: ClassProfiles { bandwidths_hz: vec![5e6, 20e6, 50e6], power_dbm: [-20.0, 10.0] },
            random: RandomScenario {
                trajectory: Trajectory::Circles {
                    center: [15.0, 18.0],
                    radii: vec![3.0, 5.0, 7.0, 9.0, 11.0],
                    points_per_circle: ppc,
                },
                train,
                test,
            },
            scenarios: match preset {
                Preset::Localization => scenarios(scale),
                Preset::Classification => Vec::new(),
            },
        }
    }
}

impl RunConfig {
    pub fn preset(preset: Preset, scale: Scale) -> RunConfig {
        let sim = SimConfig::preset(preset, scale);
        let model = match preset {
            Preset::Localization => ModelConfig::Fusion(FusionConfig::default()),
            Preset::Classification => ModelConfig::Mcaff(McaffConfig {
                n_subclasses: sim.n_subclasses(),
                ..McaffConfig::default()
            }),
        };
        let mut train = TrainConfig::default();
        if preset == Preset::Classification {
            train.gamma = 1e-3;
            train.select_by = Selection::Accuracy;
        }
        if scale == Scale::Full {
            train.epochs = 200;
            train.n_seeds = 10;
        }
        RunConfig { preset, seed: 0, sim, features: FeatureConfig::default(), model, train, sweep: SweepConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.features.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if let ModelConfig::Mcaff(m) = &self.model {
            if self.sim.task == SimTask::Classification && m.n_subclasses != self.sim.n_subclasses() {
                return Err(Error::Config(format!(
                    "model.n_subclasses = {} but the simulation defines {} subclasses",
                    m.n_subclasses,
                    self.sim.n_subclasses()
                )));
            }
        }
        Ok(())
    }

    /// Parses `text` over the preset it names (default localization) at
    /// `scale`. Keys the schema does not know are reported together.
    pub fn from_toml(text: &str, scale: Scale) -> Result<RunConfig> {
        let user: Table = toml::from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))?;
        let preset = match user.get("preset") {
            None => Preset::Localization,
            Some(v) => Preset::deserialize(v.clone()).map_err(|e| Error::Config(format!("preset: {e}")))?,
        };
        let base = RunConfig::preset(preset, scale);
        let mut merged = to_table(&base)?;
        merge(&mut merged, &user);
        let cfg = RunConfig::deserialize(Value::Table(merged)).map_err(|e| Error::Config(e.to_string()))?;

        let known = to_table(&cfg)?;
        let mut unknown = Vec::new();
        unknown_keys(&user, &known, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn to_table<T: Serialize>(v: &T) -> Result<Table> {
    Table::try_from(v).map_err(|e| Error::Config(e.to_string()))
}

fn merge(base: &mut Table, user: &Table) {
    for (k, v) in user {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(u)) if b.get("kind").is_none_or(|kind| u.get("kind").is_none_or(|uk| uk == kind)) => {
                merge(b, u)
            }
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn unknown_keys(user: &Table, known: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (known.get(k), v) {
            (None, _) => out.push(path),
            (Some(Value::Table(kt)), Value::Table(ut)) => unknown_keys(ut, kt, &path, out),
            (Some(Value::Array(ka)), Value::Array(ua)) => {
                for (i, (kv, uv)) in ka.iter().zip(ua).enumerate() {
                    if let (Value::Table(kt), Value::Table(ut)) = (kv, uv) {
                        unknown_keys(ut, kt, &format!("{path}[{i}]"), out);
                    }
                }
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for preset in [Preset::Localization, Preset::Classification] {
            for scale in [Scale::Desk, Scale::Full] {
                let cfg = RunConfig::preset(preset, scale);
                cfg.validate().unwrap();
                let text = cfg.to_toml().unwrap();
                assert_eq!(RunConfig::from_toml(&text, Scale::Desk).unwrap(), cfg);
            }
        }
    }

    #[test]
    fn partial_override_and_model_switch() {
        let cfg = RunConfig::from_toml("seed = 7\n[train]\nepochs = 3\n[model]\nkind = \"mcaff\"\nn_subclasses = 18\n", Scale::Desk)
            .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.epochs, 3);
        assert!(matches!(cfg.model, ModelConfig::Mcaff(_)));
        assert_eq!(cfg.sim.random.train, 2000);
    }

    #[test]
    fn lists_every_unknown_key() {
        let err = RunConfig::from_toml("colour = 1\n[train]\nepoch = 3\n[model]\niq_kernels = 3\n", Scale::Desk)
            .unwrap_err()
            .to_string();
        for k in ["colour", "train.epoch", "model.iq_kernels"] {
            assert!(err.contains(k), "{err}");
        }
    }

    #[test]
    fn full_scale_sizes() {
        let cfg = RunConfig::preset(Preset::Localization, Scale::Full);
        assert_eq!(cfg.sim.random.train, 23140);
        assert_eq!(cfg.sim.random.test, 5790);
        assert_eq!(cfg.sim.scenarios.len(), 6);
        assert_eq!(cfg.train.epochs, 200);
    }
}
