//! Synthetic 4-patch snapshots of a moving jammer inside a hall.

pub mod dataset;
pub mod scene;
pub mod trajectory;
pub mod types;
pub mod waveform;

pub use dataset::{derive_seed, make_dataset, ClassProfiles, HeldOutScenario, RandomScenario, SimConfig, SimDatasets, SimTask, RANDOM_TAG};
pub use scene::{image_point, propagate, required_margin, trace_paths, Path, PlaneReflector, SceneConfig, WallSegment};
pub use trajectory::{gen_trajectory, Trajectory, DEFAULT_HEIGHTS};
pub use types::{angles_of, ArrayGeometry, IQSnapshot, JammerClass, JammerProfile, Label, Vec3, GPS_L1_HZ, N_PATCHES, SPEED_OF_LIGHT};
pub use waveform::gen_baseband;
