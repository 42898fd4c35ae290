#![allow(dead_code)]

use jamloc::config::{Preset, Scale};
use jamloc::dsp::{featurize, FeatureBundle};
use jamloc::sigsim::{make_dataset, IQSnapshot, SimConfig};

/// Localization preset shrunk to `train` + `test` Random snapshots.
pub fn small_sim(train: usize, test: usize) -> SimConfig {
    let mut cfg = SimConfig::preset(Preset::Localization, Scale::Desk);
    cfg.random.train = train;
    cfg.random.test = test;
    cfg.scenarios.clear();
    cfg
}

pub fn snapshots(n: usize, seed: u64) -> Vec<IQSnapshot> {
    make_dataset(&small_sim(n, 1), seed).unwrap().train
}

pub fn bundles(n: usize, seed: u64) -> Vec<FeatureBundle> {
    snapshots(n, seed).iter().map(|s| featurize(s).unwrap()).collect()
}
