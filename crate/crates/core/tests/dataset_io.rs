mod common;

use std::fs;

use jamloc::dataset_io::{
    read_dataset, read_features, write_dataset, write_dataset_version, write_features, DatasetError, DatasetReader,
    HEADER_LEN,
};
use jamloc::sigsim::{IQSnapshot, Label};
use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

const TAGS: [&str; 4] = ["Random", "Wall 3", "Meander", "Hallé ∡"];

fn random_snapshots(n: usize, len: usize, seed: u64) -> Vec<IQSnapshot> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let samples = (0..4)
                .map(|_| (0..len).map(|_| Complex32::new(rng.random(), rng.random::<f32>() - 0.5)).collect())
                .collect();
            let disp = [rng.random_range(-20.0..20.0), rng.random_range(0.1..40.0), rng.random_range(-2.0..5.0)];
            let mut label = Label::from_displacement(disp, rng.random_range(0..6), rng.random_range(0..18));
            // Arbitrary f64 bit patterns must survive too.
            label.alpha_deg += 1e-13 * rng.random::<f64>();
            IQSnapshot { samples, label, scenario_tag: TAGS[i % TAGS.len()].to_string() }
        })
        .collect()
}

fn record_len(s: &IQSnapshot, crc: bool) -> usize {
    4 + s.scenario_tag.len() + 6 * 8 + 4 + 4 * s.len() * 8 + if crc { 4 } else { 0 }
}

#[test]
fn hundred_snapshots_round_trip_bit_exactly() {
    let dir = tempdir().unwrap();
    let (a, b) = (dir.path().join("a.gjld"), dir.path().join("b.gjld"));
    let snaps = random_snapshots(100, 64, 1);
    write_dataset(&a, &snaps, 100e6).unwrap();
    let (header, back) = read_dataset(&a).unwrap();
    assert_eq!(header.version, 2);
    assert_eq!(header.sample_rate, 100e6);
    assert_eq!((header.snapshot_len, header.n_snapshots), (64, 100));
    assert_eq!(back.len(), 100);
    for (x, y) in snaps.iter().zip(&back) {
        assert_eq!(x.scenario_tag, y.scenario_tag);
        assert_eq!(x.label.disp.map(f64::to_bits), y.label.disp.map(f64::to_bits));
        assert_eq!(x.label.alpha_deg.to_bits(), y.label.alpha_deg.to_bits());
        assert_eq!(x.label, y.label);
        assert_eq!(x.samples, y.samples);
    }
    write_dataset(&b, &back, header.sample_rate).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let expected: usize = HEADER_LEN + snaps.iter().map(|s| record_len(s, true)).sum::<usize>();
    assert_eq!(fs::metadata(&a).unwrap().len() as usize, expected);
}

#[test]
fn header_fields_are_little_endian() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("h.gjld");
    write_dataset(&p, &random_snapshots(3, 16, 2), 2.5e6).unwrap();
    let bytes = fs::read(&p).unwrap();
    assert_eq!(&bytes[..4], b"GJLD");
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 2);
    assert_eq!(f64::from_le_bytes(bytes[6..14].try_into().unwrap()), 2.5e6);
    assert_eq!(u32::from_le_bytes(bytes[14..18].try_into().unwrap()), 16);
    assert_eq!(u32::from_le_bytes(bytes[18..22].try_into().unwrap()), 3);
    // First record starts with its tag length and tag.
    assert_eq!(u32::from_le_bytes(bytes[22..26].try_into().unwrap()), 6);
    assert_eq!(&bytes[26..32], b"Random");
}

#[test]
fn empty_dataset_is_header_only() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("empty.gjld");
    write_dataset(&p, &[], 100e6).unwrap();
    assert_eq!(fs::metadata(&p).unwrap().len() as usize, HEADER_LEN);
    assert_eq!(HEADER_LEN, 22);
    let (h, snaps) = read_dataset(&p).unwrap();
    assert_eq!(h.n_snapshots, 0);
    assert!(snaps.is_empty());
}

#[test]
fn corrupted_payload_fails_the_checksum() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("c.gjld");
    let snaps = random_snapshots(5, 32, 3);
    write_dataset(&p, &snaps, 100e6).unwrap();
    let mut bytes = fs::read(&p).unwrap();
    let offset = HEADER_LEN + record_len(&snaps[0], true) + record_len(&snaps[1], true) + 80;
    bytes[offset] ^= 0x10;
    fs::write(&p, &bytes).unwrap();
    match read_dataset(&p) {
        Err(DatasetError::Checksum(2)) => {}
        other => panic!("expected a checksum error on record 2, got {other:?}"),
    }
}

#[test]
fn truncation_is_reported() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("t.gjld");
    write_dataset(&p, &random_snapshots(4, 32, 4), 100e6).unwrap();
    let bytes = fs::read(&p).unwrap();
    for cut in [3, HEADER_LEN - 1, HEADER_LEN + 2, bytes.len() - 1] {
        fs::write(&p, &bytes[..cut]).unwrap();
        assert!(matches!(read_dataset(&p), Err(DatasetError::Truncated(_))), "cut at {cut}");
    }
    let mut extra = bytes.clone();
    extra.push(0);
    fs::write(&p, &extra).unwrap();
    assert!(matches!(read_dataset(&p), Err(DatasetError::Inconsistent(_))));
}

#[test]
fn bad_magic_and_version_are_typed_errors() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("m.gjld");
    write_dataset(&p, &random_snapshots(1, 8, 5), 100e6).unwrap();
    let good = fs::read(&p).unwrap();

    let mut bad = good.clone();
    bad[..4].copy_from_slice(b"GJLX");
    fs::write(&p, &bad).unwrap();
    assert!(matches!(read_dataset(&p), Err(DatasetError::BadMagic { found, .. }) if &found == b"GJLX"));

    let mut bad = good.clone();
    bad[4..6].copy_from_slice(&9u16.to_le_bytes());
    fs::write(&p, &bad).unwrap();
    assert!(matches!(read_dataset(&p), Err(DatasetError::UnsupportedVersion(9))));
}

#[test]
fn version_one_files_have_no_checksums() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("v1.gjld");
    let snaps = random_snapshots(6, 16, 6);
    write_dataset_version(&p, &snaps, 100e6, 1).unwrap();
    let expected: usize = HEADER_LEN + snaps.iter().map(|s| record_len(s, false)).sum::<usize>();
    assert_eq!(fs::metadata(&p).unwrap().len() as usize, expected);
    let (h, back) = read_dataset(&p).unwrap();
    assert_eq!(h.version, 1);
    assert_eq!(back, snaps);
}

#[test]
fn streaming_reader_preserves_order() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("s.gjld");
    let snaps = random_snapshots(9, 8, 7);
    write_dataset(&p, &snaps, 100e6).unwrap();
    let reader = DatasetReader::open(&p).unwrap();
    for (i, rec) in reader.enumerate() {
        assert_eq!(rec.unwrap(), snaps[i]);
    }
}

#[test]
fn inconsistent_snapshot_lengths_are_rejected() {
    let dir = tempdir().unwrap();
    let mut snaps = random_snapshots(2, 8, 8);
    snaps[1] = random_snapshots(1, 16, 9).remove(0);
    assert!(write_dataset(dir.path().join("x.gjld"), &snaps, 100e6).is_err());
}

#[test]
fn feature_cache_round_trips() {
    let dir = tempdir().unwrap();
    let (a, b) = (dir.path().join("a.feat"), dir.path().join("b.feat"));
    let bundles = common::bundles(3, 12);
    write_features(&a, &bundles).unwrap();
    let back = read_features(&a).unwrap();
    assert_eq!(back, bundles);
    write_features(&b, &back).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let mut bytes = fs::read(&a).unwrap();
    let last = bytes.len() - 100;
    bytes[last] ^= 1;
    fs::write(&a, &bytes).unwrap();
    assert!(matches!(read_features(&a), Err(DatasetError::Checksum(2))));
}
