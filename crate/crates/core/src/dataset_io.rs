//! Binary containers for snapshots (`GJLD`) and cached features (`FEAT`).
//! Byte layouts are described in `docs/format.md`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex32;
use thiserror::Error;

use crate::dsp::features::{FeatureBundle, AOA_LEN, CFO_LEN, IQ_LEN, SPEC_LEN, STFT_LEN};
use crate::sigsim::{IQSnapshot, Label, N_PATCHES};

pub const DATASET_MAGIC: &[u8; 4] = b"GJLD";
pub const FEATURE_MAGIC: &[u8; 4] = b"FEAT";
pub const DATASET_VERSION: u16 = 2;
pub const FEATURE_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 8 + 4 + 4;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("file truncated while reading {0}")]
    Truncated(String),
    #[error("checksum mismatch in record {0}")]
    Checksum(usize),
    #[error("inconsistent data: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

type Result<T> = std::result::Result<T, DatasetError>;

fn read_or_truncated<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => DatasetError::Truncated(what.to_string()),
        _ => DatasetError::Io(e),
    })
}

/// Little-endian cursor over a record buffer.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> &'a [u8] {
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        s
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take(4).try_into().unwrap())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take(8).try_into().unwrap())
    }
    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take(4).try_into().unwrap())
    }
}

fn put_label(out: &mut Vec<u8>, l: &Label) {
    for v in [l.disp[0], l.disp[1], l.disp[2], l.alpha_deg, l.beta_deg, l.class as f64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&l.subclass.to_le_bytes());
}

fn get_label(c: &mut Cursor) -> Label {
    let disp = [c.f64(), c.f64(), c.f64()];
    let alpha_deg = c.f64();
    let beta_deg = c.f64();
    let class = c.f64() as u32;
    let subclass = c.u32();
    Label { disp, alpha_deg, beta_deg, class, subclass }
}

const LABEL_BYTES: usize = 6 * 8 + 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub version: u16,
    pub sample_rate: f64,
    pub snapshot_len: u32,
    pub n_snapshots: u32,
}

impl DatasetHeader {
    fn payload_bytes(&self) -> usize {
        N_PATCHES * self.snapshot_len as usize * 2 * 4
    }
}

pub struct DatasetWriter<W: Write> {
    out: W,
    header: DatasetHeader,
    written: u32,
    buf: Vec<u8>,
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(mut out: W, version: u16, sample_rate: f64, snapshot_len: u32, n_snapshots: u32) -> Result<Self> {
        if !(1..=DATASET_VERSION).contains(&version) {
            return Err(DatasetError::UnsupportedVersion(version));
        }
        out.write_all(DATASET_MAGIC)?;
        out.write_all(&version.to_le_bytes())?;
        out.write_all(&sample_rate.to_le_bytes())?;
        out.write_all(&snapshot_len.to_le_bytes())?;
        out.write_all(&n_snapshots.to_le_bytes())?;
        let header = DatasetHeader { version, sample_rate, snapshot_len, n_snapshots };
        Ok(DatasetWriter { out, header, written: 0, buf: Vec::new() })
    }

    pub fn write(&mut self, s: &IQSnapshot) -> Result<()> {
        if self.written == self.header.n_snapshots {
            return Err(DatasetError::Inconsistent("more records than declared in the header".into()));
        }
        if s.samples.len() != N_PATCHES || s.samples.iter().any(|c| c.len() != self.header.snapshot_len as usize) {
            return Err(DatasetError::Inconsistent(format!(
                "record {} does not have 4 channels of {} samples",
                self.written, self.header.snapshot_len
            )));
        }
        let b = &mut self.buf;
        b.clear();
        b.extend_from_slice(&(s.scenario_tag.len() as u32).to_le_bytes());
        b.extend_from_slice(s.scenario_tag.as_bytes());
        put_label(b, &s.label);
        for ch in &s.samples {
            for v in ch {
                b.extend_from_slice(&v.re.to_le_bytes());
                b.extend_from_slice(&v.im.to_le_bytes());
            }
        }
        if self.header.version >= 2 {
            let crc = crc32fast::hash(b);
            b.extend_from_slice(&crc.to_le_bytes());
        }
        self.out.write_all(b)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.written != self.header.n_snapshots {
            return Err(DatasetError::Inconsistent(format!(
                "header declares {} records, {} written",
                self.header.n_snapshots, self.written
            )));
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Streaming reader holding one record in memory at a time.
pub struct DatasetReader<R: Read> {
    input: R,
    header: DatasetHeader,
    index: usize,
    buf: Vec<u8>,
}

impl DatasetReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> DatasetReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut h = [0u8; HEADER_LEN];
        read_or_truncated(&mut input, &mut h[..4], "magic")?;
        let found: [u8; 4] = h[..4].try_into().unwrap();
        if &found != DATASET_MAGIC {
            return Err(DatasetError::BadMagic { expected: *DATASET_MAGIC, found });
        }
        read_or_truncated(&mut input, &mut h[4..], "header")?;
        let version = u16::from_le_bytes([h[4], h[5]]);
        if !(1..=DATASET_VERSION).contains(&version) {
            return Err(DatasetError::UnsupportedVersion(version));
        }
        let header = DatasetHeader {
            version,
            sample_rate: f64::from_le_bytes(h[6..14].try_into().unwrap()),
            snapshot_len: u32::from_le_bytes(h[14..18].try_into().unwrap()),
            n_snapshots: u32::from_le_bytes(h[18..22].try_into().unwrap()),
        };
        Ok(DatasetReader { input, header, index: 0, buf: Vec::new() })
    }

    pub fn header(&self) -> DatasetHeader {
        self.header
    }

    fn read_record(&mut self) -> Result<IQSnapshot> {
        let i = self.index;
        let mut len = [0u8; 4];
        read_or_truncated(&mut self.input, &mut len, &format!("record {i} tag length"))?;
        let tag_len = u32::from_le_bytes(len) as usize;
        if tag_len > 1 << 16 {
            return Err(DatasetError::Inconsistent(format!("record {i} tag length {tag_len}")));
        }
        let body = tag_len + LABEL_BYTES + self.header.payload_bytes();
        let crc_len = if self.header.version >= 2 { 4 } else { 0 };
        self.buf.clear();
        self.buf.extend_from_slice(&len);
        self.buf.resize(4 + body + crc_len, 0);
        read_or_truncated(&mut self.input, &mut self.buf[4..], &format!("record {i}"))?;
        if crc_len > 0 {
            let stored = u32::from_le_bytes(self.buf[4 + body..].try_into().unwrap());
            if crc32fast::hash(&self.buf[..4 + body]) != stored {
                return Err(DatasetError::Checksum(i));
            }
        }
        let mut c = Cursor { buf: &self.buf, pos: 4 };
        let tag = std::str::from_utf8(c.take(tag_len))
            .map_err(|_| DatasetError::Inconsistent(format!("record {i} tag is not UTF-8")))?
            .to_string();
        let label = get_label(&mut c);
        let n = self.header.snapshot_len as usize;
        let samples = (0..N_PATCHES)
            .map(|_| (0..n).map(|_| Complex32::new(c.f32(), c.f32())).collect())
            .collect();
        Ok(IQSnapshot { samples, label, scenario_tag: tag })
    }

    fn check_end(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.input.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(DatasetError::Inconsistent("trailing bytes after the last record".into())),
        }
    }
}

impl<R: Read> Iterator for DatasetReader<R> {
    type Item = Result<IQSnapshot>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.index > self.header.n_snapshots as usize {
            return None;
        }
        if self.index == self.header.n_snapshots as usize {
            self.index += 1;
            return self.check_end().err().map(Err);
        }
        let r = self.read_record();
        self.index = if r.is_ok() { self.index + 1 } else { usize::MAX };
        Some(r)
    }
}

pub fn write_dataset_version(path: impl AsRef<Path>, snapshots: &[IQSnapshot], sample_rate: f64, version: u16) -> Result<()> {
    let len = snapshots.first().map_or(0, |s| s.len()) as u32;
    let file = BufWriter::new(File::create(path)?);
    let mut w = DatasetWriter::new(file, version, sample_rate, len, snapshots.len() as u32)?;
    for s in snapshots {
        w.write(s)?;
    }
    w.finish()?;
    Ok(())
}

/// Writes the current format version (with per-record CRC32).
pub fn write_dataset(path: impl AsRef<Path>, snapshots: &[IQSnapshot], sample_rate: f64) -> Result<()> {
    write_dataset_version(path, snapshots, sample_rate, DATASET_VERSION)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<(DatasetHeader, Vec<IQSnapshot>)> {
    let reader = DatasetReader::open(path)?;
    let header = reader.header();
    let snaps = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, snaps))
}

const FEATURE_LENS: [usize; 5] = [SPEC_LEN, IQ_LEN, AOA_LEN, CFO_LEN, STFT_LEN];

pub fn write_features(path: impl AsRef<Path>, bundles: &[FeatureBundle]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(FEATURE_MAGIC)?;
    out.write_all(&FEATURE_VERSION.to_le_bytes())?;
    out.write_all(&(bundles.len() as u32).to_le_bytes())?;
    for l in FEATURE_LENS {
        out.write_all(&(l as u32).to_le_bytes())?;
    }
    let mut b = Vec::new();
    for (i, f) in bundles.iter().enumerate() {
        let arrays = [&f.spectrogram, &f.iq, &f.aoa, &f.cfo, &f.stft];
        if arrays.iter().zip(FEATURE_LENS).any(|(a, l)| a.len() != l) {
            return Err(DatasetError::Inconsistent(format!("feature bundle {i} has unexpected array lengths")));
        }
        b.clear();
        b.extend_from_slice(&(f.scenario_tag.len() as u32).to_le_bytes());
        b.extend_from_slice(f.scenario_tag.as_bytes());
        put_label(&mut b, &f.label);
        for a in arrays {
            for v in a.iter() {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        out.write_all(&b)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<FeatureBundle>> {
    let mut input = BufReader::new(File::open(path)?);
    let mut h = [0u8; 4 + 2 + 4 + 20];
    read_or_truncated(&mut input, &mut h[..4], "magic")?;
    let found: [u8; 4] = h[..4].try_into().unwrap();
    if &found != FEATURE_MAGIC {
        return Err(DatasetError::BadMagic { expected: *FEATURE_MAGIC, found });
    }
    read_or_truncated(&mut input, &mut h[4..], "feature header")?;
    let version = u16::from_le_bytes([h[4], h[5]]);
    if version != FEATURE_VERSION {
        return Err(DatasetError::UnsupportedVersion(version));
    }
    let n = u32::from_le_bytes(h[6..10].try_into().unwrap()) as usize;
    for (k, l) in FEATURE_LENS.iter().enumerate() {
        let got = u32::from_le_bytes(h[10 + 4 * k..14 + 4 * k].try_into().unwrap()) as usize;
        if got != *l {
            return Err(DatasetError::Inconsistent(format!("feature array {k} has length {got}, expected {l}")));
        }
    }
    let payload: usize = FEATURE_LENS.iter().sum::<usize>() * 4;
    let mut out = Vec::with_capacity(n);
    let mut buf = Vec::new();
    for i in 0..n {
        let mut len = [0u8; 4];
        read_or_truncated(&mut input, &mut len, &format!("feature record {i}"))?;
        let tag_len = u32::from_le_bytes(len) as usize;
        if tag_len > 1 << 16 {
            return Err(DatasetError::Inconsistent(format!("feature record {i} tag length {tag_len}")));
        }
        let body = tag_len + LABEL_BYTES + payload;
        buf.clear();
        buf.extend_from_slice(&len);
        buf.resize(4 + body + 4, 0);
        read_or_truncated(&mut input, &mut buf[4..], &format!("feature record {i}"))?;
        let stored = u32::from_le_bytes(buf[4 + body..].try_into().unwrap());
        if crc32fast::hash(&buf[..4 + body]) != stored {
            return Err(DatasetError::Checksum(i));
        }
        let mut c = Cursor { buf: &buf, pos: 4 };
        let tag = std::str::from_utf8(c.take(tag_len))
            .map_err(|_| DatasetError::Inconsistent(format!("feature record {i} tag is not UTF-8")))?
            .to_string();
        let label = get_label(&mut c);
        let mut arrays = FEATURE_LENS.iter().map(|&l| (0..l).map(|_| c.f32()).collect::<Vec<f32>>());
        let mut next = || arrays.next().unwrap();
        out.push(FeatureBundle {
            spectrogram: next(),
            iq: next(),
            aoa: next(),
            cfo: next(),
            stft: next(),
            label,
            scenario_tag: tag,
        });
    }
    let mut probe = [0u8; 1];
    if input.read(&mut probe)? != 0 {
        return Err(DatasetError::Inconsistent("trailing bytes after the last feature record".into()));
    }
    Ok(out)
}
