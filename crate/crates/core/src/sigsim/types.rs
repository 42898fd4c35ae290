use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const GPS_L1_HZ: f64 = 1.57542e9;
pub const N_PATCHES: usize = 4;

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JammerClass {
    Chirp,
    FrequencyHopping,
    Modulated,
    Multitone,
    Pulsed,
    Noise,
}

impl JammerClass {
    pub const ALL: [JammerClass; 6] = [
        JammerClass::Chirp,
        JammerClass::FrequencyHopping,
        JammerClass::Modulated,
        JammerClass::Multitone,
        JammerClass::Pulsed,
        JammerClass::Noise,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            JammerClass::Chirp => "Chirp",
            JammerClass::FrequencyHopping => "FrequencyHopping",
            JammerClass::Modulated => "Modulated",
            JammerClass::Multitone => "Multitone",
            JammerClass::Pulsed => "Pulsed",
            JammerClass::Noise => "Noise",
        }
    }
}

fn default_tones() -> usize {
    4
}
fn default_hops() -> usize {
    8
}
fn default_duty() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JammerProfile {
    pub class: JammerClass,
    #[serde(default)]
    pub subclass_id: u32,
    pub bandwidth_hz: f64,
    pub power_dbm: f64,
    /// Tone count for `Multitone`.
    #[serde(default = "default_tones")]
    pub tones: usize,
    /// Hop count for `FrequencyHopping`.
    #[serde(default = "default_hops")]
    pub hops: usize,
    /// On-fraction for `Pulsed`.
    #[serde(default = "default_duty")]
    pub duty_cycle: f64,
}

impl JammerProfile {
    pub const MIN_BANDWIDTH: f64 = 0.2e6;
    pub const MAX_BANDWIDTH: f64 = 60e6;
    pub const MIN_POWER_DBM: f64 = -20.0;
    pub const MAX_POWER_DBM: f64 = 10.0;

    pub fn new(class: JammerClass, bandwidth_hz: f64, power_dbm: f64) -> Self {
        JammerProfile {
            class,
            subclass_id: 0,
            bandwidth_hz,
            power_dbm,
            tones: default_tones(),
            hops: default_hops(),
            duty_cycle: default_duty(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(Self::MIN_BANDWIDTH..=Self::MAX_BANDWIDTH).contains(&self.bandwidth_hz) {
            return invalid(format!("bandwidth {} Hz outside [0.2 MHz, 60 MHz]", self.bandwidth_hz));
        }
        if !(Self::MIN_POWER_DBM..=Self::MAX_POWER_DBM).contains(&self.power_dbm) {
            return invalid(format!("power {} dBm outside [-20, 10]", self.power_dbm));
        }
        if self.tones == 0 || self.hops == 0 {
            return invalid("tones and hops must be positive");
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return invalid(format!("duty cycle {} outside (0, 1]", self.duty_cycle));
        }
        Ok(())
    }
}

/// Patch positions relative to the array centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub element_positions: [Vec3; N_PATCHES],
    pub carrier_frequency: f64,
}

impl ArrayGeometry {
    /// 2x2 square in the x-z plane with half-wavelength spacing. Patch order:
    /// 0 upper-left, 1 upper-right, 2 lower-left, 3 lower-right (seen from +y).
    pub fn square(carrier_frequency: f64) -> Self {
        let h = SPEED_OF_LIGHT / carrier_frequency / 4.0;
        ArrayGeometry {
            element_positions: [[-h, 0.0, h], [h, 0.0, h], [-h, 0.0, -h], [h, 0.0, -h]],
            carrier_frequency,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Narrowband response `exp(-j 2 pi e_k . u / lambda)` for unit direction `u`.
    pub fn steering(&self, u: Vec3) -> [Complex64; N_PATCHES] {
        let lam = self.wavelength();
        self.element_positions.map(|e| {
            let d = e[0] * u[0] + e[1] * u[1] + e[2] * u[2];
            Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * d / lam)
        })
    }
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self::square(GPS_L1_HZ)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    /// Jammer minus antenna, metres.
    pub disp: Vec3,
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub class: u32,
    pub subclass: u32,
}

impl Label {
    pub fn from_displacement(disp: Vec3, class: u32, subclass: u32) -> Self {
        let (alpha_deg, beta_deg) = angles_of(disp);
        Label { disp, alpha_deg, beta_deg, class, subclass }
    }

    /// Euclidean length of the displacement.
    pub fn range(&self) -> f64 {
        norm(self.disp)
    }
}

/// Azimuth in [-180, 180) and elevation in [-90, 90], degrees.
pub fn angles_of(d: Vec3) -> (f64, f64) {
    let mut alpha = d[1].atan2(d[0]).to_degrees();
    if alpha >= 180.0 {
        alpha -= 360.0;
    }
    let beta = d[2].atan2(d[0].hypot(d[1])).to_degrees();
    (alpha, beta)
}

pub(crate) fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[derive(Debug, Clone, PartialEq)]
pub struct IQSnapshot {
    /// One vector per patch, all of the same length.
    pub samples: Vec<Vec<Complex32>>,
    pub label: Label,
    pub scenario_tag: String,
}

impl IQSnapshot {
    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels_f64(&self) -> Vec<Vec<Complex64>> {
        self.samples
            .iter()
            .map(|c| c.iter().map(|v| Complex64::new(v.re as f64, v.im as f64)).collect())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() != N_PATCHES {
            return invalid(format!("snapshot has {} channels, expected 4", self.samples.len()));
        }
        let n = self.len();
        if self.samples.iter().any(|c| c.len() != n) {
            return invalid("snapshot channels differ in length");
        }
        if self.samples.iter().flatten().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return invalid("snapshot contains non-finite samples");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spacing_is_half_wavelength() {
        let g = ArrayGeometry::default();
        let e = g.element_positions;
        assert!((e[1][0] - e[0][0] - g.wavelength() / 2.0).abs() < 1e-15);
        assert!((e[0][2] - e[2][2] - 0.0952).abs() < 1e-3);
    }

    #[test]
    fn label_angles() {
        let l = Label::from_displacement([0.0, 5.0, 0.0], 0, 0);
        assert_eq!((l.alpha_deg, l.beta_deg), (90.0, 0.0));
        let l = Label::from_displacement([-1.0, -0.0, 0.0], 0, 0);
        assert_eq!(l.alpha_deg, -180.0);
        let l = Label::from_displacement([3.0, 4.0, 5.0], 0, 0);
        assert!((l.beta_deg - 45.0).abs() < 1e-12);
    }

    #[test]
    fn profile_ranges() {
        assert!(JammerProfile::new(JammerClass::Chirp, 20e6, 0.0).validate().is_ok());
        assert!(JammerProfile::new(JammerClass::Chirp, 0.1e6, 0.0).validate().is_err());
        assert!(JammerProfile::new(JammerClass::Chirp, 20e6, 11.0).validate().is_err());
    }
}
