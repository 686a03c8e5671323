//! BB84 primitives: linear polarization states, Bob's analyzer, the
//! weak-coherent source, bit-slot timing and sifting.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{slot_word, Stream};

/// Linear polarization at angle `psi` from horizontal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationState {
    pub angle: f64,
}

impl PolarizationState {
    pub const H: Self = Self { angle: 0.0 };
    pub const V: Self = Self { angle: FRAC_PI_2 };
    pub const D: Self = Self { angle: FRAC_PI_4 };
    pub const A: Self = Self { angle: -FRAC_PI_4 };
    /// `cos(pi/8)|H> + sin(pi/8)|V>`.
    pub const I_PLUS: Self = Self { angle: FRAC_PI_8 };
    pub const I_MINUS: Self = Self {
        angle: FRAC_PI_8 + FRAC_PI_2,
    };

    pub fn new(angle: f64) -> Self {
        Self { angle }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Some(match label {
            "H" => Self::H,
            "V" => Self::V,
            "D" => Self::D,
            "A" => Self::A,
            "I+" => Self::I_PLUS,
            "I-" => Self::I_MINUS,
            _ => return None,
        })
    }

    /// BB84 state encoding `bit` in `basis`: bit 0 is H or D.
    pub fn bb84(basis: Basis, bit: u8) -> Self {
        Self::new(basis.angle() + if bit == 0 { 0.0 } else { FRAC_PI_2 })
    }

    /// The orthogonal state.
    pub fn flipped(self) -> Self {
        Self::new(self.angle + FRAC_PI_2)
    }
}

/// Born rule on the real great circle: `cos^2(angle - psi)`.
pub fn projection_prob(state: PolarizationState, psi: f64) -> f64 {
    let c = (state.angle - psi).cos();
    c * c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// H/V.
    Rectilinear,
    /// D/A.
    Diagonal,
}

impl Basis {
    pub fn from_bit(b: u64) -> Self {
        if b & 1 == 0 {
            Basis::Rectilinear
        } else {
            Basis::Diagonal
        }
    }

    /// Angle of the bit-0 state.
    pub fn angle(self) -> f64 {
        match self {
            Basis::Rectilinear => 0.0,
            Basis::Diagonal => FRAC_PI_4,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Basis::Rectilinear => Basis::Diagonal,
            Basis::Diagonal => Basis::Rectilinear,
        }
    }
}

/// Poisson photon number of a weak coherent pulse.
pub fn sample_photon_number<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    Poisson::new(mu).expect("positive finite mean").sample(rng) as u64
}

/// Relative power leaking into the wrong analyzer port.
pub fn extinction_fraction(extinction_db: Option<f64>) -> f64 {
    extinction_db.map_or(0.0, |db| 10f64.powf(-db / 10.0))
}

/// Fractions of a pulse reaching the bit-0 and bit-1 ports of an analyzer in
/// `basis`. A finite extinction ratio leaks a share of each port into the
/// other; `None` is an ideal analyzer.
pub fn split_energies(state: PolarizationState, basis: Basis, extinction_db: Option<f64>) -> (f64, f64) {
    let p0 = projection_prob(state, basis.angle());
    let p1 = 1.0 - p0;
    let eps = extinction_fraction(extinction_db);
    ((p0 + eps * p1) / (1.0 + eps), (p1 + eps * p0) / (1.0 + eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Device {
    /// Bob's phase modulator: decides which slot's basis and assignment a
    /// pulse is analyzed with.
    Pm,
    D0,
    D1,
}

impl Device {
    pub fn detector(index: usize) -> Self {
        if index == 0 {
            Device::D0
        } else {
            Device::D1
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Device::Pm => "pm",
            Device::D0 => "d0",
            Device::D1 => "d1",
        }
    }
}

/// Per-device time offsets of Bob's bit windows, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeviceOffsets {
    pub pm: f64,
    pub d0: f64,
    pub d1: f64,
}

/// Maps absolute times to bit-slot indices, separately for each device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitSlotTimeline {
    slot_period: f64,
    gates_per_slot: u32,
    offsets: DeviceOffsets,
}

impl BitSlotTimeline {
    pub fn new(gate_period: f64, gates_per_slot: u32, offsets: DeviceOffsets) -> Result<Self> {
        if !(gate_period > 0.0 && gate_period.is_finite()) {
            return Err(Error::config("gate_period", "must be positive"));
        }
        if gates_per_slot == 0 {
            return Err(Error::config("gates_per_slot", "must be at least 1"));
        }
        if ![offsets.pm, offsets.d0, offsets.d1].iter().all(|o| o.is_finite()) {
            return Err(Error::config("offsets_ns", "must be finite"));
        }
        Ok(Self {
            slot_period: gate_period * gates_per_slot as f64,
            gates_per_slot,
            offsets,
        })
    }

    /// 16 ns slots of five 3.2 ns gates, all offsets zero.
    pub fn testbench() -> Self {
        Self::new(3.2e-9, 5, DeviceOffsets::default()).expect("valid timeline")
    }

    pub fn slot_period(&self) -> f64 {
        self.slot_period
    }

    pub fn gates_per_slot(&self) -> u32 {
        self.gates_per_slot
    }

    pub fn offsets(&self) -> DeviceOffsets {
        self.offsets
    }

    pub fn offset(&self, device: Device) -> f64 {
        match device {
            Device::Pm => self.offsets.pm,
            Device::D0 => self.offsets.d0,
            Device::D1 => self.offsets.d1,
        }
    }

    /// Start of slot `n` in the device's frame.
    pub fn slot_start(&self, device: Device, n: i64) -> f64 {
        self.offset(device) + n as f64 * self.slot_period
    }
}

/// `floor((t - offset) / T_slot)`.
pub fn assign_bit_slot(timeline: &BitSlotTimeline, device: Device, t: f64) -> i64 {
    ((t - timeline.offset(device)) / timeline.slot_period).floor() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoubleClickPolicy {
    #[default]
    Discard,
    RandomBit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BobConfig {
    /// Random detector-to-bit swap per slot.
    pub four_state: bool,
    /// `None` means an ideal analyzer.
    pub extinction_db: Option<f64>,
    pub double_click_policy: DoubleClickPolicy,
}

impl Default for BobConfig {
    fn default() -> Self {
        Self {
            four_state: false,
            extinction_db: None,
            double_click_policy: DoubleClickPolicy::Discard,
        }
    }
}

impl BobConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(db) = self.extinction_db {
            if !(db > 0.0) {
                return Err(Error::config("extinction_db", "must be positive or null"));
            }
        }
        Ok(())
    }

    /// Basis and assignment swap for slot `n`, uniformly random and fixed by
    /// the seed.
    pub fn choice(&self, seed: u64, n: i64) -> BobSlot {
        let w = slot_word(seed, Stream::Bob, n as u64);
        BobSlot {
            basis: Basis::from_bit(w),
            swap: self.four_state && (w >> 1) & 1 == 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BobSlot {
    pub basis: Basis,
    pub swap: bool,
}

impl BobSlot {
    /// Bit registered for a click on `detector`.
    pub fn bit(&self, detector: usize) -> u8 {
        detector as u8 ^ self.swap as u8
    }

    /// Detector that receives the bit-`port` output of the analyzer.
    pub fn detector_for_port(&self, port: usize) -> usize {
        port ^ self.swap as usize
    }
}

/// Alice's basis and bit for slot `n`.
pub fn alice_choice(seed: u64, n: i64) -> (Basis, u8) {
    let w = slot_word(seed, Stream::Alice, n as u64);
    (Basis::from_bit(w >> 1), (w & 1) as u8)
}

/// One live slot's resolved click: which detector fired first, or a double
/// click.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arbitration {
    Single { detector: usize, index: usize },
    Double,
}

/// Resolves the time-ordered clicks of one live slot. The earliest click wins
/// unless both detectors fired.
pub fn arbitrate(detectors: &[usize]) -> Option<Arbitration> {
    let first = *detectors.first()?;
    if detectors.iter().any(|&d| d != first) {
        Some(Arbitration::Double)
    } else {
        Some(Arbitration::Single {
            detector: first,
            index: 0,
        })
    }
}

/// Click provenance kept with each retained bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickProvenance {
    /// `None` for a double click resolved to a random bit.
    pub detector: Option<usize>,
    pub cause: Option<crate::detector::ClickCause>,
    pub click_slot: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiftedRecord {
    pub slot: i64,
    pub alice_basis: Basis,
    pub alice_bit: u8,
    pub bob_basis: Basis,
    pub swap: bool,
    pub bit: u8,
    pub provenance: ClickProvenance,
    /// Eve's belief about Bob's bit, when she attacked this slot.
    pub eve_bit: Option<u8>,
}

/// Running totals of the sifted key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeyTally {
    pub received: u64,
    pub sifted: u64,
    pub errors: u64,
    pub ones: u64,
    pub eve_known: u64,
}

impl KeyTally {
    /// Adds one record; basis mismatches are counted but not kept.
    pub fn add(&mut self, r: &SiftedRecord) -> bool {
        self.received += 1;
        if r.alice_basis != r.bob_basis {
            return false;
        }
        self.sifted += 1;
        self.errors += (r.bit != r.alice_bit) as u64;
        self.ones += r.bit as u64;
        self.eve_known += (r.eve_bit == Some(r.bit)) as u64;
        true
    }

    pub fn qber(&self) -> Option<f64> {
        (self.sifted > 0).then(|| self.errors as f64 / self.sifted as f64)
    }

    pub fn ones_fraction(&self) -> Option<f64> {
        (self.sifted > 0).then(|| self.ones as f64 / self.sifted as f64)
    }

    pub fn eve_known_fraction(&self) -> Option<f64> {
        (self.sifted > 0).then(|| self.eve_known as f64 / self.sifted as f64)
    }
}

/// Sifts a batch of records.
pub fn sift_and_score(records: &[SiftedRecord]) -> KeyTally {
    let mut t = KeyTally::default();
    for r in records {
        t.add(r);
    }
    t
}
