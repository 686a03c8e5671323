//! Eve's strategies. Each produces bright faked pulses for Bob from what she
//! measured on Alice's pulse.

use std::f64::consts::FRAC_PI_8;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{best_split, SplitTiming};
use crate::detector::DetectorModel;
use crate::error::{Error, Result};
use crate::protocol::{
    assign_bit_slot, extinction_fraction, projection_prob, Basis, BitSlotTimeline, BobSlot, Device, PolarizationState,
};
use crate::NS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulsePurpose {
    KeySteal,
    DeadtimeShaping,
}

/// A bright pulse Eve sends to Bob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FakedPulse {
    pub state: PolarizationState,
    /// Mean photon number.
    pub energy: f64,
    /// Absolute arrival time at Bob, seconds.
    pub emission_time: f64,
    pub trigger_shift: f64,
    pub purpose: PulsePurpose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EveTag {
    NoDetection,
    SinglePhotonSkip,
    AgreePlus,
    AgreeMinus,
    DisagreeSkip,
}

/// Result of Eve's intermediate-basis measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EveOutcome {
    pub tag: EveTag,
    pub inferred_bit: Option<u8>,
    /// Probability that `inferred_bit` is Alice's bit; 0.5 without one.
    pub confidence: f64,
    pub detected: u64,
}

impl EveOutcome {
    pub fn state(&self) -> Option<PolarizationState> {
        match self.tag {
            EveTag::AgreePlus => Some(PolarizationState::I_PLUS),
            EveTag::AgreeMinus => Some(PolarizationState::I_MINUS),
            _ => None,
        }
    }
}

/// Photons surviving Eve's detector efficiency.
fn detected_photons<R: Rng + ?Sized>(n: u64, efficiency: f64, rng: &mut R) -> u64 {
    if efficiency >= 1.0 {
        return n;
    }
    (0..n).filter(|_| rng.random::<f64>() < efficiency).count() as u64
}

/// Measures every detected photon in the I+/I- basis. Two or more identical
/// outcomes give an agree tag; a single photon or mixed outcomes are skipped.
pub fn eve_intermediate_measure<R: Rng + ?Sized>(
    alice: PolarizationState,
    n: u64,
    efficiency: f64,
    rng: &mut R,
) -> EveOutcome {
    let m = detected_photons(n, efficiency, rng);
    let skip = |tag| EveOutcome {
        tag,
        inferred_bit: None,
        confidence: 0.5,
        detected: m,
    };
    match m {
        0 => return skip(EveTag::NoDetection),
        1 => return skip(EveTag::SinglePhotonSkip),
        _ => {}
    }
    let p_plus = projection_prob(alice, FRAC_PI_8);
    let mut plus = 0;
    for _ in 0..m {
        plus += (rng.random::<f64>() < p_plus) as u64;
    }
    let (tag, bit) = if plus == m {
        (EveTag::AgreePlus, 0)
    } else if plus == 0 {
        (EveTag::AgreeMinus, 1)
    } else {
        return skip(EveTag::DisagreeSkip);
    };
    let c = projection_prob(PolarizationState::H, FRAC_PI_8).powi(m as i32);
    let s = projection_prob(PolarizationState::V, FRAC_PI_8).powi(m as i32);
    EveOutcome {
        tag,
        inferred_bit: Some(bit),
        confidence: c / (c + s),
        detected: m,
    }
}

/// Energy and timing of the intermediate-basis resend. The pulse is placed so
/// that the slot boundary falls halfway between the predicted click times of
/// the bright and dim ports: the bright click stays in slot N and the dim one
/// lands in N+1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntermediatePlan {
    pub energy: f64,
    pub trigger_shift: f64,
    /// Arrival time relative to `N * T_slot`.
    pub emission_phase: f64,
    pub split: SplitTiming,
}

impl IntermediatePlan {
    /// `energy: None` picks the energy maximizing the click-time separation;
    /// `emission_phase: None` centres the slot boundary between the clicks.
    pub fn new(
        models: [&DetectorModel; 2],
        timeline: &BitSlotTimeline,
        trigger_shift: f64,
        energy: Option<f64>,
        emission_phase: Option<f64>,
    ) -> Result<Self> {
        let bright = projection_prob(PolarizationState::H, FRAC_PI_8);
        let dim = 1.0 - bright;
        let split = match energy {
            None => best_split(&models[0].timing, trigger_shift, bright, dim)?,
            Some(e) if e > 0.0 && e.is_finite() => {
                let b = models[0].expected_timing(trigger_shift, bright * e).mean_shift;
                let d = models[0].expected_timing(trigger_shift, dim * e).mean_shift;
                SplitTiming {
                    energy: e,
                    bright_shift: b,
                    dim_shift: d,
                    separation: d - b,
                }
            }
            Some(_) => return Err(Error::config("attack.pulse_energy", "must be positive")),
        };
        let t_slot = timeline.slot_period();
        let latency = models[0].config.latency();
        let mid = 0.5 * (split.bright_shift + split.dim_shift);
        let emission_phase =
            emission_phase.unwrap_or(t_slot + timeline.offset(Device::D0) - latency - mid);
        let plan = Self {
            energy: split.energy,
            trigger_shift,
            emission_phase,
            split,
        };
        plan.check(models, timeline)?;
        Ok(plan)
    }

    fn check(&self, models: [&DetectorModel; 2], timeline: &BitSlotTimeline) -> Result<()> {
        let bright = projection_prob(PolarizationState::H, FRAC_PI_8);
        if assign_bit_slot(timeline, Device::Pm, self.emission_phase) != 0 {
            return Err(Error::config(
                "attack.emission_phase_ns",
                "resent pulse must reach Bob's modulator inside the target slot",
            ));
        }
        for (d, m) in models.iter().enumerate() {
            let device = Device::detector(d);
            let click = |f: f64| {
                self.emission_phase + m.config.latency() + m.expected_timing(self.trigger_shift, f * self.energy).mean_shift
            };
            if assign_bit_slot(timeline, device, click(bright)) != 0
                || assign_bit_slot(timeline, device, click(1.0 - bright)) != 1
            {
                return Err(Error::config(
                    "protocol.offsets_ns",
                    format!(
                        "detector {d}: bright click must land in the target slot and dim click in the next"
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn pulse(&self, outcome: &EveOutcome, slot: i64, slot_period: f64) -> Option<FakedPulse> {
        Some(FakedPulse {
            state: outcome.state()?,
            energy: self.energy,
            emission_time: slot as f64 * slot_period + self.emission_phase,
            trigger_shift: self.trigger_shift,
            purpose: PulsePurpose::KeySteal,
        })
    }
}

/// Resend for an agree outcome; nothing otherwise.
pub fn eve_intermediate_resend(
    outcome: &EveOutcome,
    plan: &IntermediatePlan,
    slot: i64,
    slot_period: f64,
) -> Option<FakedPulse> {
    plan.pulse(outcome, slot, slot_period)
}

/// Eve's BB84 measurement: random basis, bit from the first detected photon.
pub fn eve_bb84_measure<R: Rng + ?Sized>(
    alice: PolarizationState,
    n: u64,
    efficiency: f64,
    rng: &mut R,
) -> Option<(Basis, u8)> {
    let m = detected_photons(n, efficiency, rng);
    let basis = Basis::from_bit(rng.random::<u64>());
    if m == 0 {
        return None;
    }
    let p0 = projection_prob(alice, basis.angle());
    Some((basis, (rng.random::<f64>() >= p0) as u8))
}

/// Configuration of Bob's detection in the three cases of the deadtime
/// attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeadtimeCase {
    /// Bob's basis differs from Eve's: both detectors click outside slot N.
    A,
    /// Bases match and D0 stands for Eve's bit: the late leak click on D0
    /// lands in slot N.
    B,
    /// Bases match and D1 stands for Eve's bit: same outcome as case A.
    C,
}

pub fn deadtime_case(bob: BobSlot, eve_basis: Basis, eve_bit: u8) -> DeadtimeCase {
    if bob.basis != eve_basis {
        DeadtimeCase::A
    } else if bob.bit(0) == eve_bit {
        DeadtimeCase::B
    } else {
        DeadtimeCase::C
    }
}

/// Timing of the faked-state deadtime attack against a slot-offset receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadtimePlan {
    pub energy: f64,
    pub emission_phase: f64,
    pub trigger_shift: f64,
    /// Delay of the attenuated leak click relative to the half-energy click.
    pub dt_leak: f64,
    pub leak_fraction: f64,
    /// Simultaneous-deadtime length of Bob, slots.
    pub k_dead: u64,
}

impl DeadtimePlan {
    /// Validates the window geometry: with the pulse arriving in modulator
    /// slot N, the half-energy and full-energy clicks of D0 must land in N-1,
    /// those of D1 in N+1, and D0's nominal click delayed by `dt_leak` in N.
    /// `dt_leak: None` takes the delay predicted by D0's energy-time model.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        models: [&DetectorModel; 2],
        timeline: &BitSlotTimeline,
        extinction_db: Option<f64>,
        energy: f64,
        emission_phase: f64,
        trigger_shift: f64,
        dt_leak: Option<f64>,
        k_dead: u64,
    ) -> Result<Self> {
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(Error::config("attack.pulse_energy", "must be positive"));
        }
        let eps = extinction_fraction(extinction_db);
        if eps <= 0.0 {
            return Err(Error::config(
                "protocol.extinction_db",
                "deadtime attack needs a finite analyzer extinction ratio",
            ));
        }
        let leak_fraction = eps / (1.0 + eps);
        let nominal = |d: usize, mu: f64| {
            let m = models[d];
            emission_phase + m.config.latency() + m.expected_timing(trigger_shift, mu).mean_shift
        };
        let half = nominal(0, energy / 2.0);
        let dt_leak = dt_leak.unwrap_or_else(|| nominal(0, energy * leak_fraction) - half);
        let plan = Self {
            energy,
            emission_phase,
            trigger_shift,
            dt_leak,
            leak_fraction,
            k_dead,
        };
        let slot = |d: usize, t: f64| assign_bit_slot(timeline, Device::detector(d), t);
        let checks = [
            (assign_bit_slot(timeline, Device::Pm, emission_phase) == 0, "pulse must reach the modulator in slot N"),
            (slot(0, half) == -1, "D0 half-energy click must land in slot N-1"),
            (slot(1, nominal(1, energy / 2.0)) == 1, "D1 half-energy click must land in slot N+1"),
            (slot(0, nominal(0, energy * (1.0 - leak_fraction))) == -1, "D0 full-energy click must land in slot N-1"),
            (slot(1, nominal(1, energy * (1.0 - leak_fraction))) == 1, "D1 full-energy click must land in slot N+1"),
            (slot(0, half + dt_leak) == 0, "D0 leak click must land in slot N"),
            (slot(1, nominal(1, energy * leak_fraction)) == 1, "D1 leak click must land in slot N+1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::config("protocol.offsets_ns", msg));
            }
        }
        Ok(plan)
    }

    /// Slots between consecutive attacked slots.
    pub fn period(&self) -> u64 {
        self.k_dead + 2
    }

    pub fn attack_pulse(&self, eve_basis: Basis, eve_bit: u8, slot: i64, slot_period: f64) -> FakedPulse {
        FakedPulse {
            state: PolarizationState::bb84(eve_basis, 1 - eve_bit),
            energy: self.energy,
            emission_time: slot as f64 * slot_period + self.emission_phase,
            trigger_shift: self.trigger_shift,
            purpose: PulsePurpose::KeySteal,
        }
    }

    /// Pulse one slot early that keeps Bob blind through slot `slot`: its D0
    /// click lands in `slot - 2` and its D1 click in `slot`.
    pub fn shaping_pulse(&self, slot: i64, slot_period: f64) -> FakedPulse {
        FakedPulse {
            state: PolarizationState::H,
            energy: self.energy,
            emission_time: (slot - 1) as f64 * slot_period + self.emission_phase,
            trigger_shift: self.trigger_shift,
            purpose: PulsePurpose::DeadtimeShaping,
        }
    }
}

/// What Eve learned about one attacked slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EveNote {
    pub bit: u8,
    pub basis: Option<Basis>,
}

/// Faked-state deadtime attack state machine.
#[derive(Debug, Clone)]
pub struct DeadtimeAttack {
    pub plan: DeadtimePlan,
    pub efficiency: f64,
    next_target: i64,
    blind: bool,
}

impl DeadtimeAttack {
    pub fn new(plan: DeadtimePlan, efficiency: f64) -> Self {
        Self {
            plan,
            efficiency,
            next_target: 1,
            blind: false,
        }
    }

    /// Handles Alice's pulse of `slot`. On target slots Eve measures and
    /// resends the opposite state, or, before her first attack and whenever
    /// she detected nothing, sends a shaping pulse instead.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        slot: i64,
        alice: PolarizationState,
        n: u64,
        slot_period: f64,
        rng: &mut R,
    ) -> (Vec<FakedPulse>, Option<EveNote>) {
        if slot != self.next_target {
            return (Vec::new(), None);
        }
        let measured = if self.blind {
            eve_bb84_measure(alice, n, self.efficiency, rng)
        } else {
            None
        };
        match measured {
            Some((basis, bit)) => {
                self.next_target = slot + self.plan.period() as i64;
                (
                    vec![self.plan.attack_pulse(basis, bit, slot, slot_period)],
                    Some(EveNote {
                        bit,
                        basis: Some(basis),
                    }),
                )
            }
            None => {
                self.blind = true;
                self.next_target = slot + self.plan.k_dead as i64 + 1;
                (vec![self.plan.shaping_pulse(slot, slot_period)], None)
            }
        }
    }
}

/// Intermediate-basis attack state machine: attacks agree events at least
/// one deadtime apart.
#[derive(Debug, Clone)]
pub struct IntermediateAttack {
    pub plan: IntermediatePlan,
    pub efficiency: f64,
    /// Slots to wait after an attacked slot.
    pub spacing: u64,
    next_allowed: i64,
}

impl IntermediateAttack {
    pub fn new(plan: IntermediatePlan, efficiency: f64, spacing: u64) -> Self {
        Self {
            plan,
            efficiency,
            spacing,
            next_allowed: 0,
        }
    }

    pub fn step<R: Rng + ?Sized>(
        &mut self,
        slot: i64,
        alice: PolarizationState,
        n: u64,
        slot_period: f64,
        rng: &mut R,
    ) -> (Vec<FakedPulse>, Option<EveNote>) {
        if slot < self.next_allowed || n < 2 {
            return (Vec::new(), None);
        }
        let outcome = eve_intermediate_measure(alice, n, self.efficiency, rng);
        match eve_intermediate_resend(&outcome, &self.plan, slot, slot_period) {
            Some(p) => {
                self.next_allowed = slot + self.spacing as i64;
                (
                    vec![p],
                    Some(EveNote {
                        bit: outcome.inferred_bit.expect("agree outcome has a bit"),
                        basis: None,
                    }),
                )
            }
            None => (Vec::new(), None),
        }
    }
}

/// Intercept-resend with a bright pulse in Eve's measured BB84 state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperlinearInterceptResend {
    pub energy: f64,
    pub emission_phase: f64,
    pub trigger_shift: f64,
    pub efficiency: f64,
}

impl SuperlinearInterceptResend {
    pub fn step<R: Rng + ?Sized>(
        &self,
        slot: i64,
        alice: PolarizationState,
        n: u64,
        slot_period: f64,
        rng: &mut R,
    ) -> (Vec<FakedPulse>, Option<EveNote>) {
        eve_superlinear_intercept_resend(self, slot, alice, n, slot_period, rng)
            .map_or((Vec::new(), None), |(p, note)| (vec![p], Some(note)))
    }
}

/// One slot of the superlinear intercept-resend attack.
pub fn eve_superlinear_intercept_resend<R: Rng + ?Sized>(
    attack: &SuperlinearInterceptResend,
    slot: i64,
    alice: PolarizationState,
    n: u64,
    slot_period: f64,
    rng: &mut R,
) -> Option<(FakedPulse, EveNote)> {
    let (basis, bit) = eve_bb84_measure(alice, n, attack.efficiency, rng)?;
    Some((
        FakedPulse {
            state: PolarizationState::bb84(basis, bit),
            energy: attack.energy,
            emission_time: slot as f64 * slot_period + attack.emission_phase,
            trigger_shift: attack.trigger_shift,
            purpose: PulsePurpose::KeySteal,
        },
        EveNote {
            bit,
            basis: Some(basis),
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    IntermediateBasis,
    DeadtimeFakedState,
    SuperlinearIr,
}

/// JSON attack block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub attack: AttackKind,
    /// Mean photon number of resent pulses; `null` lets the intermediate
    /// attack pick the energy with the widest click separation.
    #[serde(default)]
    pub pulse_energy: Option<f64>,
    #[serde(default)]
    pub emission_phase_ns: Option<f64>,
    #[serde(default)]
    pub dt_leak_ns: Option<f64>,
    #[serde(default = "one")]
    pub eve_detector_efficiency: f64,
    #[serde(default)]
    pub trigger_shift_ns: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eve_detector_efficiency) {
            return Err(Error::config("attack.eve_detector_efficiency", "must lie in [0, 1]"));
        }
        if let Some(e) = self.pulse_energy {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::config("attack.pulse_energy", "must be positive"));
            }
        }
        if self.attack != AttackKind::IntermediateBasis && self.pulse_energy.is_none() {
            return Err(Error::config("attack.pulse_energy", "required for this attack"));
        }
        Ok(())
    }

    pub fn trigger_shift(&self) -> f64 {
        self.trigger_shift_ns.unwrap_or(0.0) * NS
    }
}
