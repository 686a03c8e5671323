//! Slot-by-slot Monte Carlo of one QKD session.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::config::{Session, SessionConfig};
use super::countermeasures::{CountermeasurePolicy, Randomization};
use super::trace::TraceRow;
use crate::attacks::{
    deadtime_case, AttackKind, DeadtimeAttack, DeadtimePlan, EveNote, FakedPulse, DeadtimeCase, IntermediateAttack,
    IntermediatePlan, SuperlinearInterceptResend,
};
use crate::detector::{ClickCause, ClickEvent, DetectorState, IncidentPulse};
use crate::error::Result;
use crate::protocol::{
    alice_choice, arbitrate, assign_bit_slot, sample_photon_number, split_energies, Arbitration, BobConfig, Device,
    DoubleClickPolicy, KeyTally, PolarizationState, SiftedRecord, ClickProvenance,
};
use crate::rng::{slot_word, stream_rng, Stream};
use crate::NS;

/// How every in-range slot ended. The five counters sum to the slot count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlotCounts {
    pub empty: u64,
    pub accepted: u64,
    pub basis_mismatch: u64,
    pub deadtime: u64,
    pub double_click: u64,
}

impl SlotCounts {
    pub fn total(&self) -> u64 {
        self.empty + self.accepted + self.basis_mismatch + self.deadtime + self.double_click
    }
}

/// Where every generated click went. The decision counters sum to `total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClickCounts {
    pub total: u64,
    pub accepted: u64,
    pub basis_mismatch: u64,
    pub deadtime: u64,
    pub double_click: u64,
    /// Later clicks of the same detector in a slot already decided.
    pub superseded: u64,
    /// Clicks in slots before 0 or after the last slot.
    pub out_of_range: u64,
    pub photon: u64,
    pub dark: u64,
    pub delayed: u64,
}

impl ClickCounts {
    pub fn decided(&self) -> u64 {
        self.accepted + self.basis_mismatch + self.deadtime + self.double_click + self.superseded + self.out_of_range
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CaseCounts {
    pub a: u64,
    pub b: u64,
    pub c: u64,
}

impl CaseCounts {
    fn add(&mut self, case: DeadtimeCase) {
        match case {
            DeadtimeCase::A => self.a += 1,
            DeadtimeCase::B => self.b += 1,
            DeadtimeCase::C => self.c += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c
    }
}

/// Metrics restricted to slots Eve attacked.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AttackMetrics {
    pub attacked_slots: u64,
    /// Attacked slots with a registered (pre-sifting) bit.
    pub attacked_registered: u64,
    pub attacked_sifted: u64,
    pub attacked_errors: u64,
    pub attacked_qber: Option<f64>,
    /// Attacked slots per detection configuration (deadtime attack only).
    pub attacked_by_case: Option<CaseCounts>,
    /// Registered bits per configuration (deadtime attack only).
    pub registered_by_case: Option<CaseCounts>,
    /// Registered bits in any slot Eve did not attack.
    pub registered_outside_attacks: u64,
}

/// Session outcome.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub slots: u64,
    pub seed: u64,
    pub simultaneous_deadtime_slots: u64,
    pub slot_counts: SlotCounts,
    pub click_counts: ClickCounts,
    /// Live slots yielding a bit, before sifting.
    pub registered: u64,
    pub sifted: u64,
    pub errors: u64,
    pub qber: Option<f64>,
    /// `sifted / registered`.
    pub sift_fraction: Option<f64>,
    pub ones_fraction: Option<f64>,
    pub eve_known_fraction: Option<f64>,
    pub double_click_random_bits: u64,
    /// Registered bits replaced by a random bit by a countermeasure.
    pub countermeasure_randomized: u64,
    pub countermeasure_randomized_sifted: u64,
    pub attack: Option<AttackMetrics>,
}

/// Metrics plus the optional per-click trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutput {
    pub metrics: SessionMetrics,
    pub trace: Option<Vec<TraceRow>>,
    pub records: Vec<SiftedRecord>,
}

enum Eve {
    None,
    Intermediate(IntermediateAttack),
    Deadtime(DeadtimeAttack),
    Superlinear(SuperlinearInterceptResend),
}

impl Eve {
    fn build(s: &Session) -> Result<Self> {
        let cfg = &s.config;
        let Some(a) = &cfg.attack else {
            return Ok(Eve::None);
        };
        let models = [&s.models[0], &s.models[1]];
        let phase = a.emission_phase_ns.map(|p| p * NS);
        Ok(match a.attack {
            AttackKind::IntermediateBasis => {
                let plan = IntermediatePlan::new(models, &s.timeline, a.trigger_shift(), a.pulse_energy, phase)?;
                Eve::Intermediate(IntermediateAttack::new(plan, a.eve_detector_efficiency, s.k_dead + 2))
            }
            AttackKind::DeadtimeFakedState => {
                let plan = DeadtimePlan::new(
                    models,
                    &s.timeline,
                    cfg.protocol.extinction_db,
                    a.pulse_energy.expect("validated"),
                    phase.unwrap_or(cfg.protocol.alice_phase_ns * NS),
                    a.trigger_shift(),
                    a.dt_leak_ns.map(|d| d * NS),
                    s.k_dead,
                )?;
                Eve::Deadtime(DeadtimeAttack::new(plan, a.eve_detector_efficiency))
            }
            AttackKind::SuperlinearIr => Eve::Superlinear(SuperlinearInterceptResend {
                energy: a.pulse_energy.expect("validated"),
                emission_phase: phase.unwrap_or(cfg.protocol.alice_phase_ns * NS),
                trigger_shift: a.trigger_shift(),
                efficiency: a.eve_detector_efficiency,
            }),
        })
    }
}

/// Fails when the attack's timing constraints do not hold for the session.
pub(crate) fn check_attack(s: &Session) -> Result<()> {
    Eve::build(s).map(|_| ())
}

/// One optical pulse entering Bob's analyzer.
struct BobPulse {
    state: PolarizationState,
    energy: f64,
    arrival: f64,
    trigger_shift: f64,
    id: u64,
}

struct Bob<'a> {
    seed: u64,
    bob: BobConfig,
    timeline: &'a crate::protocol::BitSlotTimeline,
    detectors: [DetectorState; 2],
    clicks: Vec<ClickEvent>,
}

impl Bob<'_> {
    fn darks_until(&mut self, t: f64) {
        for d in &mut self.detectors {
            self.clicks.extend(d.dark_clicks_until(t));
        }
    }

    fn receive(&mut self, p: &BobPulse) {
        let pm_slot = assign_bit_slot(self.timeline, Device::Pm, p.arrival);
        let choice = self.bob.choice(self.seed, pm_slot);
        let ports = split_energies(p.state, choice.basis, self.bob.extinction_db);
        let energies = [ports.0, ports.1];
        self.darks_until(p.arrival);
        for (port, e) in energies.into_iter().enumerate() {
            let d = choice.detector_for_port(port);
            self.direct(d, p.arrival, p.trigger_shift, e * p.energy, p.id);
        }
    }

    fn direct(&mut self, d: usize, arrival: f64, trigger_shift: f64, mu: f64, id: u64) {
        let pulse = IncidentPulse {
            arrival,
            trigger_shift,
            mu,
            pulse_id: Some(id),
        };
        if let Some(c) = self.detectors[d].sample_detection(&pulse) {
            self.clicks.push(c);
        }
    }
}

/// Runs one session from a config (relative table paths resolve against the
/// working directory).
pub fn run_session(config: &SessionConfig) -> Result<SessionOutput> {
    run_resolved(&config.resolve(None)?)
}

/// Runs an already resolved session.
pub fn run_resolved(s: &Session) -> Result<SessionOutput> {
    let cfg = &s.config;
    let seed = cfg.seed;
    let t_slot = s.timeline.slot_period();
    let bob_cfg = cfg.protocol.bob();
    let mut eve = Eve::build(s)?;
    let mut bob = Bob {
        seed,
        bob: bob_cfg,
        timeline: &s.timeline,
        detectors: [
            DetectorState::new(0, s.models[0].clone(), stream_rng(seed, Stream::Detector0)),
            DetectorState::new(1, s.models[1].clone(), stream_rng(seed, Stream::Detector1)),
        ],
        clicks: Vec::new(),
    };
    let mut photon_rng = stream_rng(seed, Stream::Alice);
    let mut eve_rng = stream_rng(seed, Stream::Eve);
    let mut notes: HashMap<i64, EveNote> = HashMap::new();
    let alice_phase = cfg.protocol.alice_phase_ns * NS;
    let mu = cfg.protocol.mu;

    if let Some(probe) = &cfg.probe {
        let spacing = probe.spacing_slots.unwrap_or(s.k_dead + 1).max(1);
        let points: Vec<(f64, f64)> = probe
            .trigger_shifts_ns
            .iter()
            .flat_map(|&t| probe.mus.iter().map(move |&m| (t * NS, m)))
            .collect();
        for (k, n) in (0..cfg.slots).step_by(spacing as usize).enumerate() {
            let (t, m) = points[((k as u64 / probe.pulses_per_point) % points.len() as u64) as usize];
            let arrival = n as f64 * t_slot + alice_phase;
            bob.darks_until(arrival);
            bob.direct(probe.detector, arrival, t, m, n);
        }
    } else {
        let mut pulses: Vec<FakedPulse> = Vec::new();
        for n in 0..cfg.slots as i64 {
            let (basis, bit) = alice_choice(seed, n);
            let alice = PolarizationState::bb84(basis, bit);
            let arrival = n as f64 * t_slot + alice_phase;
            if let Eve::None = eve {
                if mu > 0.0 {
                    bob.receive(&BobPulse {
                        state: alice,
                        energy: mu,
                        arrival,
                        trigger_shift: 0.0,
                        id: n as u64,
                    });
                }
                continue;
            }
            let photons = sample_photon_number(mu, &mut photon_rng);
            let (out, note) = match &mut eve {
                Eve::Intermediate(a) => a.step(n, alice, photons, t_slot, &mut eve_rng),
                Eve::Deadtime(a) => a.step(n, alice, photons, t_slot, &mut eve_rng),
                Eve::Superlinear(a) => a.step(n, alice, photons, t_slot, &mut eve_rng),
                Eve::None => unreachable!(),
            };
            if let Some(note) = note {
                notes.insert(n, note);
            }
            pulses.clear();
            pulses.extend(out);
            for p in &pulses {
                bob.receive(&BobPulse {
                    state: p.state,
                    energy: p.energy,
                    arrival: p.emission_time,
                    trigger_shift: p.trigger_shift,
                    id: n as u64,
                });
            }
        }
    }
    bob.darks_until(cfg.slots as f64 * t_slot);

    let policy = CountermeasurePolicy::from_config(&cfg.countermeasures);
    let deadtime_attack = matches!(eve, Eve::Deadtime(_));
    Ok(score(s, bob.clicks, &notes, &policy, deadtime_attack))
}

struct Slotted {
    slot: i64,
    click: ClickEvent,
}

fn score(
    s: &Session,
    clicks: Vec<ClickEvent>,
    notes: &HashMap<i64, EveNote>,
    policy: &CountermeasurePolicy,
    deadtime_attack: bool,
) -> SessionOutput {
    let cfg = &s.config;
    let seed = cfg.seed;
    let bob_cfg = cfg.protocol.bob();
    let slots = cfg.slots as i64;
    let k_dead = s.k_dead as i64;

    let mut times: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut slotted: Vec<Slotted> = clicks
        .into_iter()
        .map(|c| {
            times[c.detector].push(c.time);
            Slotted {
                slot: assign_bit_slot(&s.timeline, Device::detector(c.detector), c.time),
                click: c,
            }
        })
        .collect();
    for t in &mut times {
        t.sort_by(f64::total_cmp);
    }
    slotted.sort_by(|a, b| a.slot.cmp(&b.slot).then(a.click.time.total_cmp(&b.click.time)));

    let mut m = SessionMetrics {
        slots: cfg.slots,
        seed,
        simultaneous_deadtime_slots: s.k_dead,
        ..Default::default()
    };
    let mut tally = KeyTally::default();
    let mut attack = cfg.attack.map(|_| AttackMetrics::default());
    let mut registered_case = CaseCounts::default();
    let mut trace = cfg.trace.then(Vec::new);
    let mut records = Vec::new();
    let mut dead_until: Option<i64> = None;

    let mut i = 0;
    while i < slotted.len() {
        let slot = slotted[i].slot;
        let mut j = i;
        while j < slotted.len() && slotted[j].slot == slot {
            j += 1;
        }
        let group = &slotted[i..j];
        let in_range = (0..slots).contains(&slot);
        for c in group {
            m.click_counts.total += 1;
            match c.click.cause {
                ClickCause::Photon => m.click_counts.photon += 1,
                ClickCause::Dark => m.click_counts.dark += 1,
                ClickCause::Delayed => m.click_counts.delayed += 1,
            }
        }
        let mut decide = |decision: &dyn Fn(usize) -> &'static str| {
            if let Some(tr) = trace.as_mut() {
                for (k, c) in group.iter().enumerate() {
                    tr.push(TraceRow::from_click(c.slot, &c.click, decision(k)));
                }
            }
        };

        if dead_until.is_some_and(|d| slot <= d) {
            if in_range {
                m.slot_counts.deadtime += 1;
                m.click_counts.deadtime += group.len() as u64;
            } else {
                m.click_counts.out_of_range += group.len() as u64;
            }
            if cfg.protocol.extend_on_discarded {
                dead_until = Some(dead_until.unwrap().max(slot + k_dead));
            }
            let label = if in_range { "deadtime" } else { "out_of_range" };
            decide(&|_| label);
            i = j;
            continue;
        }

        let previous_dead_end = dead_until;
        dead_until = Some(slot + k_dead);
        let dets: Vec<usize> = group.iter().map(|c| c.click.detector).collect();
        let arb = arbitrate(&dets).expect("non-empty group");
        if !in_range {
            m.click_counts.out_of_range += group.len() as u64;
            decide(&|_| "out_of_range");
            i = j;
            continue;
        }

        let bob_slot = bob_cfg.choice(seed, slot);
        let (bit, detector, cause, randomized) = match arb {
            Arbitration::Double => match bob_cfg.double_click_policy {
                DoubleClickPolicy::Discard => {
                    m.slot_counts.double_click += 1;
                    m.click_counts.double_click += group.len() as u64;
                    decide(&|_| "double_click");
                    i = j;
                    continue;
                }
                DoubleClickPolicy::RandomBit => {
                    m.double_click_random_bits += 1;
                    let bit = (slot_word(seed, Stream::Arbitration, slot as u64) & 1) as u8;
                    (bit, None, None, Randomization::None)
                }
            },
            Arbitration::Single { detector, index } => {
                let c = &group[index].click;
                let r = policy.check(c, &times, slot, previous_dead_end);
                (bob_slot.bit(detector), Some(detector), Some(c.cause), r)
            }
        };
        let bit = if randomized.is_randomized() {
            m.countermeasure_randomized += 1;
            (slot_word(seed, Stream::Countermeasure, slot as u64) & 1) as u8
        } else {
            bit
        };

        let (alice_basis, alice_bit) = alice_choice(seed, slot);
        let note = notes.get(&slot);
        let record = SiftedRecord {
            slot,
            alice_basis,
            alice_bit,
            bob_basis: bob_slot.basis,
            swap: bob_slot.swap,
            bit,
            provenance: ClickProvenance {
                detector,
                cause,
                click_slot: slot,
            },
            eve_bit: note.map(|n| n.bit),
        };
        m.registered += 1;
        let sifted = tally.add(&record);
        if let Some(a) = attack.as_mut() {
            match note {
                Some(n) => {
                    a.attacked_registered += 1;
                    if let (true, Some(b)) = (deadtime_attack, n.basis) {
                        registered_case.add(deadtime_case(bob_slot, b, n.bit));
                    }
                    if sifted {
                        a.attacked_sifted += 1;
                        a.attacked_errors += (bit != alice_bit) as u64;
                    }
                }
                None => a.registered_outside_attacks += 1,
            }
        }
        if sifted && randomized.is_randomized() {
            m.countermeasure_randomized_sifted += 1;
        }
        let double = detector.is_none();
        if double {
            m.click_counts.double_click += group.len() as u64;
        } else {
            m.click_counts.superseded += group.len() as u64 - 1;
        }
        if sifted {
            m.slot_counts.accepted += 1;
            if !double {
                m.click_counts.accepted += 1;
            }
        } else {
            m.slot_counts.basis_mismatch += 1;
            if !double {
                m.click_counts.basis_mismatch += 1;
            }
        }
        let kept = match (double, sifted, randomized.is_randomized()) {
            (true, true, _) => "double_click_random",
            (true, false, _) => "double_click_random_mismatch",
            (false, true, false) => "accepted",
            (false, true, true) => "accepted_randomized",
            (false, false, _) => "basis_mismatch",
        };
        decide(&|k| if !double && k > 0 { "superseded" } else { kept });
        records.push(record);
        i = j;
    }

    m.slot_counts.empty = cfg.slots - m.slot_counts.total();
    m.sifted = tally.sifted;
    m.errors = tally.errors;
    m.qber = tally.qber();
    m.ones_fraction = tally.ones_fraction();
    m.eve_known_fraction = tally.eve_known_fraction();
    m.sift_fraction = (m.registered > 0).then(|| tally.sifted as f64 / m.registered as f64);
    if let Some(a) = attack.as_mut() {
        a.attacked_slots = notes.len() as u64;
        a.attacked_qber = (a.attacked_sifted > 0).then(|| a.attacked_errors as f64 / a.attacked_sifted as f64);
        if deadtime_attack {
            let mut by_case = CaseCounts::default();
            let mut keys: Vec<&i64> = notes.keys().collect();
            keys.sort();
            for n in keys {
                let note = notes[n];
                by_case.add(deadtime_case(bob_cfg.choice(seed, *n), note.basis.expect("BB84 note"), note.bit));
            }
            a.attacked_by_case = Some(by_case);
            a.registered_by_case = Some(registered_case);
        }
    }
    m.attack = attack;
    SessionOutput {
        metrics: m,
        trace,
        records,
    }
}
