//! Receiver-side countermeasures: bits that look attacker-induced are
//! replaced by random bits instead of being discarded.

use serde::{Deserialize, Serialize};

use super::config::CountermeasureConfig;
use crate::detector::ClickEvent;
use crate::NS;

/// Which rules fired for one registered click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Randomization {
    None,
    Coincident,
    PostDeadtime,
    Both,
}

impl Randomization {
    pub fn is_randomized(self) -> bool {
        self != Randomization::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CountermeasurePolicy {
    /// Coincidence window, seconds.
    pub coincident_window: Option<f64>,
    /// Number of slots after a deadtime whose clicks get random bits.
    pub post_deadtime_slots: Option<u64>,
}

impl CountermeasurePolicy {
    pub fn from_config(c: &CountermeasureConfig) -> Self {
        Self {
            coincident_window: c.coincident_click.enabled.then_some(c.coincident_click.window_ns * NS),
            post_deadtime_slots: c.post_deadtime.enabled.then_some(c.post_deadtime.slots),
        }
    }

    /// Rules for a click registered in `slot`. `times` holds every click time
    /// of each detector (sorted), discarded ones included; `previous_dead_end`
    /// is the last slot of the most recent simultaneous deadtime.
    pub fn check(&self, click: &ClickEvent, times: &[Vec<f64>; 2], slot: i64, previous_dead_end: Option<i64>) -> Randomization {
        let coincident = self.coincident_window.is_some_and(|w| {
            let other = &times[1 - click.detector];
            let lo = other.partition_point(|&t| t < click.time - w);
            other.get(lo).is_some_and(|&t| t <= click.time + w)
        });
        let post = match (self.post_deadtime_slots, previous_dead_end) {
            (Some(k), Some(end)) => slot - end <= k as i64,
            _ => false,
        };
        match (coincident, post) {
            (false, false) => Randomization::None,
            (true, false) => Randomization::Coincident,
            (false, true) => Randomization::PostDeadtime,
            (true, true) => Randomization::Both,
        }
    }
}

/// Bit Bob keeps for a registered click: `bit` unless a rule fires, then
/// `random_bit`.
pub fn apply_countermeasures(
    policy: &CountermeasurePolicy,
    click: &ClickEvent,
    bit: u8,
    times: &[Vec<f64>; 2],
    slot: i64,
    previous_dead_end: Option<i64>,
    random_bit: u8,
) -> (u8, Randomization) {
    let r = policy.check(click, times, slot, previous_dead_end);
    (if r.is_randomized() { random_bit } else { bit }, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::ClickCause;
    use crate::rng::{slot_word, Stream};

    fn click(detector: usize, t_ns: f64) -> ClickEvent {
        ClickEvent {
            detector,
            time: t_ns * NS,
            cause: ClickCause::Photon,
            pulse_id: None,
            shift: None,
            trigger_shift: None,
            mu: None,
        }
    }

    fn both() -> CountermeasurePolicy {
        CountermeasurePolicy {
            coincident_window: Some(2.5 * NS),
            post_deadtime_slots: Some(1),
        }
    }

    #[test]
    fn isolated_click_is_untouched() {
        let times = [vec![100.0 * NS], vec![]];
        let (bit, r) = apply_countermeasures(&both(), &click(0, 100.0), 1, &times, 50, Some(10), 0);
        assert_eq!((bit, r), (1, Randomization::None));
    }

    #[test]
    fn close_clicks_get_uniform_bits() {
        let times = [vec![100.0 * NS], vec![101.5 * NS]];
        let n = 100_000u64;
        let ones: u64 = (0..n)
            .map(|i| {
                let rb = (slot_word(9, Stream::Countermeasure, i) & 1) as u8;
                let (bit, r) = apply_countermeasures(&both(), &click(0, 100.0), 0, &times, 50, None, rb);
                assert_eq!(r, Randomization::Coincident);
                bit as u64
            })
            .sum();
        let f = ones as f64 / n as f64;
        assert!((f - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt(), "{f}");
    }

    #[test]
    fn distant_clicks_are_sequential() {
        let times = [vec![100.0 * NS], vec![105.0 * NS]];
        let (bit, r) = apply_countermeasures(&both(), &click(0, 100.0), 1, &times, 50, None, 0);
        assert_eq!((bit, r), (1, Randomization::None));
    }

    #[test]
    fn first_slot_after_deadtime() {
        let times = [vec![0.0], vec![]];
        assert_eq!(both().check(&click(0, 0.0), &times, 11, Some(10)), Randomization::PostDeadtime);
        assert_eq!(both().check(&click(0, 0.0), &times, 12, Some(10)), Randomization::None);
        let off = CountermeasurePolicy::default();
        assert_eq!(off.check(&click(0, 0.0), &times, 11, Some(10)), Randomization::None);
    }
}
