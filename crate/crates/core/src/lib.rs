//! Detector-side attack laboratory for BB84 quantum key distribution.
//!
//! * [`detector`]: gated SPAD model (efficiency surfaces, click-time shift,
//!   dark counts, deadtime).
//! * [`characterize`]: count-rate inversion, superlinearity verdict and
//!   factor, intercept-resend QBER bound.
//! * [`protocol`]: polarization states, receiver optics, bit slots, sifting.
//! * [`attacks`]: eavesdropper strategies producing faked pulses.
//! * [`engine`]: deterministic Monte Carlo sessions and sweeps.
//! * [`calibration`]: built-in synthetic calibration tables for the two
//!   tested detectors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod calibration;
pub mod characterize;
pub mod detector;
pub mod engine;
pub mod error;
pub mod protocol;
pub mod rng;

pub use attacks::{AttackConfig, AttackKind, FakedPulse};
pub use characterize::{CountRateRecord, MeasurementMeta, SuperlinearityReport};
pub use detector::{ClickEvent, DetectorConfig, DetectorModel};
pub use engine::{SessionConfig, SessionMetrics};
pub use error::{Error, Result};
pub use protocol::{BitSlotTimeline, PolarizationState};

/// One nanosecond in seconds.
pub const NS: f64 = 1e-9;
