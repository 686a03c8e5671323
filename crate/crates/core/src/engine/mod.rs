//! Deterministic Monte Carlo sessions: Alice, Eve, Bob, countermeasures and
//! metrics, plus parameter sweeps.

mod characterization;
pub mod config;
pub mod countermeasures;
pub mod session;
pub mod sweep;
pub mod trace;

pub use characterization::characterization_run;
pub use config::{
    CoincidentClickConfig, CountermeasureConfig, DetectorSpec, EnergyTimeSpec, OffsetsNs, PostDeadtimeConfig,
    ProbeConfig, ProtocolConfig, Session, SessionConfig, SurfaceSpec,
};
pub use countermeasures::{apply_countermeasures, CountermeasurePolicy, Randomization};
pub use session::{
    run_resolved, run_session, AttackMetrics, ClickCounts, CaseCounts, SessionMetrics, SessionOutput, SlotCounts,
};
pub use sweep::{energy_grid_db, sweep, SweepAxis, SweepConfig, SweepRow};
pub use trace::{histogram, read_trace, summarize, write_trace, HistogramRow, HistogramSummary, TraceRow};
