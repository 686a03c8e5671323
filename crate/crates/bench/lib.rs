//! Criterion benchmarks for spadlab; see `benches/core.rs`.
