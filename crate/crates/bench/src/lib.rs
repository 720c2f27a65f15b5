//! Benchmarks for the scheduling pipeline; see `benches/scheduling.rs`.
//!
//! Run with `cargo bench -p gus-bench`.
