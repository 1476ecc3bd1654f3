//! Criterion benchmarks for the cvwitness pipeline; see `benches/pipeline.rs`.
