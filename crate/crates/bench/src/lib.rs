//! Criterion benchmarks for the analysis stages; see `benches/analysis.rs`.
