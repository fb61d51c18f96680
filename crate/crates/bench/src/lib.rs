//! Criterion benchmarks for the `drdml` crate live under `benches/`.
