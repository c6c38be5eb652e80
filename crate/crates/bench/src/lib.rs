//! Criterion benchmarks for the simulator hot paths; see `benches/`.
