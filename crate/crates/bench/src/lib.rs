//! Criterion benchmarks for the solvers live under `benches/`.
