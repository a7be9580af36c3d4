//! Criterion benchmarks for the hot paths of the laboratory; see `benches/`.
