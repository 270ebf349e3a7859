//! Criterion benchmarks for cogrelay; see `benches/`.
