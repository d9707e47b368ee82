//! Criterion benchmarks for the percnat kernels live in `benches/`.
