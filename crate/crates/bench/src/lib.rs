//! Criterion benchmarks for `nast-core`; see `benches/`.
