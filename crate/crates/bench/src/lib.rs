//! Criterion benchmarks for the oracle, the surrogate fit and one training epoch; see `benches/`.
