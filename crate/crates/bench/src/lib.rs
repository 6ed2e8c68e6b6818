//! Criterion benchmarks for the ioscen solvers; see `benches/`.
