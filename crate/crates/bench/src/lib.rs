//! Benchmarks for the recursion, graph sums, R-matrix and thimble
//! integrals; see `benches/recursion.rs`.
