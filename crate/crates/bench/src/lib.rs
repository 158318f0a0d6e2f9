//! Benchmarks for the plan language and evaluation routines; see `benches/`.
