//! Criterion benchmarks for `sqpalette` live under `benches/`.
