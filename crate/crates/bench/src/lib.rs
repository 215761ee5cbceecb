//! Benchmark-only crate; see `benches/hotpaths.rs` for the measurements.
//! Kept as a separate workspace member so heavy criterion builds stay out
//! of the library and binary dependency graphs.
