//! Sliced LLC simulator and the pointer-chase workload that drives it.

pub mod cache;
pub mod trace;
pub mod workload;

pub use cache::{AccessOutcome, Eviction, EvictionRecord, ReplacementPolicy, SlicedCache};
pub use trace::{
    read_trace, read_trace_file, write_trace, write_trace_file, MemoryTrace, Op, TraceEvent,
};
pub use workload::{
    build_chain, chain_links, run_workload, run_workload_into, AddressSpec, WorkloadConfig,
    WorkloadRun, WorkloadStats,
};
