//! Recover the slice hash of a sliced last-level cache from eviction
//! behavior, check it against a planted ground truth, and derive page-color
//! partitions from it.

pub mod config;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod hash;
pub mod io;
pub mod latency;
pub mod partition;
pub mod planted;
pub mod probe;
pub mod sandy_bridge;
pub mod sim;
pub mod solver;

pub use error::{
    GraphError, ModelError, PartitionError, ProbeError, SimError, SolverError, TraceError,
};
pub use geometry::{AddressFields, CacheGeometry};
pub use graph::{BlockGroups, EvictionEdge, Group};
pub use hash::{
    eval_four_core_formula, BitFunction, BoundHash, SliceHash, SliceLookup, FOUR_CORE_FORMULA_BITS,
};
pub use latency::{latency, LatencyModel};
pub use partition::{ColorScheme, PartitionPlan};
pub use probe::{DeskOracle, EquitableOracle, LatencyOracle};
pub use sim::{MemoryTrace, ReplacementPolicy, SlicedCache, TraceEvent, WorkloadConfig};
pub use solver::{CrackResult, MappingTable};
