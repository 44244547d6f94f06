use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("address {address:#x} does not fit in {width} bits")]
    AddressOutOfRange { address: u64, width: u32 },
    #[error(
        "address {address:#x} (a2={a2:#x}, set {set_index}) is not covered by the mapping table"
    )]
    Unmapped {
        address: u64,
        a2: u64,
        set_index: u64,
    },
    #[error("slice id {slice} at address {address:#x} is not below slice count {slice_count}")]
    SliceOutOfRange {
        address: u64,
        slice: u32,
        slice_count: usize,
    },
    #[error("invalid hash: {0}")]
    InvalidHash(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("address {0:#x} is not line aligned")]
    Unaligned(u64),
    #[error("duplicate block address {0:#x}")]
    DuplicateAddress(u64),
    #[error("workload has no block addresses")]
    EmptyWorkload,
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("group {group} spans set indexes {first} and {second}")]
    MixedSetIndex {
        group: usize,
        first: u64,
        second: u64,
    },
    #[error("{groups} classified groups exceed slice count {slice_count}")]
    TooManyGroups { groups: usize, slice_count: usize },
    #[error("assignment slice id {slice} is not below slice count {slice_count}")]
    SliceOutOfRange { slice: u32, slice_count: usize },
    #[error("need at least {needed} assignments, got {got}")]
    TooFewAssignments { needed: usize, got: usize },
    #[error("underdetermined system, free address bits {free_bits:?}")]
    Underdetermined { free_bits: Vec<u32> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbeError {
    #[error("pool of {pool} blocks contains no eviction set of {needed} congruent blocks")]
    InsufficientPool { pool: usize, needed: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("demands total {requested} colors, only {available} available")]
    OverSubscribed { requested: u64, available: u64 },
    #[error("invalid color scheme: {0}")]
    InvalidScheme(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("window {start}..={end} contains no trace events")]
    EmptyWindow { start: u64, end: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}
