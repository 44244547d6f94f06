//! From block groups to mapping tables, table families and formulas.

pub mod crack;
pub mod equiv;
pub mod gf2;
pub mod stride;
pub mod table;

pub use crack::{
    classify_traces, crack, simulate_set_index, CrackConfig, CrackResult, SetIndexRun,
};
pub use equiv::{
    consistency_report, equivalent_up_to_permutation, ConsistencyReport, Equivalence,
    Interpretation,
};
pub use gf2::{affine_labeling, fit_linear_gf2, fit_linear_gf2_over, BitFit, LinearFit};
pub use stride::{default_array_sizes, default_strides, stride_scan, KneeRow, StrideScan};
pub use table::{build_table, dedup_tables, Dedup, MappingTable};
