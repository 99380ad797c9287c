//! Threshold and compressed threshold pivoting for dense symmetric indefinite
//! supernodes.

pub mod comm_model;
pub mod compressed;
pub mod dense;
pub mod error;
pub mod generate;
pub mod mmio;
pub mod par;
pub mod parsim;
pub mod report;
pub mod restricted;
pub mod solve;
pub mod supernode;
pub mod tpp;

pub use dense::{DenseMatrix, MatrixRead, RowMatrix};
pub use error::{Error, Result};
pub use par::ExecPolicy;
pub use supernode::{
    column_max_below, form_schur, GrowthTrace, PartialFactorization, PivotBlock, PivotKind, PivotParams,
    SupernodeMatrix,
};
pub use tpp::{factor_tpp, factor_tpp_with, test_1x1, test_2x2, Factored, KernelStats};
pub use compressed::{
    build_relaxed, build_strict, check_dominance, factor_compressed, factor_compressed_with, merge_relaxed,
    merge_strict, update_strict_c, CompressedMatrix, CompressionMode, Provenance,
};
pub use restricted::{factor_restricted, factor_restricted_with, GrowthReport};
pub use comm_model::{reduction_costs, scheme_costs, tpp_ops, CostTriple, Scheme};
pub use generate::{generate, Generated, GeneratorKind, GeneratorSpec};
pub use parsim::{simulate, simulate_with, CommCounters, Partition, Simulation};
pub use solve::{backward_error, solve_with_refinement, Method, SolveOptions, SolveReport};
pub use report::{report, DelayRow, Report, Run, REPORT_SCHEMA};
