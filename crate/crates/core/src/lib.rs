//! Equilibrium loci of parametric dynamical systems with first integrals.
//!
//! The crate audits the non-degeneracy hypotheses at points of the
//! equilibrium locus `E = {f(lambda, x) = 0}`, locates and traces fibers
//! `E_lambda`, transports equilibria along parameter curves with the natural
//! connection, measures holonomy, and computes the monodromy datum
//! (permutation plus winding vector) of the nonzero Jacobian spectrum along
//! loops.

pub mod audit;
pub mod connection;
pub mod dsl;
pub mod error;
pub mod expr;
pub mod finder;
pub mod io;
pub mod linalg;
pub mod monodromy;
pub(crate) mod serde_vec;
pub mod system;
pub mod tolerances;

pub use audit::{
    audit_manifold_dimension, audit_point, check_prop21, AuditReport, ConditionCheck, ConditionStatus, DimensionVerdict,
};
pub use connection::{
    check_cocycle, connection_frame, holonomy_loop, lift_curve, metric_g, roundtrip, CocyclePaths, CocycleReport,
    ConnectionFrame, HolonomyReport, ParamPath, TransportOptions, TransportResult,
};
pub use dsl::{build_system_from_config, DslDeclaration};
pub use error::{Error, ErrorClass, Result};
pub use finder::{
    enumerate_level_points, newton_on_level_set, trace_fiber, EquilibriumPoint, FiberTrace, Topology, TraceOptions,
};
pub use linalg::{eigen_dense, numeric_rank, solve_least_squares, RankReport};
pub use monodromy::{
    eigen_along_fiber_loop, rotation_family, split_spectrum, stability_signature, track_matrix_loop, zero_tolerance,
    EigenLoopReport, SpectrumSplit, StabilitySignature, TrackOptions,
};
pub use system::{builtin, evaluate, BuiltinParams, DerivativeSource, Evaluation, PointState, SystemSpec};
pub use tolerances::Tolerances;

pub use nalgebra::{Complex, DMatrix, DVector};
