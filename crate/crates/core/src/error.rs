use thiserror::Error;

use crate::audit::AuditReport;
use crate::expr::ExprError;
use crate::linalg::RankReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad classification used for exit codes and report status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed input, dimension mismatch, unsupported request.
    Input,
    /// A rank condition, transversality or non-degeneracy hypothesis failed,
    /// or a numerical procedure could not complete at the requested tolerance.
    Degeneracy,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("non-finite entry in {context}")]
    NonFinite { context: String },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension { what: String, expected: usize, got: usize },

    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("evaluation of {what} failed at lambda={lambda:?}, x={x:?}: {reason}")]
    Evaluation {
        what: String,
        lambda: Vec<f64>,
        x: Vec<f64>,
        reason: String,
    },

    #[error("first-integral identity violated: residual {residual:e} at lambda={lambda:?}, x={x:?}")]
    NotFirstIntegral {
        residual: f64,
        lambda: Vec<f64>,
        x: Vec<f64>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("rank deficient {context}: rank {} of {} (tolerance {:e})", report.rank, report.singular_values.len(), report.tolerance_used)]
    RankDeficient { context: String, report: RankReport },

    #[error("point is not an equilibrium: |f| = {residual:e} exceeds {tolerance:e}")]
    NotEquilibrium { residual: f64, tolerance: f64 },

    #[error("non-degeneracy conditions fail at the requested point: {message}")]
    Condition { message: String, report: Box<AuditReport> },

    #[error("newton did not converge after {iterations} iterations (residual {residual:e})")]
    Divergence { iterations: usize, residual: f64 },

    #[error("iterate left the domain at x={x:?}")]
    OutOfDomain { x: Vec<f64> },

    #[error("branch point at x={x:?}: kernel dimension {kernel_dim}, expected 1")]
    BranchPoint { x: Vec<f64>, kernel_dim: usize },

    #[error("transport failed at t={t}: {reason}")]
    Transport { t: f64, reason: String },

    #[error("holonomy endpoint {index} unmatched: nearest enumerated point at distance {displacement:e}")]
    HolonomyMismatch { index: usize, displacement: f64 },

    #[error("path leaves C*: tracked eigenvalue modulus {modulus:e} below zero tolerance at s={s}; winding undefined")]
    LeavesCStar { s: f64, modulus: f64 },

    #[error("eigenvalue tracking could not resolve the loop near s={s} (refinement budget exhausted)")]
    Resolution { s: f64 },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Input(_)
            | Error::NonFinite { .. }
            | Error::Dimension { .. }
            | Error::Expr(_)
            | Error::Evaluation { .. }
            | Error::NotFirstIntegral { .. }
            | Error::Unsupported(_) => ErrorClass::Input,
            _ => ErrorClass::Degeneracy,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Input => 1,
            ErrorClass::Degeneracy => 2,
        }
    }

    /// Short machine-readable tag used in serialized reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::NonFinite { .. } => "non_finite",
            Error::Dimension { .. } => "dimension",
            Error::Expr(_) => "expression",
            Error::Evaluation { .. } => "evaluation",
            Error::NotFirstIntegral { .. } => "not_first_integral",
            Error::Unsupported(_) => "unsupported",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::NotEquilibrium { .. } => "not_equilibrium",
            Error::Condition { .. } => "condition_failure",
            Error::Divergence { .. } => "divergence",
            Error::OutOfDomain { .. } => "out_of_domain",
            Error::BranchPoint { .. } => "branch_point",
            Error::Transport { .. } => "transport",
            Error::HolonomyMismatch { .. } => "holonomy_mismatch",
            Error::LeavesCStar { .. } => "leaves_c_star",
            Error::Resolution { .. } => "resolution",
        }
    }

    pub(crate) fn dim(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what: what.into(),
            expected,
            got,
        }
    }
}
