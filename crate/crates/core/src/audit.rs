//! Pointwise audit of the standing hypotheses: the identity
//! `(df/dx)^T grad h_l + D^2 h_l f = 0`, the three non-degeneracy
//! conditions, and the rank of the full Jacobian along `E`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RankReport};
use crate::system::{evaluate, Evaluation, PointState, SystemSpec};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionStatus {
    Pass,
    Fail,
    /// Failed, but the failure is not fatal (condition i).
    Warning,
    /// Measured off the equilibrium locus, where the condition asserts nothing.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub status: ConditionStatus,
    pub measured: usize,
    pub expected: usize,
}

/// Cutoffs actually applied during one audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditTolerances {
    pub equilibrium: f64,
    pub rank_jac_lambda: f64,
    pub rank_jac_x: f64,
    pub rank_full_jacobian: f64,
    pub rank_kernel_image: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub point: PointState,
    pub is_equilibrium: bool,
    pub f_residual: f64,
    /// Rank of df/dlambda against `min(m, n - k)`.
    pub cond_i: ConditionCheck,
    /// Rank of df/dx against `n - k`.
    pub cond_ii: ConditionCheck,
    /// `dim(ker df/dx ∩ im df/dx)` against 0.
    pub cond_iii: ConditionCheck,
    pub prop21_residual: f64,
    pub full_jacobian_rank: usize,
    pub tolerances: AuditTolerances,
    pub warnings: Vec<String>,
}

impl AuditReport {
    /// Equilibrium satisfying conditions ii and iii.
    pub fn is_nondegenerate(&self) -> bool {
        self.is_equilibrium
            && self.cond_ii.status == ConditionStatus::Pass
            && self.cond_iii.status == ConditionStatus::Pass
    }
}

fn rank_with(m: &DMatrix<f64>, tols: &Tolerances) -> Result<RankReport> {
    let probe = linalg::numeric_rank(m, None)?;
    let smax = probe.singular_values.first().copied().unwrap_or(0.0);
    linalg::numeric_rank(m, Some(tols.rank_cutoff(m.nrows(), m.ncols(), smax)))
}

fn prop21_from(ev: &Evaluation) -> f64 {
    (0..ev.jac_h.nrows())
        .map(|l| {
            let grad = ev.jac_h.row(l).transpose();
            (ev.jac_x.transpose() * grad + &ev.hess_h[l] * &ev.f_value).norm()
        })
        .fold(0.0, f64::max)
}

/// `max_l |(df/dx)^T grad h_l + D^2 h_l f|`, which vanishes at every point,
/// equilibrium or not.
pub fn check_prop21(sys: &SystemSpec, u: &PointState) -> Result<f64> {
    Ok(prop21_from(&evaluate(sys, u)?))
}

/// Dimension of `ker M ∩ im M` for square `M`, with both bases cut at `tol`.
pub(crate) fn kernel_image_overlap(m: &DMatrix<f64>, tol: f64, overlap_tol: f64) -> Result<usize> {
    let n = m.nrows();
    let (ker, _) = linalg::kernel_basis(m, Some(tol))?;
    let (im, _) = linalg::image_basis(m, Some(tol))?;
    let mut both = DMatrix::zeros(n, ker.ncols() + im.ncols());
    both.columns_mut(0, ker.ncols()).copy_from(&ker);
    both.columns_mut(ker.ncols(), im.ncols()).copy_from(&im);
    let r = linalg::numeric_rank(&both, Some(overlap_tol))?.rank;
    Ok(ker.ncols() + im.ncols() - r)
}

pub(crate) fn audit_evaluation(
    sys: &SystemSpec,
    u: &PointState,
    ev: &Evaluation,
    tols: &Tolerances,
) -> Result<AuditReport> {
    let (n, m, k) = (sys.n, sys.m, sys.k);
    let f_residual = ev.f_value.norm();
    let eq_tol = tols.equilibrium_bound(u.x.norm());
    let is_equilibrium = f_residual <= eq_tol;

    let r_lambda = rank_with(&ev.jac_lambda, tols)?;
    let r_x = rank_with(&ev.jac_x, tols)?;
    let r_full = rank_with(&ev.full_jacobian(), tols)?;
    let overlap_tol = tols.rank.max(1e-10);
    let overlap = kernel_image_overlap(&ev.jac_x, r_x.tolerance_used, overlap_tol)?;

    let mut warnings = Vec::new();
    let expected_i = m.min(n - k);
    let cond_i = ConditionCheck {
        status: if r_lambda.rank == expected_i {
            ConditionStatus::Pass
        } else {
            warnings.push(format!(
                "condition i: rank of df/dlambda is {}, expected {expected_i}",
                r_lambda.rank
            ));
            ConditionStatus::Warning
        },
        measured: r_lambda.rank,
        expected: expected_i,
    };
    let on_e = |ok: bool| match (is_equilibrium, ok) {
        (false, _) => ConditionStatus::Info,
        (true, true) => ConditionStatus::Pass,
        (true, false) => ConditionStatus::Fail,
    };
    let cond_ii = ConditionCheck {
        status: on_e(r_x.rank == n - k),
        measured: r_x.rank,
        expected: n - k,
    };
    let cond_iii = ConditionCheck {
        status: on_e(overlap == 0),
        measured: overlap,
        expected: 0,
    };
    if !is_equilibrium {
        warnings.push(format!(
            "not an equilibrium (|f| = {f_residual:e}); conditions ii and iii recorded for information"
        ));
    }
    Ok(AuditReport {
        point: u.clone(),
        is_equilibrium,
        f_residual,
        cond_i,
        cond_ii,
        cond_iii,
        prop21_residual: prop21_from(ev),
        full_jacobian_rank: r_full.rank,
        tolerances: AuditTolerances {
            equilibrium: eq_tol,
            rank_jac_lambda: r_lambda.tolerance_used,
            rank_jac_x: r_x.tolerance_used,
            rank_full_jacobian: r_full.tolerance_used,
            rank_kernel_image: overlap_tol,
        },
        warnings,
    })
}

pub fn audit_point(sys: &SystemSpec, u: &PointState, tols: &Tolerances) -> Result<AuditReport> {
    let ev = evaluate(sys, u)?;
    audit_evaluation(sys, u, &ev, tols)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionVerdict {
    pub full_jacobian_rank: usize,
    pub expected_rank: usize,
    /// `m + n - rank`, the local dimension of E when the rank is constant.
    pub kernel_dimension: usize,
    pub pass: bool,
}

/// Check `rank J = n - k` (so `dim E = m + k`) at each supplied equilibrium.
pub fn audit_manifold_dimension(
    sys: &SystemSpec,
    equilibria: &[PointState],
    tols: &Tolerances,
) -> Result<Vec<DimensionVerdict>> {
    equilibria
        .iter()
        .map(|u| {
            let ev = evaluate(sys, u)?;
            let residual = ev.f_value.norm();
            let bound = tols.equilibrium_bound(u.x.norm());
            if residual > bound {
                return Err(Error::NotEquilibrium {
                    residual,
                    tolerance: bound,
                });
            }
            let rank = rank_with(&ev.full_jacobian(), tols)?.rank;
            let expected = sys.n - sys.k;
            Ok(DimensionVerdict {
                full_jacobian_rank: rank,
                expected_rank: expected,
                kernel_dimension: sys.m + sys.n - rank,
                pass: rank == expected,
            })
        })
        .collect()
}
