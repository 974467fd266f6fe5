//! Dense linear-algebra primitives with explicit tolerance contracts.
//!
//! Every rank-dependent answer carries the cutoff it was computed with so
//! that downstream reports can be reproduced exactly.

use nalgebra::{Complex, DMatrix, DVector, Schur, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numeric rank together with the spectrum it was read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    /// Descending, length `min(rows, cols)`.
    pub singular_values: Vec<f64>,
    pub tolerance_used: f64,
}

/// Singular value decomposition with a full right factor.
///
/// Wide matrices are padded with zero rows so that `v` always has
/// `cols` orthonormal columns and kernel bases can be read off directly.
pub(crate) struct FullSvd {
    /// Descending singular values of the original matrix, `min(rows, cols)` of them.
    pub sigma: Vec<f64>,
    /// Left singular vectors (rows × min(rows, cols)).
    pub u: DMatrix<f64>,
    /// Right singular vectors (cols × cols).
    pub v: DMatrix<f64>,
}

pub(crate) fn check_finite(m: &DMatrix<f64>, context: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
        })
    }
}

pub(crate) fn full_svd(m: &DMatrix<f64>) -> FullSvd {
    let (rows, cols) = m.shape();
    let p = rows.min(cols);
    let padded = if rows < cols {
        let mut padded = DMatrix::zeros(cols, cols);
        padded.view_mut((0, 0), (rows, cols)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, true, true);
    let u_all = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v requested");
    let sigma: Vec<f64> = svd.singular_values.iter().take(p).copied().collect();
    let u = u_all.view((0, 0), (rows, p)).into_owned();
    FullSvd {
        sigma,
        u,
        v: v_t.transpose(),
    }
}

/// Standard spectral cutoff: `max(rows, cols) * sigma_max * eps`.
pub fn default_rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * f64::EPSILON
}

fn rank_from(sigma: &[f64], rows: usize, cols: usize, tol_override: Option<f64>) -> RankReport {
    let smax = sigma.first().copied().unwrap_or(0.0);
    let tol = tol_override.unwrap_or_else(|| default_rank_tolerance(rows, cols, smax));
    RankReport {
        rank: sigma.iter().filter(|&&s| s > tol).count(),
        singular_values: sigma.to_vec(),
        tolerance_used: tol,
    }
}

pub fn numeric_rank(m: &DMatrix<f64>, tol_override: Option<f64>) -> Result<RankReport> {
    check_finite(m, "matrix passed to numeric_rank")?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(RankReport {
            rank: 0,
            singular_values: Vec::new(),
            tolerance_used: tol_override.unwrap_or(0.0),
        });
    }
    let svd = full_svd(m);
    Ok(rank_from(&svd.sigma, rows, cols, tol_override))
}

/// Orthonormal kernel basis (columns) and the rank report it was cut from.
pub fn kernel_basis(m: &DMatrix<f64>, tol_override: Option<f64>) -> Result<(DMatrix<f64>, RankReport)> {
    check_finite(m, "matrix passed to kernel_basis")?;
    let (rows, cols) = m.shape();
    if rows == 0 {
        return Ok((
            DMatrix::identity(cols, cols),
            RankReport {
                rank: 0,
                singular_values: Vec::new(),
                tolerance_used: tol_override.unwrap_or(0.0),
            },
        ));
    }
    let svd = full_svd(m);
    let report = rank_from(&svd.sigma, rows, cols, tol_override);
    let basis = svd.v.columns(report.rank, cols - report.rank).into_owned();
    Ok((basis, report))
}

/// Orthonormal image basis (columns) and the rank report it was cut from.
pub fn image_basis(m: &DMatrix<f64>, tol_override: Option<f64>) -> Result<(DMatrix<f64>, RankReport)> {
    check_finite(m, "matrix passed to image_basis")?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok((
            DMatrix::zeros(rows, 0),
            RankReport {
                rank: 0,
                singular_values: Vec::new(),
                tolerance_used: tol_override.unwrap_or(0.0),
            },
        ));
    }
    let svd = full_svd(m);
    let report = rank_from(&svd.sigma, rows, cols, tol_override);
    let basis = svd.u.columns(0, report.rank).into_owned();
    Ok((basis, report))
}

/// Minimizer of `|A x - b|` for full-column-rank `A`, via Householder QR.
pub fn solve_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    solve_least_squares_tol(a, b, None)
}

pub fn solve_least_squares_tol(a: &DMatrix<f64>, b: &DVector<f64>, tol_override: Option<f64>) -> Result<DVector<f64>> {
    check_finite(a, "least-squares matrix")?;
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "least-squares right-hand side".into(),
        });
    }
    let (rows, cols) = a.shape();
    if b.len() != rows {
        return Err(Error::dim("least-squares right-hand side", rows, b.len()));
    }
    let report = numeric_rank(a, tol_override)?;
    if report.rank < cols {
        return Err(Error::RankDeficient {
            context: "least-squares matrix".into(),
            report,
        });
    }
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    let r = qr.r();
    r.solve_upper_triangular(&qtb).ok_or_else(|| Error::RankDeficient {
        context: "least-squares triangular factor".into(),
        report: numeric_rank(a, tol_override).expect("already checked finite"),
    })
}

/// Minimum-norm solution of `A x ≈ b` with singular values at or below
/// `tol` discarded. Never fails on rank deficiency.
pub fn pseudo_solve(a: &DMatrix<f64>, b: &DVector<f64>, tol_override: Option<f64>) -> Result<DVector<f64>> {
    check_finite(a, "pseudo-inverse matrix")?;
    let (rows, cols) = a.shape();
    if b.len() != rows {
        return Err(Error::dim("pseudo-inverse right-hand side", rows, b.len()));
    }
    let svd = full_svd(a);
    let report = rank_from(&svd.sigma, rows, cols, tol_override);
    let mut x = DVector::zeros(cols);
    for i in 0..report.rank {
        let coef = svd.u.column(i).dot(b) / svd.sigma[i];
        x += svd.v.column(i) * coef;
    }
    Ok(x)
}

/// Total order used for every reported spectrum: ascending real part, then
/// descending imaginary part (so a conjugate pair lists `+i` first).
pub fn spectrum_order(a: &Complex<f64>, b: &Complex<f64>) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(b.im.total_cmp(&a.im))
}

/// All eigenvalues of a real square matrix, with multiplicity.
pub fn eigen_dense(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    check_finite(m, "matrix passed to eigen_dense")?;
    if !m.is_square() {
        return Err(Error::dim("eigen_dense columns", m.nrows(), m.ncols()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Input("real Schur iteration did not converge".into()))?;
    let mut eig: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    // Conjugate pairs from the 2x2 Schur blocks are exact conjugates; snap
    // the sign of zero imaginary parts so that ordering is reproducible.
    for z in eig.iter_mut() {
        if z.im == 0.0 {
            z.im = 0.0;
        }
    }
    eig.sort_by(spectrum_order);
    Ok(eig)
}

/// Canonical orthonormal basis of the column span of `basis`.
///
/// The span is brought to reduced row-echelon form (rows = basis vectors)
/// and then orthonormalized in pivot order, so the result does not depend on
/// which basis of the subspace was passed in. Pivot entries are positive.
pub fn canonical_basis(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let (dim, d) = basis.shape();
    if d == 0 {
        return DMatrix::zeros(dim, 0);
    }
    let mut rows = basis.transpose();
    let mut pivot_row = 0;
    for col in 0..dim {
        if pivot_row == d {
            break;
        }
        let (best, val) = (pivot_row..d)
            .map(|r| (r, rows[(r, col)].abs()))
            .fold((pivot_row, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if val <= 1e-10 {
            continue;
        }
        rows.swap_rows(pivot_row, best);
        let p = rows[(pivot_row, col)];
        for c in 0..dim {
            rows[(pivot_row, c)] /= p;
        }
        for r in 0..d {
            if r != pivot_row {
                let factor = rows[(r, col)];
                if factor != 0.0 {
                    for c in 0..dim {
                        rows[(r, c)] -= factor * rows[(pivot_row, c)];
                    }
                }
            }
        }
        pivot_row += 1;
    }
    let mut out = DMatrix::zeros(dim, d);
    let mut filled = 0;
    for r in 0..d {
        let mut v = rows.row(r).transpose();
        for j in 0..filled {
            let q = out.column(j).clone_owned();
            v -= &q * q.dot(&v);
        }
        let norm = v.norm();
        if norm > 1e-12 {
            out.set_column(filled, &(v / norm));
            filled += 1;
        }
    }
    out.columns(0, filled).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_matrix_has_rank_zero() {
        let r = numeric_rank(&DMatrix::zeros(3, 3), None).unwrap();
        assert_eq!(r.rank, 0);
        assert_eq!(r.singular_values.len(), 3);
    }

    #[test]
    fn identity_rank_and_spectrum() {
        let r = numeric_rank(&DMatrix::identity(3, 3), None).unwrap();
        assert_eq!(r.rank, 3);
        for s in &r.singular_values {
            assert_relative_eq!(*s, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn example_jacobian_has_rank_one() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, -1.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let r = numeric_rank(&m, None).unwrap();
        assert_eq!(r.rank, 1);
        assert!(r.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn non_finite_is_rejected() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(numeric_rank(&m, None), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn least_squares_examples() {
        let x = solve_least_squares(&DMatrix::identity(2, 2), &DVector::from_vec(vec![3.0, 4.0])).unwrap();
        assert_relative_eq!(x, DVector::from_vec(vec![3.0, 4.0]), epsilon = 1e-14);

        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let x = solve_least_squares(&a, &DVector::from_vec(vec![0.0, 2.0])).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-14);

        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = solve_least_squares(&a, &DVector::from_vec(vec![1.0, 2.0])).unwrap_err();
        match err {
            Error::RankDeficient { report, .. } => assert_eq!(report.rank, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn eigen_examples() {
        let e = eigen_dense(&DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -1.0]))).unwrap();
        assert_relative_eq!(e[0].re, -1.0);
        assert_relative_eq!(e[1].re, 2.0);

        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let e = eigen_dense(&rot).unwrap();
        assert_relative_eq!(e[0].im, 1.0, epsilon = 1e-14);
        assert_relative_eq!(e[1].im, -1.0, epsilon = 1e-14);
        assert!(e[0].re.abs() < 1e-14);

        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, -1.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let e = eigen_dense(&m).unwrap();
        let mut moduli: Vec<f64> = e.iter().map(|z| z.norm()).collect();
        moduli.sort_by(f64::total_cmp);
        assert!(moduli[0] < 1e-14 && moduli[1] < 1e-14);
        assert_relative_eq!(moduli[2], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn kernel_of_wide_matrix() {
        // x1 + x2 + x3 = 0
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let (k, r) = kernel_basis(&m, None).unwrap();
        assert_eq!(r.rank, 1);
        assert_eq!(k.ncols(), 2);
        assert!((&m * &k).norm() < 1e-14);
    }

    #[test]
    fn canonical_basis_is_basis_independent() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let rot = DMatrix::from_row_slice(2, 2, &[0.6, 0.8, -0.8, 0.6]);
        let b = &a * rot;
        let ca = canonical_basis(&a);
        let cb = canonical_basis(&b);
        assert_relative_eq!(ca, cb, epsilon = 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(
            ca.column(0).into_owned(),
            DVector::from_vec(vec![s, 0.0, s]),
            epsilon = 1e-12
        );
    }

    #[test]
    fn pseudo_solve_handles_rank_deficiency() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let x = pseudo_solve(&a, &DVector::from_vec(vec![2.0, 2.0]), None).unwrap();
        assert_relative_eq!(x, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-14);
    }
}
