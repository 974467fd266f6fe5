//! Built-in systems. All three supply every derivative block analytically.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{Constraint, Domain, Dynamics, ParameterBox, SystemSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuiltinParams {
    /// Ring size for `rfmr`.
    pub n: Option<usize>,
}

/// Look up a built-in system by its CLI name: `planar`, `example2` or `rfmr`.
pub fn builtin(name: &str, params: &BuiltinParams) -> Result<SystemSpec> {
    match name {
        "planar" => Ok(Planar::spec()),
        "example2" => Ok(Example2::spec()),
        "rfmr" => {
            let n = params
                .n
                .ok_or_else(|| Error::Input("rfmr requires the size parameter n".into()))?;
            if n < 3 {
                return Err(Error::Input(format!("rfmr requires n >= 3, got {n}")));
            }
            Ok(Rfmr { n }.spec())
        }
        other => Err(Error::Input(format!(
            "unknown built-in system `{other}` (expected planar, example2 or rfmr)"
        ))),
    }
}

/// `f = (-x + lambda (y^2 - 1), 0)`, `h = y` on the closed unit disk,
/// `lambda` in (0, 1).
///
/// On the unit circle `f_1 = -x - lambda x^2`, so `f_1 x = -x^2 (1 + lambda x) <= 0`
/// and the disk is forward invariant. The fiber over `lambda` is the parabola
/// `x = lambda (y^2 - 1)`.
#[derive(Debug, Clone, Copy)]
pub struct Planar;

impl Planar {
    pub fn spec() -> SystemSpec {
        SystemSpec {
            name: "planar".into(),
            n: 2,
            m: 1,
            k: 1,
            dynamics: Arc::new(Planar),
            domain: Domain::boxed(vec![-1.0, -1.0], vec![1.0, 1.0])
                .with_constraint(Constraint::new("x1^2 + x2^2 - 1", |x| x[0] * x[0] + x[1] * x[1] - 1.0)),
            parameter_box: ParameterBox {
                lower: vec![0.0],
                upper: vec![1.0],
            },
        }
    }
}

impl Dynamics for Planar {
    fn f(&self, lambda: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (l, x1, y) = (lambda[0], x[0], x[1]);
        Ok(DVector::from_vec(vec![-x1 + l * (y * y - 1.0), 0.0]))
    }

    fn h(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(vec![x[1]]))
    }

    fn jac_x(&self, lambda: &DVector<f64>, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_row_slice(2, 2, &[-1.0, 2.0 * lambda[0] * x[1], 0.0, 0.0]))
    }

    fn jac_lambda(&self, _lambda: &DVector<f64>, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_row_slice(2, 1, &[x[1] * x[1] - 1.0, 0.0]))
    }

    fn jac_h(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_row_slice(1, 2, &[0.0, 1.0]))
    }

    fn hess_h(&self, _x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(2, 2)])
    }
}

/// `f = (-lambda y (z - x), lambda x (z - x), 0)` with first integrals
/// `h_1 = x^2 + y^2 + z^2` and `h_2 = 4x^2 + 4y^2 + z^2/4`.
///
/// The domain is `{1 <= h_1 <= 3, 5 <= h_2 <= 15}`. The additional
/// requirement `h_2 >= 5 h_1` that sometimes accompanies this example is
/// dropped: `h_2 - 5 h_1 = -x^2 - y^2 - 4.75 z^2 <= 0`, so it would leave
/// only the origin, which the other bounds already exclude.
#[derive(Debug, Clone, Copy)]
pub struct Example2;

impl Example2 {
    pub fn spec() -> SystemSpec {
        let r = 3f64.sqrt();
        let h1 = |x: &DVector<f64>| x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        let h2 = |x: &DVector<f64>| 4.0 * x[0] * x[0] + 4.0 * x[1] * x[1] + 0.25 * x[2] * x[2];
        SystemSpec {
            name: "example2".into(),
            n: 3,
            m: 1,
            k: 2,
            dynamics: Arc::new(Example2),
            domain: Domain::boxed(vec![-r; 3], vec![r; 3])
                .with_constraint(Constraint::new("1 - h1", move |x| 1.0 - h1(x)))
                .with_constraint(Constraint::new("h1 - 3", move |x| h1(x) - 3.0))
                .with_constraint(Constraint::new("5 - h2", move |x| 5.0 - h2(x)))
                .with_constraint(Constraint::new("h2 - 15", move |x| h2(x) - 15.0)),
            parameter_box: ParameterBox {
                lower: vec![0.0],
                upper: vec![f64::INFINITY],
            },
        }
    }
}

impl Dynamics for Example2 {
    fn f(&self, lambda: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (l, a, b, c) = (lambda[0], x[0], x[1], x[2]);
        Ok(DVector::from_vec(vec![-l * b * (c - a), l * a * (c - a), 0.0]))
    }

    fn h(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (a, b, c) = (x[0], x[1], x[2]);
        Ok(DVector::from_vec(vec![
            a * a + b * b + c * c,
            4.0 * a * a + 4.0 * b * b + 0.25 * c * c,
        ]))
    }

    fn jac_x(&self, lambda: &DVector<f64>, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (l, a, b, c) = (lambda[0], x[0], x[1], x[2]);
        #[rustfmt::skip]
        let m = DMatrix::from_row_slice(3, 3, &[
            l * b,               -l * (c - a), -l * b,
            l * c - 2.0 * l * a, 0.0,          l * a,
            0.0,                 0.0,          0.0,
        ]);
        Some(m)
    }

    fn jac_lambda(&self, _lambda: &DVector<f64>, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (a, b, c) = (x[0], x[1], x[2]);
        Some(DMatrix::from_row_slice(3, 1, &[-b * (c - a), a * (c - a), 0.0]))
    }

    fn jac_h(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (a, b, c) = (x[0], x[1], x[2]);
        Some(DMatrix::from_row_slice(
            2,
            3,
            &[2.0 * a, 2.0 * b, 2.0 * c, 8.0 * a, 8.0 * b, 0.5 * c],
        ))
    }

    fn hess_h(&self, _x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 2.0])),
            DMatrix::from_diagonal(&DVector::from_vec(vec![8.0, 8.0, 0.5])),
        ])
    }
}

/// Ribosome flow model on a ring of `n` sites:
/// `x_i' = lambda_{i-1} x_{i-1} (1 - x_i) - lambda_i x_i (1 - x_{i+1})`
/// with cyclic indices, conserving total occupancy `sum x_i`.
#[derive(Debug, Clone, Copy)]
pub struct Rfmr {
    pub n: usize,
}

impl Rfmr {
    pub fn spec(self) -> SystemSpec {
        let n = self.n;
        SystemSpec {
            name: "rfmr".into(),
            n,
            m: n,
            k: 1,
            dynamics: Arc::new(self),
            domain: Domain::boxed(vec![0.0; n], vec![1.0; n]),
            parameter_box: ParameterBox {
                lower: vec![0.0; n],
                upper: vec![f64::INFINITY; n],
            },
        }
    }

    fn prev(&self, i: usize) -> usize {
        (i + self.n - 1) % self.n
    }

    fn next(&self, i: usize) -> usize {
        (i + 1) % self.n
    }

    fn flux(&self, lambda: &DVector<f64>, x: &DVector<f64>, i: usize) -> f64 {
        lambda[i] * x[i] * (1.0 - x[self.next(i)])
    }
}

impl Dynamics for Rfmr {
    fn f(&self, lambda: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_iterator(
            self.n,
            (0..self.n).map(|i| self.flux(lambda, x, self.prev(i)) - self.flux(lambda, x, i)),
        ))
    }

    fn h(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_element(1, x.sum()))
    }

    fn jac_x(&self, lambda: &DVector<f64>, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut j = DMatrix::zeros(self.n, self.n);
        // Flux F_i = lambda_i x_i (1 - x_{i+1}) leaves site i and enters site i+1.
        for i in 0..self.n {
            let nx = self.next(i);
            let d_own = lambda[i] * (1.0 - x[nx]);
            let d_next = -lambda[i] * x[i];
            j[(i, i)] -= d_own;
            j[(nx, i)] += d_own;
            j[(i, nx)] -= d_next;
            j[(nx, nx)] += d_next;
        }
        Some(j)
    }

    fn jac_lambda(&self, _lambda: &DVector<f64>, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut j = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let nx = self.next(i);
            let d = x[i] * (1.0 - x[nx]);
            j[(i, i)] -= d;
            j[(nx, i)] += d;
        }
        Some(j)
    }

    fn jac_h(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, self.n, 1.0))
    }

    fn hess_h(&self, _x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(self.n, self.n)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_errors() {
        assert!(builtin("nope", &BuiltinParams::default()).is_err());
        assert!(builtin("rfmr", &BuiltinParams::default()).is_err());
        assert!(builtin("rfmr", &BuiltinParams { n: Some(2) }).is_err());
        let s = builtin("rfmr", &BuiltinParams { n: Some(4) }).unwrap();
        assert_eq!((s.n, s.m, s.k), (4, 4, 1));
    }
}
