//! Parametric systems `x' = f(lambda, x)` with first integrals `h(x)`,
//! derivative evaluation, and the built-in example registry.

mod builtins;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builtins::{builtin, BuiltinParams, Example2, Planar, Rfmr};

/// Vector field and first integrals, plus whatever analytic derivatives the
/// implementor can supply. Every method must be a pure function.
pub trait Dynamics: Send + Sync {
    fn f(&self, lambda: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn h(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    fn jac_x(&self, _lambda: &DVector<f64>, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
    fn jac_lambda(&self, _lambda: &DVector<f64>, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
    fn jac_h(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
    fn hess_h(&self, _x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        None
    }
}

/// A point `u = (lambda, x)` of `Lambda x V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointState {
    #[serde(with = "crate::serde_vec")]
    pub lambda: DVector<f64>,
    #[serde(with = "crate::serde_vec")]
    pub x: DVector<f64>,
}

impl PointState {
    pub fn new(lambda: DVector<f64>, x: DVector<f64>) -> Self {
        PointState { lambda, x }
    }

    pub fn from_slices(lambda: &[f64], x: &[f64]) -> Self {
        PointState {
            lambda: DVector::from_column_slice(lambda),
            x: DVector::from_column_slice(x),
        }
    }
}

pub type ConstraintFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// Scalar inequality `g(x) <= 0`.
#[derive(Clone)]
pub struct Constraint {
    pub label: String,
    pub g: ConstraintFn,
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Constraint").field("label", &self.label).finish()
    }
}

impl Constraint {
    pub fn new(label: impl Into<String>, g: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        Constraint {
            label: label.into(),
            g: Arc::new(g),
        }
    }
}

/// The state domain V: a closed box intersected with `g_j(x) <= 0`.
#[derive(Debug, Clone)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl Domain {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Domain {
            lower,
            upper,
            constraints: Vec::new(),
        }
    }

    pub fn with_constraint(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &DVector<f64>, slack: f64) -> bool {
        x.len() == self.dim()
            && x.iter().all(|v| v.is_finite())
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= lo - slack && *v <= hi + slack)
            && self.constraints.iter().all(|c| {
                let g = (c.g)(x);
                g.is_finite() && g <= slack
            })
    }

    /// Distance to the nearest box face or constraint surface. Constraint
    /// distances use the first-order estimate `|g| / |grad g|`.
    pub fn boundary_distance(&self, x: &DVector<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for (i, v) in x.iter().enumerate() {
            best = best.min((v - self.lower[i]).abs()).min((self.upper[i] - v).abs());
        }
        for c in &self.constraints {
            let g0 = (c.g)(x);
            let mut grad = DVector::zeros(x.len());
            for j in 0..x.len() {
                let h = fd_step(x[j]);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                grad[j] = ((c.g)(&xp) - (c.g)(&xm)) / (2.0 * h);
            }
            let gn = grad.norm();
            let d = if gn > 0.0 { g0.abs() / gn } else { g0.abs() };
            best = best.min(d);
        }
        best
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (hi - lo).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Rejection sample from the box; `None` after `max_tries` misses.
    pub fn sample<R: Rng>(&self, rng: &mut R, max_tries: usize) -> Option<DVector<f64>> {
        for _ in 0..max_tries {
            let x = DVector::from_iterator(
                self.dim(),
                self.lower
                    .iter()
                    .zip(&self.upper)
                    .map(|(lo, hi)| rng.random_range(*lo..=*hi)),
            );
            if self.contains(&x, 0.0) {
                return Some(x);
            }
        }
        None
    }
}

/// Per-coordinate bounds for the parameter space. Infinite bounds are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterBox {
    pub fn contains(&self, lambda: &DVector<f64>) -> bool {
        lambda.len() == self.lower.len()
            && lambda
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| v.is_finite() && *v >= *lo && *v <= *hi)
    }

    /// Finite interval used for random sampling of coordinate `i`, kept 5%
    /// away from each end. Infinite ends are replaced by a window of width 10.
    pub fn sample_range(&self, i: usize) -> (f64, f64) {
        let (lo, hi) = (self.lower[i], self.upper[i]);
        let (lo, hi) = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => (lo, hi),
            (true, false) => (lo, lo + 10.0),
            (false, true) => (hi - 10.0, hi),
            (false, false) => (-5.0, 5.0),
        };
        let w = hi - lo;
        (lo + 0.05 * w, hi - 0.05 * w)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.lower.len(),
            (0..self.lower.len()).map(|i| {
                let (lo, hi) = self.sample_range(i);
                rng.random_range(lo..=hi)
            }),
        )
    }
}

/// A parametric system with `k` first integrals.
#[derive(Clone)]
pub struct SystemSpec {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub dynamics: Arc<dyn Dynamics>,
    pub domain: Domain,
    pub parameter_box: ParameterBox,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("k", &self.k)
            .field("domain", &self.domain)
            .field("parameter_box", &self.parameter_box)
            .finish()
    }
}

impl SystemSpec {
    pub fn check_point(&self, u: &PointState) -> Result<()> {
        if u.lambda.len() != self.m {
            return Err(Error::dim("lambda", self.m, u.lambda.len()));
        }
        if u.x.len() != self.n {
            return Err(Error::dim("x", self.n, u.x.len()));
        }
        Ok(())
    }

    fn wrap<T>(&self, what: &str, u: &PointState, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::Evaluation { .. } => e,
            other => Error::Evaluation {
                what: what.to_string(),
                lambda: u.lambda.iter().copied().collect(),
                x: u.x.iter().copied().collect(),
                reason: other.to_string(),
            },
        })
    }

    /// `f(lambda, x)`, with non-finite output turned into an error.
    pub fn f(&self, lambda: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
        let v = self.dynamics.f(lambda, x);
        let u = PointState::new(lambda.clone(), x.clone());
        let v = self.wrap("f", &u, v)?;
        if v.len() != self.n {
            return Err(Error::dim("f output", self.n, v.len()));
        }
        finite_or(v, "f", &u)
    }

    pub fn h(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let u = PointState::new(DVector::zeros(self.m), x.clone());
        let v = self.wrap("h", &u, self.dynamics.h(x))?;
        if v.len() != self.k {
            return Err(Error::dim("h output", self.k, v.len()));
        }
        finite_or(v, "h", &u)
    }
}

fn finite_or(v: DVector<f64>, what: &str, u: &PointState) -> Result<DVector<f64>> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(v)
    } else {
        Err(Error::Evaluation {
            what: what.to_string(),
            lambda: u.lambda.iter().copied().collect(),
            x: u.x.iter().copied().collect(),
            reason: "non-finite value".into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeSource {
    Analytic,
    FiniteDifference,
}

/// All derivative blocks at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub f_value: DVector<f64>,
    /// n x n
    pub jac_x: DMatrix<f64>,
    /// n x m
    pub jac_lambda: DMatrix<f64>,
    pub h_value: DVector<f64>,
    /// k x n; row l is grad h_l.
    pub jac_h: DMatrix<f64>,
    pub hess_h: Vec<DMatrix<f64>>,
    pub derivative_source: DerivativeSource,
}

impl Evaluation {
    /// Full Jacobian `J = [df/dlambda, df/dx]`, n x (m + n).
    pub fn full_jacobian(&self) -> DMatrix<f64> {
        let (n, m) = self.jac_lambda.shape();
        let mut j = DMatrix::zeros(n, m + n);
        j.view_mut((0, 0), (n, m)).copy_from(&self.jac_lambda);
        j.view_mut((0, m), (n, n)).copy_from(&self.jac_x);
        j
    }

    /// Stacked `[df/dx; dh/dx]`, (n + k) x n.
    pub fn stacked(&self) -> DMatrix<f64> {
        let n = self.jac_x.nrows();
        let k = self.jac_h.nrows();
        let mut a = DMatrix::zeros(n + k, n);
        a.view_mut((0, 0), (n, n)).copy_from(&self.jac_x);
        a.view_mut((n, 0), (k, n)).copy_from(&self.jac_h);
        a
    }
}

/// Central-difference step: cube root of machine epsilon, scaled to the coordinate.
pub(crate) fn fd_step(v: f64) -> f64 {
    f64::EPSILON.cbrt() * v.abs().max(1.0)
}

fn fd_jacobian(
    at: &DVector<f64>,
    rows: usize,
    mut func: impl FnMut(&DVector<f64>) -> Result<DVector<f64>>,
) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(rows, at.len());
    for j in 0..at.len() {
        let h = fd_step(at[j]);
        let mut p = at.clone();
        let mut q = at.clone();
        p[j] += h;
        q[j] -= h;
        // Use the actual representable step.
        let span = p[j] - q[j];
        let d = (func(&p)? - func(&q)?) / span;
        jac.set_column(j, &d);
    }
    Ok(jac)
}

fn analytic_or_fd_jac_h(sys: &SystemSpec, x: &DVector<f64>, force_fd: bool) -> Result<(DMatrix<f64>, bool)> {
    if !force_fd {
        if let Some(j) = sys.dynamics.jac_h(x) {
            return Ok((j, true));
        }
    }
    Ok((fd_jacobian(x, sys.k, |p| sys.h(p))?, false))
}

fn evaluate_impl(sys: &SystemSpec, u: &PointState, force_fd: bool, with_hessian: bool) -> Result<Evaluation> {
    sys.check_point(u)?;
    let (lambda, x) = (&u.lambda, &u.x);
    let f_value = sys.f(lambda, x)?;
    let h_value = sys.h(x)?;
    let mut analytic = true;

    let jac_x = match sys.dynamics.jac_x(lambda, x).filter(|_| !force_fd) {
        Some(j) => j,
        None => {
            analytic = false;
            fd_jacobian(x, sys.n, |p| sys.f(lambda, p))?
        }
    };
    let jac_lambda = match sys.dynamics.jac_lambda(lambda, x).filter(|_| !force_fd) {
        Some(j) => j,
        None => {
            analytic = false;
            fd_jacobian(lambda, sys.n, |p| sys.f(p, x))?
        }
    };
    let (jac_h, jh_analytic) = analytic_or_fd_jac_h(sys, x, force_fd)?;
    analytic &= jh_analytic;
    let hess_h = match sys.dynamics.hess_h(x).filter(|_| !force_fd) {
        _ if !with_hessian => vec![DMatrix::zeros(sys.n, sys.n); sys.k],
        Some(h) => h,
        None => {
            analytic = false;
            let mut hess = vec![DMatrix::zeros(sys.n, sys.n); sys.k];
            for j in 0..sys.n {
                let step = fd_step(x[j]);
                let mut p = x.clone();
                let mut q = x.clone();
                p[j] += step;
                q[j] -= step;
                let span = p[j] - q[j];
                let (gp, _) = analytic_or_fd_jac_h(sys, &p, force_fd)?;
                let (gq, _) = analytic_or_fd_jac_h(sys, &q, force_fd)?;
                let d = (gp - gq) / span;
                for (l, hl) in hess.iter_mut().enumerate() {
                    for i in 0..sys.n {
                        hl[(i, j)] = d[(l, i)];
                    }
                }
            }
            hess.into_iter().map(|hl| (&hl + hl.transpose()) * 0.5).collect()
        }
    };

    let shapes_ok = jac_x.shape() == (sys.n, sys.n)
        && jac_lambda.shape() == (sys.n, sys.m)
        && jac_h.shape() == (sys.k, sys.n)
        && hess_h.len() == sys.k
        && hess_h.iter().all(|h| h.shape() == (sys.n, sys.n));
    if !shapes_ok {
        return Err(Error::Input(format!(
            "system `{}` returned derivative blocks of the wrong shape",
            sys.name
        )));
    }
    let all_finite = jac_x
        .iter()
        .chain(jac_lambda.iter())
        .chain(jac_h.iter())
        .all(|v| v.is_finite())
        && hess_h.iter().all(|h| h.iter().all(|v| v.is_finite()));
    if !all_finite {
        return Err(Error::Evaluation {
            what: "derivatives".into(),
            lambda: lambda.iter().copied().collect(),
            x: x.iter().copied().collect(),
            reason: "non-finite derivative entry".into(),
        });
    }
    Ok(Evaluation {
        f_value,
        jac_x,
        jac_lambda,
        h_value,
        jac_h,
        hess_h,
        derivative_source: if analytic {
            DerivativeSource::Analytic
        } else {
            DerivativeSource::FiniteDifference
        },
    })
}

/// Evaluate every derivative block, preferring analytic forms.
///
/// Domain membership is not enforced here; callers that need it check
/// [`Domain::contains`] themselves.
pub fn evaluate(sys: &SystemSpec, u: &PointState) -> Result<Evaluation> {
    evaluate_impl(sys, u, false, true)
}

/// Values and first derivatives only; `hess_h` is left as zeros and must
/// not be read.
pub(crate) fn evaluate_first_order(sys: &SystemSpec, u: &PointState) -> Result<Evaluation> {
    evaluate_impl(sys, u, false, false)
}

/// As [`evaluate`] but ignoring any analytic derivatives.
pub fn evaluate_finite_difference(sys: &SystemSpec, u: &PointState) -> Result<Evaluation> {
    evaluate_impl(sys, u, true, true)
}

/// Worst violation of `<f, grad h_l> = 0` over a seeded random sample.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub max_residual: f64,
    pub worst: Option<PointState>,
    pub samples: usize,
}

/// Draw `samples` points of the domain with parameters from the parameter
/// box; deterministic in `seed`.
pub fn sample_points(sys: &SystemSpec, samples: usize, seed: u64) -> Result<Vec<PointState>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let lambda = sys.parameter_box.sample(&mut rng);
        let x = sys
            .domain
            .sample(&mut rng, 100_000)
            .ok_or_else(|| Error::Input(format!("could not sample the domain of `{}`", sys.name)))?;
        out.push(PointState::new(lambda, x));
    }
    Ok(out)
}

pub fn check_first_integral_identity(sys: &SystemSpec, samples: usize, seed: u64) -> Result<IdentityCheck> {
    if samples == 0 {
        return Err(Error::Input("samples must be positive".into()));
    }
    let mut best = IdentityCheck {
        max_residual: 0.0,
        worst: None,
        samples,
    };
    for u in sample_points(sys, samples, seed)? {
        let ev = evaluate_first_order(sys, &u)?;
        for l in 0..sys.k {
            let r = ev.jac_h.row(l).transpose().dot(&ev.f_value).abs();
            if r > best.max_residual || best.worst.is_none() {
                best.max_residual = best.max_residual.max(r);
                best.worst = Some(u.clone());
            }
        }
    }
    Ok(best)
}
