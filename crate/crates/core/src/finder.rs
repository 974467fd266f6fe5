//! Equilibria on first-integral level sets, multistart enumeration of
//! `E_lambda ∩ N_a`, and predictor-corrector tracing of one-dimensional fibers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::{audit_evaluation, AuditReport};
use crate::error::{Error, Result};
use crate::linalg;
use crate::system::{evaluate, evaluate_first_order, PointState, SystemSpec};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub state: PointState,
    pub residual_f: f64,
    #[serde(with = "crate::serde_vec")]
    pub level: DVector<f64>,
    /// Whether `[df/dx; dh/dx]` has full column rank at the solution.
    pub transversal: bool,
    pub iterations: usize,
    pub audit: AuditReport,
}

/// Result of the bare Newton solve, without the audit.
#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Iterations needed to first reach the convergence threshold, before polishing.
    pub converged_after: usize,
}

fn level_residual(sys: &SystemSpec, lambda: &DVector<f64>, a: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    let f = sys.f(lambda, x)?;
    let h = sys.h(x)?;
    let mut r = DVector::zeros(sys.n + sys.k);
    r.rows_mut(0, sys.n).copy_from(&f);
    r.rows_mut(sys.n, sys.k).copy_from(&(h - a));
    Ok(r)
}

fn stacked_jacobian(sys: &SystemSpec, lambda: &DVector<f64>, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let ev = evaluate_first_order(sys, &PointState::new(lambda.clone(), x.clone()))?;
    Ok(ev.stacked())
}

pub(crate) fn least_squares_step(a: &DMatrix<f64>, rhs: &DVector<f64>, tols: &Tolerances) -> Result<DVector<f64>> {
    let probe = linalg::numeric_rank(a, None)?;
    let smax = probe.singular_values.first().copied().unwrap_or(0.0);
    linalg::solve_least_squares_tol(a, rhs, Some(tols.rank_cutoff(a.nrows(), a.ncols(), smax))).map_err(|e| match e {
        Error::RankDeficient { report, .. } => Error::RankDeficient {
            context: "Newton system".into(),
            report,
        },
        other => other,
    })
}

/// Damped Gauss-Newton on `[f(lambda, x); h(x) - a] = 0`.
pub(crate) fn newton_core(
    sys: &SystemSpec,
    lambda: &DVector<f64>,
    a: &DVector<f64>,
    x0: &DVector<f64>,
    tols: &Tolerances,
) -> Result<NewtonOutcome> {
    let slack = tols.domain_slack;
    if !sys.domain.contains(x0, slack) {
        return Err(Error::OutOfDomain {
            x: x0.iter().copied().collect(),
        });
    }
    let target = tols.newton * (1.0 + x0.norm());
    let mut x = x0.clone();
    let mut r = level_residual(sys, lambda, a, &x)?;
    let mut norm = r.norm();
    let mut iterations = 0;
    let mut polish = 0;
    let mut converged_after = None;
    loop {
        if norm <= target {
            converged_after.get_or_insert(iterations);
            // A couple of extra steps drive the residual to rounding level,
            // which keeps downstream rank decisions sharp.
            if polish >= 2 || norm == 0.0 {
                break;
            }
            polish += 1;
        }
        if iterations >= tols.newton_max_iter {
            if norm <= target {
                break;
            }
            return Err(Error::Divergence {
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        let jac = stacked_jacobian(sys, lambda, &x)?;
        let step = least_squares_step(&jac, &(-&r), tols)?;
        let mut t = 1.0;
        let mut accepted = None;
        let mut left_domain = false;
        while t >= 1.0 / 1024.0 {
            let cand = &x + &step * t;
            if sys.domain.contains(&cand, slack) {
                let rc = level_residual(sys, lambda, a, &cand)?;
                let nc = rc.norm();
                if nc < norm || (norm <= target && nc <= target) {
                    accepted = Some((cand, rc, nc));
                    break;
                }
            } else {
                left_domain = true;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, rc, nc)) => {
                let stalled = (&cand - &x).norm() <= f64::EPSILON * (1.0 + x.norm());
                x = cand;
                r = rc;
                norm = nc;
                if stalled && norm <= target {
                    break;
                }
            }
            None if norm <= target => break,
            None if left_domain => {
                return Err(Error::OutOfDomain {
                    x: (&x + &step).iter().copied().collect(),
                })
            }
            None => {
                return Err(Error::Divergence {
                    iterations,
                    residual: norm,
                })
            }
        }
    }
    Ok(NewtonOutcome {
        x,
        iterations,
        converged_after: converged_after.unwrap_or(iterations),
    })
}

fn finish_point(
    sys: &SystemSpec,
    lambda: &DVector<f64>,
    out: NewtonOutcome,
    tols: &Tolerances,
) -> Result<EquilibriumPoint> {
    let state = PointState::new(lambda.clone(), out.x);
    let ev = evaluate(sys, &state)?;
    let stacked = ev.stacked();
    let probe = linalg::numeric_rank(&stacked, None)?;
    let smax = probe.singular_values.first().copied().unwrap_or(0.0);
    let transversal =
        linalg::numeric_rank(&stacked, Some(tols.rank_cutoff(stacked.nrows(), stacked.ncols(), smax)))?.rank == sys.n;
    let audit = audit_evaluation(sys, &state, &ev, tols)?;
    Ok(EquilibriumPoint {
        residual_f: ev.f_value.norm(),
        level: ev.h_value.clone(),
        transversal,
        iterations: out.iterations,
        audit,
        state,
    })
}

fn check_dims(sys: &SystemSpec, lambda: &DVector<f64>, a: &DVector<f64>) -> Result<()> {
    if lambda.len() != sys.m {
        return Err(Error::dim("lambda", sys.m, lambda.len()));
    }
    if a.len() != sys.k {
        return Err(Error::dim("level", sys.k, a.len()));
    }
    Ok(())
}

/// Solve `f(lambda, x) = 0, h(x) = a` from `x0`.
///
/// At the solution the stacked Jacobian `[df/dx; dh/dx]` should have full
/// column rank; [`EquilibriumPoint::transversal`] reports whether it does.
pub fn newton_on_level_set(
    sys: &SystemSpec,
    lambda: &DVector<f64>,
    a: &DVector<f64>,
    x0: &DVector<f64>,
    tols: &Tolerances,
) -> Result<EquilibriumPoint> {
    check_dims(sys, lambda, a)?;
    if x0.len() != sys.n {
        return Err(Error::dim("x0", sys.n, x0.len()));
    }
    let out = newton_core(sys, lambda, a, x0, tols)?;
    finish_point(sys, lambda, out, tols)
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut c = 2u64;
    while primes.len() < count {
        if primes
            .iter()
            .take_while(|&&p| p * p <= c)
            .all(|p| !c.is_multiple_of(*p))
        {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

/// Randomly shifted Halton sequence in the unit cube.
pub(crate) struct Halton {
    primes: Vec<u64>,
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Halton {
            primes: first_primes(dim),
            shift: (0..dim).map(|_| rng.random::<f64>()).collect(),
            index: 1,
        }
    }
}

impl Iterator for Halton {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        let i = self.index;
        self.index += 1;
        Some(
            self.primes
                .iter()
                .zip(&self.shift)
                .map(|(&p, s)| (radical_inverse(i, p) + s).fract())
                .collect(),
        )
    }
}

fn lexicographic(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Multistart search for `E_lambda ∩ N_a`.
///
/// Up to `budget` starts are drawn from a seeded low-discrepancy sequence in
/// the domain; converged solutions on the level are merged within the
/// clustering radius and returned in lexicographic order. An empty result
/// means nothing was found within the budget.
pub fn enumerate_level_points(
    sys: &SystemSpec,
    lambda: &DVector<f64>,
    a: &DVector<f64>,
    budget: usize,
    seed: u64,
    tols: &Tolerances,
) -> Result<Vec<EquilibriumPoint>> {
    check_dims(sys, lambda, a)?;
    if budget == 0 {
        return Err(Error::Input("budget must be positive".into()));
    }
    let starts: Vec<DVector<f64>> = Halton::new(sys.n, seed)
        .take(budget.saturating_mul(200))
        .map(|u| {
            DVector::from_iterator(
                sys.n,
                u.iter()
                    .enumerate()
                    .map(|(i, t)| sys.domain.lower[i] + t * (sys.domain.upper[i] - sys.domain.lower[i])),
            )
        })
        .filter(|x| sys.domain.contains(x, 0.0))
        .take(budget)
        .collect();

    let solved: Vec<Option<DVector<f64>>> = starts
        .par_iter()
        .map(|x0| {
            let out = newton_core(sys, lambda, a, x0, tols).ok()?;
            let h = sys.h(&out.x).ok()?;
            let f = sys.f(lambda, &out.x).ok()?;
            let on_level = (h - a).norm() <= tols.level;
            let is_eq = f.norm() <= tols.equilibrium_bound(out.x.norm());
            (on_level && is_eq).then_some(out.x)
        })
        .collect();

    let radius = tols.cluster * sys.domain.diameter();
    let mut reps: Vec<DVector<f64>> = Vec::new();
    for x in solved.into_iter().flatten() {
        if reps.iter().all(|r| (r - &x).norm() > radius) {
            reps.push(x);
        }
    }
    reps.sort_by(lexicographic);
    reps.into_iter()
        .map(|x| {
            finish_point(
                sys,
                lambda,
                NewtonOutcome {
                    x,
                    iterations: 0,
                    converged_after: 0,
                },
                tols,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Circle,
    Segment,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiberTrace {
    #[serde(with = "crate::serde_vec")]
    pub lambda: DVector<f64>,
    #[serde(with = "crate::serde_vec::many")]
    pub points: Vec<DVector<f64>>,
    pub topology: Topology,
    pub arclength: f64,
    /// Distances of the two endpoints to the domain boundary (segments only).
    pub endpoint_boundary_distances: Option<[f64; 2]>,
    pub max_f_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceOptions {
    /// Initial step, relative to the domain diameter.
    pub initial_step: f64,
    /// Largest step, relative to the domain diameter.
    pub max_step: f64,
    /// Smallest absolute step before giving up.
    pub min_step: f64,
    pub max_points: usize,
    /// Start along the negated canonical tangent.
    pub reverse: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            initial_step: 0.01,
            max_step: 0.05,
            min_step: 1e-9,
            max_points: 100_000,
            reverse: false,
        }
    }
}

struct Tracer<'a> {
    sys: &'a SystemSpec,
    lambda: &'a DVector<f64>,
    tols: &'a Tolerances,
    opts: &'a TraceOptions,
}

enum MarchEnd {
    Closed,
    Boundary,
}

impl Tracer<'_> {
    fn tangent(&self, x: &DVector<f64>, prev: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        let ev = evaluate_first_order(self.sys, &PointState::new(self.lambda.clone(), x.clone()))?;
        let probe = linalg::numeric_rank(&ev.jac_x, None)?;
        let smax = probe.singular_values.first().copied().unwrap_or(0.0);
        let tol = self.tols.rank_cutoff(self.sys.n, self.sys.n, smax);
        let (ker, _) = linalg::kernel_basis(&ev.jac_x, Some(tol))?;
        if ker.ncols() != 1 {
            return Err(Error::BranchPoint {
                x: x.iter().copied().collect(),
                kernel_dim: ker.ncols(),
            });
        }
        let mut t = ker.column(0).into_owned();
        let flip = match prev {
            Some(p) => t.dot(p) < 0.0,
            None => {
                let imax = t.iamax();
                t[imax] < 0.0
            }
        };
        if flip {
            t = -t;
        }
        Ok(t)
    }

    /// Newton on `[f(lambda, x); t . (x - xp)] = 0`; returns the point and
    /// iteration count.
    fn correct(&self, xp: &DVector<f64>, t: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
        let n = self.sys.n;
        let target = self.tols.newton * (1.0 + xp.norm());
        let mut x = xp.clone();
        for it in 0..=12 {
            let ev = evaluate_first_order(self.sys, &PointState::new(self.lambda.clone(), x.clone()))?;
            let mut r = DVector::zeros(n + 1);
            r.rows_mut(0, n).copy_from(&ev.f_value);
            r[n] = t.dot(&(&x - xp));
            if r.norm() <= target {
                return Ok((x, it));
            }
            let mut a = DMatrix::zeros(n + 1, n);
            a.view_mut((0, 0), (n, n)).copy_from(&ev.jac_x);
            a.row_mut(n).copy_from(&t.transpose());
            let step = least_squares_step(&a, &(-r), self.tols)?;
            x += step;
        }
        Err(Error::Divergence {
            iterations: 12,
            residual: self.sys.f(self.lambda, &x)?.norm(),
        })
    }

    fn inside(&self, x: &DVector<f64>) -> bool {
        self.sys.domain.contains(x, self.tols.domain_slack)
    }

    /// Bisection on the predictor length between an interior point and an
    /// exterior prediction; returns the last interior corrected point.
    fn refine_boundary(&self, x: &DVector<f64>, t: &DVector<f64>, h_out: f64) -> DVector<f64> {
        let (mut lo, mut hi) = (0.0, h_out);
        let mut best = x.clone();
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            match self.correct(&(x + t * mid), t) {
                Ok((c, _)) if self.inside(&c) => {
                    lo = mid;
                    best = c;
                }
                _ => hi = mid,
            }
        }
        best
    }

    fn march(&self, x0: &DVector<f64>, t0: &DVector<f64>, points: &mut Vec<DVector<f64>>) -> Result<MarchEnd> {
        let diam = self.sys.domain.diameter();
        let max_step = self.opts.max_step * diam;
        let mut h = self.opts.initial_step * diam;
        let mut x = x0.clone();
        let mut t = t0.clone();
        let mut steps = 0usize;
        loop {
            if points.len() > self.opts.max_points {
                return Err(Error::Input(format!(
                    "fiber trace exceeded {} points",
                    self.opts.max_points
                )));
            }
            if h < self.opts.min_step {
                return Err(Error::Divergence {
                    iterations: steps,
                    residual: self.sys.f(self.lambda, &x)?.norm(),
                });
            }
            let xp = &x + &t * h;
            let corrected = self.correct(&xp, &t);
            let (xc, iters) = match corrected {
                Ok((xc, iters)) if self.inside(&xc) => (xc, iters),
                Ok(_) => {
                    let end = self.refine_boundary(&x, &t, h);
                    if (&end - &x).norm() > 0.0 {
                        points.push(end);
                    }
                    return Ok(MarchEnd::Boundary);
                }
                Err(_) if !self.inside(&xp) => {
                    let end = self.refine_boundary(&x, &t, h);
                    if (&end - &x).norm() > 0.0 {
                        points.push(end);
                    }
                    return Ok(MarchEnd::Boundary);
                }
                Err(_) => {
                    h *= 0.5;
                    continue;
                }
            };
            if iters > 4 || (&xc - &x).norm() > 2.0 * h {
                h *= 0.5;
                continue;
            }
            let tn = self.tangent(&xc, Some(&t))?;
            steps += 1;
            // Closure: the accepted chord passes within h/2 of the start.
            if steps >= 5 && tn.dot(t0) > 0.9 && segment_distance(x0, &x, &xc) < 0.5 * h {
                points.push(x0.clone());
                return Ok(MarchEnd::Closed);
            }
            points.push(xc.clone());
            if iters <= 2 {
                h = (h * 1.5).min(max_step);
            }
            x = xc;
            t = tn;
        }
    }
}

fn segment_distance(p: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

/// Trace the one-dimensional fiber `E_lambda` through `x0`.
///
/// Produces a circle when the trace closes on itself and otherwise a segment
/// traced in both directions until each end meets the domain boundary.
pub fn trace_fiber(
    sys: &SystemSpec,
    lambda: &DVector<f64>,
    x0: &DVector<f64>,
    opts: &TraceOptions,
    tols: &Tolerances,
) -> Result<FiberTrace> {
    if sys.k != 1 {
        return Err(Error::Unsupported(format!(
            "fiber tracing needs k = 1, system `{}` has k = {}",
            sys.name, sys.k
        )));
    }
    if lambda.len() != sys.m {
        return Err(Error::dim("lambda", sys.m, lambda.len()));
    }
    if x0.len() != sys.n {
        return Err(Error::dim("x0", sys.n, x0.len()));
    }
    let residual = sys.f(lambda, x0)?.norm();
    let bound = tols.equilibrium_bound(x0.norm());
    if residual > bound {
        return Err(Error::NotEquilibrium {
            residual,
            tolerance: bound,
        });
    }
    let tracer = Tracer {
        sys,
        lambda,
        tols,
        opts,
    };
    let mut t0 = tracer.tangent(x0, None)?;
    if opts.reverse {
        t0 = -t0;
    }
    let mut forward = vec![x0.clone()];
    let (points, topology) = match tracer.march(x0, &t0, &mut forward)? {
        MarchEnd::Closed => (forward, Topology::Circle),
        MarchEnd::Boundary => {
            let mut backward = vec![x0.clone()];
            match tracer.march(x0, &(-&t0), &mut backward)? {
                MarchEnd::Closed => (backward, Topology::Circle),
                MarchEnd::Boundary => {
                    let mut pts: Vec<DVector<f64>> = backward.into_iter().skip(1).rev().collect();
                    pts.extend(forward);
                    (pts, Topology::Segment)
                }
            }
        }
    };
    let arclength = points.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum();
    let mut max_f_residual: f64 = 0.0;
    for p in &points {
        max_f_residual = max_f_residual.max(sys.f(lambda, p)?.norm());
    }
    let endpoint_boundary_distances = match topology {
        Topology::Segment => Some([
            sys.domain.boundary_distance(&points[0]),
            sys.domain.boundary_distance(points.last().expect("non-empty")),
        ]),
        Topology::Circle => None,
    };
    Ok(FiberTrace {
        lambda: lambda.clone(),
        points,
        topology,
        arclength,
        endpoint_boundary_distances,
        max_f_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{builtin, BuiltinParams};
    use approx::assert_relative_eq;

    fn sys(name: &str, n: Option<usize>) -> SystemSpec {
        builtin(name, &BuiltinParams { n }).unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn newton_planar() {
        let p = newton_on_level_set(
            &sys("planar", None),
            &v(&[0.5]),
            &v(&[0.0]),
            &v(&[0.0, 0.0]),
            &Tolerances::default(),
        )
        .unwrap();
        assert_relative_eq!(p.state.x, v(&[-0.5, 0.0]), epsilon = 1e-12);
        assert!(p.transversal);
        assert!(p.audit.is_nondegenerate());
    }

    #[test]
    fn newton_example2() {
        let p = newton_on_level_set(
            &sys("example2", None),
            &v(&[1.0]),
            &v(&[2.0, 6.0]),
            &v(&[0.7, 0.9, 0.7]),
            &Tolerances::default(),
        )
        .unwrap();
        let xs = (8.0f64 / 15.0).sqrt();
        let ys = (14.0f64 / 15.0).sqrt();
        assert_relative_eq!(p.state.x, v(&[xs, ys, xs]), epsilon = 1e-10);
        assert!(p.transversal);
    }

    #[test]
    fn newton_rfmr() {
        let p = newton_on_level_set(
            &sys("rfmr", Some(3)),
            &v(&[1.0; 3]),
            &v(&[1.5]),
            &v(&[0.4, 0.5, 0.6]),
            &Tolerances::default(),
        )
        .unwrap();
        assert_relative_eq!(p.state.x, v(&[0.5; 3]), epsilon = 1e-10);
    }

    #[test]
    fn newton_rejects_start_outside_domain() {
        let err = newton_on_level_set(
            &sys("planar", None),
            &v(&[0.5]),
            &v(&[0.0]),
            &v(&[2.0, 0.0]),
            &Tolerances::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::OutOfDomain { .. }));
    }

    #[test]
    fn enumerate_planar_single_point() {
        let pts = enumerate_level_points(
            &sys("planar", None),
            &v(&[0.5]),
            &v(&[0.0]),
            50,
            1,
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(pts.len(), 1);
        assert_relative_eq!(pts[0].state.x, v(&[-0.5, 0.0]), epsilon = 1e-10);
    }

    #[test]
    fn halton_is_deterministic_and_in_cube() {
        let a: Vec<_> = Halton::new(3, 9).take(100).collect();
        let b: Vec<_> = Halton::new(3, 9).take(100).collect();
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|&u| (0.0..1.0).contains(&u)));
    }

    #[test]
    fn trace_planar_segment() {
        let s = sys("planar", None);
        let tr = trace_fiber(
            &s,
            &v(&[0.5]),
            &v(&[-0.5, 0.0]),
            &TraceOptions::default(),
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(tr.topology, Topology::Segment);
        for p in &tr.points {
            assert!((p[0] - 0.5 * (p[1] * p[1] - 1.0)).abs() < 1e-8);
        }
        let first = &tr.points[0];
        let last = tr.points.last().unwrap();
        let ends = [first, last];
        assert!(ends.iter().any(|e| (*e - v(&[0.0, -1.0])).norm() < 1e-6));
        assert!(ends.iter().any(|e| (*e - v(&[0.0, 1.0])).norm() < 1e-6));
        let [d0, d1] = tr.endpoint_boundary_distances.unwrap();
        assert!(d0 <= 1e-6 && d1 <= 1e-6);
    }

    #[test]
    fn trace_rejects_k_two() {
        let err = trace_fiber(
            &sys("example2", None),
            &v(&[1.0]),
            &v(&[1.0, 1.0, 1.0]),
            &TraceOptions::default(),
            &Tolerances::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn trace_is_direction_independent() {
        let s = sys("rfmr", Some(3));
        let opts = TraceOptions::default();
        let rev = TraceOptions {
            reverse: true,
            ..opts.clone()
        };
        let a = trace_fiber(&s, &v(&[1.0; 3]), &v(&[0.5; 3]), &opts, &Tolerances::default()).unwrap();
        let b = trace_fiber(&s, &v(&[1.0; 3]), &v(&[0.5; 3]), &rev, &Tolerances::default()).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        for p in &a.points {
            let nearest = b.points.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-9);
        }
    }
}
