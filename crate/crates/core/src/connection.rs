//! The natural connection on the equilibrium bundle: vertical and horizontal
//! spaces, the submersion metric, parallel transport by curve lifting,
//! holonomy of closed parameter loops and the cocycle check.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::{audit_evaluation, ConditionStatus};
use crate::error::{Error, Result};
use crate::finder::{enumerate_level_points, least_squares_step, newton_core};
use crate::linalg;
use crate::system::{evaluate, evaluate_first_order, Evaluation, PointState, SystemSpec};
use crate::tolerances::Tolerances;

/// Piecewise-linear curve in parameter space. The curve parameter runs over
/// `[0, 1]` and each segment takes an equal share of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamPath {
    #[serde(with = "crate::serde_vec::many")]
    pub waypoints: Vec<DVector<f64>>,
}

impl ParamPath {
    pub fn new(waypoints: Vec<DVector<f64>>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::Input("a parameter path needs at least two waypoints".into()));
        }
        let m = waypoints[0].len();
        if let Some(w) = waypoints.iter().find(|w| w.len() != m) {
            return Err(Error::dim("path waypoint", m, w.len()));
        }
        if waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "path waypoints".into(),
            });
        }
        Ok(ParamPath { waypoints })
    }

    pub fn segment(from: &DVector<f64>, to: &DVector<f64>) -> Result<Self> {
        Self::new(vec![from.clone(), to.clone()])
    }

    pub fn from_slices(points: &[&[f64]]) -> Result<Self> {
        Self::new(points.iter().map(|p| DVector::from_column_slice(p)).collect())
    }

    pub fn dim(&self) -> usize {
        self.waypoints[0].len()
    }

    pub fn segments(&self) -> usize {
        self.waypoints.len() - 1
    }

    pub fn is_closed(&self) -> bool {
        self.waypoints.first() == self.waypoints.last()
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        let s = self.segments() as f64;
        let pos = (t.clamp(0.0, 1.0) * s).min(s);
        let i = (pos.floor() as usize).min(self.segments() - 1);
        let local = pos - i as f64;
        &self.waypoints[i] + (&self.waypoints[i + 1] - &self.waypoints[i]) * local
    }

    /// `d lambda / dt` on segment `i`.
    fn velocity(&self, i: usize) -> DVector<f64> {
        (&self.waypoints[i + 1] - &self.waypoints[i]) * self.segments() as f64
    }

    fn reversed(&self) -> ParamPath {
        ParamPath {
            waypoints: self.waypoints.iter().rev().cloned().collect(),
        }
    }
}

/// Vertical and horizontal spaces of `T_u E` at an equilibrium.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectionFrame {
    pub at: PointState,
    /// Columns span `{(0, b) : (df/dx) b = 0}`; `(m + n) x k`.
    #[serde(with = "crate::serde_vec::columns")]
    pub vertical_basis: DMatrix<f64>,
    /// Columns span `{(a, b) : (df/dlambda) a + (df/dx) b = 0, (dh/dx) b = 0}`; `(m + n) x m`.
    #[serde(with = "crate::serde_vec::columns")]
    pub horizontal_basis: DMatrix<f64>,
    /// Rank of `[vertical | horizontal]`, which equals `m + k`.
    pub tangent_rank: usize,
}

impl ConnectionFrame {
    fn m(&self) -> usize {
        self.at.lambda.len()
    }

    /// Split a tangent vector into its vertical and horizontal parts.
    fn decompose(&self, v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let k = self.vertical_basis.ncols();
        let m = self.horizontal_basis.ncols();
        let mut b = DMatrix::zeros(v.len(), k + m);
        b.columns_mut(0, k).copy_from(&self.vertical_basis);
        b.columns_mut(k, m).copy_from(&self.horizontal_basis);
        let c = linalg::solve_least_squares(&b, v)?;
        let vert = &self.vertical_basis * c.rows(0, k);
        let hor = &self.horizontal_basis * c.rows(k, m);
        Ok((vert, hor))
    }

    /// Oblique projector onto the vertical space along the horizontal one.
    pub fn vertical_part(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.decompose(v)?.0)
    }

    /// Horizontal vector `(a, b)` over the parameter direction `a`.
    pub fn horizontal_lift(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.m();
        if a.len() != m {
            return Err(Error::dim("parameter direction", m, a.len()));
        }
        let top = self.horizontal_basis.rows(0, m).into_owned();
        let c = linalg::solve_least_squares(&top, a)?;
        Ok(&self.horizontal_basis * c)
    }
}

fn audited_evaluation(sys: &SystemSpec, u: &PointState, tols: &Tolerances) -> Result<Evaluation> {
    sys.check_point(u)?;
    let ev = evaluate(sys, u)?;
    let report = audit_evaluation(sys, u, &ev, tols)?;
    if !report.is_equilibrium {
        return Err(Error::NotEquilibrium {
            residual: report.f_residual,
            tolerance: report.tolerances.equilibrium,
        });
    }
    let failing: Vec<&str> = [("ii", &report.cond_ii), ("iii", &report.cond_iii)]
        .into_iter()
        .filter(|(_, c)| c.status != ConditionStatus::Pass)
        .map(|(name, _)| name)
        .collect();
    if !failing.is_empty() {
        return Err(Error::Condition {
            message: format!("condition {} fails", failing.join(" and ")),
            report: Box::new(report),
        });
    }
    Ok(ev)
}

fn rank_cut(m: &DMatrix<f64>, tols: &Tolerances) -> Result<f64> {
    let probe = linalg::numeric_rank(m, None)?;
    let smax = probe.singular_values.first().copied().unwrap_or(0.0);
    Ok(tols.rank_cutoff(m.nrows(), m.ncols(), smax))
}

/// Canonical orthonormal bases of the vertical and horizontal spaces at an
/// audited equilibrium.
pub fn connection_frame(sys: &SystemSpec, u: &PointState, tols: &Tolerances) -> Result<ConnectionFrame> {
    let ev = audited_evaluation(sys, u, tols)?;
    let (n, m, k) = (sys.n, sys.m, sys.k);

    let (ker_x, _) = linalg::kernel_basis(&ev.jac_x, Some(rank_cut(&ev.jac_x, tols)?))?;
    let mut vertical = DMatrix::zeros(m + n, ker_x.ncols());
    vertical.view_mut((m, 0), (n, ker_x.ncols())).copy_from(&ker_x);
    let vertical = linalg::canonical_basis(&vertical);

    let mut constraint = DMatrix::zeros(n + k, m + n);
    constraint.view_mut((0, 0), (n, m)).copy_from(&ev.jac_lambda);
    constraint.view_mut((0, m), (n, n)).copy_from(&ev.jac_x);
    constraint.view_mut((n, m), (k, n)).copy_from(&ev.jac_h);
    let (hor, report) = linalg::kernel_basis(&constraint, Some(rank_cut(&constraint, tols)?))?;
    if hor.ncols() != m || vertical.ncols() != k {
        return Err(Error::RankDeficient {
            context: format!(
                "connection frame (vertical dimension {}, horizontal dimension {}, expected {k} and {m})",
                vertical.ncols(),
                hor.ncols()
            ),
            report,
        });
    }
    let horizontal = linalg::canonical_basis(&hor);

    let mut both = DMatrix::zeros(m + n, m + k);
    both.columns_mut(0, k).copy_from(&vertical);
    both.columns_mut(k, m).copy_from(&horizontal);
    let tangent_rank = linalg::numeric_rank(&both, Some(tols.rank))?.rank;
    if tangent_rank != m + k {
        return Err(Error::RankDeficient {
            context: "vertical and horizontal spaces are not complementary".into(),
            report: linalg::numeric_rank(&both, Some(tols.rank))?,
        });
    }
    Ok(ConnectionFrame {
        at: u.clone(),
        vertical_basis: vertical,
        horizontal_basis: horizontal,
        tangent_rank,
    })
}

/// `g(X, Y) = <Phi X, Phi Y> + <pi_*(I - Phi) X, pi_*(I - Phi) Y>`, where
/// `Phi` is the projector onto the vertical space along the horizontal one.
pub fn metric_g(
    sys: &SystemSpec,
    u: &PointState,
    x: &DVector<f64>,
    y: &DVector<f64>,
    tols: &Tolerances,
) -> Result<f64> {
    let frame = connection_frame(sys, u, tols)?;
    metric_with_frame(sys, &frame, x, y)
}

pub(crate) fn metric_with_frame(
    sys: &SystemSpec,
    frame: &ConnectionFrame,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<f64> {
    let (m, n) = (sys.m, sys.n);
    let ev = evaluate_first_order(sys, &frame.at)?;
    let j = ev.full_jacobian();
    for (name, v) in [("X", x), ("Y", y)] {
        if v.len() != m + n {
            return Err(Error::dim(format!("tangent vector {name}"), m + n, v.len()));
        }
        let residual = (&j * v).norm();
        if residual > 1e-8 * v.norm().max(1.0) {
            return Err(Error::Input(format!(
                "tangent vector {name} is not tangent to E: |J {name}| = {residual:e}"
            )));
        }
    }
    let (vx, hx) = frame.decompose(x)?;
    let (vy, hy) = frame.decompose(y)?;
    Ok(vx.dot(&vy) + hx.rows(0, m).dot(&hy.rows(0, m)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportOptions {
    /// Initial step in the curve parameter.
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            initial_step: 1.0 / 64.0,
            max_step: 1.0 / 16.0,
            min_step: 1e-9,
            max_steps: 100_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportResult {
    pub t: Vec<f64>,
    #[serde(with = "crate::serde_vec::many")]
    pub lambda_path: Vec<DVector<f64>>,
    #[serde(with = "crate::serde_vec::many")]
    pub gamma: Vec<DVector<f64>>,
    pub max_f_residual: f64,
    pub max_h_drift: f64,
    /// Largest vertical component of the lifted velocity at accepted points,
    /// relative to the velocity norm.
    pub max_vertical_velocity: f64,
    pub steps_taken: usize,
}

impl TransportResult {
    pub fn endpoint(&self) -> &DVector<f64> {
        self.gamma.last().expect("transport results are never empty")
    }
}

struct Lifter<'a> {
    sys: &'a SystemSpec,
    level: DVector<f64>,
    tols: &'a Tolerances,
}

impl Lifter<'_> {
    /// Least-squares solution of `[df/dx; dh/dx] xdot = [-(df/dlambda) lambda_dot; 0]`.
    fn rhs(&self, t: f64, lambda: &DVector<f64>, x: &DVector<f64>, ldot: &DVector<f64>) -> Result<DVector<f64>> {
        let (n, k) = (self.sys.n, self.sys.k);
        if !self.sys.domain.contains(x, self.tols.domain_slack) {
            return Err(Error::Transport {
                t,
                reason: format!("lift left the domain at x={:?}", x.as_slice()),
            });
        }
        let ev = evaluate_first_order(self.sys, &PointState::new(lambda.clone(), x.clone()))?;
        let mut b = DVector::zeros(n + k);
        b.rows_mut(0, n).copy_from(&(-(&ev.jac_lambda * ldot)));
        least_squares_step(&ev.stacked(), &b, self.tols).map_err(|e| match e {
            Error::RankDeficient { report, .. } => Error::Transport {
                t,
                reason: format!("transversality fails: [df/dx; dh/dx] has rank {} < {n}", report.rank),
            },
            other => other,
        })
    }

    fn vertical_fraction(
        &self,
        lambda: &DVector<f64>,
        x: &DVector<f64>,
        ldot: &DVector<f64>,
        xdot: &DVector<f64>,
    ) -> f64 {
        let u = PointState::new(lambda.clone(), x.clone());
        let Ok(frame) = connection_frame(self.sys, &u, self.tols) else {
            return f64::NAN;
        };
        let m = self.sys.m;
        let mut v = DVector::zeros(m + self.sys.n);
        v.rows_mut(0, m).copy_from(ldot);
        v.rows_mut(m, self.sys.n).copy_from(xdot);
        let norm = v.norm();
        if norm == 0.0 {
            return 0.0;
        }
        frame.vertical_part(&v).map(|p| p.norm() / norm).unwrap_or(f64::NAN)
    }
}

/// Horizontal lift of `path` starting at `x0`, integrated with classical
/// fourth-order Runge-Kutta and projected back onto `E_lambda(t) ∩ N_h(x0)`
/// after every step.
pub fn lift_curve(
    sys: &SystemSpec,
    path: &ParamPath,
    x0: &DVector<f64>,
    opts: &TransportOptions,
    tols: &Tolerances,
) -> Result<TransportResult> {
    if path.dim() != sys.m {
        return Err(Error::dim("path waypoint", sys.m, path.dim()));
    }
    if x0.len() != sys.n {
        return Err(Error::dim("x0", sys.n, x0.len()));
    }
    let lambda0 = path.at(0.0);
    sys.check_point(&PointState::new(lambda0.clone(), x0.clone()))?;
    let f0 = sys.f(&lambda0, x0)?.norm();
    let bound = tols.equilibrium_bound(x0.norm());
    if f0 > bound {
        return Err(Error::NotEquilibrium {
            residual: f0,
            tolerance: bound,
        });
    }
    let level = sys.h(x0)?;
    let lifter = Lifter { sys, level, tols };

    let mut ts = vec![0.0];
    let mut lambdas = vec![lambda0.clone()];
    let mut gamma = vec![x0.clone()];
    let mut max_vertical: f64 = 0.0;
    let mut steps = 0usize;
    let mut x = x0.clone();
    let seg_len = 1.0 / path.segments() as f64;
    let mut h = opts.initial_step;

    for seg in 0..path.segments() {
        let ldot = path.velocity(seg);
        if ldot.iter().all(|&v| v == 0.0) {
            continue;
        }
        let t_start = seg as f64 * seg_len;
        let t_end = (seg + 1) as f64 * seg_len;
        let lam = |t: f64| &path.waypoints[seg] + &ldot * (t - t_start);
        let mut t = t_start;
        while t < t_end {
            if steps >= opts.max_steps {
                return Err(Error::Transport {
                    t,
                    reason: format!("step budget of {} exhausted", opts.max_steps),
                });
            }
            if h < opts.min_step {
                return Err(Error::Transport {
                    t,
                    reason: "step size underflow".into(),
                });
            }
            let dt = h.min(t_end - t);
            let k1 = lifter.rhs(t, &lam(t), &x, &ldot)?;
            let k2 = lifter.rhs(t, &lam(t + dt / 2.0), &(&x + &k1 * (dt / 2.0)), &ldot)?;
            let k3 = lifter.rhs(t, &lam(t + dt / 2.0), &(&x + &k2 * (dt / 2.0)), &ldot)?;
            let k4 = lifter.rhs(t, &lam(t + dt), &(&x + &k3 * dt), &ldot)?;
            let predicted = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            let t_new = if t + dt >= t_end { t_end } else { t + dt };
            let lambda_new = if t_new == t_end {
                path.waypoints[seg + 1].clone()
            } else {
                lam(t_new)
            };
            let projected = newton_core(sys, &lambda_new, &lifter.level, &predicted, tols);
            let out = match projected {
                Ok(out) if out.converged_after <= 3 => out,
                Ok(_) | Err(Error::Divergence { .. }) | Err(Error::OutOfDomain { .. }) => {
                    h /= 2.0;
                    continue;
                }
                Err(Error::RankDeficient { report, .. }) => {
                    return Err(Error::Transport {
                        t: t_new,
                        reason: format!(
                            "transversality fails during projection: rank {} < {}",
                            report.rank, sys.n
                        ),
                    })
                }
                Err(e) => return Err(e),
            };
            if out.converged_after <= 1 {
                h = (2.0 * h).min(opts.max_step);
            }
            x = out.x;
            t = t_new;
            steps += 1;
            let xdot = lifter.rhs(t, &lambda_new, &x, &ldot)?;
            max_vertical = max_vertical.max(lifter.vertical_fraction(&lambda_new, &x, &ldot, &xdot));
            ts.push(t);
            lambdas.push(lambda_new);
            gamma.push(x.clone());
        }
    }
    if *ts.last().expect("non-empty") < 1.0 {
        ts.push(1.0);
        lambdas.push(path.at(1.0));
        gamma.push(x.clone());
    }

    let mut max_f: f64 = 0.0;
    let mut max_h: f64 = 0.0;
    for (l, g) in lambdas.iter().zip(&gamma) {
        max_f = max_f.max(sys.f(l, g)?.norm());
        max_h = max_h.max((sys.h(g)? - &lifter.level).norm());
    }
    Ok(TransportResult {
        t: ts,
        lambda_path: lambdas,
        gamma,
        max_f_residual: max_f,
        max_h_drift: max_h,
        max_vertical_velocity: max_vertical,
        steps_taken: steps,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolonomyReport {
    #[serde(with = "crate::serde_vec")]
    pub base_lambda: DVector<f64>,
    #[serde(with = "crate::serde_vec")]
    pub level: DVector<f64>,
    #[serde(with = "crate::serde_vec::many")]
    pub points_before: Vec<DVector<f64>>,
    #[serde(with = "crate::serde_vec::many")]
    pub points_after: Vec<DVector<f64>>,
    /// `permutation[i] = j` when the lift from point `i` ends at point `j`.
    pub permutation: Vec<usize>,
    pub max_roundtrip_displacement: f64,
    pub max_f_residual: f64,
    pub max_h_drift: f64,
}

impl HolonomyReport {
    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &j)| i == j)
    }
}

/// Transport every point of `E_lambda ∩ N_a` at the loop's base point around
/// the loop and record where each one lands.
#[allow(clippy::too_many_arguments)]
pub fn holonomy_loop(
    sys: &SystemSpec,
    loop_path: &ParamPath,
    a: &DVector<f64>,
    budget: usize,
    seed: u64,
    opts: &TransportOptions,
    tols: &Tolerances,
) -> Result<HolonomyReport> {
    if !loop_path.is_closed() {
        return Err(Error::Input("loop must close".into()));
    }
    let base = loop_path.waypoints[0].clone();
    let points: Vec<DVector<f64>> = enumerate_level_points(sys, &base, a, budget, seed, tols)?
        .into_iter()
        .map(|p| p.state.x)
        .collect();
    if points.is_empty() {
        return Err(Error::Input(format!(
            "no equilibria found on level {:?} at lambda {:?}",
            a.as_slice(),
            base.as_slice()
        )));
    }
    let lifts: Vec<TransportResult> = points
        .par_iter()
        .map(|x0| lift_curve(sys, loop_path, x0, opts, tols))
        .collect::<Result<_>>()?;

    let radius = tols.cluster * sys.domain.diameter();
    let mut permutation = Vec::with_capacity(points.len());
    let mut taken = vec![false; points.len()];
    for (i, lift) in lifts.iter().enumerate() {
        let end = lift.endpoint();
        let (j, d) = points
            .iter()
            .enumerate()
            .map(|(j, p)| (j, (p - end).norm()))
            .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
        if d > radius || taken[j] {
            return Err(Error::HolonomyMismatch {
                index: i,
                displacement: d,
            });
        }
        taken[j] = true;
        permutation.push(j);
    }
    let points_after: Vec<DVector<f64>> = lifts.iter().map(|l| l.endpoint().clone()).collect();
    let max_roundtrip_displacement = points
        .iter()
        .zip(&points_after)
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max);
    Ok(HolonomyReport {
        base_lambda: base,
        level: a.clone(),
        max_f_residual: lifts.iter().map(|l| l.max_f_residual).fold(0.0, f64::max),
        max_h_drift: lifts.iter().map(|l| l.max_h_drift).fold(0.0, f64::max),
        points_before: points,
        points_after,
        permutation,
        max_roundtrip_displacement,
    })
}

/// Connecting paths for [`check_cocycle`]: `1 -> 2`, `2 -> 3` and `1 -> 3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocyclePaths {
    pub p21: ParamPath,
    pub p32: ParamPath,
    pub p31: ParamPath,
}

impl CocyclePaths {
    pub fn straight(l1: &DVector<f64>, l2: &DVector<f64>, l3: &DVector<f64>) -> Result<Self> {
        Ok(CocyclePaths {
            p21: ParamPath::segment(l1, l2)?,
            p32: ParamPath::segment(l2, l3)?,
            p31: ParamPath::segment(l1, l3)?,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocycleReport {
    #[serde(with = "crate::serde_vec")]
    pub direct: DVector<f64>,
    #[serde(with = "crate::serde_vec")]
    pub composed: DVector<f64>,
    pub deviation: f64,
}

/// Compare `gamma_31(x0)` with `gamma_32(gamma_21(x0))`.
pub fn check_cocycle(
    sys: &SystemSpec,
    paths: &CocyclePaths,
    x0: &DVector<f64>,
    opts: &TransportOptions,
    tols: &Tolerances,
) -> Result<CocycleReport> {
    let ends = |p: &ParamPath| (p.waypoints[0].clone(), p.waypoints.last().cloned().expect("non-empty"));
    let (a21, b21) = ends(&paths.p21);
    let (a32, b32) = ends(&paths.p32);
    let (a31, b31) = ends(&paths.p31);
    if a21 != a31 || b21 != a32 || b32 != b31 {
        return Err(Error::Input("cocycle paths must run 1 -> 2, 2 -> 3 and 1 -> 3".into()));
    }
    let mid = lift_curve(sys, &paths.p21, x0, opts, tols)?;
    let composed = lift_curve(sys, &paths.p32, mid.endpoint(), opts, tols)?;
    let direct = lift_curve(sys, &paths.p31, x0, opts, tols)?;
    let deviation = (direct.endpoint() - composed.endpoint()).norm();
    Ok(CocycleReport {
        direct: direct.endpoint().clone(),
        composed: composed.endpoint().clone(),
        deviation,
    })
}

/// Transport out along `path` and back along its reverse.
pub fn roundtrip(
    sys: &SystemSpec,
    path: &ParamPath,
    x0: &DVector<f64>,
    opts: &TransportOptions,
    tols: &Tolerances,
) -> Result<f64> {
    let out = lift_curve(sys, path, x0, opts, tols)?;
    let back = lift_curve(sys, &path.reversed(), out.endpoint(), opts, tols)?;
    Ok((back.endpoint() - x0).norm())
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

    fn x_star() -> DVector<f64> {
        let xs = (8.0f64 / 15.0).sqrt();
        v(&[xs, (14.0f64 / 15.0).sqrt(), xs])
    }

    #[test]
    fn example2_vertical_space() {
        let fr = connection_frame(
            &sys("example2", None),
            &PointState::from_slices(&[1.0], &[1.0, 1.0, 1.0]),
            &Tolerances::default(),
        )
        .unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(fr.vertical_basis.ncols(), 2);
        assert_relative_eq!(
            fr.vertical_basis.column(0).into_owned(),
            v(&[0.0, r, 0.0, r]),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            fr.vertical_basis.column(1).into_owned(),
            v(&[0.0, 0.0, 1.0, 0.0]),
            epsilon = 1e-12
        );
        assert_eq!(fr.horizontal_basis.ncols(), 1);
    }

    #[test]
    fn planar_frame() {
        let fr = connection_frame(
            &sys("planar", None),
            &PointState::from_slices(&[0.5], &[-0.5, 0.0]),
            &Tolerances::default(),
        )
        .unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(
            fr.horizontal_basis.column(0).into_owned(),
            v(&[r, -r, 0.0]),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            fr.vertical_basis.column(0).into_owned(),
            v(&[0.0, 0.0, 1.0]),
            epsilon = 1e-12
        );
        assert_eq!(fr.tangent_rank, 2);
    }

    #[test]
    fn frame_rejects_degenerate_point() {
        let err = connection_frame(
            &sys("example2", None),
            &PointState::from_slices(&[1.0], &[1.0, 0.0, 1.0]),
            &Tolerances::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Condition { .. }));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn metric_examples() {
        let s = sys("planar", None);
        let u = PointState::from_slices(&[0.5], &[-0.5, 0.0]);
        let tols = Tolerances::default();
        let fr = connection_frame(&s, &u, &tols).unwrap();
        let hx = fr.horizontal_lift(&v(&[1.0])).unwrap();
        let vx = fr.vertical_basis.column(0).into_owned();
        assert_relative_eq!(metric_g(&s, &u, &hx, &hx, &tols).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(metric_g(&s, &u, &vx, &vx, &tols).unwrap(), 1.0, epsilon = 1e-12);
        assert!(metric_g(&s, &u, &vx, &hx, &tols).unwrap().abs() < 1e-14);
        assert!(metric_g(&s, &u, &v(&[1.0, 0.0, 0.0]), &hx, &tols).is_err());
    }

    #[test]
    fn planar_lift() {
        let s = sys("planar", None);
        let path = ParamPath::from_slices(&[&[0.5], &[0.9]]).unwrap();
        let r = lift_curve(
            &s,
            &path,
            &v(&[-0.5, 0.0]),
            &TransportOptions::default(),
            &Tolerances::default(),
        )
        .unwrap();
        assert_relative_eq!(r.endpoint().clone(), v(&[-0.9, 0.0]), epsilon = 1e-8);
        assert_eq!(r.max_h_drift, 0.0);
        assert!(r.max_f_residual < 1e-8);
        assert!(r.max_vertical_velocity < 1e-6);
        assert!(r.steps_taken > 0);
    }

    #[test]
    fn constant_path_takes_no_steps() {
        let s = sys("planar", None);
        let path = ParamPath::from_slices(&[&[0.5], &[0.5]]).unwrap();
        let r = lift_curve(
            &s,
            &path,
            &v(&[-0.5, 0.0]),
            &TransportOptions::default(),
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(r.steps_taken, 0);
        assert!(r.gamma.iter().all(|g| *g == v(&[-0.5, 0.0])));
    }

    #[test]
    fn example2_lift_is_stationary() {
        let s = sys("example2", None);
        let path = ParamPath::from_slices(&[&[1.0], &[2.0]]).unwrap();
        let r = lift_curve(
            &s,
            &path,
            &x_star(),
            &TransportOptions::default(),
            &Tolerances::default(),
        )
        .unwrap();
        assert!((r.endpoint() - x_star()).norm() < 1e-8);
        assert!(r.max_h_drift < 1e-8);
    }

    #[test]
    fn lift_rejects_non_equilibrium() {
        let s = sys("planar", None);
        let path = ParamPath::from_slices(&[&[0.5], &[0.9]]).unwrap();
        let err = lift_curve(
            &s,
            &path,
            &v(&[0.0, 0.0]),
            &TransportOptions::default(),
            &Tolerances::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotEquilibrium { .. }));
    }

    #[test]
    fn holonomy_requires_closed_loop() {
        let s = sys("planar", None);
        let path = ParamPath::from_slices(&[&[0.5], &[0.9]]).unwrap();
        let err = holonomy_loop(
            &s,
            &path,
            &v(&[0.0]),
            20,
            1,
            &TransportOptions::default(),
            &Tolerances::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("loop must close"));
    }

    #[test]
    fn planar_holonomy_is_trivial() {
        let s = sys("planar", None);
        let path = ParamPath::from_slices(&[&[0.5], &[0.9], &[0.5]]).unwrap();
        let rep = holonomy_loop(
            &s,
            &path,
            &v(&[0.0]),
            50,
            1,
            &TransportOptions::default(),
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(rep.permutation, vec![0]);
        assert!(rep.max_roundtrip_displacement < 1e-6);
    }

    #[test]
    fn cocycle_planar_and_degenerate() {
        let s = sys("planar", None);
        let (o, t) = (TransportOptions::default(), Tolerances::default());
        let paths = CocyclePaths::straight(&v(&[0.5]), &v(&[0.7]), &v(&[0.9])).unwrap();
        let rep = check_cocycle(&s, &paths, &v(&[-0.5, 0.0]), &o, &t).unwrap();
        assert!(rep.deviation < 1e-8);
        let same = CocyclePaths::straight(&v(&[0.5]), &v(&[0.5]), &v(&[0.5])).unwrap();
        assert_eq!(
            check_cocycle(&s, &same, &v(&[-0.5, 0.0]), &o, &t).unwrap().deviation,
            0.0
        );
    }

    #[test]
    fn path_interpolation() {
        let p = ParamPath::from_slices(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0]]).unwrap();
        assert_eq!(p.at(0.25), v(&[0.5, 0.0]));
        assert_eq!(p.at(0.75), v(&[1.0, 0.5]));
        assert_eq!(p.at(1.0), v(&[1.0, 1.0]));
        assert!(!p.is_closed());
        assert!(ParamPath::from_slices(&[&[0.0]]).is_err());
    }
}
