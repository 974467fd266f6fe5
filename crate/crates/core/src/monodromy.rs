//! Nonzero Jacobian spectrum along loops: the structural-zero split, tracked
//! eigenvalue paths, and the monodromy datum (permutation and windings).

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, eigen_dense, spectrum_order};
use crate::system::{evaluate_first_order, PointState, SystemSpec};
use crate::tolerances::Tolerances;

type C64 = Complex<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSplit {
    #[serde(with = "crate::serde_vec::complex")]
    pub zeros: Vec<C64>,
    #[serde(with = "crate::serde_vec::complex")]
    pub nonzeros: Vec<C64>,
    /// Smallest nonzero modulus over the largest zero modulus (floored).
    /// Absent when either part is empty.
    pub gap_ratio: Option<f64>,
    pub reliable: bool,
    pub tol_zero: f64,
}

/// Zero cutoff for a Jacobian: `tols.zero` times its Frobenius norm.
pub fn zero_tolerance(j: &DMatrix<f64>, tols: &Tolerances) -> f64 {
    tols.zero * j.norm()
}

/// Classify the `k` smallest-modulus eigenvalues of `j` as structural zeros.
pub fn split_spectrum(j: &DMatrix<f64>, k: usize, tol_zero: f64, gap_min: f64) -> Result<SpectrumSplit> {
    let n = j.nrows();
    if k > n {
        return Err(Error::Input(format!(
            "cannot split {k} zeros from a spectrum of size {n}"
        )));
    }
    let mut eig = eigen_dense(j)?;
    eig.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(spectrum_order(a, b)));
    let mut nonzeros = eig.split_off(k);
    let mut zeros = eig;
    zeros.sort_by(spectrum_order);
    nonzeros.sort_by(spectrum_order);
    let largest_zero = zeros.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let smallest_nonzero = nonzeros.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let floor = f64::EPSILON * j.norm().max(1.0);
    let gap_ratio = (!zeros.is_empty() && !nonzeros.is_empty()).then(|| smallest_nonzero / largest_zero.max(floor));
    let reliable = largest_zero <= tol_zero && gap_ratio.is_none_or(|g| g >= gap_min);
    Ok(SpectrumSplit {
        zeros,
        nonzeros,
        gap_ratio,
        reliable,
        tol_zero,
    })
}

/// Minimum-cost perfect matching on a square cost matrix; `result[row] = col`.
pub(crate) fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // Potentials formulation, 1-based with a sentinel column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackOptions {
    /// Deepest bisection of one sample interval.
    pub max_depth: u32,
    /// Total number of refinement points allowed over the loop.
    pub max_refinements: usize,
    /// Eigenvalues closer than this (relative to `max(1, |J|)`) count as one cluster.
    pub cluster: f64,
    /// Extra points inserted between consecutive fiber-loop points.
    pub subdivisions: usize,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            max_depth: 40,
            max_refinements: 100_000,
            cluster: 1e-6,
            subdivisions: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenLoopReport {
    /// `permutation[i] = j`: the track starting at nonzero eigenvalue `i`
    /// ends at eigenvalue `j`.
    pub permutation: Vec<usize>,
    pub windings: Vec<i64>,
    pub crossings: Vec<usize>,
    pub min_distance_to_zero: f64,
    pub samples_used: usize,
    pub refinements: usize,
    /// Winding of the product of the tracked eigenvalues, accumulated separately.
    pub product_winding: i64,
    #[serde(with = "crate::serde_vec::complex")]
    pub start_spectrum: Vec<C64>,
    pub flags: Vec<String>,
}

/// Closed one-parameter matrix family sampled at `0, 1, ..., len - 1` and
/// interpolable in between.
pub(crate) trait LoopSource: Sync {
    fn len(&self) -> usize;
    fn matrix_at(&self, s: f64) -> Result<DMatrix<f64>>;
    fn sample(&self, i: usize) -> Result<DMatrix<f64>> {
        self.matrix_at(i as f64)
    }
}

struct MatrixLoop<'a> {
    js: &'a [DMatrix<f64>],
}

impl LoopSource for MatrixLoop<'_> {
    fn len(&self) -> usize {
        self.js.len()
    }

    fn matrix_at(&self, s: f64) -> Result<DMatrix<f64>> {
        let i = (s.floor() as usize).min(self.js.len() - 1);
        let w = s - i as f64;
        if w == 0.0 {
            return Ok(self.js[i].clone());
        }
        Ok(&self.js[i] * (1.0 - w) + &self.js[i + 1] * w)
    }
}

#[derive(Clone)]
struct Track {
    prev: Option<(f64, C64)>,
    cur: (f64, C64),
    darg: f64,
    sign: i8,
    crossings: usize,
}

impl Track {
    fn predict(&self, s: f64) -> C64 {
        match self.prev {
            Some((sp, vp)) if self.cur.0 > sp => {
                let r = (s - self.cur.0) / (self.cur.0 - sp);
                self.cur.1 + (self.cur.1 - vp) * r
            }
            _ => self.cur.1,
        }
    }
}

fn sign_of(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn assign(values: &[C64], preds: &[C64]) -> Vec<usize> {
    let p = preds.len();
    let cost = DMatrix::from_fn(p, p, |i, j| (values[j] - preds[i]).norm());
    hungarian(&cost)
}

/// Smallest separation among the new values and among the predictions,
/// skipping pairs that sit inside one cluster.
fn resolvable_gap(values: &[C64], preds: &[C64], floor: f64) -> f64 {
    let p = values.len();
    let mut gap = f64::INFINITY;
    for i in 0..p {
        for j in i + 1..p {
            let dv = (values[i] - values[j]).norm();
            let dp = (preds[i] - preds[j]).norm();
            if dv < floor || dp < floor {
                continue;
            }
            gap = gap.min(dv).min(dp);
        }
    }
    gap
}

fn clusters(values: &[C64], floor: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        match out
            .iter_mut()
            .find(|c| c.iter().any(|&j| (values[j] - v).norm() < floor))
        {
            Some(c) => c.push(i),
            None => out.push(vec![i]),
        }
    }
    out
}

fn spectrum_at(j: &DMatrix<f64>, k: usize, tols: &Tolerances) -> Result<SpectrumSplit> {
    split_spectrum(j, k, zero_tolerance(j, tols), tols.gap_min)
}

pub(crate) fn track_source(
    source: &dyn LoopSource,
    k: usize,
    opts: &TrackOptions,
    tols: &Tolerances,
) -> Result<EigenLoopReport> {
    let len = source.len();
    if len < 2 {
        return Err(Error::Input("a loop needs at least two samples".into()));
    }
    let samples: Vec<DMatrix<f64>> = (0..len)
        .into_par_iter()
        .map(|i| source.sample(i))
        .collect::<Result<_>>()?;
    let n = samples[0].nrows();
    if let Some(bad) = samples.iter().find(|j| j.shape() != (n, n)) {
        return Err(Error::dim("loop matrix size", n, bad.nrows().max(bad.ncols())));
    }
    let scale = samples.iter().map(|j| j.norm()).fold(0.0, f64::max).max(1.0);
    let closure = (&samples[0] - &samples[len - 1]).norm();
    if closure > 1e-12 * scale {
        return Err(Error::Input(format!(
            "loop must close (first and last differ by {closure:e})"
        )));
    }
    let floor = opts.cluster * scale;
    // Scale-free families (1 x 1, say) would otherwise never register a zero.
    let loop_zero = tols.zero * scale;
    let mut flags = Vec::new();

    let start = spectrum_at(&samples[0], k, tols)?;
    let p = start.nonzeros.len();
    let mut unreliable = usize::from(!start.reliable);
    let start_values = start.nonzeros.clone();
    if let Some(m) = start_values.iter().map(|z| z.norm()).reduce(f64::min) {
        if m < start.tol_zero.max(loop_zero) {
            return Err(Error::LeavesCStar { s: 0.0, modulus: m });
        }
    }
    let mut tracks: Vec<Track> = start_values
        .iter()
        .map(|&z| Track {
            prev: None,
            cur: (0.0, z),
            darg: 0.0,
            sign: sign_of(z.re),
            crossings: 0,
        })
        .collect();
    let start_clusters: Vec<Vec<usize>> = clusters(&start_values, floor)
        .into_iter()
        .filter(|c| c.len() > 1)
        .collect();
    if !start_clusters.is_empty() {
        flags.push("start spectrum has repeated eigenvalues; tracks relabeled by departure order".into());
    }
    let mut first_departure: Option<(f64, Vec<C64>)> = None;
    let mut min_distance = start_values.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let mut product_darg = 0.0;
    let mut samples_used = 1;
    let mut refinements = 0;

    for seg in 0..len - 1 {
        let mut targets = vec![(seg + 1) as f64];
        while let Some(&s_t) = targets.last() {
            let j = if s_t.fract() == 0.0 {
                samples[s_t as usize].clone()
            } else {
                source.matrix_at(s_t)?
            };
            let split = spectrum_at(&j, k, tols)?;
            let values = split.nonzeros;
            if let Some(m) = values.iter().map(|z| z.norm()).reduce(f64::min) {
                if m < split.tol_zero.max(loop_zero) {
                    return Err(Error::LeavesCStar { s: s_t, modulus: m });
                }
            }
            let preds: Vec<C64> = tracks.iter().map(|t| t.predict(s_t)).collect();
            let matched = assign(&values, &preds);
            let new: Vec<C64> = matched.iter().map(|&c| values[c]).collect();
            let dargs: Vec<f64> = tracks.iter().zip(&new).map(|(t, z)| (z / t.cur.1).arg()).collect();
            let prod_step = {
                let num: C64 = new.iter().product();
                let den: C64 = tracks.iter().map(|t| t.cur.1).product();
                (num / den).arg()
            };
            let err = preds.iter().zip(&new).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let gap = resolvable_gap(&new, &preds, floor);
            let ok = dargs.iter().all(|d| d.abs() < PI / 2.0) && prod_step.abs() < PI / 2.0 && err <= 0.5 * gap;
            let s_cur = tracks.first().map_or(seg as f64, |t| t.cur.0);
            if !ok {
                if s_t - s_cur <= (-(opts.max_depth as f64)).exp2() || refinements >= opts.max_refinements {
                    return Err(Error::Resolution { s: s_t });
                }
                refinements += 1;
                targets.push(0.5 * (s_cur + s_t));
                continue;
            }
            targets.pop();
            let mut new = new;
            let mut dargs = dargs;
            if first_departure.is_none() {
                for c in &start_clusters {
                    let mut vals: Vec<C64> = c.iter().map(|&i| new[i]).collect();
                    vals.sort_by(spectrum_order);
                    for (&i, v) in c.iter().zip(vals) {
                        new[i] = v;
                        dargs[i] = (v / tracks[i].cur.1).arg();
                    }
                }
                first_departure = Some((s_t, new.clone()));
            }
            if !split.reliable {
                unreliable += 1;
            }
            for ((t, z), d) in tracks.iter_mut().zip(&new).zip(&dargs) {
                t.prev = Some(t.cur);
                t.cur = (s_t, *z);
                t.darg += d;
                let sg = sign_of(z.re);
                if sg != 0 {
                    if t.sign != 0 && sg != t.sign {
                        t.crossings += 1;
                    }
                    t.sign = sg;
                }
                min_distance = min_distance.min(z.norm());
            }
            product_darg += prod_step;
            samples_used += 1;
        }
    }
    if unreliable > 0 {
        flags.push(format!("zero/nonzero split unreliable at {unreliable} samples"));
    }

    let permutation = match &first_departure {
        Some((s1, first)) if p > 0 => {
            let s_end = (len - 1) as f64;
            let preds: Vec<C64> = tracks.iter().map(|t| t.predict(s_end + s1)).collect();
            let cost = DMatrix::from_fn(p, p, |i, j| (first[j] - preds[i]).norm());
            hungarian(&cost)
        }
        _ => (0..p).collect(),
    };
    let mismatch = tracks
        .iter()
        .zip(&permutation)
        .map(|(t, &j)| (t.cur.1 - start_values[j]).norm())
        .fold(0.0, f64::max);
    if mismatch > floor.max(1e-6 * scale) {
        flags.push(format!(
            "track endpoints differ from the start spectrum by {mismatch:e}"
        ));
    }
    let theta: Vec<f64> = start_values.iter().map(|z| z.arg()).collect();
    let windings: Vec<i64> = tracks
        .iter()
        .enumerate()
        .map(|(i, t)| ((theta[i] + t.darg - theta[permutation[i]]) / (2.0 * PI)).round() as i64)
        .collect();
    let product_winding = (product_darg / (2.0 * PI)).round() as i64;
    if windings.iter().sum::<i64>() != product_winding {
        flags.push("winding sum differs from the product winding".into());
    }
    Ok(EigenLoopReport {
        permutation,
        windings,
        crossings: tracks.iter().map(|t| t.crossings).collect(),
        min_distance_to_zero: if p == 0 { 0.0 } else { min_distance },
        samples_used,
        refinements,
        product_winding,
        start_spectrum: start_values,
        flags,
    })
}

/// Track the nonzero spectrum of a closed matrix sequence (first equal to
/// last), refining by linear blending where the sampling is too coarse.
pub fn track_matrix_loop(
    js: &[DMatrix<f64>],
    k: usize,
    opts: &TrackOptions,
    tols: &Tolerances,
) -> Result<EigenLoopReport> {
    if js.is_empty() {
        return Err(Error::Input("empty matrix loop".into()));
    }
    for j in js {
        linalg::check_finite(j, "loop matrix")?;
    }
    track_source(&MatrixLoop { js }, k, opts, tols)
}

struct FiberLoop<'a> {
    sys: &'a SystemSpec,
    lambda: &'a DVector<f64>,
    points: Vec<DVector<f64>>,
    levels: Vec<DVector<f64>>,
    tols: &'a Tolerances,
}

impl FiberLoop<'_> {
    /// Minimum-norm Gauss-Newton onto `f(lambda, .) = 0, h = a`.
    fn project(&self, x0: &DVector<f64>, a: &DVector<f64>) -> Result<DVector<f64>> {
        let (n, k) = (self.sys.n, self.sys.k);
        let target = self.tols.newton * (1.0 + x0.norm());
        let mut x = x0.clone();
        for _ in 0..self.tols.newton_max_iter {
            let ev = evaluate_first_order(self.sys, &PointState::new(self.lambda.clone(), x.clone()))?;
            let mut r = DVector::zeros(n + k);
            r.rows_mut(0, n).copy_from(&ev.f_value);
            r.rows_mut(n, k).copy_from(&(&ev.h_value - a));
            if r.norm() <= target {
                return Ok(x);
            }
            x -= linalg::pseudo_solve(&ev.stacked(), &r, None)?;
        }
        let residual = self.sys.f(self.lambda, &x)?.norm();
        Err(Error::Divergence {
            iterations: self.tols.newton_max_iter,
            residual,
        })
    }

    fn jac(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(evaluate_first_order(self.sys, &PointState::new(self.lambda.clone(), x.clone()))?.jac_x)
    }
}

impl LoopSource for FiberLoop<'_> {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn matrix_at(&self, s: f64) -> Result<DMatrix<f64>> {
        let i = (s.floor() as usize).min(self.points.len() - 1);
        let w = s - i as f64;
        if w == 0.0 {
            return self.jac(&self.points[i]);
        }
        let x = &self.points[i] * (1.0 - w) + &self.points[i + 1] * w;
        let a = &self.levels[i] * (1.0 - w) + &self.levels[i + 1] * w;
        self.jac(&self.project(&x, &a)?)
    }
}

/// Monodromy datum of the nonzero spectrum of `df/dx` along a closed loop of
/// equilibria in `E_lambda`.
pub fn eigen_along_fiber_loop(
    sys: &SystemSpec,
    lambda: &DVector<f64>,
    loop_points: &[DVector<f64>],
    opts: &TrackOptions,
    tols: &Tolerances,
) -> Result<EigenLoopReport> {
    if lambda.len() != sys.m {
        return Err(Error::dim("lambda", sys.m, lambda.len()));
    }
    if loop_points.len() < 2 {
        return Err(Error::Input("a loop needs at least two points".into()));
    }
    let first = &loop_points[0];
    let last = &loop_points[loop_points.len() - 1];
    if (first - last).norm() > 1e-12 * (1.0 + first.norm()) {
        return Err(Error::Input("loop must close (first and last points differ)".into()));
    }
    let mut levels = Vec::with_capacity(loop_points.len());
    for x in loop_points {
        if x.len() != sys.n {
            return Err(Error::dim("loop point", sys.n, x.len()));
        }
        let residual = sys.f(lambda, x)?.norm();
        let bound = tols.equilibrium_bound(x.norm());
        if residual > bound {
            return Err(Error::NotEquilibrium {
                residual,
                tolerance: bound,
            });
        }
        levels.push(sys.h(x)?);
    }
    let base = FiberLoop {
        sys,
        lambda,
        points: loop_points.to_vec(),
        levels,
        tols,
    };
    let source = if opts.subdivisions == 0 {
        base
    } else {
        let per = opts.subdivisions + 1;
        let mut points = Vec::new();
        let mut levels = Vec::new();
        for i in 0..base.points.len() - 1 {
            for q in 0..per {
                let s = i as f64 + q as f64 / per as f64;
                let w = s - i as f64;
                let a = &base.levels[i] * (1.0 - w) + &base.levels[i + 1] * w;
                let x = if q == 0 {
                    base.points[i].clone()
                } else {
                    base.project(&(&base.points[i] * (1.0 - w) + &base.points[i + 1] * w), &a)?
                };
                points.push(x);
                levels.push(a);
            }
        }
        points.push(base.points[base.points.len() - 1].clone());
        levels.push(base.levels[base.levels.len() - 1].clone());
        FiberLoop { points, levels, ..base }
    };
    track_source(&source, sys.k, opts, tols)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilitySignature {
    /// Lower bound on imaginary-axis crossings per track.
    pub bounds: Vec<usize>,
    /// Set where more crossings were observed than the winding forces.
    pub exceeds_winding_bound: Vec<bool>,
}

/// Per track, `max(2 |m_i|, observed crossings)`.
pub fn stability_signature(report: &EigenLoopReport) -> StabilitySignature {
    let (bounds, exceeds) = report
        .windings
        .iter()
        .zip(&report.crossings)
        .map(|(&m, &c)| {
            let forced = 2 * m.unsigned_abs() as usize;
            (forced.max(c), c > forced)
        })
        .unzip();
    StabilitySignature {
        bounds,
        exceeds_winding_bound: exceeds,
    }
}

/// `J(s) = [[0, 1], [-1, 2 cos s]]` at `s_j = 2 pi j / samples`, `j = 0..=samples`.
/// Its eigenvalues are `exp(+-i s)`.
pub fn rotation_family(samples: usize) -> Vec<DMatrix<f64>> {
    (0..=samples)
        .map(|j| {
            let s = if j == samples {
                0.0
            } else {
                2.0 * PI * j as f64 / samples as f64
            };
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 2.0 * s.cos()])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{builtin, BuiltinParams};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        Complex::new(re, im)
    }

    #[test]
    fn split_examples() {
        let j = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, -1.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let s = split_spectrum(&j, 2, 1e-7, 10.0).unwrap();
        assert_eq!(s.zeros.len(), 2);
        assert!(s.zeros.iter().all(|z| z.norm() < 1e-12));
        assert_relative_eq!(s.nonzeros[0].re, 1.0, epsilon = 1e-12);
        assert!(s.reliable);

        let j = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 0.0]);
        let s = split_spectrum(&j, 1, 1e-7, 10.0).unwrap();
        assert_eq!(s.nonzeros, vec![c(-1.0, 0.0)]);
    }

    #[test]
    fn split_rfmr_symmetric_point() {
        // Circulant with first row (-1, 0.5, 0.5): eigenvalues -1 + cos(2 pi j / 3) for j = 0, 1, 2.
        let oracle: Vec<f64> = (0..3).map(|j| -1.0 + (2.0 * PI * j as f64 / 3.0).cos()).collect();
        assert!(oracle[0].abs() < 1e-15);
        let s = builtin("rfmr", &BuiltinParams { n: Some(3) }).unwrap();
        let ev = crate::system::evaluate(&s, &PointState::from_slices(&[1.0; 3], &[0.5; 3])).unwrap();
        let sp = split_spectrum(&ev.jac_x, 1, zero_tolerance(&ev.jac_x, &Tolerances::default()), 10.0).unwrap();
        for (z, o) in sp.nonzeros.iter().zip(&oracle[1..]) {
            assert!((z - c(*o, 0.0)).norm() < 1e-7, "{z}");
        }
        let sum: C64 = sp.nonzeros.iter().sum();
        assert_relative_eq!(sum.re, ev.jac_x.trace(), epsilon = 1e-12);
    }

    #[test]
    fn split_flags_unreliable_gap() {
        let j = DMatrix::from_diagonal(&DVector::from_vec(vec![1e-3, 5e-3, 1.0]));
        let s = split_spectrum(&j, 1, 1e-7, 10.0).unwrap();
        assert!(!s.reliable);
    }

    #[test]
    fn hungarian_small() {
        let cost = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
        assert_eq!(hungarian(&cost), vec![1, 0, 2]);
        let id = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(hungarian(&id), vec![0, 1]);
    }

    #[test]
    fn rotation_family_monodromy() {
        let r = track_matrix_loop(
            &rotation_family(256),
            0,
            &TrackOptions::default(),
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(r.windings, vec![1, -1]);
        assert_eq!(r.permutation, vec![0, 1]);
        assert_eq!(r.crossings, vec![2, 2]);
        assert_eq!(r.product_winding, 0);
        assert_relative_eq!(r.min_distance_to_zero, 1.0, epsilon = 1e-9);
        let sig = stability_signature(&r);
        assert_eq!(sig.bounds, vec![2, 2]);
        assert_eq!(sig.exceeds_winding_bound, vec![false, false]);
    }

    #[test]
    fn doubled_loop_doubles_windings() {
        let mut js = rotation_family(256);
        let again = js[1..].to_vec();
        js.extend(again);
        let r = track_matrix_loop(&js, 0, &TrackOptions::default(), &Tolerances::default()).unwrap();
        assert_eq!(r.windings, vec![2, -2]);
        assert_eq!(r.permutation, vec![0, 1]);
    }

    #[test]
    fn constant_and_diagonal_loops() {
        let j0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -1.0]);
        let r = track_matrix_loop(
            &vec![j0.clone(); 9],
            0,
            &TrackOptions::default(),
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(r.windings, vec![0, 0]);
        assert_eq!(r.crossings, vec![0, 0]);

        let js: Vec<DMatrix<f64>> = (0..=64)
            .map(|j| {
                let s = 2.0 * PI * (j % 64) as f64 / 64.0;
                DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 + s.cos(), -1.0]))
            })
            .collect();
        let r = track_matrix_loop(&js, 0, &TrackOptions::default(), &Tolerances::default()).unwrap();
        assert_eq!(r.windings, vec![0, 0]);
        assert_eq!(r.crossings, vec![0, 0]);
        assert_eq!(r.permutation, vec![0, 1]);
    }

    #[test]
    fn open_loop_is_rejected() {
        let js = vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 2.0];
        let err = track_matrix_loop(&js, 0, &TrackOptions::default(), &Tolerances::default()).unwrap_err();
        assert!(err.to_string().contains("loop must close"));
    }

    #[test]
    fn path_through_zero_is_rejected() {
        let js: Vec<DMatrix<f64>> = (0..=32)
            .map(|j| {
                let s = 2.0 * PI * (j % 32) as f64 / 32.0;
                DMatrix::from_element(1, 1, 0.5 + s.cos())
            })
            .collect();
        let err = track_matrix_loop(&js, 0, &TrackOptions::default(), &Tolerances::default()).unwrap_err();
        assert!(matches!(err, Error::LeavesCStar { .. }), "{err}");
        assert!(err.to_string().contains("path leaves C*"));
    }

    #[test]
    fn signature_flags_extra_crossings() {
        let rep = EigenLoopReport {
            permutation: vec![0],
            windings: vec![0],
            crossings: vec![2],
            min_distance_to_zero: 0.1,
            samples_used: 3,
            refinements: 0,
            product_winding: 0,
            start_spectrum: vec![c(1.0, 0.0)],
            flags: vec![],
        };
        let sig = stability_signature(&rep);
        assert_eq!(sig.bounds, vec![2]);
        assert_eq!(sig.exceeds_winding_bound, vec![true]);
    }

    fn example2_loop(cx: f64, cy: f64, r: f64, samples: usize) -> Vec<DVector<f64>> {
        (0..=samples)
            .map(|j| {
                let t = if j == samples {
                    0.0
                } else {
                    2.0 * PI * j as f64 / samples as f64
                };
                let (x, y) = (cx + r * t.cos(), cy + r * t.sin());
                DVector::from_vec(vec![x, y, x])
            })
            .collect()
    }

    #[test]
    fn example2_fiber_loop_has_zero_winding() {
        let s = builtin("example2", &BuiltinParams::default()).unwrap();
        let pts = example2_loop(0.5, 1.3, 0.15, 64);
        let r = eigen_along_fiber_loop(
            &s,
            &DVector::from_vec(vec![1.0]),
            &pts,
            &TrackOptions::default(),
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(r.windings, vec![0]);
        assert_eq!(r.permutation, vec![0]);
        assert_eq!(r.crossings, vec![0]);
    }

    #[test]
    fn example2_loop_through_y_zero_leaves_c_star() {
        let s = builtin("example2", &BuiltinParams::default()).unwrap();
        let pts = example2_loop(1.15, 0.0, 0.05, 64);
        let err = eigen_along_fiber_loop(
            &s,
            &DVector::from_vec(vec![1.0]),
            &pts,
            &TrackOptions::default(),
            &Tolerances::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::LeavesCStar { .. }), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn constant_fiber_loop() {
        let s = builtin("planar", &BuiltinParams::default()).unwrap();
        let x = DVector::from_vec(vec![-0.5, 0.0]);
        let r = eigen_along_fiber_loop(
            &s,
            &DVector::from_vec(vec![0.5]),
            &[x.clone(), x.clone(), x],
            &TrackOptions::default(),
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(r.windings, vec![0]);
        assert_eq!(r.permutation, vec![0]);
    }
}
