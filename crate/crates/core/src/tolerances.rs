use serde::{Deserialize, Serialize};

use crate::linalg::default_rank_tolerance;

/// Every cutoff used by the numerical routines. Reports echo the record they
/// were computed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Equilibrium test: `|f| <= equilibrium * (1 + |x|)`.
    pub equilibrium: f64,
    /// Rank cutoff floor for degeneracy decisions, relative to `max(1, sigma_max)`.
    pub rank: f64,
    /// Newton convergence: `|F| <= newton * (1 + |x0|)`.
    pub newton: f64,
    pub newton_max_iter: usize,
    /// Accepted `|h(x) - a|` for level-set solutions.
    pub level: f64,
    /// Absolute slack on domain membership for boundary work.
    pub domain_slack: f64,
    /// Clustering radius for multistart deduplication, relative to the domain diameter.
    pub cluster: f64,
    /// Fiber endpoints must lie this close to the domain boundary.
    pub boundary: f64,
    /// Bound on `|f|` and on first-integral drift along lifted curves.
    pub transport: f64,
    /// Eigenvalue zero cutoff, relative to the Frobenius norm of the Jacobian.
    pub zero: f64,
    /// Minimum ratio between the smallest nonzero and largest zero eigenvalue modulus.
    pub gap_min: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            equilibrium: 1e-9,
            rank: 1e-8,
            newton: 1e-10,
            newton_max_iter: 50,
            level: 1e-8,
            domain_slack: 1e-9,
            cluster: 1e-6,
            boundary: 1e-6,
            transport: 1e-8,
            zero: 1e-7,
            gap_min: 10.0,
        }
    }
}

impl Tolerances {
    pub fn equilibrium_bound(&self, x_norm: f64) -> f64 {
        self.equilibrium * (1.0 + x_norm)
    }

    /// Cutoff for rank decisions on a `rows x cols` matrix with largest
    /// singular value `sigma_max`: the spectral default, floored at
    /// `rank * max(1, sigma_max)`.
    pub fn rank_cutoff(&self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        default_rank_tolerance(rows, cols, sigma_max).max(self.rank * sigma_max.max(1.0))
    }
}
