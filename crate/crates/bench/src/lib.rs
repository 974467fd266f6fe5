//! Fixtures shared by the benchmarks.

use equibundle::{builtin, BuiltinParams, DMatrix, PointState, SystemSpec};

pub fn rfmr(n: usize) -> SystemSpec {
    builtin("rfmr", &BuiltinParams { n: Some(n) }).expect("rfmr is built in")
}

/// The uniform equilibrium of `rfmr(n)` at unit rates.
pub fn rfmr_equilibrium(n: usize) -> PointState {
    PointState::from_slices(&vec![1.0; n], &vec![0.5; n])
}

/// A dense matrix with a reproducible, well-spread spectrum.
pub fn test_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let v = ((i * 31 + j * 17) % 23) as f64 / 23.0 - 0.5;
        if i == j {
            v + (i as f64 + 1.0)
        } else {
            v
        }
    })
}
