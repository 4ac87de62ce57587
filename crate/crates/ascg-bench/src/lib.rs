//! Shared instance builders for the benchmark suite.

use ascg_core::{CompositeObjective, InnerFn, Polytope, QuadraticForm};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn random_directions(dim: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

/// Box instance with an anisotropic diagonal map and an interior optimum, so
/// away and drop steps keep occurring.
pub fn anisotropic_box(n: usize) -> (Polytope, CompositeObjective) {
    let p = Polytope::unit_box(n).unwrap();
    let mut e = DMatrix::zeros(n, n);
    for i in 0..n {
        e[(i, i)] = 0.1 + 0.9 * (i as f64) / (n.max(2) as f64 - 1.0);
    }
    let center = DVector::from_fn(n, |i, _| 0.7 * (-1.0f64).powi(i as i32) * (i as f64 + 1.0) / n as f64);
    let target = &e * &center;
    let obj = CompositeObjective::new(
        e,
        DVector::zeros(n),
        InnerFn::Quadratic(QuadraticForm::least_squares(&target)),
    )
    .unwrap();
    (p, obj)
}
