//! Benchmark fixtures.

use kerdisc::specfun::gauss_hermite;
use kerdisc::{PriorSpec, RngState, SampleBatch, SliceFamily, SlicedRegSpec};

/// `n` draws from `N(0, I_d)` with a fixed seed.
pub fn gaussian_batch(n: usize, d: usize) -> SampleBatch {
    PriorSpec::gaussian(d, 1.0).and_then(|p| p.sample(n, &RngState::new(17))).expect("valid fixture")
}

/// Sliced regularizer against `N(0, I_d)` with 21 knots.
pub fn sliced_spec(family: SliceFamily, d: usize, slices: usize) -> SlicedRegSpec {
    let prior = PriorSpec::gaussian(d, 1.0).expect("valid prior");
    SlicedRegSpec::new(family, prior, slices, gauss_hermite(21).expect("valid rule")).expect("valid spec")
}
