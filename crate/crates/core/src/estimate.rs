//! The result record returned by every estimator.

use std::time::Instant;

use serde::Serialize;

/// A scalar discrepancy value with the metadata needed to reproduce it.
///
/// `slices` and `knots` are zero for estimators that do not use them, and
/// `seed` is zero for deterministic estimators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscrepancyEstimate {
    pub value: f64,
    pub estimator: String,
    pub n: usize,
    pub d: usize,
    pub slices: usize,
    pub knots: usize,
    pub seed: u64,
    pub wall_ms: f64,
    /// Standard error of `value` when the estimator can provide one:
    /// jackknife for pairwise statistics, across-slice spread for sliced ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

impl DiscrepancyEstimate {
    pub(crate) fn new(estimator: &str, n: usize, d: usize, value: f64, started: Instant) -> Self {
        Self {
            value,
            estimator: estimator.to_string(),
            n,
            d,
            slices: 0,
            knots: 0,
            seed: 0,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            std_error: None,
        }
    }

    pub(crate) fn with_se(mut self, se: Option<f64>) -> Self {
        self.std_error = se;
        self
    }

    pub(crate) fn with_slices(mut self, slices: usize, knots: usize, seed: u64) -> Self {
        self.slices = slices;
        self.knots = knots;
        self.seed = seed;
        self
    }

    /// Tolerance below zero accepted for squared discrepancies.
    pub fn report_tolerance(&self) -> f64 {
        1e-6 * (1.0 + self.value.abs())
    }
}
