//! Independent reference engines for checking the closed forms.
//!
//! Nothing here calls into [`crate::moments`] or [`crate::optimize`] to
//! produce an oracle value; the analytic side is always passed in by the
//! caller.

mod black_scholes;
mod brute_force;
mod monte_carlo;

pub use black_scholes::black_scholes;
pub use brute_force::{
    brute_force_optimum, golden_section, kkt_min_variance, kkt_two_constraints, nelder_mead,
    NelderMeadOptions,
};
pub use monte_carlo::{
    empirical_var, mc_gosset_price, mc_moments, mc_moments_many, sample_gains, GainModel,
    McMoments, MC_BATCHES,
};

use serde::Serialize;

/// Outcome of comparing an analytic value against an oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub quantity: String,
    pub analytic: f64,
    pub oracle: f64,
    /// Standard error of the oracle, when it is a sampling estimate.
    pub standard_error: Option<f64>,
    /// Allowed absolute deviation (`k * SE` or a fixed tolerance).
    pub tolerance: f64,
    pub pass: bool,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
}

impl VerificationReport {
    /// Pass when `|analytic - oracle| <= k * se`.
    pub fn within_se(
        quantity: impl Into<String>,
        analytic: f64,
        oracle: f64,
        se: f64,
        k: f64,
        seed: u64,
        samples: usize,
    ) -> Self {
        let tolerance = k * se;
        Self {
            quantity: quantity.into(),
            analytic,
            oracle,
            standard_error: Some(se),
            tolerance,
            pass: (analytic - oracle).abs() <= tolerance,
            seed: Some(seed),
            samples: Some(samples),
        }
    }

    /// Pass when `|analytic - oracle| <= tolerance`.
    pub fn within_tol(
        quantity: impl Into<String>,
        analytic: f64,
        oracle: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            quantity: quantity.into(),
            analytic,
            oracle,
            standard_error: None,
            tolerance,
            pass: (analytic - oracle).abs() <= tolerance,
            seed: None,
            samples: None,
        }
    }

    pub fn deviation(&self) -> f64 {
        (self.analytic - self.oracle).abs()
    }
}
