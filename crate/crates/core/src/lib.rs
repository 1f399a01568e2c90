//! Option portfolios under multivariate Student-t returns.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`market_data`] turns a stock table into the location vector `mu` and
//!    scale matrix `Sigma` of the price change over the risk horizon.
//! 2. [`gosset`] prices European options under truncated log-Student-t returns
//!    and produces finite-difference Greeks.
//! 3. [`moments`] aggregates the Greeks into the delta-gamma mean vector `zeta`
//!    and quadratic-form matrix `U`, so that `E[dV] = zeta'x` and
//!    `Var[dV] = x'Ux / 2`.
//! 4. [`optimize`] solves the minimum-variance and minimum Cornish-Fisher VaR
//!    problems under the unit budget `v'x = 1` in closed form.
//!
//! [`oracle`] holds independent reference engines (Monte Carlo, brute-force
//! optimizers, Black-Scholes) used to check the closed forms.

// `!(x > 0.0)` is used deliberately so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gosset;
pub mod market_data;
pub mod moments;
pub mod optimize;
pub mod oracle;
pub mod quadrature;
pub mod student_t;

pub use error::{Error, Result};
pub use gosset::{
    GreekSet, OptionKind, OptionSpec, PriceConvention, QuadratureConfig, SigmaConvention,
};
pub use market_data::MarketModel;
pub use moments::MomentModel;
pub use optimize::{EpsQuadratic, Objective, PortfolioSolution};

/// Library version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
