//! Delta-gamma moments of the portfolio gain under multivariate t returns.
//!
//! With `dS = mu + Y`, `Y ~ t_N(0, Sigma, nu)` and the second-order expansion
//! `dV = dt*theta + Delta'dS + dS'Gamma dS / 2`, the mean and variance of the
//! gain are linear and quadratic in the share vector `x`:
//!
//! ```text
//! E[dV(x)]   = zeta'x
//! Var[dV(x)] = x'Ux / 2
//! ```
//!
//! built from the per-option intermediates `p`, `D`, `R`, `Xi`, `B` and
//! `Theta` (see [`MomentModel`]).

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::error::{Error, Result};
use crate::gosset::{GreekSet, OptionBook};
use crate::market_data::{build_covariance, build_drift, MarketModel};
use crate::student_t::normal_quantile;

/// Coefficient used for the `R` block of `U`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuarticTerm {
    /// `nu^2 / ((nu-2)(nu-4))`, i.e. `Var` picks up
    /// `nu^2 / (2(nu-2)(nu-4)) tr[(Gamma Sigma)^2]`. Matches `Var(Y'Gamma Y / 2)`.
    #[default]
    Exact,
    /// Half of the exact coefficient, as the formula is usually printed.
    AsPublished,
}

/// `zeta`, `U` and the intermediates they are assembled from.
///
/// `M` options on `N` underlyings.
#[derive(Debug, Clone)]
pub struct MomentModel {
    pub zeta: DVector<f64>,
    pub u: DMatrix<f64>,
    /// `p_m = tr(Gamma_m Sigma)`.
    pub p: DVector<f64>,
    /// `N x M`, column `m` is the delta vector of option `m`.
    pub d: DMatrix<f64>,
    /// `r_ij = tr(Gamma_i Sigma Gamma_j Sigma)`.
    pub r: DMatrix<f64>,
    /// `xi_m = mu' Gamma_m mu / 2`.
    pub xi: DVector<f64>,
    /// `M x N`, row `m` is `(Gamma_m mu)'`.
    pub b: DMatrix<f64>,
    pub theta: DVector<f64>,
    pub nu: f64,
    pub dt: f64,
    pub quartic: QuarticTerm,
}

pub fn build_moment_model(
    greeks: &[GreekSet],
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    nu: f64,
    dt: f64,
) -> Result<MomentModel> {
    build_moment_model_with(greeks, mu, sigma, nu, dt, QuarticTerm::default())
}

pub fn build_moment_model_with(
    greeks: &[GreekSet],
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    nu: f64,
    dt: f64,
    quartic: QuarticTerm,
) -> Result<MomentModel> {
    if !(nu > 4.0) {
        return Err(Error::Nu(nu));
    }
    let m = greeks.len();
    let n = mu.len();
    if m == 0 {
        return Err(Error::Dimension("option book is empty".into()));
    }
    if sigma.nrows() != n || sigma.ncols() != n {
        return Err(Error::Dimension(format!(
            "Sigma is {}x{}, mu has {n} entries",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    for (k, g) in greeks.iter().enumerate() {
        if g.delta.len() != n || g.gamma.nrows() != n || g.gamma.ncols() != n {
            return Err(Error::Dimension(format!(
                "option {k} has Greeks for {} assets, market has {n}",
                g.delta.len()
            )));
        }
    }

    let d = DMatrix::from_fn(n, m, |i, k| greeks[k].delta[i]);
    let theta = DVector::from_fn(m, |k, _| greeks[k].theta);
    // Gamma_m Sigma, reused by p and R
    let gs: Vec<DMatrix<f64>> = greeks.iter().map(|g| &g.gamma * sigma).collect();
    let p = DVector::from_fn(m, |k, _| gs[k].trace());
    let r = DMatrix::from_fn(m, m, |i, j| (&gs[i] * &gs[j]).trace());
    let xi = DVector::from_fn(m, |k, _| {
        0.5 * (mu.transpose() * &greeks[k].gamma * mu)[(0, 0)]
    });
    let mut b = DMatrix::zeros(m, n);
    for (k, g) in greeks.iter().enumerate() {
        b.row_mut(k).copy_from(&(&g.gamma * mu).transpose());
    }

    let c1 = nu / (nu - 2.0);
    let c_quartic = nu * nu / ((nu - 2.0) * (nu - 4.0));
    let c_square = nu * nu / ((nu - 2.0) * (nu - 2.0));

    let zeta = &theta * dt + d.transpose() * mu + &p * (0.5 * c1) + &xi;

    let dtb = d.transpose() + &b;
    let r_coef = match quartic {
        QuarticTerm::Exact => c_quartic,
        QuarticTerm::AsPublished => 0.5 * c_quartic,
    };
    let mut u = &dtb * sigma * dtb.transpose() * (2.0 * c1)
        + &r * r_coef
        + &p * p.transpose() * (0.5 * (c_quartic - c_square));
    let ut = u.transpose();
    u = (u + ut) * 0.5;

    Ok(MomentModel {
        zeta,
        u,
        p,
        d,
        r,
        xi,
        b,
        theta,
        nu,
        dt,
        quartic,
    })
}

/// Moment model of a priced book over the market's horizon `dt`.
pub fn book_moment_model(market: &MarketModel, book: &OptionBook) -> Result<MomentModel> {
    build_moment_model(
        &book.greeks,
        &build_drift(market),
        &build_covariance(market),
        market.nu,
        market.dt,
    )
}

fn check_len(mm: &MomentModel, x: &DVector<f64>) -> Result<()> {
    if x.len() != mm.zeta.len() {
        return Err(Error::Dimension(format!(
            "share vector has {} entries, book has {} options",
            x.len(),
            mm.zeta.len()
        )));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 0.5 {
        Ok(())
    } else {
        Err(Error::Alpha(alpha))
    }
}

/// `E[dV(x)] = zeta'x`.
pub fn portfolio_mean(mm: &MomentModel, x: &DVector<f64>) -> Result<f64> {
    check_len(mm, x)?;
    Ok(mm.zeta.dot(x))
}

/// `Var[dV(x)] = x'Ux / 2`.
pub fn portfolio_variance(mm: &MomentModel, x: &DVector<f64>) -> Result<f64> {
    check_len(mm, x)?;
    Ok(0.5 * x.dot(&(&mm.u * x)))
}

/// Two-term Cornish-Fisher VaR: `-mean - q_alpha * sqrt(variance)`.
pub fn cfvar2(mm: &MomentModel, x: &DVector<f64>, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let mean = portfolio_mean(mm, x)?;
    let var = portfolio_variance(mm, x)?;
    cfvar2_from_moments(mean, var, alpha)
}

pub fn cfvar2_from_moments(mean: f64, variance: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(-mean - normal_quantile(alpha)? * variance.max(0.0).sqrt())
}

impl MomentModel {
    pub fn n_options(&self) -> usize {
        self.zeta.len()
    }

    pub fn n_assets(&self) -> usize {
        self.d.nrows()
    }

    /// Debug dump of `zeta`, `U` and every intermediate, matrices as row lists.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "nu": self.nu,
            "dt": self.dt,
            "quartic_term": match self.quartic {
                QuarticTerm::Exact => "exact",
                QuarticTerm::AsPublished => "as-published",
            },
            "zeta": self.zeta.as_slice(),
            "U": rows(&self.u),
            "p": self.p.as_slice(),
            "D": rows(&self.d),
            "R": rows(&self.r),
            "Xi": self.xi.as_slice(),
            "B": rows(&self.b),
            "Theta": self.theta.as_slice(),
        })
    }
}

pub(crate) fn rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| a.row(i).iter().copied().collect())
        .collect()
}
