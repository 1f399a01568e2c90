//! Minimum-variance and minimum-CFVaR option portfolios under the budget `v'x = 1`.
//!
//! Variance: `x = U^-1 v / (v'U^-1 v)`.
//!
//! CFVaR: fixing the mean `zeta'x = eps` turns the problem into a two-constraint
//! quadratic program `min x'Ux/2 s.t. Jx = (eps, 1)` with `J = [zeta'; v']`,
//! whose solution is `x(eps) = G (eps, 1)` with `G = U^-1 J' (J U^-1 J')^-1`.
//! Along that line the variance is `A eps^2 + B eps + C`, and the CFVaR
//! `-eps - q sqrt(A eps^2 + B eps + C)` (with `q = Phi^-1(alpha) < 0`) is
//! minimised where its derivative vanishes. Squaring the stationarity
//! condition gives a quadratic in `eps`; of its two roots the minimiser is the
//! one with `2 A eps + B > 0`.
//!
//! `U` is only ever used through its Cholesky factor.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::{cfvar2_from_moments, MomentModel};
use crate::student_t::normal_quantile;

/// Relative eigenvalue floor below which `U` is treated as singular.
pub const PD_TOL: f64 = 1e-12;

/// Threshold on `1 - cos^2` between `zeta` and `v` in the `U^-1` metric.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Variance,
    Cfvar,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Variance => "variance",
            Self::Cfvar => "cfvar",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub cond_u: f64,
    pub min_eigenvalue_u: f64,
    /// Condition number of `J U^-1 J'` (CFVaR only).
    pub cond_schur: Option<f64>,
    pub notes: Vec<String>,
}

/// The one-dimensional reduction of the CFVaR problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsQuadratic {
    /// Coefficients of `x(eps)'U x(eps) / 2 = a_scr eps^2 + b_scr eps + c_scr`.
    pub a_scr: f64,
    pub b_scr: f64,
    pub c_scr: f64,
    /// Coefficients of the squared stationarity condition.
    pub cal_a: f64,
    pub cal_b: f64,
    pub cal_c: f64,
    pub eps_plus: f64,
    pub eps_minus: f64,
    pub eps_star: f64,
    /// `M x 2`, stored row-major as `[g_m1, g_m2]`.
    pub g: Vec<[f64; 2]>,
    /// `Phi^-1(alpha)`.
    pub q: f64,
}

impl EpsQuadratic {
    pub fn radicand(&self, eps: f64) -> f64 {
        (self.a_scr * eps + self.b_scr) * eps + self.c_scr
    }

    /// CFVaR along the constraint line `x = G (eps, 1)`.
    pub fn cfvar_at(&self, eps: f64) -> f64 {
        -eps - self.q * self.radicand(eps).max(0.0).sqrt()
    }

    pub fn shares_at(&self, eps: f64) -> DVector<f64> {
        DVector::from_iterator(self.g.len(), self.g.iter().map(|g| g[0] * eps + g[1]))
    }

    pub fn g_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.g.len(), 2, |i, j| self.g[i][j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortfolioSolution {
    pub objective: Objective,
    /// Shares per option; negative entries are short positions.
    pub x: Vec<f64>,
    /// Value weights `v_m x_m / v'x`.
    pub w: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub alpha: Option<f64>,
    pub cfvar: Option<f64>,
    pub eps_star: Option<f64>,
    pub eps: Option<EpsQuadratic>,
    pub diagnostics: Diagnostics,
}

impl PortfolioSolution {
    pub fn shares(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }

    /// Fills in the CFVaR of this portfolio at `alpha`.
    pub fn with_cfvar(mut self, alpha: f64) -> Result<Self> {
        self.cfvar = Some(cfvar2_from_moments(self.mean, self.variance, alpha)?);
        self.alpha = Some(alpha);
        Ok(self)
    }
}

/// Cholesky factor of `U` plus its spectral diagnostics.
struct Factored {
    chol: Cholesky<f64, Dyn>,
    diagnostics: Diagnostics,
}

fn factor_u(u: &DMatrix<f64>) -> Result<Factored> {
    let eig = u.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if !(min > PD_TOL * u.norm()) {
        return Err(Error::SingularU {
            min_eigenvalue: min,
        });
    }
    let chol = u.clone().cholesky().ok_or(Error::SingularU {
        min_eigenvalue: min,
    })?;
    Ok(Factored {
        chol,
        diagnostics: Diagnostics {
            cond_u: max / min,
            min_eigenvalue_u: min,
            ..Diagnostics::default()
        },
    })
}

fn check_prices(mm: &MomentModel, v: &DVector<f64>) -> Result<()> {
    if v.len() != mm.n_options() {
        return Err(Error::Dimension(format!(
            "price vector has {} entries, book has {} options",
            v.len(),
            mm.n_options()
        )));
    }
    if v.iter().all(|p| *p == 0.0) {
        return Err(Error::ZeroPriceVector);
    }
    Ok(())
}

/// `w_m = v_m x_m / v'x`.
pub fn shares_to_weights(x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != v.len() {
        return Err(Error::Dimension(format!(
            "{} shares against {} prices",
            x.len(),
            v.len()
        )));
    }
    let budget = v.dot(x);
    if budget == 0.0 || !budget.is_finite() {
        return Err(Error::ZeroBudget);
    }
    Ok(v.component_mul(x) / budget)
}

fn finish(
    mm: &MomentModel,
    v: &DVector<f64>,
    x: DVector<f64>,
    objective: Objective,
    diagnostics: Diagnostics,
) -> Result<PortfolioSolution> {
    let w = shares_to_weights(&x, v)?;
    Ok(PortfolioSolution {
        objective,
        mean: mm.zeta.dot(&x),
        variance: 0.5 * x.dot(&(&mm.u * &x)),
        x: x.as_slice().to_vec(),
        w: w.as_slice().to_vec(),
        alpha: None,
        cfvar: None,
        eps_star: None,
        eps: None,
        diagnostics,
    })
}

/// Minimum variance under the unit budget.
pub fn solve_min_variance(mm: &MomentModel, v: &DVector<f64>) -> Result<PortfolioSolution> {
    check_prices(mm, v)?;
    let f = factor_u(&mm.u)?;
    let y = f.chol.solve(v);
    let denom = v.dot(&y);
    if !(denom > 0.0) {
        return Err(Error::SingularU {
            min_eigenvalue: f.diagnostics.min_eigenvalue_u,
        });
    }
    finish(mm, v, y / denom, Objective::Variance, f.diagnostics)
}

/// Roots of `a t^2 + b t + c` as `(plus, minus)` in the `(-b +- sqrt(disc)) / 2a`
/// labelling, computed without cancellation.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 || a == 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let big = -0.5 * (b + b.signum() * s);
    if big == 0.0 {
        return Some((0.0, 0.0));
    }
    let (r1, r2) = (big / a, c / big);
    let (hi, lo) = (r1.max(r2), r1.min(r2));
    // the + branch is the larger root exactly when a > 0
    if a > 0.0 {
        Some((hi, lo))
    } else {
        Some((lo, hi))
    }
}

/// Builds the eps-reduction and picks `eps*`.
pub fn eps_quadratic(
    mm: &MomentModel,
    v: &DVector<f64>,
    alpha: f64,
) -> Result<(EpsQuadratic, Diagnostics)> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Alpha(alpha));
    }
    check_prices(mm, v)?;
    let m = mm.n_options();
    let f = factor_u(&mm.u)?;
    let mut diagnostics = f.diagnostics;

    let mut jt = DMatrix::zeros(m, 2);
    jt.set_column(0, &mm.zeta);
    jt.set_column(1, v);
    let uinv_jt = f.chol.solve(&jt);
    let s = jt.transpose() * &uinv_jt;
    let schur = Matrix2::new(s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]);
    let det = schur.determinant();
    if !(schur[(0, 0)] > 0.0 && det > RANK_TOL * schur[(0, 0)] * schur[(1, 1)]) {
        return Err(Error::Rank);
    }
    let eig = schur.symmetric_eigen();
    diagnostics.cond_schur = Some(eig.eigenvalues.max() / eig.eigenvalues.min());
    let schur_inv = schur.try_inverse().ok_or(Error::Rank)?;
    let g = &uinv_jt * DMatrix::from_fn(2, 2, |i, j| schur_inv[(i, j)]);
    let (g1, g2) = (g.column(0).clone_owned(), g.column(1).clone_owned());

    let a_scr = 0.5 * g1.dot(&(&mm.u * &g1));
    let b_scr = g1.dot(&(&mm.u * &g2));
    let c_scr = 0.5 * g2.dot(&(&mm.u * &g2));

    let q = normal_quantile(alpha)?;
    let q2 = q * q;
    let cal_a = 4.0 * a_scr * a_scr * q2 - 4.0 * a_scr;
    let cal_b = 4.0 * a_scr * b_scr * q2 - 4.0 * b_scr;
    let cal_c = b_scr * b_scr * q2 - 4.0 * c_scr;

    if !(cal_a > 0.0) {
        return Err(Error::NoStationaryPoint(format!(
            "q^2 A = {} <= 1: CFVaR decreases without bound along the mean direction",
            q2 * a_scr
        )));
    }
    let (eps_plus, eps_minus) = quadratic_roots(cal_a, cal_b, cal_c).ok_or_else(|| {
        Error::NoStationaryPoint(format!(
            "negative discriminant {}",
            cal_b * cal_b - 4.0 * cal_a * cal_c
        ))
    })?;

    let mut quad = EpsQuadratic {
        a_scr,
        b_scr,
        c_scr,
        cal_a,
        cal_b,
        cal_c,
        eps_plus,
        eps_minus,
        eps_star: f64::NAN,
        g: (0..m).map(|i| [g[(i, 0)], g[(i, 1)]]).collect(),
        q,
    };
    let admissible = |e: f64| 2.0 * a_scr * e + b_scr > 0.0;
    quad.eps_star = match (admissible(eps_plus), admissible(eps_minus)) {
        (true, false) => eps_plus,
        (false, true) => eps_minus,
        (false, false) => {
            return Err(Error::NoStationaryPoint(
                "neither root satisfies 2 A eps + B > 0".into(),
            ))
        }
        (true, true) => {
            diagnostics
                .notes
                .push("both roots satisfy the sign rule; chose the smaller CFVaR".into());
            scan_fallback(&quad)
        }
    };
    if quad.radicand(quad.eps_star) < 0.0 {
        diagnostics
            .notes
            .push("selected root has a negative radicand; fell back to a scan".into());
        quad.eps_star = scan_fallback(&quad);
    }
    if quad.eps_star < 0.0 {
        diagnostics
            .notes
            .push(format!("eps* = {} is negative", quad.eps_star));
    }
    Ok((quad, diagnostics))
}

/// Best of the two roots, the variance vertex and a wide symmetric scan.
fn scan_fallback(quad: &EpsQuadratic) -> f64 {
    let centre = if quad.a_scr > 0.0 {
        -quad.b_scr / (2.0 * quad.a_scr)
    } else {
        0.0
    };
    let scale = 1.0
        + quad
            .eps_plus
            .abs()
            .max(quad.eps_minus.abs())
            .max(centre.abs());
    let mut candidates = vec![quad.eps_plus, quad.eps_minus, centre];
    for k in -8..=8 {
        let step = scale * 10f64.powi(k);
        candidates.push(centre - step);
        candidates.push(centre + step);
    }
    candidates
        .into_iter()
        .filter(|e| e.is_finite() && quad.radicand(*e) >= 0.0)
        .min_by(|a, b| quad.cfvar_at(*a).total_cmp(&quad.cfvar_at(*b)))
        .unwrap_or(centre)
}

/// Minimum two-term Cornish-Fisher VaR under the unit budget.
pub fn solve_min_cfvar(
    mm: &MomentModel,
    v: &DVector<f64>,
    alpha: f64,
) -> Result<PortfolioSolution> {
    if mm.n_options() == 1 {
        // the budget pins the only feasible point; J cannot have rank 2
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::Alpha(alpha));
        }
        check_prices(mm, v)?;
        let x = DVector::from_element(1, 1.0 / v[0]);
        let diagnostics = Diagnostics {
            notes: vec!["single option: the budget fixes the portfolio".into()],
            ..Diagnostics::default()
        };
        let mut sol = finish(mm, v, x, Objective::Cfvar, diagnostics)?.with_cfvar(alpha)?;
        sol.eps_star = Some(sol.mean);
        return Ok(sol);
    }
    let (quad, diagnostics) = eps_quadratic(mm, v, alpha)?;
    let x = quad.shares_at(quad.eps_star);
    let mut sol = finish(mm, v, x, Objective::Cfvar, diagnostics)?.with_cfvar(alpha)?;
    sol.eps_star = Some(quad.eps_star);
    sol.eps = Some(quad);
    Ok(sol)
}
