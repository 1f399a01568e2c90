use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::moments::MomentModel;
use crate::optimize::Objective;
use crate::student_t::normal_quantile;

/// Stopping rules for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Initial simplex edge length.
    pub step: f64,
    /// Stop when the vertex values agree to this relative spread...
    pub f_tol: f64,
    /// ...and the simplex fits inside a box of this size.
    pub x_tol: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            step: 0.1,
            f_tol: 1e-15,
            x_tol: 1e-13,
            max_evals: 200_000,
        }
    }
}

/// Adaptive Nelder-Mead (dimension-dependent coefficients) from `x0`.
///
/// Returns the best vertex, its value and the number of evaluations used.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> (Vec<f64>, f64, usize) {
    let n = x0.len();
    if n == 0 {
        let v = f(x0);
        return (Vec::new(), v, 1);
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += if p[i] != 0.0 {
            opts.step * p[i].abs().max(1.0)
        } else {
            opts.step
        };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let mut evals = n + 1;
    let nan_last = |v: f64| if v.is_nan() { f64::INFINITY } else { v };

    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| nan_last(values[a]).total_cmp(&nan_last(values[b])));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = (values[n] - values[0]).abs();
        let size = simplex[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * values[0].abs().max(1e-300) && size <= opts.x_tol {
            break;
        }
        if size == 0.0 || values[0] == f64::NEG_INFINITY {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / nf)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = nan_last(f(&xr));
        evals += 1;
        if fr < values[0] {
            let xe = along(beta);
            let fe = nan_last(f(&xe));
            evals += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(gamma);
            let fc = nan_last(f(&xc));
            (xc, fc.min(f64::INFINITY))
        } else {
            let xc = along(-gamma);
            let fc = nan_last(f(&xc));
            (xc, fc)
        };
        evals += 1;
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // shrink towards the best vertex
        let best = simplex[0].clone();
        for i in 1..=n {
            for j in 0..n {
                simplex[i][j] = best[j] + delta * (simplex[i][j] - best[j]);
            }
            values[i] = nan_last(f(&simplex[i]));
        }
        evals += n;
    }
    let best = (0..=n)
        .min_by(|&a, &b| nan_last(values[a]).total_cmp(&nan_last(values[b])))
        .unwrap_or(0);
    (simplex[best].clone(), values[best], evals)
}

/// Orthonormal basis of the hyperplane `v'x = 0` (columns), via a Householder
/// reflection that maps `v` onto the first axis.
fn null_basis(v: &DVector<f64>) -> DMatrix<f64> {
    let m = v.len();
    let norm = v.norm();
    let mut w = v / norm;
    // reflect onto -sign(w0) e0 to avoid cancellation
    let s = if w[0] >= 0.0 { 1.0 } else { -1.0 };
    w[0] += s;
    let wn2 = w.norm_squared();
    let h = DMatrix::identity(m, m) - &w * w.transpose() * (2.0 / wn2);
    h.columns(1, m - 1).into_owned()
}

/// Minimises the chosen objective over `v'x = 1` by brute force.
///
/// Only `zeta` and `U` from the moment model are used; the objective is
/// evaluated directly (`Var = x'Ux / 2`, `CFVaR = -zeta'x - z_alpha sd`).
/// Twenty random starts on the budget hyperplane are each refined by repeated
/// Nelder-Mead restarts until a restart no longer improves the value.
pub fn brute_force_optimum(
    objective: Objective,
    mm: &MomentModel,
    v: &DVector<f64>,
    alpha: Option<f64>,
    seed: u64,
) -> Result<DVector<f64>> {
    let m = v.len();
    if m != mm.zeta.len() {
        return Err(Error::Dimension(format!(
            "price vector has {m} entries, book has {} options",
            mm.zeta.len()
        )));
    }
    let vn2 = v.norm_squared();
    if vn2 == 0.0 {
        return Err(Error::ZeroPriceVector);
    }
    if m == 1 {
        return Ok(DVector::from_element(1, 1.0 / v[0]));
    }
    let z_alpha = match objective {
        Objective::Variance => 0.0,
        Objective::Cfvar => normal_quantile(alpha.ok_or(Error::Alpha(f64::NAN))?)?,
    };
    if objective == Objective::Cfvar && !(alpha.unwrap_or(f64::NAN) < 0.5) {
        return Err(Error::Alpha(alpha.unwrap_or(f64::NAN)));
    }

    let x_base = v / vn2;
    let q = null_basis(v);
    let scale = x_base.norm();
    let to_x = |y: &[f64]| &x_base + &q * DVector::from_column_slice(y);
    let eval = |y: &[f64]| -> f64 {
        let x = to_x(y);
        if x.norm() > 1e12 * scale {
            // treat escape to infinity as unboundedness
            return f64::NEG_INFINITY;
        }
        let var = 0.5 * (x.transpose() * &mm.u * &x)[(0, 0)];
        match objective {
            Objective::Variance => var,
            Objective::Cfvar => -mm.zeta.dot(&x) - z_alpha * var.max(0.0).sqrt(),
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = NelderMeadOptions {
        step: scale,
        x_tol: 1e-13 * scale,
        ..NelderMeadOptions::default()
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..20 {
        let y0: Vec<f64> = (0..m - 1)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        let (mut y, mut fy, _) = nelder_mead(eval, &y0, &opts);
        for _ in 0..50 {
            let step = y.iter().map(|a| a.abs()).fold(scale, f64::max) * 1e-3;
            let (y2, f2, _) = nelder_mead(eval, &y, &NelderMeadOptions { step, ..opts });
            let improved = f2 < fy - 1e-16 * fy.abs() && f2.is_finite();
            if f2 < fy {
                y = y2;
                fy = f2;
            }
            if !improved {
                break;
            }
        }
        if best.as_ref().is_none_or(|b| fy < b.1) {
            best = Some((y, fy));
        }
    }
    let (y, fy) = best.expect("at least one start");
    let x = to_x(&y);
    if !fy.is_finite() || x.norm() > 1e11 * scale {
        return Err(Error::NonConvergence {
            best_objective: fy,
            best: x.iter().copied().collect(),
        });
    }
    Ok(x)
}

/// Minimum of `x'Ux` subject to `v'x = 1` via a dense LU solve of the KKT system.
pub fn kkt_min_variance(u: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let m = v.len();
    let mut k = DMatrix::zeros(m + 1, m + 1);
    k.view_mut((0, 0), (m, m)).copy_from(u);
    k.view_mut((0, m), (m, 1)).copy_from(v);
    k.view_mut((m, 0), (1, m)).copy_from(&v.transpose());
    let mut rhs = DVector::zeros(m + 1);
    rhs[m] = 1.0;
    let sol = k.lu().solve(&rhs).ok_or(Error::Rank)?;
    Ok(sol.rows(0, m).into_owned())
}

/// Minimum of `x'Ux` subject to `zeta'x = eps` and `v'x = 1` via a dense LU
/// solve of the KKT system.
pub fn kkt_two_constraints(
    u: &DMatrix<f64>,
    zeta: &DVector<f64>,
    v: &DVector<f64>,
    eps: f64,
) -> Result<DVector<f64>> {
    let m = v.len();
    let mut k = DMatrix::zeros(m + 2, m + 2);
    k.view_mut((0, 0), (m, m)).copy_from(u);
    k.view_mut((0, m), (m, 1)).copy_from(zeta);
    k.view_mut((0, m + 1), (m, 1)).copy_from(v);
    k.view_mut((m, 0), (1, m)).copy_from(&zeta.transpose());
    k.view_mut((m + 1, 0), (1, m)).copy_from(&v.transpose());
    let mut rhs = DVector::zeros(m + 2);
    rhs[m] = eps;
    rhs[m + 1] = 1.0;
    let sol = k.lu().solve(&rhs).ok_or(Error::Rank)?;
    Ok(sol.rows(0, m).into_owned())
}

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
///
/// Returns `(argmin, min)`.
pub fn golden_section<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..500 {
        if (b - a).abs() <= tol * (1.0 + c.abs().max(d.abs())) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::{solve_min_cfvar, solve_min_variance};

    fn model(zeta: &[f64], u: DMatrix<f64>) -> MomentModel {
        crate::optimize::tests::synthetic(zeta, u)
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let (x, fx, _) = nelder_mead(
            |p| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2),
            &[-1.2, 1.0],
            &NelderMeadOptions::default(),
        );
        assert!(fx < 1e-20, "{fx}");
        assert!(
            (x[0] - 1.0).abs() < 1e-9 && (x[1] - 1.0).abs() < 1e-9,
            "{x:?}"
        );
    }

    #[test]
    fn null_basis_is_orthonormal_and_orthogonal() {
        let v = DVector::from_vec(vec![-2.0, 1.0, 3.0, 0.5]);
        let q = null_basis(&v);
        assert_eq!(q.ncols(), 3);
        assert!((q.transpose() * &q - DMatrix::identity(3, 3)).norm() < 1e-14);
        assert!((q.transpose() * &v).norm() < 1e-13);
    }

    #[test]
    fn golden_section_parabola() {
        let (x, fx) = golden_section(|t| (t - 0.3).powi(2) + 2.0, -5.0, 5.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-7 && (fx - 2.0).abs() < 1e-14);
    }

    #[test]
    fn kkt_and_brute_force_agree_with_closed_forms() {
        let u = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let mm = model(&[0.1, -0.05, 0.2], u.clone());
        let v = DVector::from_vec(vec![1.0, 2.0, 0.5]);
        let cf = solve_min_variance(&mm, &v).unwrap().shares();
        let kkt = kkt_min_variance(&u, &v).unwrap();
        assert!((&cf - &kkt).norm() < 1e-12);
        let bf = brute_force_optimum(Objective::Variance, &mm, &v, None, 1).unwrap();
        assert!((&cf - &bf).amax() < 1e-7 * cf.amax(), "{cf} {bf}");

        let sol = solve_min_cfvar(&mm, &v, 0.05).unwrap();
        let x = sol.shares();
        let eps = sol.eps_star.unwrap();
        let kkt2 = kkt_two_constraints(&u, &mm.zeta, &v, eps).unwrap();
        assert!((&x - &kkt2).norm() < 1e-10);
        let bf = brute_force_optimum(Objective::Cfvar, &mm, &v, Some(0.05), 2).unwrap();
        assert!((&x - &bf).amax() < 1e-6 * x.amax(), "{x} {bf}");
    }

    #[test]
    fn single_option_is_forced() {
        let mm = model(&[0.1], DMatrix::from_element(1, 1, 2.0));
        let x = brute_force_optimum(
            Objective::Variance,
            &mm,
            &DVector::from_element(1, 4.0),
            None,
            0,
        )
        .unwrap();
        assert_eq!(x[0], 0.25);
    }

    #[test]
    fn unbounded_cfvar_is_reported() {
        // huge mean relative to risk: CFVaR falls without bound along the hyperplane
        let u = DMatrix::from_row_slice(2, 2, &[1e-6, 0.0, 0.0, 1e-6]);
        let mm = model(&[1.0, -1.0], u);
        let v = DVector::from_vec(vec![1.0, 1.0]);
        let r = brute_force_optimum(Objective::Cfvar, &mm, &v, Some(0.05), 0);
        assert!(matches!(r, Err(Error::NonConvergence { .. })), "{r:?}");
    }
}
