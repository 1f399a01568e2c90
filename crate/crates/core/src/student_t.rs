//! Student-t and standard normal primitives.
//!
//! Densities and CDFs are closed form (regularized incomplete beta for the t,
//! `erfc` for the normal). Quantiles are obtained by a bracketed
//! Newton-bisection search on the CDF, so every quantile is the inverse of the
//! CDF in this module to within [`QUANTILE_TOL`].
//!
//! Sampling uses ChaCha8 seeded with `seed_from_u64(seed)`. Draws for batch
//! `b` come from stream `b` of that generator (`set_stream(b)`); within a
//! draw, the `N` standard normals are taken first and the chi-square variate
//! last. This mapping is part of the public contract.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::{beta::beta_reg, erf::erfc, gamma::ln_gamma};

use crate::error::{Error, Result};

/// Absolute tolerance on quantile roots.
pub const QUANTILE_TOL: f64 = 1e-12;

/// Unit-scale Student-t distribution with `nu` degrees of freedom.
#[derive(Debug, Clone, Copy)]
pub struct StudentT {
    nu: f64,
    ln_norm: f64,
}

impl StudentT {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 0.0) || nu.is_nan() {
            return Err(Error::Domain(format!(
                "degrees of freedom must be positive, got {nu}"
            )));
        }
        let ln_norm = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
        Ok(Self { nu, ln_norm })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn pdf(&self, z: f64) -> f64 {
        (self.ln_norm - 0.5 * (self.nu + 1.0) * (z * z / self.nu).ln_1p()).exp()
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if z.is_infinite() {
            return if z > 0.0 { 1.0 } else { 0.0 };
        }
        // lower tail mass beyond |z|
        let tail = 0.5 * beta_reg(0.5 * self.nu, 0.5, self.nu / (self.nu + z * z));
        if z <= 0.0 {
            tail
        } else {
            1.0 - tail
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        if p == 0.5 {
            return Ok(0.0);
        }
        if p > 0.5 {
            return Ok(-self.quantile(1.0 - p)?);
        }
        // search z <= 0 where cdf is the (accurately computed) lower tail
        let mut lo = -1.0;
        while self.cdf(lo) > p {
            lo *= 2.0;
            if lo < -1e300 {
                return Err(Error::Domain(format!("quantile of {p} not representable")));
            }
        }
        Ok(invert_monotone(
            |z| self.cdf(z) - p,
            |z| self.pdf(z),
            lo,
            0.0,
        ))
    }
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "probability must lie in (0, 1), got {p}"
        )))
    }
}

/// Root of an increasing `f` on `[lo, hi]` with `f(lo) <= 0 <= f(hi)`.
///
/// Newton steps are taken when they stay inside the current bracket;
/// otherwise the bracket is bisected.
fn invert_monotone(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= QUANTILE_TOL * (1.0 + x.abs() * 1e-3) {
            break;
        }
        let d = df(x);
        let newton = x - fx / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        // converged Newton step
        if (newton - x).abs() < f64::EPSILON && (fx / d).abs() < 0.25 * QUANTILE_TOL {
            return x;
        }
    }
    x
}

pub fn t_pdf(z: f64, nu: f64) -> Result<f64> {
    Ok(StudentT::new(nu)?.pdf(z))
}

pub fn t_cdf(z: f64, nu: f64) -> Result<f64> {
    Ok(StudentT::new(nu)?.cdf(z))
}

pub fn t_quantile(p: f64, nu: f64) -> Result<f64> {
    StudentT::new(nu)?.quantile(p)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF.
pub fn normal_quantile(alpha: f64) -> Result<f64> {
    check_probability(alpha)?;
    if alpha == 0.5 {
        return Ok(0.0);
    }
    if alpha > 0.5 {
        return Ok(-normal_quantile(1.0 - alpha)?);
    }
    let mut lo = -1.0;
    while normal_cdf(lo) > alpha {
        lo *= 2.0;
    }
    Ok(invert_monotone(
        |x| normal_cdf(x) - alpha,
        normal_pdf,
        lo,
        0.0,
    ))
}

/// Parameters of a multivariate t: location, scale matrix and degrees of freedom.
#[derive(Debug, Clone)]
pub struct TParams {
    pub nu: f64,
    pub location: DVector<f64>,
    pub scale: DMatrix<f64>,
}

/// Draws `mu + L z / sqrt(W / nu)` with `L L' = Sigma`, `z ~ N(0, I)` and `W ~ chi2(nu)`.
#[derive(Debug, Clone)]
pub struct MvtSampler {
    nu: f64,
    location: DVector<f64>,
    chol: DMatrix<f64>,
    chi2: ChiSquared<f64>,
}

impl MvtSampler {
    pub fn new(params: &TParams) -> Result<Self> {
        let n = params.location.len();
        if params.scale.nrows() != n || params.scale.ncols() != n {
            return Err(Error::Dimension(format!(
                "scale matrix is {}x{}, location has {n} entries",
                params.scale.nrows(),
                params.scale.ncols()
            )));
        }
        if !(params.nu > 0.0) {
            return Err(Error::Domain(format!(
                "nu must be positive, got {}",
                params.nu
            )));
        }
        let chol = params
            .scale
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Cholesky("multivariate-t scale matrix".into()))?
            .l();
        let chi2 = ChiSquared::new(params.nu).map_err(|e| Error::Domain(e.to_string()))?;
        Ok(Self {
            nu: params.nu,
            location: params.location.clone(),
            chol,
            chi2,
        })
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }

    /// Writes one draw into `out`, using `normals` as scratch space.
    pub fn draw_into<R: rand::Rng + ?Sized>(
        &self,
        rng: &mut R,
        normals: &mut [f64],
        out: &mut [f64],
    ) {
        let n = self.dim();
        for z in normals.iter_mut() {
            *z = StandardNormal.sample(rng);
        }
        let w: f64 = self.chi2.sample(rng);
        let s = (self.nu / w).sqrt();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let acc: f64 = normals[..=i]
                .iter()
                .enumerate()
                .map(|(j, z)| self.chol[(i, j)] * z)
                .sum();
            *o = self.location[i] + s * acc;
        }
    }
}

/// Generator for batch `batch` of the stream identified by `seed`.
pub fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

/// `n` draws (one per row) from the multivariate t, taken from batch 0 of `seed`.
pub fn sample_mvt(params: &TParams, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    let sampler = MvtSampler::new(params)?;
    let dim = sampler.dim();
    let mut rng = batch_rng(seed, 0);
    let mut normals = vec![0.0; dim];
    let mut row = vec![0.0; dim];
    let mut out = DMatrix::zeros(n, dim);
    for k in 0..n {
        sampler.draw_into(&mut rng, &mut normals, &mut row);
        for (j, v) in row.iter().enumerate() {
            out[(k, j)] = *v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn pdf_examples() {
        assert_relative_eq!(t_pdf(0.0, 1.0).unwrap(), 1.0 / PI, max_relative = 1e-14);
        assert_relative_eq!(t_pdf(0.0, 1e6).unwrap(), 0.398_942, max_relative = 1e-5);
        // Gamma(3) / (sqrt(5 pi) Gamma(2.5)) * 1.2^-3, Gamma(2.5) = 1.5 * 0.5 * sqrt(pi)
        let expected = 2.0 / ((5.0 * PI).sqrt() * 0.75 * PI.sqrt()) * 1.2f64.powi(-3);
        assert_relative_eq!(t_pdf(1.0, 5.0).unwrap(), expected, max_relative = 1e-13);
        assert_relative_eq!(expected, 0.219_680, max_relative = 1e-5);
    }

    #[test]
    fn bad_nu_is_domain_error() {
        assert!(matches!(t_pdf(0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(t_cdf(0.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn cdf_and_quantile_examples() {
        for nu in [1.0, 3.0, 5.87, 40.0] {
            assert_eq!(t_cdf(0.0, nu).unwrap(), 0.5);
            assert_eq!(t_quantile(0.5, nu).unwrap(), 0.0);
        }
        assert!((t_quantile(0.975, 5.0).unwrap() - 2.570_582).abs() < 1e-6);
        // Cauchy closed form
        assert!((t_quantile(0.75, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(t_quantile(0.0, 5.0), Err(Error::Domain(_))));
        assert!(matches!(t_quantile(1.0, 5.0), Err(Error::Domain(_))));
    }

    #[test]
    fn normal_quantile_examples() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.01).unwrap() + 2.326_348).abs() < 1e-6);
        assert!((normal_quantile(0.001).unwrap() + 3.090_232).abs() < 1e-6);
        assert!((normal_quantile(0.975).unwrap() - 1.959_964).abs() < 1e-6);
        assert!(normal_quantile(1.5).is_err());
        // root of the CDF to the stated tolerance
        let q = normal_quantile(0.01).unwrap();
        assert!((normal_cdf(q) - 0.01).abs() < 1e-13);
    }

    #[test]
    fn density_normalization() {
        // composite Simpson over [-50, 50]; for nu = 3 the mass outside is ~1.8e-5
        for nu in [3.0, 4.0, 5.87, 30.0] {
            let t = StudentT::new(nu).unwrap();
            let n = 200_000;
            let h = 100.0 / n as f64;
            let mut s = t.pdf(-50.0) + t.pdf(50.0);
            for k in 1..n {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                s += w * t.pdf(-50.0 + k as f64 * h);
            }
            let mass = s * h / 3.0;
            if nu >= 4.0 {
                assert!(
                    (1.0 - 1e-6..=1.0 + 1e-9).contains(&mass),
                    "nu={nu} mass={mass}"
                );
            }
            // matches the CDF
            assert!((mass - (t.cdf(50.0) - t.cdf(-50.0))).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn symmetry(z in -30.0f64..30.0, nu in 0.5f64..200.0) {
            let t = StudentT::new(nu).unwrap();
            prop_assert_eq!(t.pdf(z), t.pdf(-z));
            prop_assert!((t.cdf(z) + t.cdf(-z) - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn quantile_inverts_cdf(z in -4.0f64..4.0, nu in 1.0f64..60.0) {
            let t = StudentT::new(nu).unwrap();
            let back = t.quantile(t.cdf(z)).unwrap();
            prop_assert!((back - z).abs() <= 1e-10, "z={} back={}", z, back);
        }

        #[test]
        fn cdf_monotone(a in -20.0f64..20.0, d in 1e-3f64..5.0, nu in 0.5f64..100.0) {
            let t = StudentT::new(nu).unwrap();
            prop_assert!(t.cdf(a + d) >= t.cdf(a));
        }
    }

    fn iid_params(nu: f64, n: usize) -> TParams {
        TParams {
            nu,
            location: DVector::zeros(n),
            scale: DMatrix::identity(n, n),
        }
    }

    #[test]
    fn sample_mean_and_covariance() {
        let nu = 10.0;
        let n = 1_000_000;
        let scale = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let params = TParams {
            nu,
            location: DVector::zeros(2),
            scale: scale.clone(),
        };
        let x = sample_mvt(&params, n, 7).unwrap();
        let mean = x.row_mean();
        for j in 0..2 {
            let bound = 3.0 * (nu / (nu - 2.0) * scale[(j, j)] / n as f64).sqrt();
            assert!(mean[j].abs() < bound, "coord {j}: {} vs {bound}", mean[j]);
        }
        let centered = DMatrix::from_fn(n, 2, |i, j| x[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        let target = scale * (nu / (nu - 2.0));
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (cov[(i, j)] - target[(i, j)]).abs() <= 0.02 * target[(i, j)].abs(),
                    "({i},{j}) {} vs {}",
                    cov[(i, j)],
                    target[(i, j)]
                );
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = iid_params(5.0, 3);
        assert_eq!(
            sample_mvt(&p, 100, 42).unwrap(),
            sample_mvt(&p, 100, 42).unwrap()
        );
        assert_ne!(
            sample_mvt(&p, 100, 42).unwrap(),
            sample_mvt(&p, 100, 43).unwrap()
        );
    }

    #[test]
    fn heavier_tails_for_smaller_nu() {
        let kurtosis = |nu: f64| {
            let x = sample_mvt(&iid_params(nu, 1), 1_000_000, 11).unwrap();
            let n = x.nrows() as f64;
            let m2 = x.iter().map(|v| v * v).sum::<f64>() / n;
            let m4 = x.iter().map(|v| v.powi(4)).sum::<f64>() / n;
            m4 / (m2 * m2)
        };
        assert!(kurtosis(5.0) > kurtosis(50.0));
    }

    #[test]
    fn non_pd_scale_rejected() {
        let p = TParams {
            nu: 5.0,
            location: DVector::zeros(2),
            scale: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        };
        assert!(matches!(sample_mvt(&p, 10, 1), Err(Error::Cholesky(_))));
    }
}
