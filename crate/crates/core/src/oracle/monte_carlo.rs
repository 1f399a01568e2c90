use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StudentT as TDist};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gosset::{gosset_price, OptionKind, OptionSpec, PriceConvention, QuadratureConfig};
use crate::student_t::{batch_rng, MvtSampler, TParams};
use crate::GreekSet;

/// Number of independent RNG streams a Monte Carlo run is split into.
///
/// Fixed so that results do not depend on the size of the thread pool.
pub const MC_BATCHES: usize = 128;

/// Delta-gamma gain of each option, evaluated directly from its Greeks.
///
/// Gains are stored relative to their value at `dS = mu`, which keeps the
/// accumulated sums small and well conditioned.
#[derive(Debug, Clone)]
pub struct GainModel {
    /// `theta dt + delta'mu + mu'Gamma mu / 2` per option.
    center: Vec<f64>,
    /// `delta + Gamma mu` per option (row-major, M x N).
    slope: Vec<f64>,
    /// `Gamma / 2` per option, each N x N row-major.
    half_gamma: Vec<f64>,
    n_assets: usize,
    params: TParams,
}

impl GainModel {
    pub fn new(
        greeks: &[GreekSet],
        mu: &DVector<f64>,
        sigma: &DMatrix<f64>,
        nu: f64,
        dt: f64,
    ) -> Result<Self> {
        let n = mu.len();
        if greeks.is_empty() {
            return Err(Error::Dimension("option book is empty".into()));
        }
        if greeks.iter().any(|g| g.n_assets() != n) {
            return Err(Error::Dimension(format!(
                "Greeks do not match the {n}-asset drift"
            )));
        }
        let mut center = Vec::with_capacity(greeks.len());
        let mut slope = Vec::with_capacity(greeks.len() * n);
        let mut half_gamma = Vec::with_capacity(greeks.len() * n * n);
        for g in greeks {
            let gm = &g.gamma * mu;
            center.push(g.theta * dt + g.delta.dot(mu) + 0.5 * mu.dot(&gm));
            slope.extend((&g.delta + gm).iter());
            for i in 0..n {
                for j in 0..n {
                    half_gamma.push(0.5 * g.gamma[(i, j)]);
                }
            }
        }
        let params = TParams {
            nu,
            location: DVector::zeros(n),
            scale: sigma.clone(),
        };
        // fail early on a bad scale matrix
        MvtSampler::new(&params)?;
        Ok(Self {
            center,
            slope,
            half_gamma,
            n_assets: n,
            params,
        })
    }

    pub fn n_options(&self) -> usize {
        self.center.len()
    }

    /// Gain of every option at `dS = mu + y`, minus its centre value.
    fn centered_gains(&self, y: &[f64], out: &mut [f64]) {
        let n = self.n_assets;
        for (m, o) in out.iter_mut().enumerate() {
            let s = &self.slope[m * n..(m + 1) * n];
            let h = &self.half_gamma[m * n * n..(m + 1) * n * n];
            let mut acc = 0.0;
            for i in 0..n {
                if y[i] == 0.0 {
                    continue;
                }
                let row = &h[i * n..(i + 1) * n];
                let mut q = 0.0;
                for j in 0..n {
                    q += row[j] * y[j];
                }
                acc += y[i] * (s[i] + q);
            }
            *o = acc;
        }
    }

    fn center_of(&self, x: &DVector<f64>) -> f64 {
        self.center.iter().zip(x.iter()).map(|(c, xi)| c * xi).sum()
    }

    /// Runs `n` draws split over [`MC_BATCHES`] streams and hands each
    /// batch's centred option gains to `visit`.
    fn run_batches<T, F>(
        &self,
        n: usize,
        seed: u64,
        init: impl Fn() -> T + Sync,
        visit: F,
    ) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut T, &[f64]) + Sync,
    {
        let sampler = MvtSampler::new(&self.params)?;
        let m = self.n_options();
        let dim = self.n_assets;
        Ok((0..MC_BATCHES)
            .into_par_iter()
            .map(|b| {
                let count = n / MC_BATCHES + usize::from(b < n % MC_BATCHES);
                let mut rng = batch_rng(seed, b as u64);
                let mut normals = vec![0.0; dim];
                let mut y = vec![0.0; dim];
                let mut gains = vec![0.0; m];
                let mut state = init();
                for _ in 0..count {
                    sampler.draw_into(&mut rng, &mut normals, &mut y);
                    self.centered_gains(&y, &mut gains);
                    visit(&mut state, &gains);
                }
                state
            })
            .collect())
    }
}

/// Sample mean and variance of a portfolio gain with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McMoments {
    pub mean: f64,
    pub variance: f64,
    pub mean_se: f64,
    pub variance_se: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Default)]
struct Sums {
    n: f64,
    s1: f64,
    s2: f64,
}

/// Monte Carlo mean and variance of `dV(x)` for one share vector.
#[allow(clippy::too_many_arguments)]
pub fn mc_moments(
    greeks: &[GreekSet],
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    nu: f64,
    dt: f64,
    x: &DVector<f64>,
    n: usize,
    seed: u64,
) -> Result<McMoments> {
    let model = GainModel::new(greeks, mu, sigma, nu, dt)?;
    Ok(mc_moments_many(&model, std::slice::from_ref(x), n, seed)?.remove(0))
}

/// Monte Carlo moments for several portfolios evaluated on the same draws.
///
/// Standard errors come from the spread of the per-batch estimates
/// (delete-one-batch jackknife), so they remain meaningful for the heavy
/// tailed gains where a plug-in formula for the variance's SE is not.
pub fn mc_moments_many(
    model: &GainModel,
    portfolios: &[DVector<f64>],
    n: usize,
    seed: u64,
) -> Result<Vec<McMoments>> {
    if n < 2 * MC_BATCHES {
        return Err(Error::InsufficientSamples {
            needed: 2 * MC_BATCHES,
            got: n,
        });
    }
    let m = model.n_options();
    if let Some(x) = portfolios.iter().find(|x| x.len() != m) {
        return Err(Error::Dimension(format!(
            "share vector has {} entries, book has {m} options",
            x.len()
        )));
    }
    let k = portfolios.len();
    let xs: Vec<Vec<f64>> = portfolios
        .iter()
        .map(|x| x.iter().copied().collect())
        .collect();
    let batches = model.run_batches(
        n,
        seed,
        || vec![Sums::default(); k],
        |sums, gains| {
            for (s, x) in sums.iter_mut().zip(&xs) {
                let h: f64 = x.iter().zip(gains).map(|(a, b)| a * b).sum();
                s.n += 1.0;
                s.s1 += h;
                s.s2 += h * h;
            }
        },
    )?;

    Ok(portfolios
        .iter()
        .enumerate()
        .map(|(p, x)| {
            let per: Vec<Sums> = batches.iter().map(|b| b[p]).collect();
            let total = per.iter().fold(Sums::default(), |a, b| Sums {
                n: a.n + b.n,
                s1: a.s1 + b.s1,
                s2: a.s2 + b.s2,
            });
            let stats = |s: &Sums| {
                let mean = s.s1 / s.n;
                (mean, (s.s2 - s.n * mean * mean) / (s.n - 1.0))
            };
            let (mean, variance) = stats(&total);
            // delete-one-batch jackknife
            let bcount = per.len() as f64;
            let loo: Vec<(f64, f64)> = per
                .iter()
                .map(|b| {
                    stats(&Sums {
                        n: total.n - b.n,
                        s1: total.s1 - b.s1,
                        s2: total.s2 - b.s2,
                    })
                })
                .collect();
            let jk = |f: &dyn Fn(&(f64, f64)) -> f64| {
                let avg = loo.iter().map(f).sum::<f64>() / bcount;
                ((bcount - 1.0) / bcount * loo.iter().map(|e| (f(e) - avg).powi(2)).sum::<f64>())
                    .sqrt()
            };
            McMoments {
                mean: model.center_of(x) + mean,
                variance,
                mean_se: jk(&|e| e.0),
                variance_se: jk(&|e| e.1),
                samples: n,
                seed,
            }
        })
        .collect())
}

/// `n` simulated portfolio gains `dV(x)`, in a fixed order.
pub fn sample_gains(model: &GainModel, x: &DVector<f64>, n: usize, seed: u64) -> Result<Vec<f64>> {
    if x.len() != model.n_options() {
        return Err(Error::Dimension(format!(
            "share vector has {} entries, book has {} options",
            x.len(),
            model.n_options()
        )));
    }
    let c = model.center_of(x);
    let xs: Vec<f64> = x.iter().copied().collect();
    let batches = model.run_batches(n, seed, Vec::new, |out: &mut Vec<f64>, gains| {
        out.push(c + xs.iter().zip(gains).map(|(a, b)| a * b).sum::<f64>());
    })?;
    Ok(batches.concat())
}

/// Historical-simulation VaR: minus the lower empirical `alpha`-quantile.
///
/// Needs at least `10 / alpha` samples so the quantile sits well inside the
/// sample.
pub fn empirical_var(samples: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Alpha(alpha));
    }
    let needed = (10.0 / alpha).ceil() as usize;
    if samples.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            got: samples.len(),
        });
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Domain("samples contain non-finite values".into()));
    }
    let mut sorted = samples.to_vec();
    let idx = (alpha * (sorted.len() - 1) as f64).floor() as usize;
    let (_, q, _) = sorted.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    Ok(-*q)
}

/// Monte Carlo value of a Gosset option by sampling the truncated t directly.
///
/// Only the normalising average `A_T` is taken from the pricer; the payoff
/// expectation itself is sampled. Returns `(estimate, standard_error)` in the
/// requested convention.
#[allow(clippy::too_many_arguments)]
pub fn mc_gosset_price(
    spec: &OptionSpec,
    s0: f64,
    sigma_ann: f64,
    nu: f64,
    r: f64,
    cfg: &QuadratureConfig,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n < 2 * MC_BATCHES {
        return Err(Error::InsufficientSamples {
            needed: 2 * MC_BATCHES,
            got: n,
        });
    }
    let quote = gosset_price(spec, s0, sigma_ann, nu, r, cfg)?;
    let (lo, hi, a, sig, k) = (
        quote.x_lower,
        quote.x_upper,
        quote.average,
        quote.sigma_t,
        spec.strike,
    );
    let dist = TDist::new(nu).map_err(|e| Error::Domain(e.to_string()))?;
    let kind = spec.kind;
    let batches: Vec<(f64, f64, f64)> = (0..MC_BATCHES)
        .into_par_iter()
        .map(|b| {
            let count = n / MC_BATCHES + usize::from(b < n % MC_BATCHES);
            let mut rng = batch_rng(seed, b as u64);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let z = loop {
                    let z: f64 = dist.sample(&mut rng);
                    if z >= lo && z <= hi {
                        break z;
                    }
                };
                let st = a * (sig * z).exp();
                let pay = match kind {
                    OptionKind::Call => (st - k).max(0.0),
                    OptionKind::Put => (k - st).max(0.0),
                };
                s1 += pay;
                s2 += pay * pay;
            }
            (count as f64, s1, s2)
        })
        .collect();
    let (cnt, s1, s2) = batches.iter().fold((0.0, 0.0, 0.0), |acc, b| {
        (acc.0 + b.0, acc.1 + b.1, acc.2 + b.2)
    });
    let mean = s1 / cnt;
    let var = (s2 - cnt * mean * mean) / (cnt - 1.0);
    let se = (var / cnt).sqrt();
    let scale = match cfg.price_convention {
        PriceConvention::Expiry => 1.0,
        PriceConvention::Present => (-r * spec.expiry).exp(),
    };
    Ok((scale * mean, scale * se))
}
