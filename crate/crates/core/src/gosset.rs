//! European option prices under truncated log-Student-t returns.
//!
//! The terminal price is `A_T exp(sigma_T z)` where `z` follows a unit-scale
//! Student-t restricted to `[x_p, x_c]`, the `p_p` and `p_c` quantiles. The
//! normalising integral `Z = E[exp(sigma_T z)]` over the truncated density
//! fixes `A_T = S0 exp(rT) / Z`, so the truncated forward equals
//! `S0 exp(rT)`. Calls and puts integrate the payoff on either side of the
//! log-moneyness threshold `ln(K/A_T) / sigma_T`, which is always a panel
//! boundary for the quadrature.
//!
//! Greeks are central (delta, gamma) and forward (theta) finite differences
//! of the pricer.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::MarketModel;
use crate::quadrature::{integrate, QuadOptions};
use crate::student_t::StudentT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl std::fmt::Display for OptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Call => "call",
            Self::Put => "put",
        })
    }
}

impl std::str::FromStr for OptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "call" | "c" => Ok(Self::Call),
            "put" | "p" => Ok(Self::Put),
            _ => Err(Error::Parse(format!("unknown option kind {s:?}"))),
        }
    }
}

/// Contract terms of one European option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    /// Row of the underlying in the market model.
    pub underlying: usize,
    pub kind: OptionKind,
    pub strike: f64,
    /// Time to expiry in years.
    pub expiry: f64,
}

impl OptionSpec {
    pub fn new(underlying: usize, kind: OptionKind, strike: f64, expiry: f64) -> Result<Self> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(Error::Domain(format!(
                "strike must be positive, got {strike}"
            )));
        }
        if !(expiry > 0.0 && expiry.is_finite()) {
            return Err(Error::Domain(format!(
                "expiry must be positive, got {expiry}"
            )));
        }
        Ok(Self {
            underlying,
            kind,
            strike,
            expiry,
        })
    }
}

/// How the annual volatility maps to the scale of the t variate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaConvention {
    /// `sigma_T = sigma sqrt(T) sqrt((nu - 2) / nu)`: the log return has variance `sigma^2 T`.
    #[default]
    VarianceMatched,
    /// `sigma_T = sigma sqrt(T)`.
    Raw,
}

/// Which value of the option the book and its Greeks refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriceConvention {
    /// `exp(-rT)` times the expiry-measure integral.
    #[default]
    Present,
    /// The expiry-measure integral itself, undiscounted.
    Expiry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Lower truncation probability `p_p`.
    pub p_lower: f64,
    /// Upper truncation probability `p_c`.
    pub p_upper: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Relative spot bump for delta and gamma.
    pub h_spot: f64,
    /// Time bump in years for theta.
    pub h_time: f64,
    pub sigma_convention: SigmaConvention,
    pub price_convention: PriceConvention,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            p_lower: 1e-5,
            p_upper: 1.0 - 1e-5,
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            h_spot: 1e-4,
            h_time: 1.0 / 3650.0,
            sigma_convention: SigmaConvention::VarianceMatched,
            price_convention: PriceConvention::Present,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_lower > 0.0 && self.p_lower < self.p_upper && self.p_upper < 1.0) {
            return Err(Error::Domain(format!(
                "truncation probabilities must satisfy 0 < p_p < p_c < 1, got ({}, {})",
                self.p_lower, self.p_upper
            )));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::Domain(
                "quadrature tolerances must be positive".into(),
            ));
        }
        if !(self.h_spot > 0.0 && self.h_spot < 1.0 && self.h_time > 0.0) {
            return Err(Error::Domain(
                "finite-difference bumps must be positive".into(),
            ));
        }
        Ok(())
    }

    fn quad_options(&self) -> QuadOptions {
        QuadOptions {
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            ..QuadOptions::default()
        }
    }
}

/// Lower and upper truncation points `(x_p, x_c)`.
pub fn truncation_points(nu: f64, cfg: &QuadratureConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    let t = StudentT::new(nu)?;
    let lo = t.quantile(cfg.p_lower)?;
    let hi = t.quantile(cfg.p_upper)?;
    if !(lo < hi) {
        return Err(Error::Domain(format!(
            "truncation points collapse: x_p = {lo}, x_c = {hi}"
        )));
    }
    Ok((lo, hi))
}

pub fn sigma_t(sigma_ann: f64, expiry: f64, nu: f64, convention: SigmaConvention) -> f64 {
    let raw = sigma_ann * expiry.sqrt();
    match convention {
        SigmaConvention::Raw => raw,
        SigmaConvention::VarianceMatched => raw * ((nu - 2.0) / nu).sqrt(),
    }
}

/// The truncated density on `[x_p, x_c]`, normalised by `p_c - p_p`.
#[derive(Debug, Clone, Copy)]
struct TruncatedT {
    t: StudentT,
    lo: f64,
    hi: f64,
    mass: f64,
}

impl TruncatedT {
    fn new(nu: f64, cfg: &QuadratureConfig) -> Result<Self> {
        let (lo, hi) = truncation_points(nu, cfg)?;
        Ok(Self {
            t: StudentT::new(nu)?,
            lo,
            hi,
            mass: cfg.p_upper - cfg.p_lower,
        })
    }

    fn density(&self, z: f64) -> f64 {
        self.t.pdf(z) / self.mass
    }

    fn breakpoints(&self, extra: &[f64]) -> Vec<f64> {
        let mut pts = vec![-1.0, 0.0, 1.0];
        pts.extend_from_slice(extra);
        pts
    }

    fn exp_moment(&self, sigma: f64, opts: QuadOptions) -> Result<f64> {
        Ok(integrate(
            |z| (sigma * z).exp() * self.density(z),
            self.lo,
            self.hi,
            &self.breakpoints(&[]),
            opts,
        )?
        .value)
    }
}

/// `Z = integral of exp(sigma_T z) f_r(z) / (p_c - p_p)` over `[x_p, x_c]`.
pub fn gosset_z(sigma_t: f64, nu: f64, cfg: &QuadratureConfig) -> Result<f64> {
    if !(sigma_t > 0.0) {
        return Err(Error::Domain(format!(
            "sigma_T must be positive, got {sigma_t}"
        )));
    }
    TruncatedT::new(nu, cfg)?.exp_moment(sigma_t, cfg.quad_options())
}

/// Everything computed while pricing one option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GossetPrice {
    /// Expiry-measure value, undiscounted.
    pub expiry_value: f64,
    /// `exp(-rT) * expiry_value`.
    pub present_value: f64,
    pub sigma_t: f64,
    pub z: f64,
    /// Average terminal level `A_T`.
    pub average: f64,
    /// Log-moneyness threshold `ln(K/A_T) / sigma_T`.
    pub threshold: f64,
    pub x_lower: f64,
    pub x_upper: f64,
}

impl GossetPrice {
    pub fn value(&self, convention: PriceConvention) -> f64 {
        match convention {
            PriceConvention::Present => self.present_value,
            PriceConvention::Expiry => self.expiry_value,
        }
    }
}

pub fn gosset_price(
    spec: &OptionSpec,
    s0: f64,
    sigma_ann: f64,
    nu: f64,
    r: f64,
    cfg: &QuadratureConfig,
) -> Result<GossetPrice> {
    if !(s0 > 0.0) {
        return Err(Error::Domain(format!("spot must be positive, got {s0}")));
    }
    if !(sigma_ann > 0.0) {
        return Err(Error::Domain(format!(
            "volatility must be positive, got {sigma_ann}"
        )));
    }
    let spec = OptionSpec::new(spec.underlying, spec.kind, spec.strike, spec.expiry)?;
    let dist = TruncatedT::new(nu, cfg)?;
    let opts = cfg.quad_options();
    let sig = sigma_t(sigma_ann, spec.expiry, nu, cfg.sigma_convention);
    let z = dist.exp_moment(sig, opts)?;
    let forward = s0 * (r * spec.expiry).exp();
    let average = forward / z;
    let strike = spec.strike;
    let threshold = (strike / average).ln() / sig;

    let payoff_integral = |from: f64, to: f64, sign: f64| -> Result<f64> {
        let q = integrate(
            |u| sign * (average * (sig * u).exp() - strike) * dist.density(u),
            from,
            to,
            &dist.breakpoints(&[]),
            opts,
        )?;
        // the integrand has one sign on the range; clamp rounding noise
        Ok(q.value.max(0.0))
    };
    let expiry_value = match spec.kind {
        OptionKind::Call => {
            if threshold >= dist.hi {
                0.0
            } else if threshold <= dist.lo {
                return Err(Error::Truncation {
                    threshold,
                    lower: dist.lo,
                    upper: dist.hi,
                });
            } else {
                payoff_integral(threshold, dist.hi, 1.0)?
            }
        }
        OptionKind::Put => {
            if threshold <= dist.lo {
                0.0
            } else if threshold >= dist.hi {
                return Err(Error::Truncation {
                    threshold,
                    lower: dist.lo,
                    upper: dist.hi,
                });
            } else {
                payoff_integral(dist.lo, threshold, -1.0)?
            }
        }
    };
    Ok(GossetPrice {
        expiry_value,
        present_value: (-r * spec.expiry).exp() * expiry_value,
        sigma_t: sig,
        z,
        average,
        threshold,
        x_lower: dist.lo,
        x_upper: dist.hi,
    })
}

/// Price and finite-difference sensitivities of one option in its own underlying.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarGreeks {
    pub price: f64,
    /// `dV/dt` per year (calendar time, so typically negative).
    pub theta: f64,
    pub delta: f64,
    pub gamma: f64,
}

/// Finite-difference Greeks at the bumps in `cfg`, on the value selected by
/// `cfg.price_convention`.
pub fn gosset_greeks(
    spec: &OptionSpec,
    s0: f64,
    sigma_ann: f64,
    nu: f64,
    r: f64,
    cfg: &QuadratureConfig,
) -> Result<ScalarGreeks> {
    cfg.validate()?;
    let conv = cfg.price_convention;
    let price_at = |spot: f64, expiry: f64, what: &str| -> Result<f64> {
        let bumped = OptionSpec { expiry, ..*spec };
        match gosset_price(&bumped, spot, sigma_ann, nu, r, cfg) {
            Ok(p) => Ok(p.value(conv)),
            Err(Error::Truncation {
                threshold,
                lower,
                upper,
            }) => Err(Error::Step(format!(
                "{what}: threshold {threshold} leaves ({lower}, {upper})"
            ))),
            Err(e) => Err(e),
        }
    };
    let base = gosset_price(spec, s0, sigma_ann, nu, r, cfg)?.value(conv);
    let h = cfg.h_spot;
    let up = price_at(s0 * (1.0 + h), spec.expiry, "spot up-bump")?;
    let down = price_at(s0 * (1.0 - h), spec.expiry, "spot down-bump")?;
    if spec.expiry - cfg.h_time <= 0.0 {
        return Err(Error::Step(format!(
            "time bump {} exceeds expiry {}",
            cfg.h_time, spec.expiry
        )));
    }
    let earlier = price_at(s0, spec.expiry - cfg.h_time, "time bump")?;
    let ds = s0 * h;
    Ok(ScalarGreeks {
        price: base,
        theta: (earlier - base) / cfg.h_time,
        delta: (up - down) / (2.0 * ds),
        gamma: (up - 2.0 * base + down) / (ds * ds),
    })
}

/// Greeks of one option embedded in the `N`-asset space.
///
/// `delta` and `gamma` are zero except at the option's underlying.
#[derive(Debug, Clone, PartialEq)]
pub struct GreekSet {
    pub price: f64,
    pub theta: f64,
    pub delta: DVector<f64>,
    pub gamma: DMatrix<f64>,
}

impl GreekSet {
    pub fn embed(g: &ScalarGreeks, underlying: usize, n_assets: usize) -> Result<Self> {
        if underlying >= n_assets {
            return Err(Error::Dimension(format!(
                "underlying index {underlying} out of range for {n_assets} assets"
            )));
        }
        let mut delta = DVector::zeros(n_assets);
        let mut gamma = DMatrix::zeros(n_assets, n_assets);
        delta[underlying] = g.delta;
        gamma[(underlying, underlying)] = g.gamma;
        Ok(Self {
            price: g.price,
            theta: g.theta,
            delta,
            gamma,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.delta.len()
    }
}

/// A priced option book over a market model.
#[derive(Debug, Clone)]
pub struct OptionBook {
    pub specs: Vec<OptionSpec>,
    pub quotes: Vec<GossetPrice>,
    pub greeks: Vec<GreekSet>,
    pub convention: PriceConvention,
}

impl OptionBook {
    /// Option prices `v` under the book's convention.
    pub fn prices(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.quotes.len(),
            self.quotes.iter().map(|q| q.value(self.convention)),
        )
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

/// One at-the-money option of the given kind per stock.
pub fn atm_book(market: &MarketModel, kind: OptionKind, expiry: f64) -> Result<Vec<OptionSpec>> {
    (0..market.len())
        .map(|i| OptionSpec::new(i, kind, market.spot[i], expiry))
        .collect()
}

/// Prices every option and computes its Greeks.
pub fn price_book(
    market: &MarketModel,
    specs: &[OptionSpec],
    cfg: &QuadratureConfig,
) -> Result<OptionBook> {
    let n = market.len();
    let mut quotes = Vec::with_capacity(specs.len());
    let mut greeks = Vec::with_capacity(specs.len());
    for spec in specs {
        if spec.underlying >= n {
            return Err(Error::Dimension(format!(
                "option references underlying {} but market has {n} stocks",
                spec.underlying
            )));
        }
        let (s0, vol) = (
            market.spot[spec.underlying],
            market.sigma_ann[spec.underlying],
        );
        quotes.push(gosset_price(spec, s0, vol, market.nu, market.r, cfg)?);
        let g = gosset_greeks(spec, s0, vol, market.nu, market.r, cfg)?;
        greeks.push(GreekSet::embed(&g, spec.underlying, n)?);
    }
    Ok(OptionBook {
        specs: specs.to_vec(),
        quotes,
        greeks,
        convention: cfg.price_convention,
    })
}
