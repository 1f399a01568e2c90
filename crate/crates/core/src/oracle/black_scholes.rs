use crate::error::{Error, Result};
use crate::gosset::{OptionKind, OptionSpec, PriceConvention};
use crate::student_t::normal_cdf;

/// Black-Scholes price of a European option.
///
/// `PriceConvention::Expiry` returns the undiscounted forward value
/// `F N(d1) - K N(d2)` with `F = S0 exp(rT)`, which is the lognormal limit of
/// the Gosset expiry value.
pub fn black_scholes(
    spec: &OptionSpec,
    s0: f64,
    sigma_ann: f64,
    r: f64,
    convention: PriceConvention,
) -> Result<f64> {
    if !(s0 > 0.0 && spec.strike > 0.0 && spec.expiry > 0.0 && sigma_ann >= 0.0) {
        return Err(Error::Domain(format!(
            "Black-Scholes needs S0, K, T > 0 and sigma >= 0 (S0={s0}, K={}, T={}, sigma={sigma_ann})",
            spec.strike, spec.expiry
        )));
    }
    let forward = s0 * (r * spec.expiry).exp();
    let k = spec.strike;
    let sd = sigma_ann * spec.expiry.sqrt();
    let undiscounted = if sd == 0.0 {
        match spec.kind {
            OptionKind::Call => (forward - k).max(0.0),
            OptionKind::Put => (k - forward).max(0.0),
        }
    } else {
        let d1 = ((forward / k).ln() + 0.5 * sd * sd) / sd;
        let d2 = d1 - sd;
        match spec.kind {
            OptionKind::Call => forward * normal_cdf(d1) - k * normal_cdf(d2),
            OptionKind::Put => k * normal_cdf(-d2) - forward * normal_cdf(-d1),
        }
    };
    Ok(match convention {
        PriceConvention::Expiry => undiscounted,
        PriceConvention::Present => (-r * spec.expiry).exp() * undiscounted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: OptionKind, k: f64, t: f64) -> OptionSpec {
        OptionSpec::new(0, kind, k, t).unwrap()
    }

    #[test]
    fn reference_value() {
        let c = black_scholes(
            &spec(OptionKind::Call, 100.0, 1.0),
            100.0,
            0.2,
            0.0,
            PriceConvention::Present,
        )
        .unwrap();
        // ATM with r = 0: 2 S0 (Phi(sigma sqrt(T) / 2) - 1/2)
        let identity = 2.0 * 100.0 * (normal_cdf(0.1) - 0.5);
        assert!((c - identity).abs() < 1e-12);
        assert!((c - 7.9656).abs() < 1e-4);
    }

    #[test]
    fn zero_vol_is_forward_intrinsic() {
        let r = 0.05;
        let c = black_scholes(
            &spec(OptionKind::Call, 90.0, 2.0),
            100.0,
            0.0,
            r,
            PriceConvention::Expiry,
        )
        .unwrap();
        assert!((c - (100.0 * (2.0 * r).exp() - 90.0)).abs() < 1e-12);
        let tiny = black_scholes(
            &spec(OptionKind::Call, 100.0, 1.0),
            100.0,
            1e-9,
            r,
            PriceConvention::Expiry,
        )
        .unwrap();
        assert!((tiny - (100.0 * r.exp() - 100.0)).abs() < 1e-6);
    }

    #[test]
    fn forward_parity() {
        let (s0, k, r, t) = (28.0, 31.0, 0.03, 0.7);
        let c = black_scholes(
            &spec(OptionKind::Call, k, t),
            s0,
            0.25,
            r,
            PriceConvention::Expiry,
        )
        .unwrap();
        let p = black_scholes(
            &spec(OptionKind::Put, k, t),
            s0,
            0.25,
            r,
            PriceConvention::Expiry,
        )
        .unwrap();
        assert!((c - p - (s0 * (r * t).exp() - k)).abs() < 1e-12);
    }

    #[test]
    fn bad_inputs() {
        assert!(black_scholes(
            &spec(OptionKind::Call, 1.0, 1.0),
            -1.0,
            0.2,
            0.0,
            PriceConvention::Present
        )
        .is_err());
        assert!(black_scholes(
            &spec(OptionKind::Call, 1.0, 1.0),
            1.0,
            -0.2,
            0.0,
            PriceConvention::Present
        )
        .is_err());
    }
}
