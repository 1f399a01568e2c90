use nalgebra::DVector;
use optport::gosset::gosset_price;
use optport::oracle::{
    black_scholes, brute_force_optimum, kkt_min_variance, mc_gosset_price, VerificationReport,
};
use optport::student_t::normal_quantile;
use optport::{MarketModel, Objective, OptionKind, OptionSpec, QuadratureConfig};
use serde_json::json;

use crate::args::{Check, VerifyArgs};
use crate::commands::{load, moment_reports, run_book, to_json_line, BookRun, RunConfig};
use crate::error::{CliError, CliResult};

/// Relative tolerance of the brute-force objective comparison.
const BRUTE_FORCE_TOL: f64 = 1e-6;

fn rel_tol(scale: f64, tol: f64) -> f64 {
    tol * scale.abs().max(f64::MIN_POSITIVE)
}

/// Deterministic spread of share vectors, each costing one unit.
fn probe_portfolios(v: &DVector<f64>, count: usize) -> Vec<(String, DVector<f64>)> {
    (0..count)
        .map(|k| {
            let raw = DVector::from_fn(v.len(), |m, _| ((7 * k + 3 * m) as f64 + 1.0).sin() / v[m]);
            let budget = v.dot(&raw);
            let x = if budget.abs() > 1e-8 {
                raw / budget
            } else {
                raw
            };
            (format!("probe{k}"), x)
        })
        .collect()
}

fn optimizer_reports(run: &BookRun, alpha: f64, seed: u64) -> Vec<VerificationReport> {
    let kind = run.kind;
    let q = |what: &str| format!("optimizer/{kind}/{what}");
    let mut out = Vec::new();
    let cfvar_of = |x: &DVector<f64>| {
        let var = 0.5 * x.dot(&(&run.mm.u * x));
        let z = normal_quantile(alpha).unwrap_or(f64::NAN);
        -run.mm.zeta.dot(x) - z * var.sqrt()
    };

    match &run.variance {
        Ok(sol) => {
            let x = sol.shares();
            out.push(VerificationReport::within_tol(
                q("budget/variance"),
                run.v.dot(&x),
                1.0,
                1e-10,
            ));
            match kkt_min_variance(&run.mm.u, &run.v) {
                Ok(k) => {
                    let dev = (&x - &k).amax() / k.amax();
                    out.push(VerificationReport::within_tol(
                        q("kkt/variance/max-rel-share-dev"),
                        dev,
                        0.0,
                        1e-8,
                    ));
                }
                Err(e) => out.push(failed(q("kkt/variance"), &e.to_string())),
            }
            match brute_force_optimum(Objective::Variance, &run.mm, &run.v, None, seed) {
                Ok(b) => {
                    let oracle = 0.5 * b.dot(&(&run.mm.u * &b));
                    out.push(VerificationReport::within_tol(
                        q("brute-force/variance/objective"),
                        sol.variance,
                        oracle,
                        rel_tol(sol.variance, BRUTE_FORCE_TOL),
                    ));
                }
                Err(e) => out.push(failed(q("brute-force/variance"), &e.to_string())),
            }
        }
        Err(e) => out.push(failed(q("variance"), e)),
    }

    match &run.cfvar {
        Ok(sol) => {
            let x = sol.shares();
            let cf = sol.cfvar.unwrap_or(f64::NAN);
            out.push(VerificationReport::within_tol(
                q("budget/cfvar"),
                run.v.dot(&x),
                1.0,
                1e-10,
            ));
            if let Some(eps) = sol.eps_star {
                out.push(VerificationReport::within_tol(
                    q("cfvar/mean-equals-eps"),
                    run.mm.zeta.dot(&x),
                    eps,
                    rel_tol(eps.abs().max(1.0), 1e-10),
                ));
            }
            match brute_force_optimum(Objective::Cfvar, &run.mm, &run.v, Some(alpha), seed) {
                Ok(b) => out.push(VerificationReport::within_tol(
                    q("brute-force/cfvar/objective"),
                    cf,
                    cfvar_of(&b),
                    rel_tol(cf, BRUTE_FORCE_TOL),
                )),
                Err(e) => out.push(failed(q("brute-force/cfvar"), &e.to_string())),
            }
        }
        Err(e) => out.push(failed(q("cfvar"), e)),
    }
    out
}

fn failed(quantity: String, why: &str) -> VerificationReport {
    let mut r =
        VerificationReport::within_tol(format!("{quantity}: {why}"), f64::NAN, f64::NAN, 0.0);
    r.pass = false;
    r
}

fn parity_reports(
    market: &MarketModel,
    expiry: f64,
    cfg: &QuadratureConfig,
) -> Vec<VerificationReport> {
    let mut out = Vec::new();
    for i in 0..market.len() {
        let s0 = market.spot[i];
        for m in [0.9, 1.0, 1.1] {
            let k = m * s0;
            let q = format!("parity/{}/K={k}", market.names[i]);
            let price = |kind| {
                let spec = OptionSpec::new(i, kind, k, expiry)?;
                gosset_price(&spec, s0, market.sigma_ann[i], market.nu, market.r, cfg)
            };
            match (price(OptionKind::Call), price(OptionKind::Put)) {
                (Ok(c), Ok(p)) => {
                    let conv = cfg.price_convention;
                    let lhs = c.value(conv) - p.value(conv);
                    let growth = (market.r * expiry).exp();
                    let rhs = match conv {
                        optport::PriceConvention::Expiry => s0 * growth - k,
                        optport::PriceConvention::Present => s0 - k / growth,
                    };
                    out.push(VerificationReport::within_tol(
                        q,
                        lhs,
                        rhs,
                        1e-8 * s0.max(1.0),
                    ));
                }
                (Err(e), _) | (_, Err(e)) => out.push(failed(q, &e.to_string())),
            }
        }
    }
    out
}

fn bs_limit_reports(
    market: &MarketModel,
    expiry: f64,
    cfg: &QuadratureConfig,
) -> Vec<VerificationReport> {
    let nu = 500.0;
    let mut out = Vec::new();
    for i in 0..market.len() {
        for kind in [OptionKind::Call, OptionKind::Put] {
            let q = format!("bs-limit/{}/{kind}", market.names[i]);
            let res = OptionSpec::new(i, kind, market.spot[i], expiry).and_then(|spec| {
                let g = gosset_price(
                    &spec,
                    market.spot[i],
                    market.sigma_ann[i],
                    nu,
                    market.r,
                    cfg,
                )?;
                let b = black_scholes(
                    &spec,
                    market.spot[i],
                    market.sigma_ann[i],
                    market.r,
                    cfg.price_convention,
                )?;
                Ok((g.value(cfg.price_convention), b))
            });
            match res {
                Ok((g, b)) => out.push(VerificationReport::within_tol(q, g, b, 0.01 * b.abs())),
                Err(e) => out.push(failed(q, &e.to_string())),
            }
        }
    }
    out
}

fn mc_price_reports(
    market: &MarketModel,
    expiry: f64,
    cfg: &QuadratureConfig,
    n: usize,
    seed: u64,
) -> Vec<VerificationReport> {
    let mut out = Vec::new();
    for i in 0..market.len() {
        for kind in [OptionKind::Call, OptionKind::Put] {
            let q = format!("mc-price/{}/{kind}", market.names[i]);
            let res = OptionSpec::new(i, kind, market.spot[i], expiry).and_then(|spec| {
                let g = gosset_price(
                    &spec,
                    market.spot[i],
                    market.sigma_ann[i],
                    market.nu,
                    market.r,
                    cfg,
                )?;
                let mc = mc_gosset_price(
                    &spec,
                    market.spot[i],
                    market.sigma_ann[i],
                    market.nu,
                    market.r,
                    cfg,
                    n,
                    seed,
                )?;
                Ok((g.value(cfg.price_convention), mc))
            });
            match res {
                Ok((g, (m, se))) => {
                    out.push(VerificationReport::within_se(q, g, m, se, 3.0, seed, n))
                }
                Err(e) => out.push(failed(q, &e.to_string())),
            }
        }
    }
    out
}

pub fn verify(args: &VerifyArgs) -> CliResult<String> {
    if !(args.alpha > 0.0 && args.alpha < 0.5) {
        return Err(CliError::Usage(format!(
            "--alpha must lie in (0, 0.5), got {}",
            args.alpha
        )));
    }
    if !(args.expiry > 0.0 && args.expiry.is_finite()) {
        return Err(CliError::Usage(format!(
            "--expiry must be positive, got {}",
            args.expiry
        )));
    }
    let loaded = load(&args.market)?;
    let market = &loaded.market;
    let mut checks = if args.checks.is_empty() {
        Check::ALL.to_vec()
    } else {
        args.checks.clone()
    };
    checks.sort_unstable();
    checks.dedup();

    let mut cfg = RunConfig::new(
        "verify",
        &loaded,
        vec![OptionKind::Call, OptionKind::Put],
        args.expiry,
    );
    cfg.alpha = Some(args.alpha);
    cfg.seed = Some(args.seed);
    cfg.samples = Some(args.samples);
    cfg.checks = Some(checks.iter().map(|c| c.name()).collect());
    let quad = cfg.quadrature;

    let needs_books = checks
        .iter()
        .any(|c| matches!(c, Check::Moments | Check::Optimizer));
    let runs = if needs_books {
        [OptionKind::Call, OptionKind::Put]
            .iter()
            .map(|k| run_book(market, *k, args.expiry, args.alpha, &quad))
            .collect::<CliResult<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let mut reports = Vec::new();
    for check in &checks {
        match check {
            Check::Moments => {
                let u_scale = if args.corrupt_u { 1.5 } else { 1.0 };
                for run in &runs {
                    let probes = probe_portfolios(&run.v, 3);
                    reports.extend(moment_reports(
                        market,
                        run,
                        &probes,
                        args.samples,
                        args.seed,
                        u_scale,
                    )?);
                }
            }
            Check::Optimizer => {
                for run in &runs {
                    reports.extend(optimizer_reports(run, args.alpha, args.seed));
                }
            }
            Check::Parity => reports.extend(parity_reports(market, args.expiry, &quad)),
            Check::BsLimit => reports.extend(bs_limit_reports(market, args.expiry, &quad)),
            Check::McPrice => reports.extend(mc_price_reports(
                market,
                args.expiry,
                &quad,
                args.samples,
                args.seed,
            )),
        }
    }

    let failures: Vec<&str> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.quantity.as_str())
        .collect();
    let doc = json!({
        "config": cfg,
        "reports": reports,
        "passed": failures.is_empty(),
        "failures": failures,
    });
    let out = to_json_line(&doc)?;
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(CliError::Reported {
            output: out,
            message: format!("{} of {} checks failed", failures.len(), reports.len()),
            code: 1,
        })
    }
}
