use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use optport::gosset::{atm_book, gosset_greeks, gosset_price, price_book, OptionBook};
use optport::market_data::{build_covariance, build_drift};
use optport::market_data::{load_market, MarketFormat};
use optport::moments::book_moment_model;
use optport::optimize::{solve_min_cfvar, solve_min_variance};
use optport::oracle::{mc_moments_many, GainModel, VerificationReport};
use optport::{
    MarketModel, MomentModel, Objective, OptionKind, OptionSpec, PortfolioSolution,
    QuadratureConfig,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{ExperimentArgs, Format, KindArg, MarketArgs, OptimizeArgs, PriceArgs, Strike};
use crate::error::{CliError, CliResult};
use crate::output;

/// Everything needed to reproduce a run, echoed into every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub library_version: &'static str,
    pub market: String,
    pub nu: f64,
    pub dt: f64,
    pub rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub underlying: Option<String>,
    pub kinds: Vec<OptionKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strike: Option<f64>,
    pub expiry: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<&'static str>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<&'static str>>,
    pub quadrature: QuadratureConfig,
}

impl RunConfig {
    pub fn new(command: &str, loaded: &Loaded, kinds: Vec<OptionKind>, expiry: f64) -> Self {
        Self {
            command: command.to_string(),
            library_version: optport::VERSION,
            market: loaded.source.clone(),
            nu: loaded.market.nu,
            dt: loaded.market.dt,
            rate: loaded.market.r,
            underlying: None,
            kinds,
            strike: None,
            expiry,
            alpha: None,
            seed: None,
            samples: None,
            checks: None,
            formats: None,
            quadrature: QuadratureConfig::default(),
        }
    }
}

pub struct Loaded {
    pub market: MarketModel,
    /// Path as given, or `bundled:hu2010`.
    pub source: String,
}

pub fn load(args: &MarketArgs) -> CliResult<Loaded> {
    let (mut market, source) = match &args.market {
        None => (MarketModel::hu2010(), "bundled:hu2010".to_string()),
        Some(path) => {
            if !path.is_file() {
                return Err(CliError::Usage(format!(
                    "market file not found: {}",
                    path.display()
                )));
            }
            let format = MarketFormat::from_path(path).ok_or_else(|| {
                CliError::Usage(format!(
                    "cannot tell the format of {} (use .json or .csv)",
                    path.display()
                ))
            })?;
            (load_market(path, format)?, path.display().to_string())
        }
    };
    if let Some(nu) = args.nu {
        market = market.with_nu(nu)?;
    }
    if let Some(dt) = args.dt {
        market = market.with_dt(dt)?;
    }
    if let Some(r) = args.rate {
        market = market.with_rate(r)?;
    }
    Ok(Loaded { market, source })
}

fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 0.5 {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "--alpha must lie in (0, 0.5), got {alpha}"
        )))
    }
}

fn check_expiry(expiry: f64) -> CliResult<()> {
    if expiry > 0.0 && expiry.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "--expiry must be positive, got {expiry}"
        )))
    }
}

pub fn to_json_line(value: &impl Serialize) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn single_option(args: &PriceArgs) -> CliResult<(Loaded, OptionSpec, RunConfig)> {
    check_expiry(args.expiry)?;
    let loaded = load(&args.market)?;
    let idx = loaded.market.index_of(&args.underlying).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown underlying `{}` (market has: {})",
            args.underlying,
            loaded.market.names.join(", ")
        ))
    })?;
    let strike = match args.strike {
        Strike::Atm => loaded.market.spot[idx],
        Strike::Level(k) => k,
    };
    let kind = OptionKind::from(args.kind);
    let spec = OptionSpec::new(idx, kind, strike, args.expiry)?;
    let mut cfg = RunConfig::new("", &loaded, vec![kind], args.expiry);
    cfg.underlying = Some(loaded.market.names[idx].clone());
    cfg.strike = Some(strike);
    Ok((loaded, spec, cfg))
}

pub fn price(args: &PriceArgs) -> CliResult<String> {
    let (loaded, spec, mut cfg) = single_option(args)?;
    cfg.command = "price".into();
    let m = &loaded.market;
    let i = spec.underlying;
    let q = gosset_price(&spec, m.spot[i], m.sigma_ann[i], m.nu, m.r, &cfg.quadrature)?;
    to_json_line(&json!({
        "config": cfg,
        "price": q.value(cfg.quadrature.price_convention),
        "details": q,
    }))
}

pub fn greeks(args: &PriceArgs) -> CliResult<String> {
    let (loaded, spec, mut cfg) = single_option(args)?;
    cfg.command = "greeks".into();
    let m = &loaded.market;
    let i = spec.underlying;
    let g = gosset_greeks(&spec, m.spot[i], m.sigma_ann[i], m.nu, m.r, &cfg.quadrature)?;
    to_json_line(&json!({
        "config": cfg,
        "greeks": g,
    }))
}

/// One priced book and both optimal portfolios.
pub struct BookRun {
    pub kind: OptionKind,
    pub book: OptionBook,
    pub mm: MomentModel,
    pub v: DVector<f64>,
    pub variance: Result<PortfolioSolution, String>,
    pub cfvar: Result<PortfolioSolution, String>,
}

impl BookRun {
    pub fn solutions(
        &self,
    ) -> impl Iterator<Item = (Objective, &Result<PortfolioSolution, String>)> {
        [
            (Objective::Variance, &self.variance),
            (Objective::Cfvar, &self.cfvar),
        ]
        .into_iter()
    }

    pub fn failures(&self) -> Vec<String> {
        self.solutions()
            .filter_map(|(o, r)| r.as_ref().err().map(|e| format!("{} {o}: {e}", self.kind)))
            .collect()
    }
}

pub fn run_book(
    market: &MarketModel,
    kind: OptionKind,
    expiry: f64,
    alpha: f64,
    cfg: &QuadratureConfig,
) -> CliResult<BookRun> {
    let book = price_book(market, &atm_book(market, kind, expiry)?, cfg)?;
    let mm = book_moment_model(market, &book)?;
    let v = book.prices();
    let variance = solve_min_variance(&mm, &v)
        .and_then(|s| s.with_cfvar(alpha))
        .map_err(|e| e.to_string());
    let cfvar = solve_min_cfvar(&mm, &v, alpha).map_err(|e| e.to_string());
    Ok(BookRun {
        kind,
        book,
        mm,
        v,
        variance,
        cfvar,
    })
}

fn book_json(market: &MarketModel, run: &BookRun, dump_moments: bool) -> Value {
    let options: Vec<Value> = run
        .book
        .specs
        .iter()
        .zip(&run.book.greeks)
        .map(|(s, g)| {
            json!({
                "stock": market.names[s.underlying],
                "strike": s.strike,
                "expiry": s.expiry,
                "price": g.price,
                "theta": g.theta,
                "delta": g.delta[s.underlying],
                "gamma": g.gamma[(s.underlying, s.underlying)],
            })
        })
        .collect();
    let sol = |r: &Result<PortfolioSolution, String>| match r {
        Ok(s) => serde_json::to_value(s).unwrap_or(Value::Null),
        Err(e) => json!({ "error": e }),
    };
    let mut out = json!({
        "kind": run.kind,
        "options": options,
        "variance": sol(&run.variance),
        "cfvar": sol(&run.cfvar),
    });
    if dump_moments {
        out["moments"] = run.mm.to_json();
    }
    out
}

fn kinds_of(kind: Option<KindArg>) -> Vec<OptionKind> {
    match kind {
        Some(k) => vec![k.into()],
        None => vec![OptionKind::Call, OptionKind::Put],
    }
}

fn format_names(formats: &[Format]) -> Vec<&'static str> {
    let mut v: Vec<&'static str> = formats
        .iter()
        .map(|f| match f {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        })
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Writes the requested files and returns the paths written.
fn write_outputs(
    dir: &Path,
    formats: &[Format],
    market: &MarketModel,
    runs: &[BookRun],
    json_doc: &Value,
    title: &str,
) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for f in format_names(formats) {
        let path = match f {
            "csv" => {
                let p = dir.join("weights.csv");
                fs::write(&p, output::weights_csv(market, runs)?)?;
                p
            }
            "json" => {
                let p = dir.join("results.json");
                fs::write(&p, to_json_line(json_doc)?)?;
                p
            }
            _ => {
                let p = dir.join("weights.svg");
                fs::write(&p, output::weights_svg(market, runs, title))?;
                p
            }
        };
        written.push(path);
    }
    Ok(written)
}

fn finish(runs: &[BookRun], out: String) -> CliResult<String> {
    let failures: Vec<String> = runs.iter().flat_map(BookRun::failures).collect();
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(CliError::Reported {
            output: out,
            message: format!("solver failures: {}", failures.join("; ")),
            code: 3,
        })
    }
}

pub fn optimize(args: &OptimizeArgs) -> CliResult<String> {
    check_alpha(args.alpha)?;
    check_expiry(args.expiry)?;
    let loaded = load(&args.market)?;
    let kinds = kinds_of(args.kind);
    let mut cfg = RunConfig::new("optimize", &loaded, kinds.clone(), args.expiry);
    cfg.alpha = Some(args.alpha);
    if args.out_dir.is_some() {
        cfg.formats = Some(format_names(&args.format));
    }
    let runs = kinds
        .iter()
        .map(|k| run_book(&loaded.market, *k, args.expiry, args.alpha, &cfg.quadrature))
        .collect::<CliResult<Vec<_>>>()?;
    let doc = json!({
        "config": cfg,
        "books": runs.iter().map(|r| book_json(&loaded.market, r, args.dump_moments)).collect::<Vec<_>>(),
    });
    let out = match &args.out_dir {
        None => to_json_line(&doc)?,
        Some(dir) => {
            let files = write_outputs(
                dir,
                &args.format,
                &loaded.market,
                &runs,
                &doc,
                "optimal option portfolios",
            )?;
            files
                .iter()
                .map(|p| format!("wrote {}\n", p.display()))
                .collect()
        }
    };
    finish(&runs, out)
}

/// Monte Carlo check of each solution's mean and variance.
pub fn moment_reports(
    market: &MarketModel,
    run: &BookRun,
    extra: &[(String, DVector<f64>)],
    n: usize,
    seed: u64,
    u_scale: f64,
) -> CliResult<Vec<VerificationReport>> {
    let model = GainModel::new(
        &run.book.greeks,
        &build_drift(market),
        &build_covariance(market),
        market.nu,
        market.dt,
    )?;
    let mut labelled: Vec<(String, DVector<f64>)> = run
        .solutions()
        .filter_map(|(o, r)| r.as_ref().ok().map(|s| (format!("x_{o}"), s.shares())))
        .collect();
    labelled.extend(extra.iter().cloned());
    let xs: Vec<DVector<f64>> = labelled.iter().map(|(_, x)| x.clone()).collect();
    let mc = mc_moments_many(&model, &xs, n, seed)?;
    let mut out = Vec::new();
    for ((label, x), r) in labelled.iter().zip(&mc) {
        let mean = run.mm.zeta.dot(x);
        let var = 0.5 * u_scale * x.dot(&(&run.mm.u * x));
        let q = |what: &str| format!("moments/{}/{label}/{what}", run.kind);
        out.push(VerificationReport::within_se(
            q("mean"),
            mean,
            r.mean,
            r.mean_se,
            3.0,
            seed,
            n,
        ));
        out.push(VerificationReport::within_se(
            q("variance"),
            var,
            r.variance,
            r.variance_se,
            3.0,
            seed,
            n,
        ));
    }
    Ok(out)
}

pub fn experiment(args: &ExperimentArgs) -> CliResult<String> {
    let loaded = load(&args.market)?;
    let alpha = args.preset.alpha();
    let expiry = 1.0;
    let kinds = vec![OptionKind::Call, OptionKind::Put];
    let mut cfg = RunConfig::new(
        &format!("experiment {}", args.preset.name()),
        &loaded,
        kinds.clone(),
        expiry,
    );
    cfg.alpha = Some(alpha);
    cfg.seed = Some(args.seed);
    cfg.samples = Some(args.samples);
    cfg.formats = Some(format_names(&args.format));
    let runs = kinds
        .iter()
        .map(|k| run_book(&loaded.market, *k, expiry, alpha, &cfg.quadrature))
        .collect::<CliResult<Vec<_>>>()?;
    let mut reports = Vec::new();
    for run in &runs {
        reports.extend(moment_reports(
            &loaded.market,
            run,
            &[],
            args.samples,
            args.seed,
            1.0,
        )?);
    }
    let passed = reports.iter().all(|r| r.pass);
    let doc = json!({
        "config": cfg,
        "books": runs.iter().map(|r| book_json(&loaded.market, r, args.dump_moments)).collect::<Vec<_>>(),
        "checks": reports,
        "checks_passed": passed,
    });
    let dir = args.out_dir.join(args.preset.name());
    let title = format!("optimal option portfolios, alpha = {alpha}");
    let files = write_outputs(&dir, &args.format, &loaded.market, &runs, &doc, &title)?;
    let mut out: String = files
        .iter()
        .map(|p| format!("wrote {}\n", p.display()))
        .collect();
    out.push_str(&output::summary_table(&loaded.market, &runs));
    if !passed {
        return Err(CliError::Reported {
            output: out,
            message: "Monte Carlo moment check failed".into(),
            code: 1,
        });
    }
    finish(&runs, out)
}
