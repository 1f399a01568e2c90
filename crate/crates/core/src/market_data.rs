//! Stock universe: spot prices, annualized drifts and volatilities, correlations,
//! and the Student-t parameters of the price change over the risk horizon.
//!
//! Two on-disk layouts are supported.
//!
//! JSON, one file:
//!
//! ```text
//! {"names":[...],"spot":[...],"mu_ann":[...],"sigma_ann":[...],
//!  "corr":[[...],...],"nu":5.87,"dt":0.0039683,"r":0.05}
//! ```
//!
//! CSV, two files. `market.csv` carries `# key = value` comment lines for
//! `nu`, `dt` and `r`, then a header `name,spot,mu_ann,sigma_ann` and one row
//! per stock. The correlation file is a square table whose header is
//! `name,<stock names...>` and whose rows follow the same order as
//! `market.csv`. By default it sits next to the market file as
//! `<stem>_corr.csv`.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUNDLED_JSON: &str = include_str!("../data/hu2010.json");

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarketFormat {
    Csv,
    Json,
}

impl MarketFormat {
    /// Picks the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            _ => None,
        }
    }
}

/// On-disk JSON record.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MarketRecord {
    names: Vec<String>,
    spot: Vec<f64>,
    mu_ann: Vec<f64>,
    sigma_ann: Vec<f64>,
    corr: Vec<Vec<f64>>,
    nu: f64,
    dt: f64,
    r: f64,
}

/// A validated stock universe.
///
/// `spot`, `mu_ann` and `sigma_ann` are indexed in `names` order and so are
/// the rows and columns of `corr`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    pub names: Vec<String>,
    pub spot: Vec<f64>,
    pub mu_ann: Vec<f64>,
    pub sigma_ann: Vec<f64>,
    pub corr: DMatrix<f64>,
    /// Degrees of freedom of the multivariate t.
    pub nu: f64,
    /// Risk horizon in years.
    pub dt: f64,
    /// Continuously compounded risk-free rate.
    pub r: f64,
}

impl MarketModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        names: Vec<String>,
        spot: Vec<f64>,
        mu_ann: Vec<f64>,
        sigma_ann: Vec<f64>,
        corr: DMatrix<f64>,
        nu: f64,
        dt: f64,
        r: f64,
    ) -> Result<Self> {
        let model = Self {
            names,
            spot,
            mu_ann,
            sigma_ann,
            corr,
            nu,
            dt,
            r,
        };
        model.validate()?;
        Ok(model)
    }

    /// The five-stock dataset of 8 April 2005 (Disney, Exxon, Pfizer, Altria,
    /// Intel) with `nu = 5.87`, `dt = 1/252` and `r = 0.05`.
    pub fn hu2010() -> Self {
        Self::from_json_str(BUNDLED_JSON).expect("bundled dataset is valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }

    pub fn with_nu(mut self, nu: f64) -> Result<Self> {
        self.nu = nu;
        self.validate()?;
        Ok(self)
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        self.dt = dt;
        self.validate()?;
        Ok(self)
    }

    pub fn with_rate(mut self, r: f64) -> Result<Self> {
        self.r = r;
        self.validate()?;
        Ok(self)
    }

    /// Checks every model invariant, naming the first one violated.
    pub fn validate(&self) -> Result<()> {
        let n = self.names.len();
        if n == 0 {
            return Err(Error::Validation("market has no stocks".into()));
        }
        for (label, len) in [
            ("spot", self.spot.len()),
            ("mu_ann", self.mu_ann.len()),
            ("sigma_ann", self.sigma_ann.len()),
        ] {
            if len != n {
                return Err(Error::Validation(format!(
                    "{label} has {len} entries, expected {n}"
                )));
            }
        }
        if self.corr.nrows() != n || self.corr.ncols() != n {
            return Err(Error::Validation(format!(
                "correlation matrix is {}x{}, expected {n}x{n}",
                self.corr.nrows(),
                self.corr.ncols()
            )));
        }
        for (i, name) in self.names.iter().enumerate() {
            if !(self.spot[i] > 0.0 && self.spot[i].is_finite()) {
                return Err(Error::Validation(format!(
                    "spot price of {name} must be positive, got {}",
                    self.spot[i]
                )));
            }
            if !(self.sigma_ann[i] > 0.0 && self.sigma_ann[i].is_finite()) {
                return Err(Error::Validation(format!(
                    "volatility of {name} must be positive, got {}",
                    self.sigma_ann[i]
                )));
            }
            if !self.mu_ann[i].is_finite() {
                return Err(Error::Validation(format!("drift of {name} is not finite")));
            }
        }
        for i in 0..n {
            if (self.corr[(i, i)] - 1.0).abs() > SYMMETRY_TOL {
                return Err(Error::Validation(format!(
                    "correlation diagonal entry {i} is {}, expected 1",
                    self.corr[(i, i)]
                )));
            }
            for j in 0..n {
                let c = self.corr[(i, j)];
                if !(-1.0..=1.0).contains(&c) {
                    return Err(Error::Validation(format!(
                        "correlation ({i},{j}) = {c} outside [-1, 1]"
                    )));
                }
                if (c - self.corr[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::Validation(format!(
                        "correlation matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        if self.corr.clone().cholesky().is_none() {
            return Err(Error::Validation(
                "correlation matrix is not positive definite".into(),
            ));
        }
        if !(self.nu > 4.0 && self.nu.is_finite()) {
            return Err(Error::Validation(format!(
                "nu must exceed 4 for a finite delta-gamma variance, got {}",
                self.nu
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!(
                "horizon dt must be positive, got {}",
                self.dt
            )));
        }
        if !self.r.is_finite() {
            return Err(Error::Validation("risk-free rate is not finite".into()));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let rec: MarketRecord =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let n = rec.corr.len();
        if rec.corr.iter().any(|row| row.len() != n) {
            return Err(Error::Parse(
                "correlation matrix rows have unequal length".into(),
            ));
        }
        let corr = DMatrix::from_fn(n, n, |i, j| rec.corr[i][j]);
        Self::new(
            rec.names,
            rec.spot,
            rec.mu_ann,
            rec.sigma_ann,
            corr,
            rec.nu,
            rec.dt,
            rec.r,
        )
    }

    pub fn to_json_string(&self) -> String {
        let n = self.len();
        let rec = MarketRecord {
            names: self.names.clone(),
            spot: self.spot.clone(),
            mu_ann: self.mu_ann.clone(),
            sigma_ann: self.sigma_ann.clone(),
            corr: (0..n)
                .map(|i| (0..n).map(|j| self.corr[(i, j)]).collect())
                .collect(),
            nu: self.nu,
            dt: self.dt,
            r: self.r,
        };
        serde_json::to_string_pretty(&rec).expect("market record serializes")
    }

    /// Reads `market.csv` and its correlation table from the given paths.
    pub fn from_csv_files(market: &Path, corr: &Path) -> Result<Self> {
        let market_text = std::fs::read_to_string(market)?;
        let corr_text = std::fs::read_to_string(corr)?;
        Self::from_csv_strs(&market_text, &corr_text)
    }

    pub fn from_csv_strs(market: &str, corr: &str) -> Result<Self> {
        let mut nu = None;
        let mut dt = None;
        let mut r = None;
        for line in market.lines() {
            let Some(rest) = line.trim().strip_prefix('#') else {
                continue;
            };
            let Some((key, value)) = rest.split_once(['=', ':']) else {
                continue;
            };
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad value in header line {line:?}")))?;
            match key.trim() {
                "nu" => nu = Some(value),
                "dt" => dt = Some(value),
                "r" => r = Some(value),
                _ => {}
            }
        }
        let missing = |k: &str| Error::Parse(format!("market csv is missing `# {k} = ...`"));
        let nu = nu.ok_or_else(|| missing("nu"))?;
        let dt = dt.ok_or_else(|| missing("dt"))?;
        let r = r.ok_or_else(|| missing("r"))?;

        let mut names = Vec::new();
        let mut spot = Vec::new();
        let mut mu_ann = Vec::new();
        let mut sigma_ann = Vec::new();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(market.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse(format!("market csv has no `{name}` column")))
        };
        let (c_name, c_spot, c_mu, c_sigma) = (
            column("name")?,
            column("spot")?,
            column("mu_ann")?,
            column("sigma_ann")?,
        );
        for record in reader.records() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            let num = |c: usize| -> Result<f64> {
                let field = record.get(c).unwrap_or("");
                field
                    .parse()
                    .map_err(|_| Error::Parse(format!("not a number: {field:?}")))
            };
            names.push(record.get(c_name).unwrap_or("").to_string());
            spot.push(num(c_spot)?);
            mu_ann.push(num(c_mu)?);
            sigma_ann.push(num(c_sigma)?);
        }

        let n = names.len();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(corr.as_bytes());
        let corr_headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .iter()
            .skip(1)
            .map(str::to_string)
            .collect();
        if corr_headers != names {
            return Err(Error::Parse(format!(
                "correlation header {corr_headers:?} does not match stock order {names:?}"
            )));
        }
        let mut rows = Vec::with_capacity(n);
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            if i >= n || record.get(0) != Some(names[i].as_str()) {
                return Err(Error::Parse(format!(
                    "correlation row {i} does not match stock order"
                )));
            }
            let row = record
                .iter()
                .skip(1)
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("not a number: {f:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != n {
                return Err(Error::Parse(format!(
                    "correlation row {i} has {} entries",
                    row.len()
                )));
            }
            rows.push(row);
        }
        if rows.len() != n {
            return Err(Error::Parse(format!(
                "correlation table has {} rows, expected {n}",
                rows.len()
            )));
        }
        let corr = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(names, spot, mu_ann, sigma_ann, corr, nu, dt, r)
    }
}

/// Default companion correlation file for a market CSV: `<stem>_corr.csv`.
pub fn corr_path_for(market: &Path) -> PathBuf {
    let stem = market
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("market");
    market.with_file_name(format!("{stem}_corr.csv"))
}

/// Loads and validates a market file.
pub fn load_market(path: &Path, format: MarketFormat) -> Result<MarketModel> {
    match format {
        MarketFormat::Json => MarketModel::from_json_str(&std::fs::read_to_string(path)?),
        MarketFormat::Csv => MarketModel::from_csv_files(path, &corr_path_for(path)),
    }
}

/// Scale matrix of the price change: `Sigma_ij = dt * S_i sigma_i C_ij sigma_j S_j`.
pub fn build_covariance(m: &MarketModel) -> DMatrix<f64> {
    let n = m.len();
    let vol: Vec<f64> = (0..n).map(|i| m.spot[i] * m.sigma_ann[i]).collect();
    let mut sigma = DMatrix::from_fn(n, n, |i, j| m.dt * vol[i] * m.corr[(i, j)] * vol[j]);
    // exact symmetry regardless of how corr was rounded
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
            sigma[(i, j)] = avg;
            sigma[(j, i)] = avg;
        }
    }
    sigma
}

/// Location of the price change over the horizon: `mu_i = dt * mu_ann_i * S_i`.
pub fn build_drift(m: &MarketModel) -> DVector<f64> {
    DVector::from_fn(m.len(), |i, _| m.dt * m.mu_ann[i] * m.spot[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(spot: f64, sigma: f64, mu: f64, dt: f64) -> MarketModel {
        MarketModel::new(
            vec!["A".into()],
            vec![spot],
            vec![mu],
            vec![sigma],
            DMatrix::identity(1, 1),
            6.0,
            dt,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn bundled_dataset_matches_table() {
        let m = MarketModel::hu2010();
        assert_eq!(m.spot, vec![28.02, 60.01, 25.24, 65.53, 23.29]);
        assert_eq!(m.sigma_ann, vec![0.1699, 0.2032, 0.2064, 0.1794, 0.2476]);
        let (d, i) = (m.index_of("Disney").unwrap(), m.index_of("Intel").unwrap());
        assert_eq!(m.corr[(d, i)], 0.460);
        assert_eq!(m.nu, 5.87);
    }

    #[test]
    fn csv_and_json_agree() {
        let json = MarketModel::hu2010();
        let csv = MarketModel::from_csv_strs(
            include_str!("../data/hu2010.csv"),
            include_str!("../data/hu2010_corr.csv"),
        )
        .unwrap();
        assert_eq!(json, csv);
    }

    #[test]
    fn single_asset_is_valid() {
        let m = single(1.0, 1.0, 0.0, 1.0);
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn indefinite_correlation_rejected() {
        let corr =
            DMatrix::from_row_slice(3, 3, &[1.0, 0.99, 0.99, 0.99, 1.0, -0.99, 0.99, -0.99, 1.0]);
        let err = MarketModel::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![1.0; 3],
            vec![0.0; 3],
            vec![0.2; 3],
            corr,
            6.0,
            1.0,
            0.0,
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref s) if s.contains("positive definite")),
            "{err}"
        );
    }

    #[test]
    fn invariant_violations_are_named() {
        let base = single(1.0, 1.0, 0.0, 1.0);
        let mut bad = base.clone();
        bad.spot[0] = 0.0;
        assert!(matches!(bad.validate(), Err(Error::Validation(s)) if s.contains("spot")));
        let mut bad = base.clone();
        bad.sigma_ann[0] = -0.1;
        assert!(matches!(bad.validate(), Err(Error::Validation(s)) if s.contains("volatility")));
        assert!(matches!(base.clone().with_nu(4.0), Err(Error::Validation(s)) if s.contains("nu")));
        assert!(matches!(base.with_dt(0.0), Err(Error::Validation(s)) if s.contains("dt")));
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(
            MarketModel::from_json_str("{\"names\": ["),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn covariance_from_table() {
        let m = MarketModel::hu2010();
        let s = build_covariance(&m);
        // (28.02 * 0.1699)^2 / 252
        assert_relative_eq!(s[(0, 0)], 0.089_933_70, max_relative = 1e-7);
        // 28.02 * 0.1699 * 0.460 * 0.2476 * 23.29 / 252
        assert_relative_eq!(s[(0, 4)], 0.050_111_68, max_relative = 1e-7);
        assert!(s.clone().cholesky().is_some());
        assert_eq!(s, s.transpose());
    }

    #[test]
    fn identity_covariance() {
        let s = build_covariance(&single(1.0, 1.0, 0.0, 1.0));
        assert_eq!(s, DMatrix::identity(1, 1));
    }

    #[test]
    fn drift_scaling() {
        let m = MarketModel::hu2010();
        let mu = build_drift(&m);
        assert_relative_eq!(mu[0], 0.0151 * 28.02 / 252.0, max_relative = 1e-12);
        assert_relative_eq!(mu[0], 1.6790e-3, max_relative = 1e-4);
        assert_eq!(build_drift(&single(1.0, 1.0, 0.0, 0.5))[0], 0.0);
        assert_relative_eq!(build_drift(&single(1.0, 1.0, 0.05, 1.0))[0], 0.05);
    }

    #[test]
    fn spot_homogeneity() {
        let m = MarketModel::hu2010();
        let mut scaled = m.clone();
        let c = 3.7;
        scaled.spot.iter_mut().for_each(|s| *s *= c);
        let (s0, s1) = (build_covariance(&m), build_covariance(&scaled));
        let (m0, m1) = (build_drift(&m), build_drift(&scaled));
        for i in 0..5 {
            assert_relative_eq!(m1[i], c * m0[i], max_relative = 1e-13);
            for j in 0..5 {
                assert_relative_eq!(s1[(i, j)], c * c * s0[(i, j)], max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn identity_correlation_gives_diagonal() {
        let mut m = MarketModel::hu2010();
        m.corr = DMatrix::identity(5, 5);
        let s = build_covariance(&m);
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j {
                    m.dt * (m.spot[i] * m.sigma_ann[i]).powi(2)
                } else {
                    0.0
                };
                assert_relative_eq!(s[(i, j)], expected, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn corr_path_convention() {
        assert_eq!(
            corr_path_for(Path::new("/a/hu2010.csv")),
            PathBuf::from("/a/hu2010_corr.csv")
        );
    }
}
