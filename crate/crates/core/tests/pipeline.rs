use approx::assert_relative_eq;
use nalgebra::DVector;
use optport::gosset::{atm_book, price_book};
use optport::market_data::{build_covariance, build_drift, load_market, MarketFormat};
use optport::moments::{book_moment_model, cfvar2};
use optport::optimize::{solve_min_cfvar, solve_min_variance};
use optport::oracle::{
    brute_force_optimum, empirical_var, kkt_min_variance, kkt_two_constraints, mc_moments_many,
    sample_gains, GainModel,
};
use optport::{MarketModel, Objective, OptionKind, QuadratureConfig};

fn table1_book(
    kind: OptionKind,
) -> (
    MarketModel,
    optport::gosset::OptionBook,
    optport::MomentModel,
) {
    let market = MarketModel::hu2010();
    let book = price_book(
        &market,
        &atm_book(&market, kind, 1.0).unwrap(),
        &QuadratureConfig::default(),
    )
    .unwrap();
    let mm = book_moment_model(&market, &book).unwrap();
    (market, book, mm)
}

#[test]
fn table1_books_price_and_solve() {
    for kind in [OptionKind::Call, OptionKind::Put] {
        let (_, book, mm) = table1_book(kind);
        let v = book.prices();
        assert!(v.iter().all(|p| *p > 0.0));
        let var = solve_min_variance(&mm, &v).unwrap();
        let cf = solve_min_cfvar(&mm, &v, 0.01).unwrap();
        for s in [&var, &cf] {
            assert_relative_eq!(s.w.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
            assert_relative_eq!(v.dot(&s.shares()), 1.0, epsilon = 1e-10);
        }
        let var = var.with_cfvar(0.01).unwrap();
        assert!(var.variance < cf.variance);
        assert!(cf.cfvar.unwrap() < var.cfvar.unwrap());
    }
}

#[test]
fn closed_forms_match_kkt_and_brute_force() {
    let (_, book, mm) = table1_book(OptionKind::Put);
    let v = book.prices();
    let var = solve_min_variance(&mm, &v).unwrap().shares();
    let kkt = kkt_min_variance(&mm.u, &v).unwrap();
    assert!((&var - &kkt).amax() < 1e-10 * kkt.amax());

    let cf = solve_min_cfvar(&mm, &v, 0.05).unwrap();
    let x = cf.shares();
    let kkt2 = kkt_two_constraints(&mm.u, &mm.zeta, &v, cf.eps_star.unwrap()).unwrap();
    assert!((&x - &kkt2).amax() < 1e-9 * x.amax());

    let bf = brute_force_optimum(Objective::Cfvar, &mm, &v, Some(0.05), 3).unwrap();
    let a = cfvar2(&mm, &x, 0.05).unwrap();
    let b = cfvar2(&mm, &bf, 0.05).unwrap();
    assert!(
        a <= b + 1e-12 * a.abs(),
        "closed form {a} worse than brute force {b}"
    );
    assert_relative_eq!(a, b, max_relative = 1e-8);
}

#[test]
fn monte_carlo_moments_of_optimal_portfolios() {
    let (market, book, mm) = table1_book(OptionKind::Call);
    let v = book.prices();
    let xs = vec![
        solve_min_variance(&mm, &v).unwrap().shares(),
        solve_min_cfvar(&mm, &v, 0.01).unwrap().shares(),
    ];
    let model = GainModel::new(
        &book.greeks,
        &build_drift(&market),
        &build_covariance(&market),
        market.nu,
        market.dt,
    )
    .unwrap();
    for (x, r) in xs
        .iter()
        .zip(mc_moments_many(&model, &xs, 500_000, 2024).unwrap())
    {
        let mean = mm.zeta.dot(x);
        let var = 0.5 * x.dot(&(&mm.u * x));
        assert!((r.mean - mean).abs() < 4.0 * r.mean_se, "{r:?} vs {mean}");
        assert!(
            (r.variance - var).abs() < 4.0 * r.variance_se,
            "{r:?} vs {var}"
        );
    }
}

#[test]
fn cornish_fisher_tracks_empirical_var() {
    // the two-term expansion ignores skew and kurtosis, so only rough agreement is expected
    let (market, book, mm) = table1_book(OptionKind::Call);
    let v = book.prices();
    let x = solve_min_cfvar(&mm, &v, 0.05).unwrap().shares();
    let model = GainModel::new(
        &book.greeks,
        &build_drift(&market),
        &build_covariance(&market),
        market.nu,
        market.dt,
    )
    .unwrap();
    let gains = sample_gains(&model, &x, 200_000, 5).unwrap();
    let empirical = empirical_var(&gains, 0.05).unwrap();
    let cf = cfvar2(&mm, &x, 0.05).unwrap();
    assert!(
        (empirical / cf - 1.0).abs() < 0.25,
        "empirical {empirical} vs CF {cf}"
    );
}

#[test]
fn market_files_round_trip() {
    let market = MarketModel::hu2010();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(&path, market.to_json_string()).unwrap();
    let back = load_market(&path, MarketFormat::Json).unwrap();
    assert_eq!(back, market);

    let data = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/hu2010.csv");
    let from_csv = load_market(&data, MarketFormat::Csv).unwrap();
    assert_eq!(from_csv.names, market.names);
    assert!((from_csv.corr.clone() - market.corr.clone()).amax() < 1e-15);
}

#[test]
fn moments_are_linear_in_book_scaling() {
    let (_, book, mm) = table1_book(OptionKind::Call);
    let v = book.prices();
    let x = DVector::from_fn(v.len(), |i, _| 1.0 / (v[i] * v.len() as f64));
    let twice = 2.0 * &x;
    assert_relative_eq!(
        mm.zeta.dot(&twice),
        2.0 * mm.zeta.dot(&x),
        max_relative = 1e-14
    );
    assert_relative_eq!(
        twice.dot(&(&mm.u * &twice)),
        4.0 * x.dot(&(&mm.u * &x)),
        max_relative = 1e-14
    );
}
