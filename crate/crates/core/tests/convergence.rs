use lscp::convergence::{refine_study, OrderLevel, RefineConfig, PROXY_NOTE};
use lscp::geometry::{PointPattern, Window};
use lscp::inference::{ChainConfig, FitSpec};
use lscp::lattice::Margins;
use lscp::model::*;
use lscp::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform_pattern(n: usize, seed: u64) -> PointPattern {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointPattern::new(Window::unit(), (0..n).map(|_| (rng.random(), rng.random())).collect())
}

fn config(sizes: Vec<(usize, usize)>, orders: Vec<OrderLevel>, n_iter: usize) -> RefineConfig {
    RefineConfig {
        sizes,
        orders,
        margins: Margins::uniform(0.6),
        chain: ChainConfig { n_iter, thin: 2, seed: 4, ..Default::default() },
        probes: vec![(0.3, 0.3), (0.7, 0.6)],
    }
}

fn intercept_only() -> FitSpec {
    let model = LscpModel::new(
        LevelSetSpec::new(0.3, 1.0),
        Thresholds::new(vec![]).unwrap(),
        0.0,
        vec![ClassSpec::Regression { mean: MeanStructure::Constant(4.0) }],
    )
    .unwrap();
    FitSpec::new(model)
}

#[test]
fn repeated_full_order_fits_are_identical() {
    let spec = FitSpec::new(
        LscpModel::new(
            LevelSetSpec::new(0.4, 1.0),
            Thresholds::new(vec![0.0]).unwrap(),
            0.1,
            vec![ClassSpec::field(1.0, 0.3, 1.0, 5.0), ClassSpec::constant(2.0)],
        )
        .unwrap(),
    );
    let p = uniform_pattern(150, 1);
    let cfg = config(vec![(4, 4), (8, 8)], vec![OrderLevel::Full, OrderLevel::Full], 200);
    let r = refine_study(&spec, &p, &cfg).unwrap();
    let half = r.rows.len() / 2;
    for (a, b) in r.rows[..half].iter().zip(&r.rows[half..]) {
        assert_eq!((a.mean, a.sd), (b.mean, b.sd), "{}", a.functional);
    }
    assert_eq!(r.note, PROXY_NOTE);
    assert!(r.fraction_shrinking.is_none(), "two sizes give no trend");
}

#[test]
fn regression_limit_ignores_refinement() {
    // without a field the posterior depends on the total count only
    let p = uniform_pattern(400, 2);
    let cfg = config(vec![(4, 4), (8, 8), (16, 16)], vec![OrderLevel::Full], 4000);
    let r = refine_study(&intercept_only(), &p, &cfg).unwrap();
    let probe: Vec<_> = r.rows.iter().filter(|row| row.functional == "log_intensity_p1").collect();
    assert_eq!(probe.len(), 3);
    let want = 400f64.ln();
    for row in &probe {
        // mean within a few Monte-Carlo errors of the conjugate value
        assert!((row.mean - want).abs() < 0.03, "{}: {}", row.level(), row.mean);
        assert!((row.sd - 0.05).abs() < 0.01, "{}: sd {}", row.level(), row.sd);
    }
    let frac: Vec<_> = r.rows.iter().filter(|row| row.functional == "class1_fraction").collect();
    assert!(frac.iter().all(|row| row.mean == 1.0 && row.sd == 0.0));
}

#[test]
fn sizes_must_nest() {
    let p = uniform_pattern(20, 3);
    let cfg = config(vec![(4, 4), (6, 6)], vec![OrderLevel::Full], 10);
    assert!(matches!(refine_study(&intercept_only(), &p, &cfg), Err(Error::Usage(_))));
    let cfg = config(vec![(4, 4)], vec![], 10);
    assert!(matches!(refine_study(&intercept_only(), &p, &cfg), Err(Error::Usage(_))));
}

#[test]
fn order_level_parses() {
    assert_eq!("half".parse::<OrderLevel>().unwrap(), OrderLevel::Half);
    assert_eq!("full".parse::<OrderLevel>().unwrap(), OrderLevel::Full);
    assert!("third".parse::<OrderLevel>().is_err());
}
