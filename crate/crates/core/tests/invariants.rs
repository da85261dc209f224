//! Property tests for lattice, field and moment invariants.

use lscp::geometry::{PointPattern, Window};
use lscp::grf::{matern_cov, sample_fft, MaternSpec, SpectralGrid};
use lscp::lattice::{bin_points, FieldRole, Lattice, Margins};
use lscp::model::*;
use lscp::moments::{p_lk_corr, rho1, rho2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn two_class(c: f64, m1: f64, m2: f64) -> LscpModel {
    LscpModel::new(
        LevelSetSpec::new(0.3, 1.0),
        Thresholds::new(vec![c]).unwrap(),
        0.0,
        vec![ClassSpec::field(0.8, 0.2, 1.0, m1), ClassSpec::field(0.5, 0.1, 1.0, m2)],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binning_keeps_every_inside_point(
        pts in prop::collection::vec((0.0..3.0f64, 0.0..2.0f64), 0..200),
        nx in 1usize..12,
        ny in 1usize..12,
    ) {
        let w = Window::new(0.0, 0.0, 3.0, 2.0).unwrap();
        let l = Lattice::new(w, nx, ny, Margins::uniform(0.5)).unwrap();
        let counts = bin_points(&PointPattern::new(w, pts.clone()), &l);
        prop_assert_eq!(counts.total() as usize, pts.len());
        for &(x, y) in &pts {
            let j = l.locate(x, y).unwrap();
            let (x0, y0, x1, y1) = l.cell_bounds(j);
            prop_assert!(x0 <= x && x <= x1 && y0 <= y && y <= y1);
        }
    }

    #[test]
    fn spectral_weights_sum_to_the_variance(sigma in 0.1..3.0f64, range in 0.05..0.5f64, nu in 0.5..2.5f64) {
        let l = Lattice::new(Window::unit(), 12, 12, Margins::uniform(0.4)).unwrap();
        let g = SpectralGrid::new(&l, FieldRole::LevelSet);
        let spec = MaternSpec::new(sigma, range, nu).unwrap();
        let w = g.weights(&spec, g.full_order());
        prop_assert!((w.iter().sum::<f64>() - sigma * sigma).abs() < 1e-9 * sigma * sigma);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn seeded_fields_repeat(seed in any::<u64>()) {
        let l = Lattice::new(Window::unit(), 8, 8, Margins::uniform(0.3)).unwrap();
        let spec = MaternSpec::new(1.0, 0.2, 1.0).unwrap();
        let a = sample_fft(spec, &l, FieldRole::Class, &mut ChaCha8Rng::seed_from_u64(seed)).values;
        let b = sample_fft(spec, &l, FieldRole::Class, &mut ChaCha8Rng::seed_from_u64(seed)).values;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn joint_class_probabilities_form_a_distribution(
        c in prop::collection::vec(-2.0..2.0f64, 1..4),
        rho in -0.99..0.99f64,
        mu1 in -1.0..1.0f64,
        mu2 in -1.0..1.0f64,
    ) {
        let mut c = c;
        c.sort_by(f64::total_cmp);
        c.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let th = Thresholds::new(c).unwrap();
        let k = th.n_classes();
        let mut total = 0.0;
        for l in 0..k {
            for m in 0..k {
                let p = p_lk_corr(l, m, rho, mu1, mu2, &th, 64).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
                // swapping the locations transposes the table
                let q = p_lk_corr(m, l, rho, mu2, mu1, &th, 64).unwrap();
                prop_assert!((p - q).abs() < 1e-9);
                total += p;
            }
        }
        prop_assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn second_moment_is_bounded_by_products(h in 0.0..1.0f64, c in -1.0..1.0f64, m1 in -1.0..2.0f64, m2 in -1.0..2.0f64) {
        let m = two_class(c, m1, m2);
        let r1 = rho1(&m, None);
        let r2 = rho2(&m, h, None, None).unwrap();
        prop_assert!(r2 > 0.0);
        // positive correlations everywhere give non-negative pair correlation excess
        prop_assert!(r2 >= r1 * r1 * (1.0 - 1e-6));
    }
}

#[test]
fn lag_zero_covariance_is_the_variance() {
    let spec = MaternSpec::new(1.7, 0.2, 1.0).unwrap();
    assert!((matern_cov(0.0, &spec) - 1.7 * 1.7).abs() < 1e-12);
}
