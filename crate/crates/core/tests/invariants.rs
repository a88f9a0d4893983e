use lts_core::localtime::{local_time_field, local_time_occupation, local_time_tanaka, uniform_levels, SideConvention};
use lts_core::measure::RadonMeasure;
use lts_core::pathsim::{brownian_path, SamplePath, TimeGrid};
use lts_core::sdelt::{build_transform, skew_bm, solve_sdelt_with_driver, Coef, SdeltSpec};
use lts_core::RngStream;
use proptest::prelude::*;

fn walk(steps: &[f64]) -> SamplePath {
    let grid = TimeGrid::new(0.0, 1.0, steps.len()).unwrap();
    let mut v = vec![0.0];
    for s in steps {
        v.push(v.last().unwrap() + s);
    }
    SamplePath::new(grid, v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tanaka_is_nonnegative_and_nondecreasing(steps in prop::collection::vec(-0.2f64..0.2, 1..300), a in -0.5f64..0.5) {
        let x = walk(&steps);
        for side in [SideConvention::Right, SideConvention::Left, SideConvention::Symmetric] {
            let l = local_time_tanaka(&x, a, side);
            prop_assert!(l.values()[0] == 0.0);
            prop_assert!(l.values().windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn local_time_is_flat_away_from_the_level(steps in prop::collection::vec(-0.1f64..0.1, 1..200)) {
        let x = walk(&steps);
        let (lo, hi) = x.min_max();
        let l = local_time_tanaka(&x, hi + 0.01, SideConvention::Right);
        prop_assert_eq!(l.terminal(), 0.0);
        let l = local_time_tanaka(&x, lo - 0.01, SideConvention::Right);
        prop_assert_eq!(l.terminal(), 0.0);
    }

    #[test]
    fn field_columns_match_single_level(steps in prop::collection::vec(-0.1f64..0.1, 1..200)) {
        let x = walk(&steps);
        let (lo, hi) = x.min_max();
        let levels = uniform_levels(lo - 0.05, hi + 0.05, 0.05, &[]);
        let f = local_time_field(&x, &levels, SideConvention::Right).unwrap();
        for (j, &a) in f.levels().iter().enumerate() {
            let single = local_time_tanaka(&x, a, SideConvention::Right);
            prop_assert_eq!(f.column(j), single.values().to_vec());
        }
    }

    #[test]
    fn occupation_time_is_additive_in_windows(seed in 0u64..1000, a in -0.3f64..0.3) {
        let x = brownian_path(TimeGrid::dyadic(8), RngStream::new(seed, 0));
        let eps = 0.05;
        let whole = local_time_occupation(&x, a, 2.0 * eps, SideConvention::Right).unwrap().terminal();
        let first = local_time_occupation(&x, a, eps, SideConvention::Right).unwrap().terminal();
        let second = local_time_occupation(&x, a + eps, eps, SideConvention::Right).unwrap().terminal();
        prop_assert!((2.0 * whole - first - second).abs() < 1e-9);
    }

    #[test]
    fn skew_transform_round_trips(beta in -0.45f64..0.45, x in -3.0f64..3.0) {
        let pair = build_transform(&Coef::constant(1.0), &RadonMeasure::dirac(0.0).scaled(beta)).unwrap();
        let y = pair.f(0.0, x);
        prop_assert!((pair.g(0.0, y).unwrap() - x).abs() <= 1e-12 * (1.0 + x.abs()));
        prop_assert!(pair.f(0.0, x + 1e-3) > y);
    }

    #[test]
    fn density_transform_round_trips(c in 0.1f64..2.0, x in -3.0f64..3.0) {
        let nu = RadonMeasure::lebesgue_on(-1.0, 1.0).scaled(c);
        let pair = build_transform(&Coef::constant(0.2), &nu).unwrap();
        let y = pair.f(0.0, x);
        prop_assert!((pair.g(0.0, y).unwrap() - x).abs() <= 1e-10 * (1.0 + x.abs()));
        prop_assert!(pair.fx(0.0, x) > 0.0);
    }
}

#[test]
fn zero_skew_reproduces_the_driver() {
    let grid = TimeGrid::dyadic(10);
    let x = skew_bm(0.0, grid, RngStream::new(3, 0)).unwrap();
    let b = brownian_path(grid, RngStream::new(3, 0));
    assert_eq!(x.values(), b.values());
}

#[test]
fn skew_beyond_half_is_rejected() {
    assert!(skew_bm(0.5, TimeGrid::dyadic(8), RngStream::new(1, 0)).is_err());
    assert!(skew_bm(-0.7, TimeGrid::dyadic(8), RngStream::new(1, 0)).is_err());
}

#[test]
fn positive_skew_pushes_mass_up() {
    let grid = TimeGrid::dyadic(10);
    let spec = SdeltSpec::skew(0.4, 0.0);
    let n = 400;
    let up = (0..n)
        .filter(|&k| {
            let d = brownian_path(grid, RngStream::new(11, k));
            solve_sdelt_with_driver(&spec, &d).unwrap().x.terminal() > 0.0
        })
        .count();
    // P(X_1 > 0) = 1/(2(1-β)) = 0.833; 0.7 is far outside sampling noise
    assert!(up as f64 / n as f64 > 0.7, "{up}");
}
