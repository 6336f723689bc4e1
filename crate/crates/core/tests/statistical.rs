//! Monte Carlo calibration checks for the per-operation contracts that are
//! statistical rather than algebraic. Tolerances are several binomial
//! standard errors wide; seeds are fixed.

use rayon::prelude::*;
use signflip::comparators::{wald_test, CovarianceKind};
use signflip::glm::{DesignData, Family};
use signflip::multivariate::{run_multivariate_test, CombineMatrix};
use signflip::nalgebra::{DMatrix, DVector};
use signflip::score::{run_univariate_both, Alternative, FlipPlan};
use signflip::sim::{generate_dataset, Dgp};

fn normal(rng: &mut impl FnMut() -> f64) -> f64 {
    let u1: f64 = rng().max(1e-12);
    let u2: f64 = rng();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn uniform_source(seed: u64) -> impl FnMut() -> f64 {
    let mut state = seed | 1;
    move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    }
}

#[test]
fn exhaustive_plan_is_exact_for_gaussian_identity_at_n_12() {
    // All 2^12 flips: the standardized test must hit the achievable level
    // floor(0.05 * 4096) / 4096 ~ 0.0498 up to Monte Carlo error.
    let reps = 2000usize;
    let n = 12usize;
    let rejections: usize = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut u = uniform_source(0xeaab + rep as u64);
            let z = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { normal(&mut u) });
            let x = DMatrix::from_fn(n, 1, |i, _| 0.4 * z[(i, 1)] + normal(&mut u));
            let y = DVector::from_fn(n, |_, _| normal(&mut u));
            let data = DesignData::new(y, x, z, DVector::zeros(1)).unwrap();
            let plan = FlipPlan::exhaustive(n).unwrap();
            let pair = run_univariate_both(
                &data,
                &Family::gaussian(),
                &plan,
                Alternative::TwoSided,
                0.05,
            )
            .unwrap();
            usize::from(pair.standardized.reject)
        })
        .sum();
    let rate = rejections as f64 / reps as f64;
    // 3.5 binomial se over the nominal level, one-sided slack below
    assert!(
        (0.03..=0.067).contains(&rate),
        "exhaustive-plan rejection rate {rate:.4}"
    );
}

#[test]
fn multivariate_null_calibration_d3() {
    // d = 3 gaussian null: the quadratic-form test holds its level.
    let reps = 2000usize;
    let n = 100usize;
    let g = 400usize;
    let m = CombineMatrix::identity(3);
    let rejections: usize = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut u = uniform_source(0xdada + rep as u64);
            let z = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { normal(&mut u) });
            let x = DMatrix::from_fn(n, 3, |i, j| {
                0.3 * z[(i, 1)] * ((j == 0) as i32 as f64) + normal(&mut u)
            });
            let y = DVector::from_fn(n, |_, _| normal(&mut u));
            let data = DesignData::new(y, x, z, DVector::zeros(3)).unwrap();
            let plan = FlipPlan::rademacher(g, n, 0xf00d + rep as u64).unwrap();
            let res =
                run_multivariate_test(&data, &Family::gaussian(), &plan, &m, 0.05).unwrap();
            usize::from(res.reject)
        })
        .sum();
    let rate = rejections as f64 / reps as f64;
    assert!(
        (rate - 0.05).abs() <= 0.015,
        "multivariate null rejection rate {rate:.4} outside 0.05 +/- 0.015"
    );
}

#[test]
fn wald_calibration_under_heteroskedasticity() {
    // Variance tied to the tested covariate wrecks the model-based Wald
    // while the sandwich stays near nominal. Variance tied to a nuisance
    // covariate that is uncorrelated with the projected target leaves even
    // the model-based Wald approximately calibrated at this sample size.
    let reps = 500usize;
    let n = 1000usize;
    let run = |dgp: Dgp, seed: u64| -> (f64, f64) {
        let counts: (usize, usize) = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let gen = generate_dataset(dgp, 0.0, n, seed + rep as u64).unwrap();
                let mb = wald_test(
                    &gen.data,
                    &gen.family,
                    CovarianceKind::ModelBased,
                    0.05,
                )
                .map(|r| r.reject)
                .unwrap_or(false);
                let sw = wald_test(
                    &gen.data,
                    &gen.family,
                    CovarianceKind::SandwichHc0,
                    0.05,
                )
                .map(|r| r.reject)
                .unwrap_or(false);
                (usize::from(mb), usize::from(sw))
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        (counts.0 as f64 / reps as f64, counts.1 as f64 / reps as f64)
    };

    let (mb_target, sw_target) = run(Dgp::GaussianHeteroTarget, 0x41);
    assert!(
        mb_target > 0.12,
        "model-based rate {mb_target:.3} should be far above nominal for target-driven variance"
    );
    assert!(
        (0.02..=0.09).contains(&sw_target),
        "sandwich rate {sw_target:.3} should be near nominal"
    );

    let (mb_nuis, sw_nuis) = run(Dgp::GaussianHeteroNuisance, 0x42);
    assert!(
        (0.025..=0.085).contains(&mb_nuis),
        "model-based rate {mb_nuis:.3} should stay near nominal when the \
         heteroskedasticity is orthogonal to the projected target"
    );
    assert!(
        (0.02..=0.09).contains(&sw_nuis),
        "sandwich rate {sw_nuis:.3} should be near nominal"
    );
}
