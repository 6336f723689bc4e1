//! Parametric Wald and sandwich-covariance Wald baselines.
//!
//! Both fit the full model (target and nuisance columns free) and test the
//! target coordinates against `beta0`. The model-based covariance is the
//! inverse Fisher information at the fit; the sandwich covariance is
//! `J^{-1} B J^{-1}` with bread `J = G^T W G` and meat
//! `B = sum_i s_i s_i^T` of per-observation score outer products. Gaussian
//! fits use `sigma^2 = RSS / (n - p)` for the model-based errors; the
//! dispersion cancels in the sandwich.

use crate::error::{Error, Result};
use crate::glm::{fit_full, DesignData, Family, FullFit};
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceKind {
    /// Inverse Fisher information (the textbook parametric Wald).
    ModelBased,
    /// Plain sandwich with no small-sample correction.
    SandwichHc0,
    /// Leverage-corrected sandwich (exploration only; not used in the
    /// reference comparisons).
    SandwichHc3,
}

impl CovarianceKind {
    pub fn name(self) -> &'static str {
        match self {
            CovarianceKind::ModelBased => "model_based",
            CovarianceKind::SandwichHc0 => "sandwich_hc0",
            CovarianceKind::SandwichHc3 => "sandwich_hc3",
        }
    }
}

/// Wald test output for the target coordinates.
#[derive(Debug, Clone)]
pub struct WaldResult {
    /// Estimated target coefficients from the full fit.
    pub beta_hat: DVector<f64>,
    /// Standard errors of the target coordinates.
    pub se: DVector<f64>,
    /// `(beta_hat - beta0) / se` per coordinate.
    pub z: DVector<f64>,
    /// Two-sided normal p-value for d = 1; chi-square upper tail of the
    /// joint quadratic form for d > 1.
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub covariance_kind: CovarianceKind,
    /// Full-model covariance of the target block.
    pub cov_beta: DMatrix<f64>,
    pub phi_hat: f64,
    pub iterations: usize,
}

/// Runs the Wald test of `beta = beta0` under the chosen covariance.
pub fn wald_test(
    data: &DesignData,
    family: &Family,
    covariance_kind: CovarianceKind,
    alpha: f64,
) -> Result<WaldResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let fit = fit_full(data, family)?;
    let cov = match covariance_kind {
        CovarianceKind::ModelBased => model_based_covariance(data, &fit)?,
        CovarianceKind::SandwichHc0 => sandwich_covariance(data, &fit, false)?,
        CovarianceKind::SandwichHc3 => sandwich_covariance(data, &fit, true)?,
    };

    let d = data.d();
    let beta_hat = DVector::from_fn(d, |j, _| fit.coef[j]);
    let cov_beta = DMatrix::from_fn(d, d, |j, k| cov[(j, k)]);
    let mut se = DVector::zeros(d);
    let mut z = DVector::zeros(d);
    for j in 0..d {
        let var = cov_beta[(j, j)];
        if !(var > 0.0 && var.is_finite()) {
            return Err(Error::Singular(format!(
                "non-positive variance for target coordinate {j}"
            )));
        }
        se[j] = var.sqrt();
        z[j] = (beta_hat[j] - data.beta0()[j]) / se[j];
    }

    let p_value = if d == 1 {
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * normal.sf(z[0].abs())).clamp(f64::MIN_POSITIVE, 1.0)
    } else {
        let diff = &beta_hat - data.beta0();
        let chol = cov_beta
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("target covariance block is singular".into()))?;
        let stat = diff.dot(&chol.solve(&diff));
        let chi = ChiSquared::new(d as f64).expect("chi-squared");
        chi.sf(stat).clamp(f64::MIN_POSITIVE, 1.0)
    };

    Ok(WaldResult {
        beta_hat,
        se,
        z,
        p_value,
        reject: p_value <= alpha,
        alpha,
        covariance_kind,
        cov_beta,
        phi_hat: fit.phi_hat,
        iterations: fit.iterations,
    })
}

fn full_design(data: &DesignData) -> DMatrix<f64> {
    let n = data.n();
    let d = data.d();
    let q = data.q();
    let mut g = DMatrix::zeros(n, d + q);
    g.view_mut((0, 0), (n, d)).copy_from(data.x());
    g.view_mut((0, d), (n, q)).copy_from(data.z());
    g
}

/// `(G^T W G)^{-1}` with the fitted working weights (the gaussian dispersion
/// RSS/(n-p) is already inside `w_diag`).
fn model_based_covariance(data: &DesignData, fit: &FullFit) -> Result<DMatrix<f64>> {
    let g = full_design(data);
    let bread = weighted_gram(&g, &fit.w_diag);
    bread
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("Fisher information (bread) is singular".into()))
}

/// `J^{-1} B J^{-1}`; HC3 rescales each score by `1/(1 - h_ii)` with the
/// leverages of the weighted full design.
fn sandwich_covariance(data: &DesignData, fit: &FullFit, hc3: bool) -> Result<DMatrix<f64>> {
    let n = data.n();
    let resid_max = (0..n)
        .map(|i| (data.y()[i] - fit.mu_hat[i]).abs())
        .fold(0.0f64, f64::max);
    if resid_max <= 1e-12 * data.y().amax().max(1.0) {
        return Err(Error::Singular(
            "sandwich meat is singular (residuals are numerically zero)".into(),
        ));
    }
    let g = full_design(data);
    let p = g.ncols();
    let bread = weighted_gram(&g, &fit.w_diag);
    let bread_inv = bread
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("Fisher information (bread) is singular".into()))?;

    let leverages = if hc3 {
        Some(weighted_leverages(&g, &fit.w_diag, &bread_inv))
    } else {
        None
    };

    let mut meat = DMatrix::zeros(p, p);
    for i in 0..n {
        // per-observation score g_i * d_i (y_i - mu_i) / v_i
        let factor = fit.d_diag[i] * (data.y()[i] - fit.mu_hat[i]) / fit.v_diag[i];
        let scale = match &leverages {
            Some(h) => {
                let denom = (1.0 - h[i]).max(1e-8);
                factor / denom
            }
            None => factor,
        };
        for a in 0..p {
            let sa = g[(i, a)] * scale;
            for b in a..p {
                meat[(a, b)] += sa * (g[(i, b)] * scale);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            meat[(a, b)] = meat[(b, a)];
        }
    }
    if meat.clone().cholesky().is_none() {
        return Err(Error::Singular(
            "sandwich meat is singular (residuals carry no information)".into(),
        ));
    }
    Ok(&bread_inv * meat * &bread_inv)
}

fn weighted_gram(g: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    let p = g.ncols();
    let mut out = DMatrix::zeros(p, p);
    for i in 0..n {
        let wi = w[i];
        for a in 0..p {
            let ga = g[(i, a)] * wi;
            for b in a..p {
                out[(a, b)] += ga * g[(i, b)];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            out[(a, b)] = out[(b, a)];
        }
    }
    out
}

/// Diagonal of the weighted hat matrix `W^{1/2} G (G^T W G)^{-1} G^T W^{1/2}`.
fn weighted_leverages(g: &DMatrix<f64>, w: &DVector<f64>, bread_inv: &DMatrix<f64>) -> Vec<f64> {
    let n = g.nrows();
    let p = g.ncols();
    (0..n)
        .map(|i| {
            let mut h = 0.0;
            for a in 0..p {
                for b in 0..p {
                    h += g[(i, a)] * bread_inv[(a, b)] * g[(i, b)];
                }
            }
            h * w[i]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn homoskedastic_gaussian(n: usize, seed: u64) -> DesignData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 1, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let z = DMatrix::from_fn(n, 2, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.gen::<f64>() * 2.0 - 1.0
            }
        });
        let noise: Vec<f64> = (0..n).map(|_| normal_draw(&mut rng)).collect();
        let y = DVector::from_fn(n, |i, _| 0.5 + 0.3 * x[(i, 0)] + noise[i]);
        DesignData::new(y, x, z, DVector::zeros(1)).unwrap()
    }

    fn normal_draw(rng: &mut ChaCha8Rng) -> f64 {
        // Box-Muller is plenty for test fixtures
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[test]
    fn gaussian_model_based_matches_ols_oracle() {
        let data = homoskedastic_gaussian(40, 1);
        let res = wald_test(&data, &Family::gaussian(), CovarianceKind::ModelBased, 0.05).unwrap();

        // dense OLS oracle with sigma^2 = RSS / (n - p)
        let n = 40;
        let mut g = DMatrix::zeros(n, 3);
        g.view_mut((0, 0), (n, 1)).copy_from(data.x());
        g.view_mut((0, 1), (n, 2)).copy_from(data.z());
        let gtg = g.transpose() * &g;
        let coef = gtg
            .clone()
            .cholesky()
            .unwrap()
            .solve(&(g.transpose() * data.y()));
        let resid = data.y() - &g * &coef;
        let sigma2 = resid.norm_squared() / (n as f64 - 3.0);
        let cov = gtg.cholesky().unwrap().inverse() * sigma2;

        assert_relative_eq!(res.beta_hat[0], coef[0], max_relative = 1e-10);
        assert_relative_eq!(res.se[0], cov[(0, 0)].sqrt(), max_relative = 1e-10);
        assert_relative_eq!(res.phi_hat, sigma2, max_relative = 1e-10);
    }

    #[test]
    fn zero_residuals_make_the_meat_singular() {
        // y exactly linear in (X, Z)
        let n = 12;
        let x = DMatrix::from_fn(n, 1, |i, _| (i as f64 * 0.31).sin());
        let z = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 / 6.0 });
        let y = DVector::from_fn(n, |i, _| 2.0 * x[(i, 0)] + 1.0 + 0.5 * z[(i, 1)]);
        let data = DesignData::new(y, x, z, DVector::zeros(1)).unwrap();
        match wald_test(&data, &Family::gaussian(), CovarianceKind::SandwichHc0, 0.05) {
            Err(Error::Singular(msg)) => assert!(msg.contains("meat"), "{msg}"),
            other => panic!("expected singular meat, got {other:?}"),
        }
    }

    #[test]
    fn wald_z_is_invariant_to_nuisance_column_rescaling() {
        let data = homoskedastic_gaussian(60, 7);
        let base = wald_test(&data, &Family::gaussian(), CovarianceKind::ModelBased, 0.05).unwrap();
        let mut z_scaled = data.z().clone();
        for i in 0..60 {
            z_scaled[(i, 1)] *= 250.0;
        }
        let data2 = DesignData::new(
            data.y().clone(),
            data.x().clone(),
            z_scaled,
            DVector::zeros(1),
        )
        .unwrap();
        let scaled =
            wald_test(&data2, &Family::gaussian(), CovarianceKind::ModelBased, 0.05).unwrap();
        assert_relative_eq!(base.z[0], scaled.z[0], max_relative = 1e-9);
    }

    #[test]
    fn sandwich_and_model_based_converge_under_homoskedasticity() {
        let mut prev = f64::INFINITY;
        for (n, seed) in [(100usize, 11u64), (1000, 12), (10000, 13)] {
            let data = homoskedastic_gaussian(n, seed);
            let mb =
                wald_test(&data, &Family::gaussian(), CovarianceKind::ModelBased, 0.05).unwrap();
            let sw =
                wald_test(&data, &Family::gaussian(), CovarianceKind::SandwichHc0, 0.05).unwrap();
            let num = (&mb.cov_beta - &sw.cov_beta).norm();
            let den = mb.cov_beta.norm();
            let rel = num / den;
            assert!(rel < prev, "relative difference {rel} not below {prev} at n={n}");
            prev = rel;
        }
    }

    #[test]
    fn hc3_inflates_hc0() {
        let data = homoskedastic_gaussian(50, 21);
        let hc0 =
            wald_test(&data, &Family::gaussian(), CovarianceKind::SandwichHc0, 0.05).unwrap();
        let hc3 =
            wald_test(&data, &Family::gaussian(), CovarianceKind::SandwichHc3, 0.05).unwrap();
        assert!(hc3.se[0] >= hc0.se[0]);
    }

    #[test]
    fn p_values_stay_in_unit_interval() {
        let data = homoskedastic_gaussian(80, 31);
        for kind in [
            CovarianceKind::ModelBased,
            CovarianceKind::SandwichHc0,
            CovarianceKind::SandwichHc3,
        ] {
            let res = wald_test(&data, &Family::gaussian(), kind, 0.05).unwrap();
            assert!(res.p_value > 0.0 && res.p_value <= 1.0);
            assert!(res.se[0] > 0.0);
        }
    }
}
