//! Data-generating processes for the Monte Carlo study.
//!
//! Covariates: the target x and three nuisance covariates are jointly normal
//! with unit variances, corr(x, z1) = 0.5, corr(x, z2) = corr(x, z3) = 0.1,
//! and the z's mutually uncorrelated. Nuisance coefficients are zero and the
//! intercept is log(2) for count families and 0 otherwise, so the linear
//! predictor is `intercept + beta * x`. The fitted nuisance design is
//! `[1, z1, z2, z3]`. The two-group process replaces the covariates with a
//! Bernoulli(1/3) group indicator and an intercept-only nuisance design.

use crate::error::{Error, Result};
use crate::glm::{DesignData, Family};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dgp {
    /// Poisson(exp(log 2)) response, Poisson fit: correctly specified null.
    PoissonCorrect,
    /// Bernoulli(1/2) response, logistic fit: correctly specified null.
    LogisticCorrect,
    /// Gaussian with var(y_i) = 4 z1_i^2, homoskedastic gaussian fit.
    GaussianHeteroNuisance,
    /// Gaussian with var(y_i) = 4 x_i^2, homoskedastic gaussian fit.
    GaussianHeteroTarget,
    /// Negative binomial truth (dispersion 1), Poisson fit.
    PoissonFitsNegbin,
    /// Two groups (2/3 and 1/3) with dispersions 0.4 and 1, common-dispersion
    /// negative binomial fit of the group contrast.
    NegbinTwoGroupUnequalDispersion,
    /// Poisson with beta != 0: power setting.
    PoissonPower,
    /// Homoskedastic gaussian with beta != 0: power setting.
    GaussianPower,
}

impl Dgp {
    pub const ALL: [Dgp; 8] = [
        Dgp::PoissonCorrect,
        Dgp::LogisticCorrect,
        Dgp::GaussianHeteroNuisance,
        Dgp::GaussianHeteroTarget,
        Dgp::PoissonFitsNegbin,
        Dgp::NegbinTwoGroupUnequalDispersion,
        Dgp::PoissonPower,
        Dgp::GaussianPower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dgp::PoissonCorrect => "poisson_correct",
            Dgp::LogisticCorrect => "logistic_correct",
            Dgp::GaussianHeteroNuisance => "gaussian_hetero_nuisance",
            Dgp::GaussianHeteroTarget => "gaussian_hetero_target",
            Dgp::PoissonFitsNegbin => "poisson_fits_negbin",
            Dgp::NegbinTwoGroupUnequalDispersion => "negbin_two_group_unequal_dispersion",
            Dgp::PoissonPower => "poisson_power",
            Dgp::GaussianPower => "gaussian_power",
        }
    }

    /// Default true target coefficient: 0 for the type-I settings, 0.3 and 1
    /// for the Poisson and gaussian power settings.
    pub fn default_beta(self) -> f64 {
        match self {
            Dgp::PoissonPower => 0.3,
            Dgp::GaussianPower => 1.0,
            _ => 0.0,
        }
    }

    /// The model fitted to the generated data.
    pub fn fitted_family(self) -> Family {
        match self {
            Dgp::PoissonCorrect | Dgp::PoissonFitsNegbin | Dgp::PoissonPower => Family::poisson(),
            Dgp::LogisticCorrect => Family::binomial(),
            Dgp::GaussianHeteroNuisance | Dgp::GaussianHeteroTarget | Dgp::GaussianPower => {
                Family::gaussian()
            }
            Dgp::NegbinTwoGroupUnequalDispersion => {
                Family::negative_binomial(1.0).expect("positive dispersion")
            }
        }
    }

    /// One-line description of the generator conventions, for run metadata.
    pub fn conventions(self) -> String {
        match self {
            Dgp::NegbinTwoGroupUnequalDispersion => {
                "group ~ Bernoulli(1/3) indicator as target; intercept log(2); \
                 dispersions 0.4 (majority) and 1 (minority); nuisance = intercept only"
                    .to_string()
            }
            _ => format!(
                "x, z multivariate normal, corr(x, z) = (0.5, 0.1, 0.1), z mutually \
                 uncorrelated; gamma = 0; intercept {}; nuisance = [1, z1, z2, z3]",
                match self {
                    Dgp::PoissonCorrect | Dgp::PoissonFitsNegbin | Dgp::PoissonPower =>
                        "log(2)",
                    _ => "0",
                }
            ),
        }
    }
}

impl FromStr for Dgp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dgp::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Dgp::ALL.iter().map(|d| d.name()).collect();
                Error::Config(format!(
                    "unknown data-generating process '{s}'; valid names: {}",
                    names.join(", ")
                ))
            })
    }
}

impl fmt::Display for Dgp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A simulated dataset plus the true per-observation variances (the
/// quantity the putative model may get wrong).
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub data: DesignData,
    pub family: Family,
    pub true_variance: Vec<f64>,
}

/// Draws one replicate. Deterministic in (dgp, beta_true, n, seed).
pub fn generate_dataset(dgp: Dgp, beta_true: f64, n: usize, seed: u64) -> Result<GeneratedData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match dgp {
        Dgp::NegbinTwoGroupUnequalDispersion => generate_two_group(beta_true, n, &mut rng),
        _ => generate_regression(dgp, beta_true, n, &mut rng),
    }
}

fn generate_regression(
    dgp: Dgp,
    beta_true: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GeneratedData> {
    // x = 0.5 z1 + 0.1 z2 + 0.1 z3 + sqrt(0.73) e keeps unit variance and the
    // requested correlations.
    let resid_sd = (1.0 - 0.25 - 0.01 - 0.01f64).sqrt();
    let mut x = DMatrix::zeros(n, 1);
    let mut z = DMatrix::zeros(n, 4);
    for i in 0..n {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let z3: f64 = StandardNormal.sample(rng);
        let e: f64 = StandardNormal.sample(rng);
        z[(i, 0)] = 1.0;
        z[(i, 1)] = z1;
        z[(i, 2)] = z2;
        z[(i, 3)] = z3;
        x[(i, 0)] = 0.5 * z1 + 0.1 * z2 + 0.1 * z3 + resid_sd * e;
    }

    let intercept = match dgp {
        Dgp::PoissonCorrect | Dgp::PoissonFitsNegbin | Dgp::PoissonPower => 2.0f64.ln(),
        _ => 0.0,
    };

    let mut y = DVector::zeros(n);
    let mut true_variance = vec![0.0; n];
    for i in 0..n {
        let eta = intercept + beta_true * x[(i, 0)];
        match dgp {
            Dgp::PoissonCorrect | Dgp::PoissonPower => {
                let mu = eta.exp();
                y[i] = sample_poisson(rng, mu);
                true_variance[i] = mu;
            }
            Dgp::PoissonFitsNegbin => {
                let mu = eta.exp();
                y[i] = sample_negative_binomial(rng, mu, 1.0);
                true_variance[i] = mu + mu * mu;
            }
            Dgp::LogisticCorrect => {
                let p = 1.0 / (1.0 + (-eta).exp());
                y[i] = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
                true_variance[i] = p * (1.0 - p);
            }
            Dgp::GaussianHeteroNuisance => {
                let sd = 2.0 * z[(i, 1)].abs();
                let e: f64 = StandardNormal.sample(rng);
                y[i] = eta + sd * e;
                true_variance[i] = sd * sd;
            }
            Dgp::GaussianHeteroTarget => {
                let sd = 2.0 * x[(i, 0)].abs();
                let e: f64 = StandardNormal.sample(rng);
                y[i] = eta + sd * e;
                true_variance[i] = sd * sd;
            }
            Dgp::GaussianPower => {
                let e: f64 = StandardNormal.sample(rng);
                y[i] = eta + e;
                true_variance[i] = 1.0;
            }
            Dgp::NegbinTwoGroupUnequalDispersion => unreachable!(),
        }
    }

    let data = DesignData::new(y, x, z, DVector::zeros(1))?;
    Ok(GeneratedData {
        data,
        family: dgp.fitted_family(),
        true_variance,
    })
}

fn generate_two_group(beta_true: f64, n: usize, rng: &mut ChaCha8Rng) -> Result<GeneratedData> {
    let mut x = DMatrix::zeros(n, 1);
    let z = DMatrix::from_element(n, 1, 1.0);
    let mut y = DVector::zeros(n);
    let mut true_variance = vec![0.0; n];
    let intercept = 2.0f64.ln();
    for i in 0..n {
        // minority group (probability 1/3) carries the larger dispersion
        let minority = rng.gen::<f64>() < 1.0 / 3.0;
        let (indicator, phi) = if minority { (1.0, 1.0) } else { (0.0, 0.4) };
        x[(i, 0)] = indicator;
        let mu = (intercept + beta_true * indicator).exp();
        y[i] = sample_negative_binomial(rng, mu, phi);
        true_variance[i] = mu + phi * mu * mu;
    }
    let data = DesignData::new(y, x, z, DVector::zeros(1))?;
    Ok(GeneratedData {
        data,
        family: Dgp::NegbinTwoGroupUnequalDispersion.fitted_family(),
        true_variance,
    })
}

fn sample_poisson(rng: &mut ChaCha8Rng, mu: f64) -> f64 {
    if mu < 1e-300 {
        return 0.0;
    }
    Poisson::new(mu).expect("positive mean").sample(rng)
}

/// Gamma-Poisson mixture: lambda ~ Gamma(1/phi, phi*mu), y ~ Poisson(lambda)
/// gives mean mu and variance mu + phi mu^2.
fn sample_negative_binomial(rng: &mut ChaCha8Rng, mu: f64, phi: f64) -> f64 {
    let shape = 1.0 / phi;
    let scale = phi * mu;
    let lambda = Gamma::new(shape, scale).expect("valid gamma").sample(rng);
    sample_poisson(rng, lambda)
}
