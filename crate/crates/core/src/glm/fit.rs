//! Null-model and full-model fitting by iteratively reweighted least squares.
//!
//! The null fit maximizes the putative log-likelihood over the nuisance
//! coefficients with `X beta0` fixed as an offset. Stopping rule: relative
//! deviance change below 1e-10 or 50 iterations, with up to 10 step halvings
//! whenever a step increases the deviance. For the negative binomial family a
//! common dispersion is re-estimated between IRLS passes from the Pearson
//! moment equation, alternating until the relative dispersion change drops
//! below 1e-8.

use super::{DesignData, Family, FamilyKind, Link, ETA_CLAMP};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

const MAX_IRLS: usize = 50;
const MAX_HALVINGS: usize = 10;
const MAX_OUTER: usize = 50;
const DEVIANCE_RTOL: f64 = 1e-10;
const PHI_RTOL: f64 = 1e-8;
const PHI_MIN: f64 = 1e-8;

/// Fitted null model: nuisance coefficients with the target offset fixed,
/// plus every per-observation diagonal factor the score engine needs.
#[derive(Debug, Clone)]
pub struct NullFit {
    /// Nuisance coefficients (length q).
    pub gamma_hat: DVector<f64>,
    /// Fitted means.
    pub mu_hat: DVector<f64>,
    /// Fitted linear predictor (offset + Z gamma_hat).
    pub eta_hat: DVector<f64>,
    /// dmu/deta at the fit.
    pub d_diag: DVector<f64>,
    /// Working variances var(y_i) under the putative model.
    pub v_diag: DVector<f64>,
    /// d_i^2 / v_i.
    pub w_diag: DVector<f64>,
    /// Estimated common dispersion: RSS/(n-q) for gaussian, the moment
    /// estimate for negative binomial, 1 when the family fixes it.
    pub phi_hat: f64,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    /// Deviance after each accepted IRLS step (non-increasing).
    pub deviance_trace: Vec<f64>,
    /// Whether the linear predictor hit the +/-30 clamp during fitting.
    pub eta_clamped: bool,
}

/// Full (alternative) model fit with both target and nuisance columns free;
/// used by the Wald comparators.
#[derive(Debug, Clone)]
pub struct FullFit {
    /// Coefficients ordered as (beta, gamma), length d + q.
    pub coef: DVector<f64>,
    pub mu_hat: DVector<f64>,
    pub eta_hat: DVector<f64>,
    pub d_diag: DVector<f64>,
    pub v_diag: DVector<f64>,
    pub w_diag: DVector<f64>,
    pub phi_hat: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Fits the null model for `data` under `family`.
pub fn fit_null(data: &DesignData, family: &Family) -> Result<NullFit> {
    family.validate_response(data.y())?;
    let offset = data.offset();
    let fitted = fit_design(data.y(), data.z(), &offset, family)?;
    let (d_diag, v_diag, w_diag, phi_hat) =
        diagonal_factors(family, data.y(), &fitted, data.q())?;
    let fit = NullFit {
        gamma_hat: fitted.coef,
        mu_hat: fitted.mu,
        eta_hat: fitted.eta,
        d_diag,
        v_diag,
        w_diag,
        phi_hat,
        converged: fitted.converged,
        iterations: fitted.iterations,
        deviance: fitted.deviance,
        deviance_trace: fitted.trace,
        eta_clamped: fitted.clamped,
    };
    if !fit.converged {
        return Err(Error::NonConvergence {
            iterations: fit.iterations,
            deviance: fit.deviance,
            last: Box::new(fit),
        });
    }
    Ok(fit)
}

/// Fits the full model (X and Z both free) for the Wald comparators.
pub fn fit_full(data: &DesignData, family: &Family) -> Result<FullFit> {
    family.validate_response(data.y())?;
    let n = data.n();
    let p = data.d() + data.q();
    let mut design = DMatrix::zeros(n, p);
    design
        .view_mut((0, 0), (n, data.d()))
        .copy_from(data.x());
    design
        .view_mut((0, data.d()), (n, data.q()))
        .copy_from(data.z());
    let offset = DVector::zeros(n);
    let fitted = fit_design(data.y(), &design, &offset, family)?;
    if !fitted.converged {
        let (d_diag, v_diag, w_diag, phi_hat) = diagonal_factors(family, data.y(), &fitted, p)?;
        let as_null = NullFit {
            gamma_hat: fitted.coef.clone(),
            mu_hat: fitted.mu,
            eta_hat: fitted.eta,
            d_diag,
            v_diag,
            w_diag,
            phi_hat,
            converged: false,
            iterations: fitted.iterations,
            deviance: fitted.deviance,
            deviance_trace: fitted.trace,
            eta_clamped: fitted.clamped,
        };
        return Err(Error::NonConvergence {
            iterations: as_null.iterations,
            deviance: as_null.deviance,
            last: Box::new(as_null),
        });
    }
    let (d_diag, v_diag, w_diag, phi_hat) = diagonal_factors(family, data.y(), &fitted, p)?;
    Ok(FullFit {
        coef: fitted.coef,
        mu_hat: fitted.mu,
        eta_hat: fitted.eta,
        d_diag,
        v_diag,
        w_diag,
        phi_hat,
        converged: true,
        iterations: fitted.iterations,
    })
}

struct RawFit {
    coef: DVector<f64>,
    eta: DVector<f64>,
    mu: DVector<f64>,
    deviance: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    clamped: bool,
    /// Negative binomial common dispersion after alternation; 1 otherwise.
    nb_phi: f64,
}

/// Dispatches on the family: plain IRLS, or IRLS alternated with a moment
/// update of the negative binomial dispersion.
fn fit_design(
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    offset: &DVector<f64>,
    family: &Family,
) -> Result<RawFit> {
    match family.kind() {
        FamilyKind::NegativeBinomial { dispersion } => {
            let df = y.len().saturating_sub(design.ncols()).max(1) as f64;
            let mut phi = dispersion;
            let mut total_iter = 0;
            let mut last: Option<RawFit> = None;
            for _ in 0..MAX_OUTER {
                let mut fit = irls(y, design, offset, family, phi)?;
                total_iter += fit.iterations;
                let phi_new = pearson_dispersion(y, &fit.mu, df);
                let done = (phi_new - phi).abs() <= PHI_RTOL * phi.abs().max(PHI_MIN);
                phi = phi_new;
                if done {
                    fit.nb_phi = phi;
                    fit.iterations = total_iter;
                    return Ok(fit);
                }
                last = Some(fit);
            }
            let mut fit = last.expect("at least one alternation pass ran");
            fit.nb_phi = phi;
            fit.iterations = total_iter;
            fit.converged = false;
            Ok(fit)
        }
        _ => irls(y, design, offset, family, 1.0),
    }
}

/// One IRLS run at a fixed dispersion.
fn irls(
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    offset: &DVector<f64>,
    family: &Family,
    nb_phi: f64,
) -> Result<RawFit> {
    let n = y.len();
    let k = design.ncols();
    let link = family.link();

    if k == 0 {
        // No free coefficients: the fit is the offset itself.
        let mut clamped = false;
        let eta = DVector::from_fn(n, |i, _| {
            let e = link.clamp_eta(offset[i]);
            if e != offset[i] {
                clamped = true;
            }
            e
        });
        let mu = eta.map(|e| link.inverse(e));
        let deviance = deviance(family, nb_phi, y, &mu);
        check_boundary(link, &eta)?;
        return Ok(RawFit {
            coef: DVector::zeros(0),
            eta,
            mu,
            deviance,
            trace: vec![deviance],
            iterations: 0,
            converged: true,
            clamped,
            nb_phi,
        });
    }

    let mut mu = initial_mu(family, y);
    let mut eta = mu.map(|m| link.clamp_eta(link.eval(m)));
    mu = eta.map(|e| link.inverse(e));
    let mut coef: Option<DVector<f64>> = None;
    let mut dev_prev = f64::INFINITY;
    let mut trace = Vec::new();
    let mut clamped = false;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=MAX_IRLS {
        iterations = iter;
        // Working weights and response at the current iterate.
        let mut w = DVector::zeros(n);
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let d = family.mean_derivative(eta[i])?;
            let v = working_variance(family, nb_phi, mu[i]);
            if !(v > 0.0 && v.is_finite() && d.is_finite()) {
                return Err(Error::Domain(format!(
                    "working variance or derivative degenerate at observation {i} (v = {v}, d = {d})"
                )));
            }
            w[i] = d * d / v;
            z[i] = (eta[i] - offset[i]) + (y[i] - mu[i]) / d;
        }
        let (gtwg, gtwz) = weighted_normal_equations(design, &w, &z);
        let chol = nalgebra::Cholesky::new(gtwg).ok_or_else(|| {
            Error::RankDeficient("weighted nuisance design is rank deficient".into())
        })?;
        let candidate = chol.solve(&gtwz);

        // Step halving toward the previous accepted coefficients.
        let tol = DEVIANCE_RTOL * (dev_prev.abs().min(f64::MAX) + DEVIANCE_RTOL);
        let mut accepted = None;
        let mut lambda = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let c_try = match &coef {
                None => candidate.clone(),
                Some(prev) => prev + (&candidate - prev) * lambda,
            };
            let mut step_clamped = false;
            let eta_try = DVector::from_fn(n, |i, _| {
                let raw = offset[i] + design.row(i).transpose().dot(&c_try);
                let e = link.clamp_eta(raw);
                if e != raw {
                    step_clamped = true;
                }
                e
            });
            let mu_try = eta_try.map(|e| link.inverse(e));
            let dev_try = deviance(family, nb_phi, y, &mu_try);
            if coef.is_none() || dev_try <= dev_prev + tol {
                accepted = Some((c_try, eta_try, mu_try, dev_try, step_clamped));
                break;
            }
            lambda *= 0.5;
        }
        let Some((c, e, m, dv, step_clamped)) = accepted else {
            break; // halvings exhausted, deviance still increasing
        };
        coef = Some(c);
        eta = e;
        mu = m;
        clamped |= step_clamped;
        trace.push(dv);
        let delta = (dev_prev - dv).abs();
        let done = dev_prev.is_finite() && delta <= DEVIANCE_RTOL * (dv.abs() + DEVIANCE_RTOL);
        dev_prev = dv;
        if done {
            converged = true;
            break;
        }
    }

    if converged {
        check_boundary(link, &eta)?;
    }
    Ok(RawFit {
        coef: coef.unwrap_or_else(|| DVector::zeros(k)),
        eta,
        mu,
        deviance: dev_prev,
        trace,
        iterations,
        converged,
        clamped,
        nb_phi,
    })
}

/// n-free accumulation of the weighted normal equations.
fn weighted_normal_equations(
    design: &DMatrix<f64>,
    w: &DVector<f64>,
    z: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = design.nrows();
    let k = design.ncols();
    let mut gtwg = DMatrix::zeros(k, k);
    let mut gtwz = DVector::zeros(k);
    for i in 0..n {
        let wi = w[i];
        let row = design.row(i);
        for a in 0..k {
            let ga = row[a] * wi;
            gtwz[a] += ga * z[i];
            for b in a..k {
                gtwg[(a, b)] += ga * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gtwg[(a, b)] = gtwg[(b, a)];
        }
    }
    (gtwg, gtwz)
}

/// Error out when the converged fit sits on the linear-predictor bound, which
/// for log/logit links means the fitted means are pinned at their range
/// boundary (perfect separation and the like).
fn check_boundary(link: Link, eta: &DVector<f64>) -> Result<()> {
    if link == Link::Identity {
        return Ok(());
    }
    if eta.iter().any(|e| e.abs() >= ETA_CLAMP - 1e-8) {
        return Err(Error::PerfectSeparation(
            "fitted means pinned at the boundary of their valid range".into(),
        ));
    }
    Ok(())
}

fn initial_mu(family: &Family, y: &DVector<f64>) -> DVector<f64> {
    match family.kind() {
        FamilyKind::Gaussian => y.clone(),
        FamilyKind::Poisson | FamilyKind::NegativeBinomial { .. } => {
            let m = (y.sum() / y.len() as f64).max(0.1);
            y.map(|yi| ((yi + m) / 2.0).max(1e-3))
        }
        FamilyKind::Binomial => y.map(|yi| (yi + 0.5) / 2.0),
    }
}

/// Variance of y at mean `mu` under the putative model, with the negative
/// binomial using the current common dispersion.
fn working_variance(family: &Family, nb_phi: f64, mu: f64) -> f64 {
    match family.kind() {
        FamilyKind::Gaussian => 1.0,
        FamilyKind::Poisson => mu,
        FamilyKind::Binomial => mu * (1.0 - mu),
        FamilyKind::NegativeBinomial { .. } => mu + nb_phi * mu * mu,
    }
}

fn deviance(family: &Family, nb_phi: f64, y: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    let mut dev = 0.0;
    for i in 0..y.len() {
        let (yi, mi) = (y[i], mu[i]);
        dev += match family.kind() {
            FamilyKind::Gaussian => (yi - mi) * (yi - mi),
            FamilyKind::Poisson => {
                let t = if yi > 0.0 { yi * (yi / mi).ln() } else { 0.0 };
                2.0 * (t - (yi - mi))
            }
            FamilyKind::Binomial => {
                let a = if yi > 0.0 { yi * (yi / mi).ln() } else { 0.0 };
                let b = if yi < 1.0 {
                    (1.0 - yi) * ((1.0 - yi) / (1.0 - mi)).ln()
                } else {
                    0.0
                };
                2.0 * (a + b)
            }
            FamilyKind::NegativeBinomial { .. } => {
                let theta = 1.0 / nb_phi;
                let a = if yi > 0.0 { yi * (yi / mi).ln() } else { 0.0 };
                2.0 * (a - (yi + theta) * ((yi + theta) / (mi + theta)).ln())
            }
        };
    }
    dev
}

/// Solves the Pearson moment equation
/// `sum (y_i - mu_i)^2 / (mu_i + phi mu_i^2) = df` for the common dispersion.
/// The left side is strictly decreasing in phi; if even phi = 0 leaves it at
/// or below `df` (no overdispersion relative to Poisson) the estimate is
/// floored at a small positive value.
fn pearson_dispersion(y: &DVector<f64>, mu: &DVector<f64>, df: f64) -> f64 {
    let pearson = |phi: f64| -> f64 {
        let mut s = 0.0;
        for i in 0..y.len() {
            let r = y[i] - mu[i];
            s += r * r / (mu[i] + phi * mu[i] * mu[i]);
        }
        s
    };
    if pearson(0.0) <= df {
        return PHI_MIN;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut grow = 0;
    while pearson(hi) > df && grow < 60 {
        lo = hi;
        hi *= 2.0;
        grow += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if pearson(mid) > df {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-12 * hi.max(1.0) {
            break;
        }
    }
    (0.5 * (lo + hi)).max(PHI_MIN)
}

/// (D, V, W, dispersion) at a converged fit.
type DiagonalFactors = (DVector<f64>, DVector<f64>, DVector<f64>, f64);

/// Evaluates D, V, W, and the reported dispersion at a converged fit.
/// Gaussian working variances carry the common scale RSS/(n-k); the sign-flip
/// test is invariant to that scale, so any positive convention would do, but
/// this one standardizes the residuals to unit variance.
fn diagonal_factors(
    family: &Family,
    y: &DVector<f64>,
    fit: &RawFit,
    k: usize,
) -> Result<DiagonalFactors> {
    let n = y.len();
    let mut d_diag = DVector::zeros(n);
    for i in 0..n {
        d_diag[i] = family.mean_derivative(fit.eta[i])?;
    }
    let (v_diag, phi_hat) = match family.kind() {
        FamilyKind::Gaussian => {
            let rss: f64 = (0..n).map(|i| (y[i] - fit.mu[i]).powi(2)).sum();
            let df = (n - k).max(1) as f64;
            let phi = rss / df;
            let v = if phi > f64::MIN_POSITIVE { phi } else { 1.0 };
            (DVector::from_element(n, v), phi)
        }
        FamilyKind::Poisson => (fit.mu.clone(), 1.0),
        FamilyKind::Binomial => (fit.mu.map(|m| m * (1.0 - m)), 1.0),
        FamilyKind::NegativeBinomial { .. } => {
            let phi = fit.nb_phi;
            (fit.mu.map(|m| m + phi * m * m), phi)
        }
    };
    let mut w_diag = DVector::zeros(n);
    for i in 0..n {
        let v = v_diag[i];
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!(
                "working variance degenerate at observation {i} (v = {v})"
            )));
        }
        w_diag[i] = d_diag[i] * d_diag[i] / v;
        if !(w_diag[i] > 0.0 && w_diag[i].is_finite()) {
            return Err(Error::Domain(format!(
                "working weight degenerate at observation {i}"
            )));
        }
    }
    Ok((d_diag, v_diag, w_diag, phi_hat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn poisson_intercept_only() -> DesignData {
        // beta0 = 0 makes the target an all-zero offset, so the null fit is
        // the intercept-only Poisson MLE.
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, -1.0]);
        let z = DMatrix::from_element(3, 1, 1.0);
        DesignData::new(y, x, z, DVector::zeros(1)).unwrap()
    }

    #[test]
    fn intercept_only_poisson_fits_sample_mean() {
        let fit = fit_null(&poisson_intercept_only(), &Family::poisson()).unwrap();
        for i in 0..3 {
            assert_relative_eq!(fit.mu_hat[i], 2.0, max_relative = 1e-9);
        }
        assert!(fit.converged);
    }

    #[test]
    fn intercept_only_logistic_fits_half() {
        let y = DVector::from_vec(vec![0.0, 1.0, 0.0, 1.0]);
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 0.0, -1.0, 0.5]);
        let z = DMatrix::from_element(4, 1, 1.0);
        let data = DesignData::new(y, x, z, DVector::zeros(1)).unwrap();
        let fit = fit_null(&data, &Family::binomial()).unwrap();
        for i in 0..4 {
            assert_relative_eq!(fit.mu_hat[i], 0.5, epsilon = 1e-9);
            assert!(fit.eta_hat[i].abs() < 1e-8);
        }
    }

    #[test]
    fn gaussian_null_matches_dense_least_squares_oracle() {
        // Independent oracle: solve the normal equations densely with an SVD.
        let y = DVector::from_vec(vec![1.2, -0.4, 2.5, 3.1, 0.3, -1.7, 0.9, 2.2]);
        let x = DMatrix::from_column_slice(8, 1, &[0.5, -1.0, 2.0, 1.5, 0.0, -0.5, 1.0, 0.7]);
        let z = DMatrix::from_fn(8, 2, |i, j| if j == 0 { 1.0 } else { (i as f64) - 3.5 });
        let data = DesignData::new(y.clone(), x, z.clone(), DVector::zeros(1)).unwrap();
        let fit = fit_null(&data, &Family::gaussian()).unwrap();

        let oracle = z
            .clone()
            .svd(true, true)
            .solve(&y, 1e-14)
            .expect("oracle least squares");
        for j in 0..2 {
            assert_relative_eq!(fit.gamma_hat[j], oracle[j], max_relative = 1e-10);
        }
        // normal equations residual orthogonality
        let resid = &y - &fit.mu_hat;
        let zt_r = z.transpose() * &resid;
        for j in 0..2 {
            assert!(zt_r[j].abs() < 1e-10 * y.amax().max(1.0));
        }
        // phi_hat = RSS / (n - q)
        let rss: f64 = resid.iter().map(|r| r * r).sum();
        assert_relative_eq!(fit.phi_hat, rss / 6.0, max_relative = 1e-12);
    }

    #[test]
    fn nuisance_score_vanishes_at_the_fit() {
        let y = DVector::from_vec(vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]);
        let x = DMatrix::from_column_slice(8, 1, &[0.2, -0.3, 0.8, -1.2, 0.4, 1.1, -0.6, 0.1]);
        let z = DMatrix::from_fn(8, 2, |i, j| if j == 0 { 1.0 } else { ((i * i) % 5) as f64 });
        let data = DesignData::new(y.clone(), x, z.clone(), DVector::zeros(1)).unwrap();
        for family in [Family::poisson(), Family::negative_binomial(0.5).unwrap()] {
            let fit = fit_null(&data, &family).unwrap();
            for j in 0..2 {
                let mut s = 0.0;
                for i in 0..8 {
                    s += z[(i, j)] * fit.d_diag[i] / fit.v_diag[i] * (y[i] - fit.mu_hat[i]);
                }
                assert!(
                    s.abs() <= 1e-6 * y.amax(),
                    "score component {j} = {s} for {}",
                    family.kind().name()
                );
            }
        }
    }

    #[test]
    fn deviance_trace_is_non_increasing() {
        let y = DVector::from_vec(vec![0.0, 2.0, 1.0, 7.0, 3.0, 1.0, 0.0, 4.0, 2.0, 5.0]);
        let x = DMatrix::from_column_slice(10, 1, &[0.1, 0.9, -0.4, 1.8, 0.3, -0.2, -1.0, 1.2, 0.0, 1.5]);
        let z = DMatrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 / 10.0).sin() });
        let data = DesignData::new(y, x, z, DVector::zeros(1)).unwrap();
        let fit = fit_null(&data, &Family::poisson()).unwrap();
        for pair in fit.deviance_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-10 * (pair[0].abs() + 1.0));
        }
    }

    #[test]
    fn gaussian_fit_is_affine_equivariant() {
        let y = DVector::from_vec(vec![1.0, 4.0, 2.0, 8.0, 5.0, 7.0]);
        let x = DMatrix::from_column_slice(6, 1, &[0.3, -0.8, 1.4, 0.2, -0.5, 0.9]);
        let z = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let data = DesignData::new(y.clone(), x.clone(), z.clone(), DVector::zeros(1)).unwrap();
        let fit = fit_null(&data, &Family::gaussian()).unwrap();

        let c = 3.7;
        let scaled = DesignData::new(&y * c, &x * c, &z * c, DVector::zeros(1)).unwrap();
        let fit_c = fit_null(&scaled, &Family::gaussian()).unwrap();
        for i in 0..6 {
            assert_relative_eq!(fit_c.mu_hat[i] / c, fit.mu_hat[i], max_relative = 1e-10);
        }
    }

    #[test]
    fn separation_is_reported() {
        // y perfectly ordered by the nuisance covariate.
        let n = 12;
        let y = DVector::from_fn(n, |i, _| if i < 6 { 0.0 } else { 1.0 });
        let x = DMatrix::from_fn(n, 1, |i, _| ((i * 7) % 5) as f64 - 2.0);
        let z = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 - 5.5 });
        let data = DesignData::new(y, x, z, DVector::zeros(1)).unwrap();
        match fit_null(&data, &Family::binomial()) {
            Err(Error::PerfectSeparation(_)) | Err(Error::NonConvergence { .. }) => {}
            other => panic!("expected separation failure, got {other:?}"),
        }
    }

    #[test]
    fn empty_nuisance_design_is_supported() {
        let y = DVector::from_vec(vec![1.0, 2.0, 4.0]);
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let z = DMatrix::zeros(3, 0);
        let data = DesignData::new(y, x, z, DVector::from_element(1, 0.5)).unwrap();
        let fit = fit_null(&data, &Family::poisson()).unwrap();
        assert_eq!(fit.gamma_hat.len(), 0);
        for i in 0..3 {
            assert_relative_eq!(fit.mu_hat[i], (0.5 * (i as f64 + 1.0)).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn negative_binomial_dispersion_recovers_overdispersion() {
        // Deterministic overdispersed counts around mean 4.
        let raw = [0.0, 9.0, 2.0, 14.0, 1.0, 6.0, 0.0, 12.0, 3.0, 7.0, 1.0, 10.0];
        let n = raw.len();
        let y = DVector::from_row_slice(&raw);
        let x = DMatrix::from_fn(n, 1, |i, _| ((i as f64) * 0.7).sin());
        let z = DMatrix::from_element(n, 1, 1.0);
        let data = DesignData::new(y, x, z, DVector::zeros(1)).unwrap();
        let fit = fit_null(&data, &Family::negative_binomial(1.0).unwrap()).unwrap();
        assert!(fit.phi_hat > 0.05, "phi_hat = {}", fit.phi_hat);
        // v = mu + phi mu^2 at the fit
        for i in 0..n {
            let m = fit.mu_hat[i];
            assert_relative_eq!(fit.v_diag[i], m + fit.phi_hat * m * m, max_relative = 1e-12);
        }
    }
}
