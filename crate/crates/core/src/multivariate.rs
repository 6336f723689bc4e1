//! Multivariate sign-flip test: jointly standardized score vectors combined
//! through a quadratic form.
//!
//! For a d-dimensional target the flipped score vector `S(f)` has the d x d
//! plug-in covariance
//!
//! ```text
//! V_f[j,k] = ( a_j^T a_k - (U^T (f.a_j))^T (U^T (f.a_k)) ) / n
//! ```
//!
//! (the `(f.a_j)^T (f.a_k)` cross term collapses to `a_j^T a_k` because the
//! signs square to one). The standardized vector is
//! `S*(f) = (phi_P V_f)^{-1/2} S(f)` with the inverse square root taken by
//! symmetric eigendecomposition, and the combined statistic is
//! `T*(f) = S*(f)^T M S*(f)` for a chosen PSD matrix `M`. The test is
//! one-sided in the upper tail of the T* values.

use crate::error::{Error, Result};
use crate::glm::{fit_null, DesignData, Family, NullFit};
use crate::score::{
    self, build_projection, decide, Alternative, FlipPlan, Projection, ScoreTestResult,
    TestDiagnostics, Variant,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Eigenvalues of V_f below `1e-10 * trace / d` are treated as degenerate.
const EIGEN_DEGENERATE_RTOL: f64 = 1e-10;
/// Floor applied to eigenvalues when forming the inverse square root.
const EIGEN_FLOOR_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineKind {
    Identity,
    /// Inverse of the identity-flip covariance of the standardized score
    /// vector. After standardization that covariance is the identity, so
    /// this coincides with [`CombineKind::Identity`] up to numerical floor.
    InverseScoreCovariance,
}

/// Symmetric positive semi-definite combination matrix for the quadratic
/// form.
#[derive(Debug, Clone)]
pub struct CombineMatrix {
    m: DMatrix<f64>,
    kind: CombineKind,
}

impl CombineMatrix {
    pub fn identity(d: usize) -> Self {
        CombineMatrix {
            m: DMatrix::identity(d, d),
            kind: CombineKind::Identity,
        }
    }

    /// Validates symmetry (1e-12 relative) and positive semi-definiteness
    /// (eigenvalues above -1e-10 relative to the largest).
    pub fn new(m: DMatrix<f64>, kind: CombineKind) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Config("combination matrix must be square".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        for i in 0..m.nrows() {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Config(
                        "combination matrix must be symmetric".into(),
                    ));
                }
            }
        }
        let eig = m.clone().symmetric_eigen();
        let max_ev = eig.eigenvalues.max().max(f64::MIN_POSITIVE);
        if eig.eigenvalues.iter().any(|&l| l < -1e-10 * max_ev) {
            return Err(Error::Config(
                "combination matrix must be positive semi-definite".into(),
            ));
        }
        Ok(CombineMatrix { m, kind })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn kind(&self) -> CombineKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }
}

/// Quadratic form `s*^T M s*`; nonnegative for PSD `M`.
pub fn combined_statistic(s_star: &DVector<f64>, m: &CombineMatrix) -> Result<f64> {
    if s_star.len() != m.dim() {
        return Err(Error::Config(format!(
            "dimension mismatch: score vector has {}, M is {}x{}",
            s_star.len(),
            m.dim(),
            m.dim()
        )));
    }
    Ok((s_star.transpose() * m.matrix() * s_star)[(0, 0)])
}

/// The d x d flip covariance of the score vector computed blockwise from the
/// factored projection (O(n q d + d^2 q) per flip).
pub(crate) fn flip_variance_matrix(proj: &Projection, flip: &[f64]) -> Result<DMatrix<f64>> {
    let d = proj.d();
    let q = proj.q();
    let n = proj.n() as f64;
    let mut m_cols = DMatrix::zeros(q, d);
    let mut buf = vec![0.0; q];
    for j in 0..d {
        proj.ut_flip_a(flip, j, &mut buf);
        for k in 0..q {
            m_cols[(k, j)] = buf[k];
        }
    }
    let mut v = DMatrix::zeros(d, d);
    for j in 0..d {
        for k in j..d {
            let cross: f64 = (0..q).map(|t| m_cols[(t, j)] * m_cols[(t, k)]).sum();
            let val = (proj.gram()[(j, k)] - cross) / n;
            v[(j, k)] = val;
            v[(k, j)] = val;
        }
    }
    Ok(v)
}

/// Inverse symmetric square root with a relative eigenvalue floor; errors
/// when an eigenvalue falls below the degeneracy threshold.
fn inverse_sqrt_psd(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = v.nrows();
    let eig = v.clone().symmetric_eigen();
    let trace: f64 = eig.eigenvalues.iter().sum();
    let threshold = EIGEN_DEGENERATE_RTOL * trace / d as f64;
    let max_ev = eig.eigenvalues.max();
    if eig.eigenvalues.iter().any(|&l| l < threshold) {
        return Err(Error::DegenerateVariance(
            "flip covariance of the score vector is numerically singular".into(),
        ));
    }
    let floor = EIGEN_FLOOR_RTOL * max_ev;
    let inv_sqrt = DVector::from_fn(d, |i, _| 1.0 / eig.eigenvalues[i].max(floor).sqrt());
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for j in 0..d {
        let s = inv_sqrt[j];
        for i in 0..d {
            scaled[(i, j)] *= s;
        }
    }
    Ok(&scaled * q.transpose())
}

/// Jointly standardized score vector `(phi_P V_f)^{-1/2} S(f)`. For d = 1
/// this reduces exactly to the univariate standardized statistic.
pub fn standardized_score_vector(
    proj: &Projection,
    fit: &NullFit,
    data: &DesignData,
    flip: &[f64],
) -> Result<DVector<f64>> {
    let r = score::standardized_residuals(fit, data);
    let gauge = score::pearson_gauge(&r, data.q());
    score::check_residual_degeneracy(fit, data, gauge)?;
    let eff = score::effective_score_with_residuals(proj, &r, flip);
    let v = flip_variance_matrix(proj, flip)? * gauge;
    let inv_sqrt = inverse_sqrt_psd(&v)?;
    Ok(inv_sqrt * eff)
}

/// Runs the multivariate sign-flip test: one-sided upper-tail comparison of
/// the combined statistics. d = 1 delegates to the univariate two-sided
/// standardized test, whose decisions coincide with the quadratic form's.
pub fn run_multivariate_test(
    data: &DesignData,
    family: &Family,
    plan: &FlipPlan,
    m: &CombineMatrix,
    alpha: f64,
) -> Result<ScoreTestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if data.d() == 1 {
        return score::run_univariate_test(
            data,
            family,
            plan,
            Variant::Standardized,
            Alternative::TwoSided,
            alpha,
        );
    }
    if m.dim() != data.d() {
        return Err(Error::Config(format!(
            "combination matrix is {}x{}, target has d = {}",
            m.dim(),
            m.dim(),
            data.d()
        )));
    }
    if plan.n() != data.n() {
        return Err(Error::Config(format!(
            "flip plan is for n = {}, data has n = {}",
            plan.n(),
            data.n()
        )));
    }
    let fit = fit_null(data, family)?;
    let proj = build_projection(&fit, data)?;
    let r = score::standardized_residuals(&fit, data);
    let gauge = score::pearson_gauge(&r, data.q());
    score::check_residual_degeneracy(&fit, data, gauge)?;

    let n = data.n();
    let g = plan.g();
    // per flip: (T*, S* vector, min and max diagonal of the flip covariance)
    type FlipEval = (f64, Vec<f64>, f64, f64);
    let evaluated: Result<Vec<FlipEval>> = (0..g)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, j| {
                plan.fill_signs(j, buf);
                let eff = score::effective_score_with_residuals(&proj, &r, buf);
                let v = flip_variance_matrix(&proj, buf)? * gauge;
                let inv_sqrt = inverse_sqrt_psd(&v)?;
                let s_star = inv_sqrt * eff;
                let t = combined_statistic(&s_star, m)?;
                let var_min = (0..data.d())
                    .map(|k| v[(k, k)] / gauge)
                    .fold(f64::INFINITY, f64::min);
                let var_max = (0..data.d())
                    .map(|k| v[(k, k)] / gauge)
                    .fold(f64::NEG_INFINITY, f64::max);
                Ok((t, s_star.iter().copied().collect(), var_min, var_max))
            },
        )
        .collect();
    let evaluated = evaluated?;

    let stats: Vec<f64> = evaluated.iter().map(|(t, ..)| *t).collect();
    let (p_value, reject) = decide(&stats, Alternative::Greater, alpha);
    let var_min = evaluated
        .iter()
        .map(|(_, _, lo, _)| *lo)
        .fold(f64::INFINITY, f64::min);
    let var_max = evaluated
        .iter()
        .map(|(_, _, _, hi)| *hi)
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(ScoreTestResult {
        stat_observed: stats[0],
        stat_vector_observed: Some(evaluated[0].1.clone()),
        stats_flipped: stats,
        p_value,
        reject,
        alpha,
        alternative: Alternative::Greater,
        variant: Variant::Standardized,
        g,
        diagnostics: TestDiagnostics {
            a_norm2: proj.a_norm2().iter().copied().collect(),
            flip_var_min: var_min,
            flip_var_max: var_max,
            dispersion_gauge: gauge,
            phi_hat: fit.phi_hat,
            fit_iterations: fit.iterations,
            eta_clamped: fit.eta_clamped,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::fit_null;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_case(n: usize, d: usize, seed: u64) -> (DesignData, NullFit) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || rng.gen::<f64>() * 2.0 - 1.0;
        let y = DVector::from_fn(n, |_, _| draw() * 1.5);
        let x = DMatrix::from_fn(n, d, |_, _| draw());
        let z = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { draw() });
        let data = DesignData::new(y, x, z, DVector::zeros(d)).unwrap();
        let fit = fit_null(&data, &Family::gaussian()).unwrap();
        (data, fit)
    }

    #[test]
    fn quadratic_form_basics() {
        let m = CombineMatrix::identity(2);
        assert_eq!(
            combined_statistic(&DVector::from_vec(vec![0.0, 0.0]), &m).unwrap(),
            0.0
        );
        assert_relative_eq!(
            combined_statistic(&DVector::from_vec(vec![3.0, 4.0]), &m).unwrap(),
            25.0
        );
        assert!(combined_statistic(&DVector::from_vec(vec![1.0]), &m).is_err());
    }

    #[test]
    fn combine_matrix_validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        assert!(CombineMatrix::new(asym, CombineKind::Identity).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(CombineMatrix::new(indef, CombineKind::Identity).is_err());
        let psd = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!(CombineMatrix::new(psd, CombineKind::Identity).is_ok());
    }

    #[test]
    fn scalar_case_reduces_to_univariate_standardized() {
        let (data, fit) = gaussian_case(20, 1, 5);
        let proj = build_projection(&fit, &data).unwrap();
        let flip: Vec<f64> = (0..20).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let joint = standardized_score_vector(&proj, &fit, &data, &flip).unwrap()[0];
        let single = score::standardized_statistic(&proj, &fit, &data, &flip).unwrap()[0];
        assert_relative_eq!(joint, single, max_relative = 1e-10);
    }

    #[test]
    fn identity_flip_covariance_is_gram_over_n() {
        let (data, _) = gaussian_case(30, 2, 9);
        let fit = fit_null(&data, &Family::gaussian()).unwrap();
        let proj = build_projection(&fit, &data).unwrap();
        let ones = vec![1.0; 30];
        let v = flip_variance_matrix(&proj, &ones).unwrap();
        for j in 0..2 {
            for k in 0..2 {
                assert_relative_eq!(v[(j, k)], proj.gram()[(j, k)] / 30.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn flip_covariance_matches_dense_oracle() {
        let (data, fit) = gaussian_case(30, 2, 11);
        let proj = build_projection(&fit, &data).unwrap();
        let dense = crate::oracle::build_dense(&fit, &data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let flip: Vec<f64> = (0..30)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let fast = flip_variance_matrix(&proj, &flip).unwrap();
            let slow = crate::oracle::dense_flip_variance_matrix(&dense, &fit, &data, &flip);
            for j in 0..2 {
                for k in 0..2 {
                    assert_relative_eq!(fast[(j, k)], slow[(j, k)], epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn standardized_vector_has_identity_plugin_covariance_at_identity_flip() {
        let (data, fit) = gaussian_case(40, 3, 21);
        let proj = build_projection(&fit, &data).unwrap();
        let ones = vec![1.0; 40];
        let r = score::standardized_residuals(&fit, &data);
        let gauge = score::pearson_gauge(&r, data.q());
        let v = flip_variance_matrix(&proj, &ones).unwrap() * gauge;
        let inv_sqrt = inverse_sqrt_psd(&v).unwrap();
        let cov_of_std = &inv_sqrt * &v * &inv_sqrt;
        for j in 0..3 {
            for k in 0..3 {
                let expected = if j == k { 1.0 } else { 0.0 };
                assert_relative_eq!(cov_of_std[(j, k)], expected, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn t_statistic_invariant_under_flip_negation() {
        let (data, fit) = gaussian_case(25, 2, 33);
        let proj = build_projection(&fit, &data).unwrap();
        let m = CombineMatrix::identity(2);
        let flip: Vec<f64> = (0..25).map(|i| if i % 4 == 0 { -1.0 } else { 1.0 }).collect();
        let neg: Vec<f64> = flip.iter().map(|v| -v).collect();
        let s1 = standardized_score_vector(&proj, &fit, &data, &flip).unwrap();
        let s2 = standardized_score_vector(&proj, &fit, &data, &neg).unwrap();
        let t1 = combined_statistic(&s1, &m).unwrap();
        let t2 = combined_statistic(&s2, &m).unwrap();
        assert_relative_eq!(t1, t2, max_relative = 1e-12);
    }

    #[test]
    fn orthogonal_targets_make_t_the_sum_of_squared_univariate_stats() {
        // Build X whose columns are exactly orthogonal after centering.
        let n = 16;
        let y = DVector::from_fn(n, |i, _| ((i as f64) * 0.83).sin() * 2.0);
        let x = DMatrix::from_fn(n, 2, |i, j| {
            if j == 0 {
                if i % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            } else if (i / 2) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        });
        let z = DMatrix::from_element(n, 1, 1.0);
        let data = DesignData::new(y, x, z, DVector::zeros(2)).unwrap();
        let fit = fit_null(&data, &Family::gaussian()).unwrap();
        let proj = build_projection(&fit, &data).unwrap();
        assert!(proj.gram()[(0, 1)].abs() < 1e-10);
        let ones = vec![1.0; n];
        let s_star = standardized_score_vector(&proj, &fit, &data, &ones).unwrap();
        let t = combined_statistic(&s_star, &CombineMatrix::identity(2)).unwrap();
        let per_column = score::standardized_statistic(&proj, &fit, &data, &ones).unwrap();
        assert_relative_eq!(
            t,
            per_column[0] * per_column[0] + per_column[1] * per_column[1],
            max_relative = 1e-10
        );
    }

    #[test]
    fn sign_symmetric_plan_gives_p_one() {
        let (data, _) = gaussian_case(24, 2, 44);
        let plan = FlipPlan::from_signs(vec![vec![1.0; 24], vec![-1.0; 24]]).unwrap();
        let res = run_multivariate_test(
            &data,
            &Family::gaussian(),
            &plan,
            &CombineMatrix::identity(2),
            0.05,
        )
        .unwrap();
        assert_eq!(res.p_value, 1.0);
        assert!(!res.reject);
    }

    #[test]
    fn t_invariant_under_common_rescaling_of_x() {
        let (data, _) = gaussian_case(30, 2, 55);
        let plan = FlipPlan::rademacher(64, 30, 17).unwrap();
        let m = CombineMatrix::identity(2);
        let base = run_multivariate_test(&data, &Family::gaussian(), &plan, &m, 0.05).unwrap();
        let scaled_x = data.x() * 4.0;
        let data2 = DesignData::new(
            data.y().clone(),
            scaled_x,
            data.z().clone(),
            DVector::zeros(2),
        )
        .unwrap();
        let scaled = run_multivariate_test(&data2, &Family::gaussian(), &plan, &m, 0.05).unwrap();
        for (a, b) in base.stats_flipped.iter().zip(&scaled.stats_flipped) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }
}
