//! Slow, obviously-correct dense reference implementations.
//!
//! These ship in the library (not just in test code) so the `selfcheck`
//! command can verify the fast paths on any machine: the dense hat matrix,
//! the effective score assembled from raw score and information blocks, the
//! dense flip-variance quadratic form, and exhaustive flip enumeration.
//! Everything here is O(n^2) or worse and guarded against large n.

use crate::error::{Error, Result};
use crate::glm::{DesignData, NullFit};
use nalgebra::{DMatrix, DVector};

/// Guard for accidental large-n use of the dense paths.
const MAX_DENSE_N: usize = 2000;

/// Dense hat matrix and the four Fisher information blocks evaluated at a
/// null fit.
#[derive(Debug, Clone)]
pub struct DenseModel {
    /// `H = W^{1/2} Z (Z^T W Z)^{-1} Z^T W^{1/2}` (n x n).
    pub h: DMatrix<f64>,
    /// `X^T W X` (d x d).
    pub i_bb: DMatrix<f64>,
    /// `X^T W Z` (d x q).
    pub i_bg: DMatrix<f64>,
    /// `Z^T W X` (q x d).
    pub i_gb: DMatrix<f64>,
    /// `Z^T W Z` (q x q).
    pub i_gg: DMatrix<f64>,
}

/// Builds the dense model at a fit. Errors on n > 2000 or singular
/// `Z^T W Z`.
pub fn build_dense(fit: &NullFit, data: &DesignData) -> Result<DenseModel> {
    let n = data.n();
    if n > MAX_DENSE_N {
        return Err(Error::Config(format!(
            "dense reference limited to n <= {MAX_DENSE_N}, got {n}"
        )));
    }
    let q = data.q();
    let d = data.d();
    let w = &fit.w_diag;
    let sqrt_w = w.map(f64::sqrt);

    let wx = DMatrix::from_fn(n, d, |i, j| w[i] * data.x()[(i, j)]);
    let wz = DMatrix::from_fn(n, q, |i, j| w[i] * data.z()[(i, j)]);
    let i_bb = data.x().transpose() * &wx;
    let i_bg = data.x().transpose() * &wz;
    let i_gb = i_bg.transpose();
    let i_gg = data.z().transpose() * &wz;

    let h = if q == 0 {
        DMatrix::zeros(n, n)
    } else {
        let inv = i_gg
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("Z^T W Z is singular".into()))?
            .inverse();
        let wz_half = DMatrix::from_fn(n, q, |i, j| sqrt_w[i] * data.z()[(i, j)]);
        &wz_half * inv * wz_half.transpose()
    };

    Ok(DenseModel {
        h,
        i_bb,
        i_bg,
        i_gb,
        i_gg,
    })
}

/// Effective score from raw blocks:
/// `n^{-1/2} (s_beta(F) - I_bg I_gg^{-1} s_gamma(F))` with
/// `s(F) = G^T D V^{-1} F (y - mu)`.
pub fn dense_effective_score(
    fit: &NullFit,
    data: &DesignData,
    flip: &[f64],
) -> Result<DVector<f64>> {
    let n = data.n();
    if n > MAX_DENSE_N {
        return Err(Error::Config(format!(
            "dense reference limited to n <= {MAX_DENSE_N}, got {n}"
        )));
    }
    if flip.len() != n {
        return Err(Error::Config("flip length mismatch".into()));
    }
    let dense = build_dense(fit, data)?;
    // flipped working residual D V^{-1} F (y - mu)
    let t = DVector::from_fn(n, |i, _| {
        fit.d_diag[i] / fit.v_diag[i] * flip[i] * (data.y()[i] - fit.mu_hat[i])
    });
    let s_beta = data.x().transpose() * &t;
    let scale = 1.0 / (n as f64).sqrt();
    if data.q() == 0 {
        return Ok(s_beta * scale);
    }
    let s_gamma = data.z().transpose() * &t;
    let solved = dense
        .i_gg
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("Z^T W Z is singular".into()))?
        .solve(&s_gamma);
    Ok((s_beta - &dense.i_bg * solved) * scale)
}

/// Projected target columns `a_j = (I - H) W^{1/2} X_j` computed densely.
pub fn dense_a_cols(dense: &DenseModel, fit: &NullFit, data: &DesignData) -> DMatrix<f64> {
    let n = data.n();
    let d = data.d();
    let sqrt_w = fit.w_diag.map(f64::sqrt);
    let b = DMatrix::from_fn(n, d, |i, j| sqrt_w[i] * data.x()[(i, j)]);
    &b - &dense.h * &b
}

/// The d x d flip-variance matrix `n^{-1} A^T F (I - H) F A` via the dense
/// hat matrix.
pub fn dense_flip_variance_matrix(
    dense: &DenseModel,
    fit: &NullFit,
    data: &DesignData,
    flip: &[f64],
) -> DMatrix<f64> {
    let n = data.n();
    let a = dense_a_cols(dense, fit, data);
    let fa = DMatrix::from_fn(n, data.d(), |i, j| flip[i] * a[(i, j)]);
    let hfa = &dense.h * &fa;
    (fa.transpose() * (&fa - hfa)) / n as f64
}

/// Scalar dense flip variance for target column `j`.
pub fn dense_flip_variance(
    dense: &DenseModel,
    fit: &NullFit,
    data: &DesignData,
    flip: &[f64],
    j: usize,
) -> f64 {
    dense_flip_variance_matrix(dense, fit, data, flip)[(j, j)]
}

/// All `2^n` sign vectors, identity first, in deterministic order (bit i of
/// the flip index selects -1 for observation i).
pub fn enumerate_flips(n: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 || n > 14 {
        return Err(Error::Config(format!(
            "exhaustive enumeration limited to 1 <= n <= 14, got {n}"
        )));
    }
    let g = 1usize << n;
    let mut flips = Vec::with_capacity(g);
    for k in 0..g {
        flips.push(
            (0..n)
                .map(|i| if (k >> i) & 1 == 1 { -1.0 } else { 1.0 })
                .collect(),
        );
    }
    Ok(flips)
}

/// Sums `F C F` over all 2^n flips; equals `2^n diag(C)` exactly.
pub fn flip_average_identity(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = c.nrows();
    if n != c.ncols() {
        return Err(Error::Config("matrix must be square".into()));
    }
    let flips = enumerate_flips(n)?;
    let mut sum = DMatrix::zeros(n, n);
    for f in &flips {
        for i in 0..n {
            for j in 0..n {
                sum[(i, j)] += f[i] * c[(i, j)] * f[j];
            }
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{fit_null, Family};
    use crate::score::{build_projection, effective_score};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn poisson_case() -> (DesignData, NullFit) {
        let y = DVector::from_vec(vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0]);
        let x = DMatrix::from_column_slice(
            10,
            1,
            &[0.2, -0.3, 0.8, -1.2, 0.4, 1.1, -0.6, 0.1, 0.9, -0.8],
        );
        let z = DMatrix::from_fn(10, 2, |i, j| {
            if j == 0 {
                1.0
            } else {
                ((i as f64) * 0.9).cos()
            }
        });
        let data = DesignData::new(y, x, z, DVector::zeros(1)).unwrap();
        let fit = fit_null(&data, &Family::poisson()).unwrap();
        (data, fit)
    }

    #[test]
    fn hat_matrix_is_a_projection_with_trace_q() {
        let (data, fit) = poisson_case();
        let dense = build_dense(&fit, &data).unwrap();
        let h2 = &dense.h * &dense.h;
        for i in 0..10 {
            for j in 0..10 {
                assert_relative_eq!(h2[(i, j)], dense.h[(i, j)], epsilon = 1e-8);
                assert_relative_eq!(dense.h[(i, j)], dense.h[(j, i)], epsilon = 1e-8);
            }
        }
        assert_relative_eq!(dense.h.trace(), data.q() as f64, epsilon = 1e-8);
    }

    #[test]
    fn dense_hat_matches_factored_projection() {
        let (data, fit) = poisson_case();
        let dense = build_dense(&fit, &data).unwrap();
        let proj = build_projection(&fit, &data).unwrap();
        let uut = proj.u() * proj.u().transpose();
        for i in 0..10 {
            for j in 0..10 {
                assert_relative_eq!(uut[(i, j)], dense.h[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn dense_effective_score_matches_projected_form() {
        let (data, fit) = poisson_case();
        let proj = build_projection(&fit, &data).unwrap();
        let flips = [
            vec![1.0; 10],
            (0..10)
                .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
                .collect::<Vec<_>>(),
        ];
        for f in &flips {
            let fast = effective_score(&proj, &fit, &data, f)[0];
            let dense = dense_effective_score(&fit, &data, f).unwrap()[0];
            assert_relative_eq!(fast, dense, max_relative = 1e-9);
        }
    }

    #[test]
    fn empty_nuisance_reduces_to_raw_score() {
        let y = DVector::from_vec(vec![1.0, 2.0, 4.0, 3.0]);
        let x = DMatrix::from_column_slice(4, 1, &[0.5, 1.0, 1.5, 2.0]);
        let z = DMatrix::zeros(4, 0);
        let data = DesignData::new(y.clone(), x.clone(), z, DVector::zeros(1)).unwrap();
        let fit = fit_null(&data, &Family::poisson()).unwrap();
        let ones = vec![1.0; 4];
        let s = dense_effective_score(&fit, &data, &ones).unwrap()[0];
        let mut raw = 0.0;
        for i in 0..4 {
            raw += x[(i, 0)] * fit.d_diag[i] / fit.v_diag[i] * (y[i] - fit.mu_hat[i]);
        }
        assert_relative_eq!(s, raw / 2.0, max_relative = 1e-12);
        // negated flip negates
        let neg = vec![-1.0; 4];
        let sn = dense_effective_score(&fit, &data, &neg).unwrap()[0];
        assert_relative_eq!(sn, -s, max_relative = 1e-12);
    }

    #[test]
    fn enumeration_is_complete_and_identity_first() {
        let flips = enumerate_flips(3).unwrap();
        assert_eq!(flips.len(), 8);
        assert_eq!(flips[0], vec![1.0, 1.0, 1.0]);
        let mut seen = std::collections::HashSet::new();
        for f in &flips {
            assert!(f.iter().all(|v| *v == 1.0 || *v == -1.0));
            assert!(seen.insert(format!("{f:?}")), "duplicate flip {f:?}");
        }
        let one = enumerate_flips(1).unwrap();
        assert_eq!(one, vec![vec![1.0], vec![-1.0]]);
        assert!(enumerate_flips(15).is_err());
    }

    #[test]
    fn flip_sum_identity_is_exact_on_integer_matrices() {
        let c = DMatrix::from_fn(5, 5, |i, j| ((i * 5 + j) as f64 * 7.0) % 13.0 - 6.0);
        let sum = flip_average_identity(&c).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j { 32.0 * c[(i, i)] } else { 0.0 };
                assert_eq!(sum[(i, j)], expected);
            }
        }
    }

    #[test]
    fn similar_matrices_share_eigenvalues() {
        // spot check: C and G^{-1} C G have the same eigenvalue multiset
        let c = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin());
        let g = DMatrix::from_fn(6, 6, |i, j| {
            if i == j {
                2.0 + i as f64
            } else {
                ((i + 2 * j) as f64 * 0.21).cos() * 0.3
            }
        });
        let g_inv = g.clone().try_inverse().expect("nonsingular");
        let sim = &g_inv * &c * &g;
        let mut ev_a: Vec<(f64, f64)> = c
            .complex_eigenvalues()
            .iter()
            .map(|z| (z.re, z.im))
            .collect();
        let mut ev_b: Vec<(f64, f64)> = sim
            .complex_eigenvalues()
            .iter()
            .map(|z| (z.re, z.im))
            .collect();
        let key = |p: &(f64, f64)| (p.0, p.1);
        ev_a.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        ev_b.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        for (a, b) in ev_a.iter().zip(&ev_b) {
            assert_relative_eq!(a.0, b.0, epsilon = 1e-8);
            assert_relative_eq!(a.1.abs(), b.1.abs(), epsilon = 1e-8);
        }
    }

    #[test]
    fn large_n_is_guarded() {
        let n = 2001;
        let y = DVector::from_element(n, 1.0);
        let x = DMatrix::from_fn(n, 1, |i, _| (i as f64 * 0.01).sin());
        let z = DMatrix::from_element(n, 1, 1.0);
        let data = DesignData::new(y, x, z, DVector::zeros(1)).unwrap();
        let fit = fit_null(&data, &Family::gaussian());
        // fit itself is fine; the dense oracle refuses
        if let Ok(fit) = fit {
            assert!(build_dense(&fit, &data).is_err());
        }
    }
}
