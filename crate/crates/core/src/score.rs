//! Sign-flip score statistics and the univariate test.
//!
//! The effective score for the target columns is the raw score with the
//! nuisance directions projected out. Writing `a_j = (I - H) W^{1/2} X_j`
//! where `H = UU^T` is the weighted hat matrix of the nuisance design, the
//! flipped statistic for a sign vector `f` is
//!
//! ```text
//! S_j(f) = n^{-1/2} sum_i a_ij f_i r_i,        r_i = (y_i - mu_i) / sqrt(v_i)
//! ```
//!
//! and its plug-in variance has the closed form
//!
//! ```text
//! var_j(f) = ( ||a_j||^2 - ||U^T (f . a_j)||^2 ) / n
//! ```
//!
//! which costs O(nq) per flip; the hat matrix is never formed densely.
//!
//! The standardized statistic divides `S_j(f)` by the square root of
//! `phi_P * var_j(f)`, where `phi_P = sum r_i^2 / (n - q)` is the Pearson
//! estimate of the common dispersion of the standardized residuals. The
//! factor is shared by every flip, so it changes no p-value or decision, and
//! it makes each standardized statistic exactly invariant to rescaling the
//! working variances by a constant: only the shape of the variance model
//! matters, never its scale.

use crate::error::{Error, Result};
use crate::glm::{fit_null, DesignData, Family, NullFit};
use crate::rng;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;

/// Relative threshold below which a target column counts as collinear with
/// the nuisance design.
const COLLINEAR_RTOL: f64 = 1e-12;
/// Relative threshold below which a per-flip variance counts as degenerate.
const VARIANCE_RTOL: f64 = 1e-12;
/// Pearson gauge at or below this means the residuals carry no variation.
const GAUGE_MIN: f64 = 1e-12;
/// Residuals this small relative to the response scale are numerical noise.
const RESIDUAL_RTOL: f64 = 1e-12;

/// The nuisance projection in factored form: `H = UU^T` from the thin
/// singular value decomposition of `W^{1/2} Z`, plus the projected target
/// columns `a_j = (I - H) W^{1/2} X_j` and their cross products. The
/// `C_j = diag(a_j) U` factors of the fast variance are applied on the fly
/// as `U^T (f . a_j)` rather than stored.
#[derive(Debug, Clone)]
pub struct Projection {
    pub(crate) u: DMatrix<f64>,
    a_cols: DMatrix<f64>,
    a_norm2: DVector<f64>,
    gram: DMatrix<f64>,
}

/// Builds the projection from a converged null fit. Never allocates an
/// n-by-n matrix.
pub fn build_projection(fit: &NullFit, data: &DesignData) -> Result<Projection> {
    let n = data.n();
    let q = data.q();
    let d = data.d();
    if !fit.converged {
        return Err(Error::Config("projection requires a converged fit".into()));
    }
    for (i, &w) in fit.w_diag.iter().enumerate() {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Domain(format!(
                "non-positive working weight at observation {i}"
            )));
        }
    }
    let sqrt_w = fit.w_diag.map(f64::sqrt);

    let u = if q == 0 {
        DMatrix::zeros(n, 0)
    } else {
        let wz = DMatrix::from_fn(n, q, |i, j| sqrt_w[i] * data.z()[(i, j)]);
        let svd = wz.svd(true, false);
        let smax = svd.singular_values.max();
        let tol = smax * (n.max(q) as f64) * f64::EPSILON;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        if rank < q {
            return Err(Error::RankDeficient(format!(
                "weighted nuisance design has numerical rank {rank} < {q}"
            )));
        }
        svd.u.expect("u requested")
    };

    let mut a_cols = DMatrix::zeros(n, d);
    let mut a_norm2 = DVector::zeros(d);
    for j in 0..d {
        let mut b = DVector::from_fn(n, |i, _| sqrt_w[i] * data.x()[(i, j)]);
        let b_norm2 = b.norm_squared();
        // two projection passes keep U^T a at round-off level
        if q > 0 {
            for _ in 0..2 {
                let coeffs = u.transpose() * &b;
                b -= &u * coeffs;
            }
        }
        let norm2 = b.norm_squared();
        if norm2 <= COLLINEAR_RTOL * b_norm2 || norm2 == 0.0 {
            return Err(Error::Collinear(format!(
                "target column {j} lies in the span of the nuisance design"
            )));
        }
        a_cols.set_column(j, &b);
        a_norm2[j] = norm2;
    }
    let gram = a_cols.transpose() * &a_cols;
    Ok(Projection {
        u,
        a_cols,
        a_norm2,
        gram,
    })
}

impl Projection {
    pub fn n(&self) -> usize {
        self.a_cols.nrows()
    }

    pub fn q(&self) -> usize {
        self.u.ncols()
    }

    pub fn d(&self) -> usize {
        self.a_cols.ncols()
    }

    /// The semi-orthogonal factor with `H = UU^T`.
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// The projected, weighted target columns.
    pub fn a_cols(&self) -> &DMatrix<f64> {
        &self.a_cols
    }

    pub fn a_norm2(&self) -> &DVector<f64> {
        &self.a_norm2
    }

    /// `A^T A`, the identity-flip cross products of the projected columns.
    pub(crate) fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `U^T (f . a_j)` accumulated into `out` (length q).
    pub(crate) fn ut_flip_a(&self, flip: &[f64], j: usize, out: &mut [f64]) {
        let n = self.n();
        debug_assert_eq!(flip.len(), n);
        debug_assert_eq!(out.len(), self.q());
        let us = self.u.as_slice();
        let aj = &self.a_cols.as_slice()[j * n..(j + 1) * n];
        for (k, slot) in out.iter_mut().enumerate() {
            let uk = &us[k * n..(k + 1) * n];
            let mut s = 0.0;
            for i in 0..n {
                s += uk[i] * flip[i] * aj[i];
            }
            *slot = s;
        }
    }

    /// Plug-in variance of the flipped effective score for target column `j`:
    /// `(||a_j||^2 - ||U^T (f . a_j)||^2) / n`, computed in O(nq).
    pub fn flip_variance_fast(&self, flip: &[f64], j: usize) -> Result<f64> {
        let n = self.n();
        if flip.len() != n {
            return Err(Error::Config(format!(
                "flip vector has length {}, expected {n}",
                flip.len()
            )));
        }
        if j >= self.d() {
            return Err(Error::Config(format!("target index {j} out of range")));
        }
        let mut buf = vec![0.0; self.q()];
        self.ut_flip_a(flip, j, &mut buf);
        let c2: f64 = buf.iter().map(|v| v * v).sum();
        let value = (self.a_norm2[j] - c2) / n as f64;
        if value <= VARIANCE_RTOL * self.a_norm2[j] / n as f64 {
            return Err(Error::DegenerateVariance(format!(
                "flip annihilates the spread of target column {j}"
            )));
        }
        Ok(value)
    }
}

/// The flip ensemble: the identity flip first, then `g - 1` sign vectors.
/// Random plans derive each sign from (seed, flip index, observation index),
/// so any vector can be regenerated independently of evaluation order.
#[derive(Debug, Clone)]
pub struct FlipPlan {
    n: usize,
    g: usize,
    seed: u64,
    kind: PlanKind,
}

#[derive(Debug, Clone)]
enum PlanKind {
    Rademacher,
    Exhaustive,
    Explicit(Vec<Vec<f64>>),
}

impl FlipPlan {
    /// `g - 1` independent Rademacher flips after the identity.
    pub fn rademacher(g: usize, n: usize, seed: u64) -> Result<Self> {
        if g < 2 {
            return Err(Error::Config(format!("need at least 2 flips, got {g}")));
        }
        if n == 0 {
            return Err(Error::Config("flip plan needs n >= 1".into()));
        }
        Ok(FlipPlan {
            n,
            g,
            seed,
            kind: PlanKind::Rademacher,
        })
    }

    /// All `2^n` sign vectors (n <= 14), identity first.
    pub fn exhaustive(n: usize) -> Result<Self> {
        if n == 0 || n > 14 {
            return Err(Error::Config(format!(
                "exhaustive flips limited to 1 <= n <= 14, got {n}"
            )));
        }
        Ok(FlipPlan {
            n,
            g: 1usize << n,
            seed: 0,
            kind: PlanKind::Exhaustive,
        })
    }

    /// An explicit list of sign vectors; the first must be the identity.
    pub fn from_signs(signs: Vec<Vec<f64>>) -> Result<Self> {
        if signs.len() < 2 {
            return Err(Error::Config("need at least 2 flips".into()));
        }
        let n = signs[0].len();
        if n == 0 {
            return Err(Error::Config("flip vectors must be non-empty".into()));
        }
        for (j, s) in signs.iter().enumerate() {
            if s.len() != n {
                return Err(Error::Config("flip vectors must share one length".into()));
            }
            if s.iter().any(|v| *v != 1.0 && *v != -1.0) {
                return Err(Error::Config(format!(
                    "flip {j} has entries outside {{-1, +1}}"
                )));
            }
        }
        if signs[0].iter().any(|v| *v != 1.0) {
            return Err(Error::Config("flips[0] must be the identity".into()));
        }
        Ok(FlipPlan {
            n,
            g: signs.len(),
            seed: 0,
            kind: PlanKind::Explicit(signs),
        })
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Writes the j-th sign vector into `buf`.
    pub fn fill_signs(&self, j: usize, buf: &mut [f64]) {
        assert!(j < self.g, "flip index {j} out of range");
        assert_eq!(buf.len(), self.n);
        match &self.kind {
            PlanKind::Rademacher => {
                if j == 0 {
                    buf.fill(1.0);
                } else {
                    for (i, slot) in buf.iter_mut().enumerate() {
                        *slot = rng::rademacher_sign(self.seed, j as u64, i as u64);
                    }
                }
            }
            PlanKind::Exhaustive => {
                for (i, slot) in buf.iter_mut().enumerate() {
                    *slot = if i < 64 && (j >> i) & 1 == 1 { -1.0 } else { 1.0 };
                }
            }
            PlanKind::Explicit(signs) => buf.copy_from_slice(&signs[j]),
        }
    }

    pub fn signs(&self, j: usize) -> Vec<f64> {
        let mut buf = vec![0.0; self.n];
        self.fill_signs(j, &mut buf);
        buf
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    Greater,
    Less,
    TwoSided,
}

impl Alternative {
    fn adjust(self, s: f64) -> f64 {
        match self {
            Alternative::Greater => s,
            Alternative::Less => -s,
            Alternative::TwoSided => s.abs(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Alternative::Greater => "greater",
            Alternative::Less => "less",
            Alternative::TwoSided => "two_sided",
        }
    }
}

impl FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greater" => Ok(Alternative::Greater),
            "less" => Ok(Alternative::Less),
            "two_sided" | "two-sided" | "twosided" => Ok(Alternative::TwoSided),
            other => Err(Error::Config(format!("unknown alternative '{other}'"))),
        }
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Effective,
    Standardized,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Effective => "effective",
            Variant::Standardized => "standardized",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "effective" => Ok(Variant::Effective),
            "standardized" => Ok(Variant::Standardized),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-test diagnostics carried alongside the decision.
#[derive(Debug, Clone)]
pub struct TestDiagnostics {
    /// Squared norms of the projected target columns.
    pub a_norm2: Vec<f64>,
    pub flip_var_min: f64,
    pub flip_var_max: f64,
    /// Pearson estimate of the common dispersion of standardized residuals.
    pub dispersion_gauge: f64,
    pub phi_hat: f64,
    pub fit_iterations: usize,
    pub eta_clamped: bool,
}

/// Result of a sign-flip test. `stats_flipped[0]` is the observed statistic.
#[derive(Debug, Clone)]
pub struct ScoreTestResult {
    pub stat_observed: f64,
    /// For multivariate tests, the observed standardized score vector.
    pub stat_vector_observed: Option<Vec<f64>>,
    pub stats_flipped: Vec<f64>,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub alternative: Alternative,
    pub variant: Variant,
    pub g: usize,
    pub diagnostics: TestDiagnostics,
}

/// Order-statistic decision: with adjusted statistics `t_0 .. t_{g-1}` sorted
/// ascending as `t_(1) <= ... <= t_(g)`, reject when the observed value
/// exceeds `t_(ceil((1-alpha) g))`; report `p = #{j : t_j >= t_0} / g`
/// (ties count toward the numerator, so p >= 1/g).
pub(crate) fn decide(stats: &[f64], alternative: Alternative, alpha: f64) -> (f64, bool) {
    let g = stats.len();
    let adjusted: Vec<f64> = stats.iter().map(|&s| alternative.adjust(s)).collect();
    let observed = adjusted[0];
    let count = adjusted.iter().filter(|&&v| v >= observed).count();
    let p_value = count as f64 / g as f64;
    let mut sorted = adjusted;
    sorted.sort_by(f64::total_cmp);
    let k = order_index(g, alpha);
    let reject = observed > sorted[k - 1];
    (p_value, reject)
}

/// 1-based index ceil((1-alpha) g), guarded against float round-off.
fn order_index(g: usize, alpha: f64) -> usize {
    let v = (1.0 - alpha) * g as f64;
    let k = (v - 1e-9).ceil() as usize;
    k.clamp(1, g)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

/// Per-observation score contributions `(y_i - mu_i) x_ij d_i / v_i`
/// (columns sum to the raw target score at the null fit).
pub fn score_contributions(fit: &NullFit, data: &DesignData) -> DMatrix<f64> {
    DMatrix::from_fn(data.n(), data.d(), |i, j| {
        (data.y()[i] - fit.mu_hat[i]) * data.x()[(i, j)] * fit.d_diag[i] / fit.v_diag[i]
    })
}

/// Standardized residuals `(y - mu) / sqrt(v)` at the null fit.
pub(crate) fn standardized_residuals(fit: &NullFit, data: &DesignData) -> DVector<f64> {
    DVector::from_fn(data.n(), |i, _| {
        (data.y()[i] - fit.mu_hat[i]) / fit.v_diag[i].sqrt()
    })
}

/// Pearson estimate of the common dispersion of the standardized residuals,
/// `sum r_i^2 / (n - q)`.
pub(crate) fn pearson_gauge(r: &DVector<f64>, q: usize) -> f64 {
    let df = (r.len().saturating_sub(q)).max(1) as f64;
    r.norm_squared() / df
}

/// Errors when the residuals are numerically zero, which would make every
/// standardized statistic 0/0.
pub(crate) fn check_residual_degeneracy(
    fit: &NullFit,
    data: &DesignData,
    gauge: f64,
) -> Result<()> {
    if gauge <= GAUGE_MIN {
        return Err(Error::DegenerateVariance(
            "residuals carry no variation (Pearson dispersion ~ 0)".into(),
        ));
    }
    let y_scale = data.y().amax().max(1.0);
    let resid_max = (0..data.n())
        .map(|i| (data.y()[i] - fit.mu_hat[i]).abs())
        .fold(0.0f64, f64::max);
    if resid_max <= RESIDUAL_RTOL * y_scale {
        return Err(Error::DegenerateVariance(
            "response equals the fitted mean to numerical precision".into(),
        ));
    }
    Ok(())
}

/// Flipped effective score, one entry per target column:
/// `n^{-1/2} a_j^T (f . r)`.
pub fn effective_score(
    proj: &Projection,
    fit: &NullFit,
    data: &DesignData,
    flip: &[f64],
) -> DVector<f64> {
    let r = standardized_residuals(fit, data);
    effective_score_with_residuals(proj, &r, flip)
}

pub(crate) fn effective_score_with_residuals(
    proj: &Projection,
    r: &DVector<f64>,
    flip: &[f64],
) -> DVector<f64> {
    let n = proj.n();
    assert_eq!(flip.len(), n);
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let a = proj.a_cols.as_slice();
    DVector::from_fn(proj.d(), |j, _| {
        let aj = &a[j * n..(j + 1) * n];
        let mut s = 0.0;
        for i in 0..n {
            s += aj[i] * flip[i] * r[i];
        }
        s * inv_sqrt_n
    })
}

/// Standardized statistic, elementwise per target column:
/// `S_j(f) / sqrt(phi_P * var_j(f))`. For jointly standardized d > 1 targets
/// see the multivariate module.
pub fn standardized_statistic(
    proj: &Projection,
    fit: &NullFit,
    data: &DesignData,
    flip: &[f64],
) -> Result<DVector<f64>> {
    let r = standardized_residuals(fit, data);
    let gauge = pearson_gauge(&r, data.q());
    check_residual_degeneracy(fit, data, gauge)?;
    let eff = effective_score_with_residuals(proj, &r, flip);
    let mut out = DVector::zeros(proj.d());
    for j in 0..proj.d() {
        let var = proj.flip_variance_fast(flip, j)?;
        out[j] = eff[j] / (gauge * var).sqrt();
    }
    Ok(out)
}

/// Paired output of the two univariate flip-test variants evaluated on the
/// same flip plan and the same null fit.
#[derive(Debug, Clone)]
pub struct UnivariatePair {
    pub effective: ScoreTestResult,
    pub standardized: ScoreTestResult,
}

/// Runs the univariate sign-flip test (d = 1).
pub fn run_univariate_test(
    data: &DesignData,
    family: &Family,
    plan: &FlipPlan,
    variant: Variant,
    alternative: Alternative,
    alpha: f64,
) -> Result<ScoreTestResult> {
    let pair = run_univariate_both(data, family, plan, alternative, alpha)?;
    Ok(match variant {
        Variant::Effective => pair.effective,
        Variant::Standardized => pair.standardized,
    })
}

/// Runs both variants on one null fit and one flip sweep. Flip evaluation is
/// parallel over immutable state; results are assembled in flip-index order,
/// so the outcome does not depend on the schedule.
pub fn run_univariate_both(
    data: &DesignData,
    family: &Family,
    plan: &FlipPlan,
    alternative: Alternative,
    alpha: f64,
) -> Result<UnivariatePair> {
    check_alpha(alpha)?;
    if data.d() != 1 {
        return Err(Error::Config(format!(
            "univariate test requires d = 1 target column, got {}; use the multivariate test",
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
    let r = standardized_residuals(&fit, data);
    let gauge = pearson_gauge(&r, data.q());
    check_residual_degeneracy(&fit, data, gauge)?;

    let n = data.n();
    let g = plan.g();
    let evaluated: Result<Vec<(f64, f64)>> = (0..g)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, j| {
                plan.fill_signs(j, buf);
                let eff = effective_score_with_residuals(&proj, &r, buf)[0];
                let var = proj.flip_variance_fast(buf, 0)?;
                Ok((eff, var))
            },
        )
        .collect();
    let evaluated = evaluated?;

    let eff_stats: Vec<f64> = evaluated.iter().map(|(e, _)| *e).collect();
    let std_stats: Vec<f64> = evaluated
        .iter()
        .map(|(e, v)| e / (gauge * v).sqrt())
        .collect();
    let var_min = evaluated
        .iter()
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    let var_max = evaluated
        .iter()
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);

    let diagnostics = TestDiagnostics {
        a_norm2: proj.a_norm2().iter().copied().collect(),
        flip_var_min: var_min,
        flip_var_max: var_max,
        dispersion_gauge: gauge,
        phi_hat: fit.phi_hat,
        fit_iterations: fit.iterations,
        eta_clamped: fit.eta_clamped,
    };

    let (p_eff, rej_eff) = decide(&eff_stats, alternative, alpha);
    let (p_std, rej_std) = decide(&std_stats, alternative, alpha);

    let effective = ScoreTestResult {
        stat_observed: eff_stats[0],
        stat_vector_observed: None,
        stats_flipped: eff_stats,
        p_value: p_eff,
        reject: rej_eff,
        alpha,
        alternative,
        variant: Variant::Effective,
        g,
        diagnostics: diagnostics.clone(),
    };
    let standardized = ScoreTestResult {
        stat_observed: std_stats[0],
        stat_vector_observed: None,
        stats_flipped: std_stats,
        p_value: p_std,
        reject: rej_std,
        alpha,
        alternative,
        variant: Variant::Standardized,
        g,
        diagnostics,
    };
    Ok(UnivariatePair {
        effective,
        standardized,
    })
}
