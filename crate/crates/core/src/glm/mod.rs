//! Exponential-dispersion families, links, and design data.
//!
//! A model is described by a [`Family`] (distribution + link) and a
//! [`DesignData`] holding the response, the tested target columns `X`, the
//! free nuisance columns `Z`, and the hypothesized target value `beta0`.
//! [`fit_null`] fits the nuisance coefficients with `X beta0` held fixed as an
//! offset and returns all per-observation diagonal factors the score engine
//! consumes.

mod fit;

pub use fit::{fit_full, fit_null, FullFit, NullFit};

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Linear predictor bound for `log`/`logit` links; `exp(30)` is still well
/// inside f64 range while flagging hopeless fits early.
pub const ETA_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Identity,
    Log,
    Logit,
}

impl Link {
    pub fn name(self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Log => "log",
            Link::Logit => "logit",
        }
    }

    /// g(mu).
    pub fn eval(self, mu: f64) -> f64 {
        match self {
            Link::Identity => mu,
            Link::Log => mu.ln(),
            Link::Logit => (mu / (1.0 - mu)).ln(),
        }
    }

    /// g^{-1}(eta).
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Log => eta.exp(),
            Link::Logit => {
                let e = eta.exp();
                e / (1.0 + e)
            }
        }
    }

    /// Clamps the linear predictor to the safe range for this link.
    pub fn clamp_eta(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Log | Link::Logit => eta.clamp(-ETA_CLAMP, ETA_CLAMP),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyKind {
    Gaussian,
    Poisson,
    Binomial,
    /// NB2 variance `mu + dispersion * mu^2`; the stored dispersion is the
    /// putative value used to seed fitting (a common dispersion is
    /// re-estimated by [`fit_null`]).
    NegativeBinomial {
        dispersion: f64,
    },
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Gaussian => "gaussian",
            FamilyKind::Poisson => "poisson",
            FamilyKind::Binomial => "binomial",
            FamilyKind::NegativeBinomial { .. } => "negative_binomial",
        }
    }

    pub fn canonical_link(self) -> Link {
        match self {
            FamilyKind::Gaussian => Link::Identity,
            FamilyKind::Poisson | FamilyKind::NegativeBinomial { .. } => Link::Log,
            FamilyKind::Binomial => Link::Logit,
        }
    }
}

/// A distribution/link pair. Only pairings for which the variance function
/// and mean derivative stay defined over the fitted-mean range are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Family {
    kind: FamilyKind,
    link: Link,
}

impl Family {
    pub fn new(kind: FamilyKind, link: Link) -> Result<Self> {
        let ok = link == kind.canonical_link();
        if !ok {
            return Err(Error::Config(format!(
                "family {} does not admit link {}",
                kind.name(),
                link.name()
            )));
        }
        if let FamilyKind::NegativeBinomial { dispersion } = kind {
            if !(dispersion > 0.0 && dispersion.is_finite()) {
                return Err(Error::Config(format!(
                    "negative binomial dispersion must be a positive real, got {dispersion}"
                )));
            }
        }
        Ok(Family { kind, link })
    }

    pub fn gaussian() -> Self {
        Family {
            kind: FamilyKind::Gaussian,
            link: Link::Identity,
        }
    }

    pub fn poisson() -> Self {
        Family {
            kind: FamilyKind::Poisson,
            link: Link::Log,
        }
    }

    pub fn binomial() -> Self {
        Family {
            kind: FamilyKind::Binomial,
            link: Link::Logit,
        }
    }

    pub fn negative_binomial(dispersion: f64) -> Result<Self> {
        Family::new(
            FamilyKind::NegativeBinomial { dispersion },
            Link::Log,
        )
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn link(&self) -> Link {
        self.link
    }

    /// Variance function `b''(theta) * phi` at unit common dispersion:
    /// gaussian -> 1, poisson -> mu, binomial -> mu(1-mu),
    /// negative binomial -> mu + phi mu^2.
    pub fn variance_function(&self, mu: f64) -> Result<f64> {
        self.check_mean(mu)?;
        Ok(match self.kind {
            FamilyKind::Gaussian => 1.0,
            FamilyKind::Poisson => mu,
            FamilyKind::Binomial => mu * (1.0 - mu),
            FamilyKind::NegativeBinomial { dispersion } => mu + dispersion * mu * mu,
        })
    }

    /// dmu/deta at a given linear predictor (clamped for log/logit).
    pub fn mean_derivative(&self, eta: f64) -> Result<f64> {
        if !eta.is_finite() {
            return Err(Error::Domain(format!("non-finite linear predictor {eta}")));
        }
        let eta = self.link.clamp_eta(eta);
        Ok(match self.link {
            Link::Identity => 1.0,
            Link::Log => eta.exp(),
            Link::Logit => {
                let e = eta.exp();
                e / ((1.0 + e) * (1.0 + e))
            }
        })
    }

    fn check_mean(&self, mu: f64) -> Result<()> {
        let ok = match self.kind {
            FamilyKind::Gaussian => mu.is_finite(),
            FamilyKind::Poisson | FamilyKind::NegativeBinomial { .. } => mu.is_finite() && mu > 0.0,
            FamilyKind::Binomial => mu.is_finite() && mu > 0.0 && mu < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "mean {mu} outside the valid range of family {}",
                self.kind.name()
            )))
        }
    }

    /// Validates that a response vector is representable under the family.
    pub fn validate_response(&self, y: &DVector<f64>) -> Result<()> {
        for (i, &yi) in y.iter().enumerate() {
            let ok = match self.kind {
                FamilyKind::Gaussian => true,
                FamilyKind::Poisson | FamilyKind::NegativeBinomial { .. } => yi >= 0.0,
                FamilyKind::Binomial => (0.0..=1.0).contains(&yi),
            };
            if !ok {
                return Err(Error::Domain(format!(
                    "response[{i}] = {yi} invalid for family {}",
                    self.kind.name()
                )));
            }
        }
        Ok(())
    }
}

/// Response, target design, nuisance design, and the hypothesized target
/// value. The intercept, when wanted, is a column of `Z`.
#[derive(Debug, Clone)]
pub struct DesignData {
    y: DVector<f64>,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    beta0: DVector<f64>,
}

impl DesignData {
    /// Validates dimensions, finiteness, `n > q + d`, and the joint column
    /// rank of `(X, Z)` via a singular value decomposition.
    pub fn new(
        y: DVector<f64>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        beta0: DVector<f64>,
    ) -> Result<Self> {
        let n = y.len();
        let d = x.ncols();
        let q = z.ncols();
        if d < 1 {
            return Err(Error::Data("target design must have at least one column".into()));
        }
        if x.nrows() != n || z.nrows() != n {
            return Err(Error::Data(format!(
                "row mismatch: y has {n}, X has {}, Z has {}",
                x.nrows(),
                z.nrows()
            )));
        }
        if beta0.len() != d {
            return Err(Error::Data(format!(
                "beta0 has length {}, expected {d}",
                beta0.len()
            )));
        }
        if n <= q + d {
            return Err(Error::Data(format!(
                "need n > q + d, got n = {n}, q = {q}, d = {d}"
            )));
        }
        for v in y.iter().chain(x.iter()).chain(z.iter()).chain(beta0.iter()) {
            if !v.is_finite() {
                return Err(Error::Data("non-finite entry in y, X, Z, or beta0".into()));
            }
        }
        // joint rank of (X, Z)
        let p = d + q;
        let mut joint = DMatrix::zeros(n, p);
        joint.view_mut((0, 0), (n, d)).copy_from(&x);
        joint.view_mut((0, d), (n, q)).copy_from(&z);
        if matrix_rank(&joint) < p {
            return Err(Error::Data(
                "(X, Z) is jointly rank deficient; drop redundant columns".into(),
            ));
        }
        Ok(DesignData { y, x, z, beta0 })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.z.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn beta0(&self) -> &DVector<f64> {
        &self.beta0
    }

    /// The fixed offset `X beta0` absorbed into the null model.
    pub fn offset(&self) -> DVector<f64> {
        &self.x * &self.beta0
    }
}

/// Numerical rank from singular values with the usual `max(n,p)*eps*s_max`
/// threshold.
pub(crate) fn matrix_rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let tol = smax * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn variance_function_matches_known_values() {
        assert_relative_eq!(Family::poisson().variance_function(2.0).unwrap(), 2.0);
        assert_relative_eq!(Family::binomial().variance_function(0.5).unwrap(), 0.25);
        // mu + phi mu^2 at phi=1, mu=3
        let nb = Family::negative_binomial(1.0).unwrap();
        assert_relative_eq!(nb.variance_function(3.0).unwrap(), 12.0);
        assert_relative_eq!(Family::gaussian().variance_function(-4.2).unwrap(), 1.0);
    }

    #[test]
    fn variance_function_rejects_out_of_range_means() {
        assert!(Family::poisson().variance_function(-1.0).is_err());
        assert!(Family::binomial().variance_function(1.0).is_err());
        assert!(Family::binomial().variance_function(0.0).is_err());
    }

    #[test]
    fn mean_derivative_matches_known_values() {
        assert_relative_eq!(Family::gaussian().mean_derivative(5.0).unwrap(), 1.0);
        assert_relative_eq!(Family::binomial().mean_derivative(0.0).unwrap(), 0.25);
        assert_relative_eq!(
            Family::poisson().mean_derivative(1.0).unwrap(),
            std::f64::consts::E
        );
    }

    #[test]
    fn mean_derivative_clamps_instead_of_overflowing() {
        let d = Family::poisson().mean_derivative(1e4).unwrap();
        assert!(d.is_finite());
        assert_relative_eq!(d, ETA_CLAMP.exp());
    }

    #[test]
    fn family_link_pairing_is_enforced() {
        assert!(Family::new(FamilyKind::Poisson, Link::Identity).is_err());
        assert!(Family::new(FamilyKind::Gaussian, Link::Log).is_err());
        assert!(Family::new(FamilyKind::Poisson, Link::Log).is_ok());
        assert!(Family::negative_binomial(0.0).is_err());
        assert!(Family::negative_binomial(-1.0).is_err());
    }

    #[test]
    fn design_data_rejects_rank_deficiency_and_bad_shapes() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let z = DMatrix::from_element(5, 1, 1.0);
        // X proportional to the intercept column
        let x = DMatrix::from_element(5, 1, 2.0);
        assert!(matches!(
            DesignData::new(y.clone(), x, z.clone(), DVector::zeros(1)),
            Err(Error::Data(_))
        ));

        let x = DMatrix::from_column_slice(5, 1, &[1.0, -1.0, 0.5, 2.0, 0.0]);
        assert!(DesignData::new(y.clone(), x.clone(), z.clone(), DVector::zeros(1)).is_ok());

        // n must exceed q + d
        let y2 = DVector::from_vec(vec![1.0, 2.0]);
        let x2 = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let z2 = DMatrix::from_element(2, 1, 1.0);
        assert!(DesignData::new(y2, x2, z2, DVector::zeros(1)).is_err());

        // non-finite entries
        let mut ybad = y;
        ybad[0] = f64::NAN;
        assert!(DesignData::new(ybad, x, z, DVector::zeros(1)).is_err());
    }
}
