//! Dimension-derived constants and weighted-norm parameter bundles.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Constants attached to the ambient dimension n (the full space dimension of
/// the symmetrized problem, n = d - 1 for a d-dimensional axially symmetric
/// domain). Everything downstream takes its exponents from here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionConfig {
    /// Space dimension, n >= 6.
    pub n: usize,
    /// Critical exponent p = (n+2)/(n-2).
    pub p: f64,
    /// Bubble normalization: U = alpha (1 + |y|^2)^{-(n-2)/2} solves
    /// ΔU + U^p = 0 exactly iff alpha^{p-1} = n(n-2).
    pub alpha: f64,
    /// Type II blow-up rate: sup u ~ (T-t)^{-gamma},
    /// gamma = (n-2)(n-3)/(2(n-4)).
    pub gamma: f64,
    /// Self-similar (type I) rate (n-2)/4 = 1/(p-1), for comparison runs.
    pub type_i_rate: f64,
    /// Scale law exponent: lam0(t) = ell (T-t)^{lam0_exponent} with
    /// lam0_exponent = (n-3)/(n-4).
    pub lam0_exponent: f64,
}

impl DimensionConfig {
    pub fn new(n: usize) -> Result<Self> {
        if n < 6 {
            return Err(Error::DimensionTooSmall(n));
        }
        let nf = n as f64;
        let p = (nf + 2.0) / (nf - 2.0);
        let alpha = (nf * (nf - 2.0)).powf((nf - 2.0) / 4.0);
        let gamma = (nf - 2.0) * (nf - 3.0) / (2.0 * (nf - 4.0));
        let type_i_rate = (nf - 2.0) / 4.0;
        let lam0_exponent = (nf - 3.0) / (nf - 4.0);
        Ok(Self {
            n,
            p,
            alpha,
            gamma,
            type_i_rate,
            lam0_exponent,
        })
    }

    #[inline]
    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// Decay order of the bubble: U ~ alpha |y|^{-(n-2)}.
    #[inline]
    pub fn bubble_decay(&self) -> f64 {
        self.nf() - 2.0
    }

    /// p U^{p-1}(0) = n(n+2), the depth of the potential well of the
    /// linearized operator at the origin.
    #[inline]
    pub fn potential_depth(&self) -> f64 {
        self.nf() * (self.nf() + 2.0)
    }
}

/// Exponent bundle for the weighted space-time norms used on residuals and
/// inner solutions.
///
/// The derived exponents are pinned to the parameter ODE scaling:
/// `nu = (n-2+sigma)/(n-2)` makes tau^{-nu} comparable to
/// (lam0/d0)^{n-2+sigma} along the leading scale law, and `beta` is the
/// spatial weight exponent of the outer norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub sigma: f64,
    pub alpha: f64,
    pub a: f64,
    pub nu: f64,
    pub beta: f64,
}

impl NormSpec {
    pub fn new(dim: &DimensionConfig, sigma: f64, alpha: f64, a: f64) -> Result<Self> {
        if !(0.5 < sigma && sigma < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma = {sigma} outside (1/2, 1)"
            )));
        }
        if !(0.0 < alpha && alpha < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "alpha = {alpha} outside (0, 1/2)"
            )));
        }
        if !(alpha < a && a < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "a = {a} outside (alpha, 1) with alpha = {alpha}"
            )));
        }
        let nf = dim.nf();
        let nu = (nf - 2.0 + sigma) / (nf - 2.0);
        let beta = (nf - 2.0) / 2.0 - (nf - 2.0 + 2.0 * sigma) / (2.0 * (nf - 4.0));
        if beta <= 0.0 || beta - alpha / (nf - 4.0) <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "outer weight exponent beta = {beta} not positive enough for alpha = {alpha}"
            )));
        }
        Ok(Self {
            sigma,
            alpha,
            a,
            nu,
            beta,
        })
    }

    pub fn defaults(dim: &DimensionConfig) -> Self {
        // The default triple sits strictly inside the admissible region for
        // every n >= 6, so the unwrap cannot fire.
        Self::new(dim, 0.9, 0.1, 0.3).expect("default norm parameters are admissible")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_low_dimensions() {
        for n in 0..6 {
            assert!(matches!(
                DimensionConfig::new(n),
                Err(Error::DimensionTooSmall(_))
            ));
        }
        assert!(DimensionConfig::new(6).is_ok());
    }

    #[test]
    fn n6_constants() {
        let dim = DimensionConfig::new(6).unwrap();
        assert_relative_eq!(dim.p, 2.0);
        assert_relative_eq!(dim.alpha, 24.0);
        assert_relative_eq!(dim.gamma, 3.0);
        assert_relative_eq!(dim.type_i_rate, 1.0);
        assert_relative_eq!(dim.lam0_exponent, 1.5);
        assert_relative_eq!(dim.potential_depth(), 48.0);
    }

    #[test]
    fn n7_constants() {
        let dim = DimensionConfig::new(7).unwrap();
        assert_relative_eq!(dim.p, 1.8);
        assert_relative_eq!(dim.alpha, 35f64.powf(1.25), max_relative = 1e-14);
        assert_relative_eq!(dim.gamma, 10.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(dim.lam0_exponent, 4.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn exponent_identity_between_rates() {
        // gamma = (n-2)/2 * lam0_exponent for all n: the sup norm scales like
        // lam0^{-(n-2)/2}.
        for n in 6..=12 {
            let dim = DimensionConfig::new(n).unwrap();
            assert_relative_eq!(
                dim.gamma,
                0.5 * (dim.nf() - 2.0) * dim.lam0_exponent,
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn norm_spec_defaults_and_validation() {
        let dim = DimensionConfig::new(6).unwrap();
        let spec = NormSpec::defaults(&dim);
        assert_relative_eq!(spec.nu, 4.9 / 4.0);
        assert_relative_eq!(spec.beta, 2.0 - 5.8 / 4.0);

        assert!(NormSpec::new(&dim, 0.4, 0.1, 0.3).is_err());
        assert!(NormSpec::new(&dim, 0.9, 0.6, 0.7).is_err());
        assert!(NormSpec::new(&dim, 0.9, 0.3, 0.2).is_err());
    }
}
