use std::fmt;

use serde::{Deserialize, Serialize};

use super::special::{
    cauchy_cdf, cauchy_pdf, cauchy_quantile, expit, logit, norm_cdf, norm_pdf, norm_quantile,
};
use crate::error::{Error, Result};

/// Symmetric binary-regression link, identified with the CDF `g` of the latent error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logit,
    Probit,
    Cauchit,
}

impl Link {
    /// `g(t)`, the inverse link.
    #[inline]
    pub fn cdf(self, t: f64) -> f64 {
        match self {
            Link::Logit => expit(t),
            Link::Probit => norm_cdf(t),
            Link::Cauchit => cauchy_cdf(t, 1.0),
        }
    }

    #[inline]
    pub fn pdf(self, t: f64) -> f64 {
        match self {
            Link::Logit => super::special::logistic_pdf(t),
            Link::Probit => norm_pdf(t),
            Link::Cauchit => cauchy_pdf(t, 1.0),
        }
    }

    /// `g^{-1}(p)`, the link itself.
    pub fn inverse(self, p: f64) -> f64 {
        match self {
            Link::Logit => logit(p),
            Link::Probit => norm_quantile(p),
            Link::Cauchit => cauchy_quantile(p),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Logit => "logit",
            Link::Probit => "probit",
            Link::Cauchit => "cauchit",
        })
    }
}

/// Symmetric, zero-centred distribution of the mediator error term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ErrorDist {
    Normal { sigma: f64 },
    Cauchy { gamma: f64 },
}

impl ErrorDist {
    pub fn normal(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("normal error scale must be positive, got {sigma}")));
        }
        Ok(ErrorDist::Normal { sigma })
    }

    pub fn cauchy(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidInput(format!("cauchy error scale must be positive, got {gamma}")));
        }
        Ok(ErrorDist::Cauchy { gamma })
    }

    pub fn scale(&self) -> f64 {
        match *self {
            ErrorDist::Normal { sigma } => sigma,
            ErrorDist::Cauchy { gamma } => gamma,
        }
    }

    /// Same family with unit scale.
    pub fn standardized(&self) -> Self {
        match self {
            ErrorDist::Normal { .. } => ErrorDist::Normal { sigma: 1.0 },
            ErrorDist::Cauchy { .. } => ErrorDist::Cauchy { gamma: 1.0 },
        }
    }

    #[inline]
    pub fn pdf(&self, t: f64) -> f64 {
        match *self {
            ErrorDist::Normal { sigma } => norm_pdf(t / sigma) / sigma,
            ErrorDist::Cauchy { gamma } => cauchy_pdf(t, gamma),
        }
    }

    pub fn is_normal(&self) -> bool {
        matches!(self, ErrorDist::Normal { .. })
    }
}

impl fmt::Display for ErrorDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorDist::Normal { sigma } => write!(f, "normal(sigma={sigma})"),
            ErrorDist::Cauchy { gamma } => write!(f, "cauchy(gamma={gamma})"),
        }
    }
}
