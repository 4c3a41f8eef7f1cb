//! Marginal outcome probabilities `P(Y=1 | X=x)` after integrating out the
//! mediator, and the logistic approximation of the marginal logit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{cauchy_cdf, integrate_link_error, norm_cdf, ErrorDist, Link, QuadratureSpec, PI_OVER_SQRT3};
use crate::regression::{JointFit, ModelParams};

/// Outcome and mediator coefficients together with the link and the mediator error law.
///
/// The error scale is taken from `error`; `params.sigma2` is only read by the
/// logit/normal approximations, which require `error = Normal(sqrt(sigma2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralModel {
    pub params: ModelParams,
    pub link: Link,
    pub error: ErrorDist,
}

/// `alpha0 + alpha_s S` is the conditional linear predictor written in the
/// standardized mediator error `S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictorDecomp {
    pub alpha0: f64,
    pub alpha_s: f64,
}

impl StructuralModel {
    pub fn new(params: ModelParams, link: Link, error: ErrorDist) -> Self {
        StructuralModel { params, link, error }
    }

    /// Logistic outcome with normal mediator errors of variance `params.sigma2`.
    pub fn logit_normal(params: ModelParams) -> Result<Self> {
        let error = ErrorDist::normal(params.sigma2.sqrt())?;
        Ok(StructuralModel { params, link: Link::Logit, error })
    }

    pub fn from_fit(fit: &JointFit) -> Result<Self> {
        Self::logit_normal(fit.params())
    }

    /// Mediator coefficient in the conditional predictor at exposure `x`.
    pub fn mediator_slope(&self, x: f64) -> f64 {
        self.params.beta_w + self.params.beta_xw * x
    }

    pub fn decompose(&self, x: f64) -> LinearPredictorDecomp {
        let p = &self.params;
        let alpha0 = p.beta0
            + p.beta_w * p.theta0
            + (p.beta_x + p.beta_w * p.theta_x + p.beta_xw * p.theta0 + p.beta_xw * p.theta_x * x) * x;
        LinearPredictorDecomp { alpha0, alpha_s: self.mediator_slope(x) * self.error.scale() }
    }

    fn require_logit_normal(&self) -> Result<()> {
        if self.link == Link::Logit && self.error.is_normal() {
            Ok(())
        } else {
            Err(Error::UnsupportedCombination {
                link: self.link.to_string(),
                error: self.error.to_string(),
            })
        }
    }

    fn approx_denominator(&self, x: f64) -> f64 {
        let a = self.mediator_slope(x);
        (a * a * self.params.sigma2 + PI_OVER_SQRT3 * PI_OVER_SQRT3).sqrt()
    }
}

/// `P(Y=1 | X=x)` by numerical integration over the mediator error.
pub fn marginal_prob_exact(model: &StructuralModel, x: f64, spec: QuadratureSpec) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidInput(format!("exposure must be finite, got {x}")));
    }
    let d = model.decompose(x);
    integrate_link_error(model.link, model.error.standardized(), d.alpha0, d.alpha_s, spec)
}

/// Closed-form marginal probability for the two families closed under convolution:
/// probit with normal errors and cauchit with Cauchy errors.
pub fn marginal_prob_closed(model: &StructuralModel, x: f64) -> Result<f64> {
    let d = model.decompose(x);
    match (model.link, model.error) {
        (Link::Probit, ErrorDist::Normal { .. }) => {
            Ok(norm_cdf(d.alpha0 / (1.0 + d.alpha_s * d.alpha_s).sqrt()))
        }
        (Link::Cauchit, ErrorDist::Cauchy { .. }) => Ok(cauchy_cdf(d.alpha0, d.alpha_s.abs() + 1.0)),
        (link, error) => Err(Error::UnsupportedCombination {
            link: link.to_string(),
            error: error.to_string(),
        }),
    }
}

/// Marginal log-odds obtained by replacing the logistic-plus-normal latent
/// variable with a logistic of the same variance.
pub fn marginal_logit_approx(model: &StructuralModel, x: f64) -> Result<f64> {
    model.require_logit_normal()?;
    let p = &model.params;
    let num = p.beta0
        + p.beta_w * p.theta0
        + (p.beta_x + p.beta_w * p.theta_x + p.beta_xw * p.theta0) * x
        + p.beta_xw * p.theta_x * x * x;
    Ok(PI_OVER_SQRT3 * num / model.approx_denominator(x))
}

/// The exposure-dependent part of [`marginal_logit_approx`], zero at `x = 0`.
pub fn eta_x(model: &StructuralModel, x: f64) -> Result<f64> {
    model.require_logit_normal()?;
    let p = &model.params;
    let num = (p.beta_x + p.beta_w * p.theta_x + p.beta_xw * p.theta0) * x + p.beta_xw * p.theta_x * x * x;
    Ok(PI_OVER_SQRT3 * num / model.approx_denominator(x))
}

pub fn eta_x_curve(model: &StructuralModel, xs: &[f64]) -> Result<Vec<f64>> {
    xs.iter().map(|&x| eta_x(model, x)).collect()
}

/// Slope of the (then linear) marginal logit when there is no interaction.
///
/// For a confounder independent of the exposure, pass `theta_x = 0` and the
/// marginal variance of `W` as `sigma2`.
pub fn eta_x_slope_nointeraction(model: &StructuralModel) -> Result<f64> {
    model.require_logit_normal()?;
    let p = &model.params;
    if p.beta_xw != 0.0 {
        return Err(Error::InteractionPresent(p.beta_xw));
    }
    Ok(PI_OVER_SQRT3 * (p.beta_x + p.beta_w * p.theta_x) / model.approx_denominator(0.0))
}
