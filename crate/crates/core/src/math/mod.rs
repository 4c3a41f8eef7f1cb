//! Special functions, symmetric links and error laws, and quadrature.

mod descriptive;
mod link;
mod quadrature;
mod special;

pub use descriptive::{mean, quantile, quantile_sorted, sample_sd};
pub use link::{ErrorDist, Link};
pub use quadrature::{
    integrate_adaptive, integrate_expit_normal, integrate_link_error, integrate_real_line,
    GaussHermite, QuadratureSpec,
};
pub use special::{
    cauchy_cdf, cauchy_pdf, cauchy_quantile, expit, logistic_pdf, logit, norm_cdf, norm_pdf,
    norm_quantile, FRAC_1_SQRT_2PI, PI_OVER_SQRT3,
};
