//! Sensitivity of the exposure coefficient to an unmeasured normal confounder.
//!
//! Given the observable marginal slope `eta_x`, a hypothesized confounder
//! coefficient `beta_w` and exposure-confounder correlation `rho`, the
//! conditional coefficient is recovered from the logistic approximation of
//! the marginal logit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::PI_OVER_SQRT3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityInput {
    pub eta_x: f64,
    /// Standard deviation of the exposure.
    pub sigma_x: f64,
    /// Use the unit-variance form `1 - rho^2` and `beta_w rho`.
    pub standardized: bool,
}

impl SensitivityInput {
    pub fn new(eta_x: f64, sigma_x: f64, standardized: bool) -> Result<Self> {
        if !eta_x.is_finite() {
            return Err(Error::InvalidInput(format!("eta_x must be finite, got {eta_x}")));
        }
        if !(sigma_x > 0.0 && sigma_x.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma_x must be positive, got {sigma_x}")));
        }
        if standardized && sigma_x != 1.0 {
            return Err(Error::InvalidInput(format!(
                "standardized mode requires sigma_x = 1, got {sigma_x}"
            )));
        }
        Ok(SensitivityInput { eta_x, sigma_x, standardized })
    }

    pub fn standardized(eta_x: f64) -> Result<Self> {
        Self::new(eta_x, 1.0, true)
    }

    // (residual variance factor, confounding shift per unit beta_w)
    fn terms(&self, rho: f64) -> (f64, f64) {
        if self.standardized {
            (1.0 - rho * rho, rho)
        } else {
            (1.0 - rho * rho * self.sigma_x * self.sigma_x, rho / self.sigma_x)
        }
    }

    fn scale_factor(&self, beta_w: f64, rho: f64) -> Result<(f64, f64)> {
        let (resid, shift) = self.terms(rho);
        if resid < 0.0 {
            return Err(Error::InvalidVarianceTerm(resid));
        }
        let inv_c2 = 1.0 / (PI_OVER_SQRT3 * PI_OVER_SQRT3);
        Ok(((1.0 + inv_c2 * beta_w * beta_w * resid).sqrt(), shift))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityGrid {
    pub beta_w_values: Vec<f64>,
    pub rho_values: Vec<f64>,
}

impl SensitivityGrid {
    pub fn new(beta_w_values: Vec<f64>, rho_values: Vec<f64>) -> Result<Self> {
        if beta_w_values.is_empty() || rho_values.is_empty() {
            return Err(Error::InvalidConfig("sensitivity grid is empty".into()));
        }
        // negated form also rejects NaN
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if let Some(r) = rho_values.iter().find(|r| !(r.abs() < 1.0)) {
            return Err(Error::InvalidConfig(format!("correlation must lie in (-1, 1), got {r}")));
        }
        if let Some(b) = beta_w_values.iter().find(|b| !b.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta_w must be finite, got {b}")));
        }
        Ok(SensitivityGrid { beta_w_values, rho_values })
    }

    /// `n` evenly spaced values from `lo` to `hi` inclusive.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        }
    }
}

/// Conditional exposure coefficient implied by `eta_x` under `(beta_w, rho)`.
pub fn adjust_beta_x(input: &SensitivityInput, beta_w: f64, rho: f64) -> Result<f64> {
    let (factor, shift) = input.scale_factor(beta_w, rho)?;
    Ok(input.eta_x * factor - beta_w * shift)
}

/// Whether the conditional coefficient has the opposite sign to `eta_x`:
/// `sqrt(1 + 3/pi^2 beta_w^2 r) < beta_w * shift / eta_x`.
pub fn sign_flips(input: &SensitivityInput, beta_w: f64, rho: f64) -> Result<bool> {
    if input.eta_x == 0.0 {
        return Err(Error::InvalidInput("sign reversal is undefined for eta_x = 0".into()));
    }
    let (factor, shift) = input.scale_factor(beta_w, rho)?;
    Ok(factor < beta_w * shift / input.eta_x)
}

/// Row `i` is `beta_w_values[i]`, column `j` is `rho_values[j]`.
pub fn sign_change_region(input: &SensitivityInput, grid: &SensitivityGrid) -> Result<Vec<Vec<bool>>> {
    grid.beta_w_values
        .iter()
        .map(|&bw| grid.rho_values.iter().map(|&r| sign_flips(input, bw, r)).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta_w: f64,
    pub rho: f64,
    /// `None` where the residual-variance term is negative.
    pub beta_x_adjusted: Option<f64>,
    pub sign_flipped: Option<bool>,
}

/// Long-format evaluation over the grid, `beta_w` outer and `rho` inner.
/// Points with an invalid variance term are kept and flagged with `None`.
pub fn sweep(input: &SensitivityInput, grid: &SensitivityGrid) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(grid.beta_w_values.len() * grid.rho_values.len());
    for &beta_w in &grid.beta_w_values {
        for &rho in &grid.rho_values {
            let (beta_x_adjusted, sign_flipped) = match adjust_beta_x(input, beta_w, rho) {
                Ok(b) => {
                    let flip = if input.eta_x == 0.0 { None } else { Some(sign_flips(input, beta_w, rho)?) };
                    (Some(b), flip)
                }
                Err(Error::InvalidVarianceTerm(_)) => (None, None),
                Err(e) => return Err(e),
            };
            rows.push(SweepRow { beta_w, rho, beta_x_adjusted, sign_flipped });
        }
    }
    Ok(rows)
}
