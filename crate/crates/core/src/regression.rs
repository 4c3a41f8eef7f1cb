//! Fitting of the outcome (logistic, optionally Firth-penalized) and mediator
//! (ordinary least squares) models, and assembly of the joint estimator
//! covariance used by the Delta method.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::expit;

/// Observations of a binary outcome `y`, exposure `x` and mediator `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: Vec<f64>,
    x: Vec<f64>,
    w: Vec<f64>,
}

impl Dataset {
    pub const MIN_ROWS: usize = 10;

    pub fn new(y: Vec<f64>, x: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if y.len() != x.len() || y.len() != w.len() {
            return Err(Error::InvalidInput(format!(
                "column lengths differ: y={}, x={}, w={}",
                y.len(),
                x.len(),
                w.len()
            )));
        }
        if y.len() < Self::MIN_ROWS {
            return Err(Error::InvalidInput(format!(
                "need at least {} rows, got {}",
                Self::MIN_ROWS,
                y.len()
            )));
        }
        if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput(format!("outcome must be binary (row {i}: {})", y[i])));
        }
        for (name, col) in [("x", &x), ("w", &w)] {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite {name} at row {i}")));
            }
        }
        Ok(Dataset { y, x, w })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    /// Rows picked by `indices` (with repetition), as for a pairs bootstrap.
    pub fn resample(&self, indices: &[usize]) -> Dataset {
        Dataset {
            y: indices.iter().map(|&i| self.y[i]).collect(),
            x: indices.iter().map(|&i| self.x[i]).collect(),
            w: indices.iter().map(|&i| self.w[i]).collect(),
        }
    }

    /// Design matrix `[1, x, w, xw]`, or `[1, x, w]` without interaction.
    pub fn outcome_design(&self, with_interaction: bool) -> DMatrix<f64> {
        let p = if with_interaction { 4 } else { 3 };
        DMatrix::from_fn(self.len(), p, |i, j| match j {
            0 => 1.0,
            1 => self.x[i],
            2 => self.w[i],
            _ => self.x[i] * self.w[i],
        })
    }
}

/// Fitted outcome model `logit P(Y=1|x,w) = b0 + bx x + bw w + bxw x w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeParams {
    pub beta0: f64,
    pub beta_x: f64,
    pub beta_w: f64,
    pub beta_xw: f64,
    /// Inverse Fisher information, 4x4 or 3x3 without interaction.
    pub cov: DMatrix<f64>,
    pub interaction_included: bool,
    pub firth_used: bool,
    pub iterations: usize,
}

impl OutcomeParams {
    pub fn coefficients(&self) -> Vec<f64> {
        let mut c = vec![self.beta0, self.beta_x, self.beta_w];
        if self.interaction_included {
            c.push(self.beta_xw);
        }
        c
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.cov.nrows()).map(|i| self.cov[(i, i)].max(0.0).sqrt()).collect()
    }
}

/// Fitted mediator model `W = t0 + tx x + e`, `e ~ N(0, sigma2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediatorParams {
    pub theta0: f64,
    pub theta_x: f64,
    /// Unbiased residual variance `e'e / (n - 2)`.
    pub sigma2: f64,
    pub cov_theta: Matrix2<f64>,
    /// `2 sigma2^2 / (n - 2)`, exact under normal errors.
    pub var_sigma2: f64,
    pub df: usize,
}

/// The seven structural parameters in the order used by every gradient:
/// `(b0, bx, bw, bxw, t0, tx, sigma2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta0: f64,
    pub beta_x: f64,
    pub beta_w: f64,
    pub beta_xw: f64,
    pub theta0: f64,
    pub theta_x: f64,
    pub sigma2: f64,
}

impl ModelParams {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.beta0,
            self.beta_x,
            self.beta_w,
            self.beta_xw,
            self.theta0,
            self.theta_x,
            self.sigma2,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        ModelParams {
            beta0: a[0],
            beta_x: a[1],
            beta_w: a[2],
            beta_xw: a[3],
            theta0: a[4],
            theta_x: a[5],
            sigma2: a[6],
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// Both fits plus the block-diagonal covariance of all estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointFit {
    pub outcome: OutcomeParams,
    pub mediator: MediatorParams,
    /// Block-diagonal `(cov_beta, cov_theta, var_sigma2)`; 7x7, or 6x6 without interaction.
    pub sigma_full: DMatrix<f64>,
}

impl JointFit {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            beta0: self.outcome.beta0,
            beta_x: self.outcome.beta_x,
            beta_w: self.outcome.beta_w,
            beta_xw: self.outcome.beta_xw,
            theta0: self.mediator.theta0,
            theta_x: self.mediator.theta_x,
            sigma2: self.mediator.sigma2,
        }
    }

    pub fn interaction_included(&self) -> bool {
        self.outcome.interaction_included
    }
}

/// Result of a logistic fit on an arbitrary design.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub coef: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub iterations: usize,
}

const MAX_ITER: usize = 100;
const SCORE_TOL: f64 = 1e-8;
const STEP_TOL: f64 = 1e-10;
const SEPARATION_BOUND: f64 = 50.0;

fn log_likelihood(eta: &DVector<f64>, y: &[f64]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // log(1 + exp(e)) without overflow
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - softplus
        })
        .sum()
}

struct Eval {
    p: Vec<f64>,
    info: DMatrix<f64>,
    objective: f64,
}

fn evaluate(design: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, firth: bool) -> Option<Eval> {
    let n = design.nrows();
    let k = design.ncols();
    let eta = design * beta;
    let p: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
    let mut info = DMatrix::zeros(k, k);
    for i in 0..n {
        let wi = p[i] * (1.0 - p[i]);
        if wi == 0.0 {
            continue;
        }
        for a in 0..k {
            let xa = design[(i, a)] * wi;
            for b in a..k {
                info[(a, b)] += xa * design[(i, b)];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            info[(a, b)] = info[(b, a)];
        }
    }
    let mut objective = log_likelihood(&eta, y);
    if firth {
        let chol = info.clone().cholesky()?;
        let log_det: f64 = chol.l().diagonal().iter().map(|d: &f64| 2.0 * d.ln()).sum();
        objective += 0.5 * log_det;
    }
    Some(Eval { p, info, objective })
}

fn fail_singular(beta: &DVector<f64>) -> Error {
    let max_abs = beta.amax();
    if max_abs > 10.0 {
        Error::Separation { max_abs_coef: max_abs }
    } else {
        Error::RankDeficient("information matrix is singular".into())
    }
}

fn check_rank(design: &DMatrix<f64>) -> Result<()> {
    let k = design.ncols();
    // scale columns so the rank test is unit free
    let mut scaled = design.clone();
    for j in 0..k {
        let norm = scaled.column(j).norm();
        if norm == 0.0 {
            return Err(Error::RankDeficient(format!("design column {j} is identically zero")));
        }
        scaled.column_mut(j).scale_mut(1.0 / norm);
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 1e-10 * max {
        return Err(Error::RankDeficient(format!(
            "design condition number {:.3e} exceeds 1e10",
            max / min
        )));
    }
    Ok(())
}

/// Logistic regression by IRLS (Newton-Raphson), with optional Firth
/// (Jeffreys-prior) score modification.
///
/// Convergence requires both a small score and a small Newton step, or a
/// negligible step on its own; under separation the score vanishes while the
/// step does not, so the iterates run past `|beta| > 50` and are reported as
/// [`Error::Separation`].
pub fn fit_logistic_design(design: &DMatrix<f64>, y: &[f64], firth: bool) -> Result<LogisticFit> {
    let n = design.nrows();
    let k = design.ncols();
    assert_eq!(n, y.len(), "design and response lengths differ");
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::SingleClass);
    }
    check_rank(design)?;

    let mut beta = DVector::zeros(k);
    let mut current = evaluate(design, y, &beta, firth).ok_or_else(|| fail_singular(&beta))?;
    for iter in 1..=MAX_ITER {
        let chol = current.info.clone().cholesky().ok_or_else(|| fail_singular(&beta))?;
        let mut resid = DVector::from_fn(n, |i, _| y[i] - current.p[i]);
        if firth {
            // h_i = w_i x_i' I^{-1} x_i
            let inv = chol.inverse();
            for i in 0..n {
                let xi = design.row(i).transpose();
                let wi = current.p[i] * (1.0 - current.p[i]);
                let h = wi * (xi.transpose() * &inv * &xi)[(0, 0)];
                resid[i] += h * (0.5 - current.p[i]);
            }
        }
        let score = design.transpose() * resid;
        let step = chol.solve(&score);
        let max_score = score.amax();
        let max_step = step.amax();
        let scale = 1.0 + beta.amax();
        if max_step < STEP_TOL * scale || (max_score < SCORE_TOL && max_step < 1e-4 * scale) {
            let cov = chol.inverse();
            return Ok(LogisticFit { coef: beta, cov, iterations: iter - 1 });
        }

        // step halving on the (penalized) log-likelihood
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let candidate = &beta + &step * t;
            if let Some(ev) = evaluate(design, y, &candidate, firth) {
                if ev.objective >= current.objective - 1e-10 * current.objective.abs().max(1.0) {
                    accepted = Some((candidate, ev));
                    break;
                }
            }
            t *= 0.5;
        }
        let (next, ev) = accepted.ok_or_else(|| Error::NonConvergence {
            what: "logistic regression".into(),
            detail: format!("step halving failed at iteration {iter}"),
        })?;
        beta = next;
        current = ev;
        let max_abs = beta.amax();
        if !firth && max_abs > SEPARATION_BOUND {
            return Err(Error::Separation { max_abs_coef: max_abs });
        }
    }
    Err(Error::NonConvergence {
        what: "logistic regression".into(),
        detail: format!("no convergence after {MAX_ITER} iterations"),
    })
}

/// Fits the outcome model on `[1, x, w, xw]` (or `[1, x, w]`).
pub fn fit_logistic(data: &Dataset, with_interaction: bool, firth: bool) -> Result<OutcomeParams> {
    let design = data.outcome_design(with_interaction);
    let fit = fit_logistic_design(&design, data.y(), firth)?;
    let c = &fit.coef;
    Ok(OutcomeParams {
        beta0: c[0],
        beta_x: c[1],
        beta_w: c[2],
        beta_xw: if with_interaction { c[3] } else { 0.0 },
        cov: symmetrize(fit.cov),
        interaction_included: with_interaction,
        firth_used: firth,
        iterations: fit.iterations,
    })
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Ordinary least squares for the mediator on `[1, x]`.
pub fn fit_linear(data: &Dataset) -> Result<MediatorParams> {
    let n = data.len();
    let nf = n as f64;
    let x = data.x();
    let w = data.w();
    let x_mean = x.iter().sum::<f64>() / nf;
    let w_mean = w.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxw = 0.0;
    let mut sww = 0.0;
    for (&xi, &wi) in x.iter().zip(w) {
        let dx = xi - x_mean;
        let dw = wi - w_mean;
        sxx += dx * dx;
        sxw += dx * dw;
        sww += dw * dw;
    }
    if sxx <= 1e-24 * x.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE) {
        return Err(Error::RankDeficient("exposure is constant".into()));
    }
    let theta_x = sxw / sxx;
    let theta0 = w_mean - theta_x * x_mean;
    let rss: f64 = x
        .iter()
        .zip(w)
        .map(|(&xi, &wi)| {
            let e = wi - theta0 - theta_x * xi;
            e * e
        })
        .sum();
    if rss <= 1e-20 * sww || rss == 0.0 {
        return Err(Error::DegenerateResidual);
    }
    let df = n - 2;
    let sigma2 = rss / df as f64;
    let sum_x2: f64 = x.iter().map(|v| v * v).sum();
    // (X'X)^{-1} for X = [1, x]: det = n * Sxx
    let det = nf * sxx;
    let xtx_inv = Matrix2::new(sum_x2 / det, -nf * x_mean / det, -nf * x_mean / det, nf / det);
    Ok(MediatorParams {
        theta0,
        theta_x,
        sigma2,
        cov_theta: xtx_inv * sigma2,
        var_sigma2: 2.0 * sigma2 * sigma2 / df as f64,
        df,
    })
}

/// Joint covariance with the outcome, mediator-coefficient and residual
/// variance blocks on the diagonal and zeros elsewhere.
pub fn assemble_joint(outcome: OutcomeParams, mediator: MediatorParams) -> JointFit {
    let kb = outcome.cov.nrows();
    let dim = kb + 3;
    let mut sigma = DMatrix::zeros(dim, dim);
    sigma.view_mut((0, 0), (kb, kb)).copy_from(&outcome.cov);
    sigma.view_mut((kb, kb), (2, 2)).copy_from(&mediator.cov_theta);
    sigma[(kb + 2, kb + 2)] = mediator.var_sigma2;
    JointFit { outcome, mediator, sigma_full: sigma }
}

/// Fits both models and assembles the joint covariance.
pub fn fit_joint(data: &Dataset, with_interaction: bool, firth: bool) -> Result<JointFit> {
    let outcome = fit_logistic(data, with_interaction, firth)?;
    let mediator = fit_linear(data)?;
    Ok(assemble_joint(outcome, mediator))
}
