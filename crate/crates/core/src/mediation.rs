//! Natural direct and indirect effects on the log odds-ratio scale.
//!
//! Four estimators are offered: the closed form from the logistic
//! approximation of the marginal logit, the exact value by quadrature, and the
//! rare-outcome (VV) and probit-approximation (Gaynor) baselines. Standard
//! errors come from the Delta method for the closed form and from a pairs
//! bootstrap for any method.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginalize::{marginal_prob_exact, StructuralModel};
use crate::math::{logit, norm_cdf, norm_quantile, quantile_sorted, QuadratureSpec, PI_OVER_SQRT3};
use crate::regression::{fit_joint, Dataset, JointFit, ModelParams};

/// Matching constant of the probit approximation `expit(t) ~ Phi(t / c)`.
pub const GAYNOR_DEFAULT_C: f64 = 1.6;

/// Exposure change from `x_star` to `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub x_star: f64,
    pub x: f64,
}

impl Contrast {
    pub fn new(x_star: f64, x: f64) -> Result<Self> {
        if !(x_star.is_finite() && x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "contrast values must be finite, got ({x_star}, {x})"
            )));
        }
        Ok(Contrast { x_star, x })
    }

    pub fn delta(&self) -> f64 {
        self.x - self.x_star
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Effect {
    #[serde(rename = "NDE")]
    Nde,
    #[serde(rename = "NIE")]
    Nie,
    #[serde(rename = "NTE")]
    Nte,
    #[serde(rename = "PM")]
    PropMediated,
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Effect::Nde => "NDE",
            Effect::Nie => "NIE",
            Effect::Nte => "NTE",
            Effect::PropMediated => "PM",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[serde(rename = "closed")]
    ClosedForm,
    Exact,
    Vv,
    Gaynor,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::ClosedForm, Method::Exact, Method::Vv, Method::Gaynor];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ClosedForm => "closed",
            Method::Exact => "exact",
            Method::Vv => "vv",
            Method::Gaynor => "gaynor",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "closed" | "closed-form" | "closedform" => Ok(Method::ClosedForm),
            "exact" => Ok(Method::Exact),
            "vv" => Ok(Method::Vv),
            "gaynor" => Ok(Method::Gaynor),
            other => Err(Error::InvalidInput(format!(
                "unknown method '{other}' (expected closed, exact, vv or gaynor)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    /// Symmetric Wald interval `estimate +- z se`.
    pub fn wald(estimate: f64, se: f64, level: f64) -> Self {
        let z = norm_quantile(0.5 + level / 2.0);
        ConfidenceInterval { lower: estimate - z * se, upper: estimate + z * se, level }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub effect: Effect,
    pub method: Method,
    pub estimate: f64,
    pub se_delta: Option<f64>,
    pub ci_delta: Option<ConfidenceInterval>,
    pub ci_boot: Option<ConfidenceInterval>,
}

impl EffectEstimate {
    pub fn point(effect: Effect, method: Method, estimate: f64) -> Self {
        EffectEstimate { effect, method, estimate, se_delta: None, ci_delta: None, ci_boot: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectPair {
    pub nde: f64,
    pub nie: f64,
}

impl EffectPair {
    pub fn nte(&self) -> f64 {
        self.nde + self.nie
    }
}

/// Tuning shared by the estimators that need it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub quadrature: QuadratureSpec,
    pub gaynor_c: f64,
}

impl Default for MethodSettings {
    fn default() -> Self {
        MethodSettings { quadrature: QuadratureSpec::default(), gaynor_c: GAYNOR_DEFAULT_C }
    }
}

fn slope(p: &ModelParams, x: f64) -> f64 {
    p.beta_w + p.beta_xw * x
}

fn approx_denominator(p: &ModelParams, x: f64) -> f64 {
    let a = slope(p, x);
    (a * a * p.sigma2 + PI_OVER_SQRT3 * PI_OVER_SQRT3).sqrt()
}

// Numerator of the approximate logit of h(x, x*).
fn h_numerator(p: &ModelParams, x: f64, x_star: f64) -> f64 {
    p.beta0
        + p.beta_w * p.theta0
        + (p.beta_x + p.beta_xw * p.theta0 + p.beta_xw * p.theta_x * x_star) * x
        + p.beta_w * p.theta_x * x_star
}

/// `h(x, x*) = E[P(Y=1 | X=x, W)]` with `W` drawn from its law under `x*`, by quadrature.
pub fn h_exact(p: &ModelParams, x: f64, x_star: f64, spec: QuadratureSpec) -> Result<f64> {
    // Shifting theta0 moves the mediator mean from theta0 + theta_x x to theta0 + theta_x x*.
    let mut shifted = *p;
    shifted.theta0 = p.theta0 + p.theta_x * (x_star - x);
    let model = StructuralModel::logit_normal(shifted)?;
    marginal_prob_exact(&model, x, spec)
}

/// Logistic approximation of `h(x, x*)`.
pub fn h_closed(p: &ModelParams, x: f64, x_star: f64) -> f64 {
    crate::math::expit(PI_OVER_SQRT3 * h_numerator(p, x, x_star) / approx_denominator(p, x))
}

pub fn nde_closed(p: &ModelParams, c: Contrast) -> f64 {
    let (x, xs) = (c.x, c.x_star);
    PI_OVER_SQRT3
        * (h_numerator(p, x, xs) / approx_denominator(p, x)
            - h_numerator(p, xs, xs) / approx_denominator(p, xs))
}

pub fn nie_closed(p: &ModelParams, c: Contrast) -> f64 {
    PI_OVER_SQRT3 * slope(p, c.x) * p.theta_x * c.delta() / approx_denominator(p, c.x)
}

pub fn effects_closed(p: &ModelParams, c: Contrast) -> EffectPair {
    EffectPair { nde: nde_closed(p, c), nie: nie_closed(p, c) }
}

pub fn effects_exact(p: &ModelParams, c: Contrast, spec: QuadratureSpec) -> Result<EffectPair> {
    let (x, xs) = (c.x, c.x_star);
    let h_xs_xs = logit(h_exact(p, xs, xs, spec)?);
    let h_x_xs = logit(h_exact(p, x, xs, spec)?);
    let h_x_x = logit(h_exact(p, x, x, spec)?);
    Ok(EffectPair { nde: h_x_xs - h_xs_xs, nie: h_x_x - h_x_xs })
}

/// Rare-outcome baseline.
pub fn effects_vv(p: &ModelParams, c: Contrast) -> EffectPair {
    let (x, xs) = (c.x, c.x_star);
    let nde = (p.beta_x + p.beta_xw * (p.theta0 + p.theta_x * xs + p.beta_w * p.sigma2)) * (x - xs)
        + 0.5 * p.beta_xw * p.beta_xw * p.sigma2 * (x * x - xs * xs);
    let nie = (p.beta_w * p.theta_x + p.beta_xw * p.theta_x * x) * (x - xs);
    EffectPair { nde, nie }
}

fn h_gaynor(p: &ModelParams, x: f64, x_star: f64, c: f64) -> f64 {
    let a = slope(p, x);
    let num = p.beta0 + p.beta_x * x + a * (p.theta0 + p.theta_x * x_star);
    norm_cdf(num / (c * c + a * a * p.sigma2).sqrt())
}

/// Baseline approximating the inverse logit by a scaled normal CDF.
pub fn effects_gaynor(p: &ModelParams, c: Contrast, gaynor_c: f64) -> EffectPair {
    let (x, xs) = (c.x, c.x_star);
    let h_xs_xs = logit(h_gaynor(p, xs, xs, gaynor_c));
    let h_x_xs = logit(h_gaynor(p, x, xs, gaynor_c));
    let h_x_x = logit(h_gaynor(p, x, x, gaynor_c));
    EffectPair { nde: h_x_xs - h_xs_xs, nie: h_x_x - h_x_xs }
}

pub fn point_effects(p: &ModelParams, c: Contrast, method: Method, settings: &MethodSettings) -> Result<EffectPair> {
    match method {
        Method::ClosedForm => Ok(effects_closed(p, c)),
        Method::Exact => effects_exact(p, c, settings.quadrature),
        Method::Vv => Ok(effects_vv(p, c)),
        Method::Gaynor => Ok(effects_gaynor(p, c, settings.gaynor_c)),
    }
}

/// Gradient of the closed-form NDE in `(b0, bx, bw, bxw, t0, tx, sigma2)`.
pub fn grad_nde_closed(p: &ModelParams, c: Contrast) -> [f64; 7] {
    let (x, xs) = (c.x, c.x_star);
    let s2 = p.sigma2;
    let a1 = slope(p, x);
    let a2 = slope(p, xs);
    let d1 = approx_denominator(p, x);
    let d2 = approx_denominator(p, xs);
    let d1_3 = d1 * d1 * d1;
    let d2_3 = d2 * d2 * d2;
    let n1 = h_numerator(p, x, xs);
    let n2 = h_numerator(p, xs, xs);
    let m = p.theta0 + p.theta_x * xs;
    let k = PI_OVER_SQRT3;
    [
        k * (1.0 / d1 - 1.0 / d2),
        k * (x / d1 - xs / d2),
        k * (m / d1 - n1 * a1 * s2 / d1_3 - m / d2 + n2 * a2 * s2 / d2_3),
        k * (m * x / d1 - n1 * a1 * x * s2 / d1_3 - m * xs / d2 + n2 * a2 * xs * s2 / d2_3),
        k * (a1 / d1 - a2 / d2),
        k * xs * (a1 / d1 - a2 / d2),
        k * 0.5 * (n2 * a2 * a2 / d2_3 - n1 * a1 * a1 / d1_3),
    ]
}

/// Gradient of the closed-form NIE; the `b0`, `bx` and `t0` entries are structurally zero.
pub fn grad_nie_closed(p: &ModelParams, c: Contrast) -> [f64; 7] {
    let x = c.x;
    let dx = c.delta();
    let a1 = slope(p, x);
    let d1 = approx_denominator(p, x);
    let d1_3 = d1 * d1 * d1;
    let k = PI_OVER_SQRT3;
    let common = k * dx * p.theta_x * (1.0 / d1 - a1 * a1 * p.sigma2 / d1_3);
    [
        0.0,
        0.0,
        common,
        common * x,
        0.0,
        k * dx * a1 / d1,
        -0.5 * k * dx * a1 * a1 * a1 * p.theta_x / d1_3,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaOptions {
    /// Include the sampling variance of the residual variance estimate.
    pub propagate_sigma2: bool,
}

impl Default for DeltaOptions {
    fn default() -> Self {
        DeltaOptions { propagate_sigma2: true }
    }
}

/// `sqrt(g' Sigma g)`, dropping the interaction coordinate when the fit has none.
pub fn delta_se(fit: &JointFit, grad: &[f64; 7], opts: DeltaOptions) -> Result<f64> {
    let idx: Vec<usize> = if fit.interaction_included() { (0..7).collect() } else { vec![0, 1, 2, 4, 5, 6] };
    let dim = idx.len();
    let mut sigma: DMatrix<f64> = fit.sigma_full.clone();
    if sigma.nrows() != dim {
        return Err(Error::InvalidInput(format!(
            "covariance is {}x{}, expected {dim}x{dim}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if !opts.propagate_sigma2 {
        sigma[(dim - 1, dim - 1)] = 0.0;
    }
    let scale = sigma.diagonal().amax().max(1.0);
    let min_eig = sigma.clone().symmetric_eigen().eigenvalues.min();
    if !min_eig.is_finite() || min_eig < -1e-10 * scale {
        return Err(Error::SingularCovariance(min_eig));
    }
    let g = DVector::from_iterator(dim, idx.iter().map(|&i| grad[i]));
    let var = (g.transpose() * &sigma * &g)[(0, 0)];
    Ok(var.max(0.0).sqrt())
}

pub fn delta_se_nde(fit: &JointFit, c: Contrast, opts: DeltaOptions) -> Result<f64> {
    delta_se(fit, &grad_nde_closed(&fit.params(), c), opts)
}

pub fn delta_se_nie(fit: &JointFit, c: Contrast, opts: DeltaOptions) -> Result<f64> {
    delta_se(fit, &grad_nie_closed(&fit.params(), c), opts)
}

pub fn delta_se_nte(fit: &JointFit, c: Contrast, opts: DeltaOptions) -> Result<f64> {
    let p = fit.params();
    let a = grad_nde_closed(&p, c);
    let b = grad_nie_closed(&p, c);
    let g: [f64; 7] = std::array::from_fn(|i| a[i] + b[i]);
    delta_se(fit, &g, opts)
}

/// `NIE / (NDE + NIE)`; only meaningful when both effects share a sign.
pub fn proportion_mediated(nde: f64, nie: f64) -> Result<f64> {
    if nie == 0.0 {
        return Ok(0.0);
    }
    if !((nde > 0.0 && nie > 0.0) || (nde < 0.0 && nie < 0.0)) {
        return Err(Error::SignMismatch { nde, nie });
    }
    Ok(nie / (nde + nie))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub level: f64,
    pub seed: u64,
    pub interaction: bool,
    pub firth: bool,
}

impl BootstrapConfig {
    pub const MIN_REPLICATIONS: usize = 100;
    /// Failed replicates tolerated, in percent.
    pub const FAILURE_LIMIT_PCT: u32 = 10;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodIntervals {
    pub method: Method,
    pub nde: ConfidenceInterval,
    pub nie: ConfidenceInterval,
    pub nte: ConfidenceInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub intervals: Vec<MethodIntervals>,
    pub replications: usize,
    pub n_failed: usize,
}

impl BootstrapResult {
    pub fn for_method(&self, method: Method) -> Option<&MethodIntervals> {
        self.intervals.iter().find(|m| m.method == method)
    }
}

fn percentile_interval(values: &mut [f64], level: f64) -> ConfidenceInterval {
    values.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    ConfidenceInterval {
        lower: quantile_sorted(values, alpha / 2.0),
        upper: quantile_sorted(values, 1.0 - alpha / 2.0),
        level,
    }
}

/// Pairs bootstrap: resample rows, refit both regressions, recompute each
/// method's effects, and take percentile intervals.
///
/// Replicate `r` draws from stream `r` of a generator seeded with `seed`, so
/// the result does not depend on scheduling or the number of workers.
pub fn bootstrap_effects(
    data: &Dataset,
    c: Contrast,
    methods: &[Method],
    settings: &MethodSettings,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult> {
    if cfg.replications < BootstrapConfig::MIN_REPLICATIONS {
        return Err(Error::InvalidConfig(format!(
            "bootstrap needs at least {} replications, got {}",
            BootstrapConfig::MIN_REPLICATIONS,
            cfg.replications
        )));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::InvalidConfig(format!("level must be in (0, 1), got {}", cfg.level)));
    }
    if methods.is_empty() {
        return Err(Error::InvalidConfig("no methods requested".into()));
    }
    let n = data.len();
    let draws: Vec<Option<Vec<EffectPair>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let sample = data.resample(&idx);
            let fit = fit_joint(&sample, cfg.interaction, cfg.firth).ok()?;
            let p = fit.params();
            methods.iter().map(|&m| point_effects(&p, c, m, settings).ok()).collect()
        })
        .collect();

    let ok: Vec<&Vec<EffectPair>> = draws.iter().flatten().collect();
    let n_failed = cfg.replications - ok.len();
    if n_failed * 100 > cfg.replications * BootstrapConfig::FAILURE_LIMIT_PCT as usize {
        return Err(Error::TooManyFailures {
            failed: n_failed,
            total: cfg.replications,
            limit_pct: BootstrapConfig::FAILURE_LIMIT_PCT,
        });
    }
    let intervals = methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let mut nde: Vec<f64> = ok.iter().map(|e| e[j].nde).collect();
            let mut nie: Vec<f64> = ok.iter().map(|e| e[j].nie).collect();
            let mut nte: Vec<f64> = ok.iter().map(|e| e[j].nte()).collect();
            MethodIntervals {
                method,
                nde: percentile_interval(&mut nde, cfg.level),
                nie: percentile_interval(&mut nie, cfg.level),
                nte: percentile_interval(&mut nte, cfg.level),
            }
        })
        .collect();
    Ok(BootstrapResult { intervals, replications: cfg.replications, n_failed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub contrast: Contrast,
    pub methods: Vec<Method>,
    pub interaction: bool,
    pub firth: bool,
    pub level: f64,
    pub delta: DeltaOptions,
    pub settings: MethodSettings,
    /// Bootstrap replications; 0 disables the bootstrap.
    pub boot_reps: usize,
    pub seed: u64,
}

impl AnalysisOptions {
    pub fn new(contrast: Contrast, methods: Vec<Method>) -> Self {
        AnalysisOptions {
            contrast,
            methods,
            interaction: true,
            firth: false,
            level: 0.95,
            delta: DeltaOptions::default(),
            settings: MethodSettings::default(),
            boot_reps: 0,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapMeta {
    pub replications: usize,
    pub seed: u64,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediationReport {
    pub fit: JointFit,
    pub contrast: Contrast,
    pub estimates: Vec<EffectEstimate>,
    pub bootstrap_meta: Option<BootstrapMeta>,
    pub warnings: Vec<String>,
}

impl MediationReport {
    pub fn get(&self, method: Method, effect: Effect) -> Option<&EffectEstimate> {
        self.estimates.iter().find(|e| e.method == method && e.effect == effect)
    }
}

/// Fits both models on `data` and evaluates every requested method.
pub fn analyze(data: &Dataset, opts: &AnalysisOptions) -> Result<MediationReport> {
    if opts.methods.is_empty() {
        return Err(Error::InvalidConfig("no methods requested".into()));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidConfig(format!("level must be in (0, 1), got {}", opts.level)));
    }
    let mut methods = opts.methods.clone();
    methods.sort();
    methods.dedup();
    let fit = fit_joint(data, opts.interaction, opts.firth)?;
    let p = fit.params();
    let c = opts.contrast;

    let boot = if opts.boot_reps > 0 {
        let cfg = BootstrapConfig {
            replications: opts.boot_reps,
            level: opts.level,
            seed: opts.seed,
            interaction: opts.interaction,
            firth: opts.firth,
        };
        Some(bootstrap_effects(data, c, &methods, &opts.settings, &cfg)?)
    } else {
        None
    };

    let mut estimates = Vec::new();
    let mut warnings = Vec::new();
    for &method in &methods {
        let pair = point_effects(&p, c, method, &opts.settings)?;
        let mut rows = [
            EffectEstimate::point(Effect::Nde, method, pair.nde),
            EffectEstimate::point(Effect::Nie, method, pair.nie),
            EffectEstimate::point(Effect::Nte, method, pair.nte()),
        ];
        if method == Method::ClosedForm {
            let ses = [
                delta_se_nde(&fit, c, opts.delta)?,
                delta_se_nie(&fit, c, opts.delta)?,
                delta_se_nte(&fit, c, opts.delta)?,
            ];
            for (row, se) in rows.iter_mut().zip(ses) {
                row.se_delta = Some(se);
                row.ci_delta = Some(ConfidenceInterval::wald(row.estimate, se, opts.level));
            }
        }
        if let Some(iv) = boot.as_ref().and_then(|b| b.for_method(method)) {
            rows[0].ci_boot = Some(iv.nde);
            rows[1].ci_boot = Some(iv.nie);
            rows[2].ci_boot = Some(iv.nte);
        }
        estimates.extend(rows);
        match proportion_mediated(pair.nde, pair.nie) {
            Ok(pm) => estimates.push(EffectEstimate::point(Effect::PropMediated, method, pm)),
            Err(e) => warnings.push(format!("{method}: proportion mediated omitted: {e}")),
        }
    }
    let bootstrap_meta = boot.map(|b| BootstrapMeta {
        replications: b.replications,
        seed: opts.seed,
        n_failed: b.n_failed,
    });
    Ok(MediationReport { fit, contrast: c, estimates, bootstrap_meta, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::expit;
    use crate::marginalize::marginal_logit_approx;
    use crate::regression::{MediatorParams, OutcomeParams};
    use nalgebra::Matrix2;
    use proptest::prelude::*;

    fn reference(beta0: f64) -> ModelParams {
        ModelParams {
            beta0,
            beta_x: 0.4,
            beta_w: 0.5,
            beta_xw: 0.15,
            theta0: 0.1,
            theta_x: 0.5,
            sigma2: 0.25,
        }
    }

    const C01: Contrast = Contrast { x_star: 0.0, x: 1.0 };

    fn gh() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    /// A fit object carrying `p` with covariance `cov` (7x7).
    fn fit_with(p: ModelParams, cov: DMatrix<f64>) -> JointFit {
        let outcome = OutcomeParams {
            beta0: p.beta0,
            beta_x: p.beta_x,
            beta_w: p.beta_w,
            beta_xw: p.beta_xw,
            cov: cov.view((0, 0), (4, 4)).into_owned(),
            interaction_included: true,
            firth_used: false,
            iterations: 0,
        };
        let mediator = MediatorParams {
            theta0: p.theta0,
            theta_x: p.theta_x,
            sigma2: p.sigma2,
            cov_theta: Matrix2::new(cov[(4, 4)], cov[(4, 5)], cov[(5, 4)], cov[(5, 5)]),
            var_sigma2: cov[(6, 6)],
            df: 100,
        };
        JointFit { outcome, mediator, sigma_full: cov }
    }

    #[test]
    fn h_definitions() {
        let p = reference(-0.5);
        let m = StructuralModel::logit_normal(p).unwrap();
        for &x in &[0.0, 1.0, 2.0] {
            let h = h_exact(&p, x, x, gh()).unwrap();
            assert!((h - marginal_prob_exact(&m, x, gh()).unwrap()).abs() < 1e-10);
            let approx = expit(marginal_logit_approx(&m, x).unwrap());
            assert!((h_closed(&p, x, x) - approx).abs() < 1e-12);
        }
        let nde = logit(h_exact(&p, 1.0, 0.0, gh()).unwrap()) - logit(h_exact(&p, 0.0, 0.0, gh()).unwrap());
        assert!((nde - 0.409).abs() < 0.001, "{nde}");
        assert!((h_closed(&p, 1.0, 0.0) - h_exact(&p, 1.0, 0.0, gh()).unwrap()).abs() < 0.005);

        let mut flat = p;
        flat.beta_w = 0.0;
        flat.beta_xw = 0.0;
        for &xs in &[0.0, 1.0, 3.0] {
            assert_eq!(h_exact(&flat, 1.0, xs, gh()).unwrap(), expit(-0.1));
            assert!((h_closed(&flat, 1.0, xs) - expit(-0.1)).abs() < 1e-15);
        }
    }

    #[test]
    fn h_exact_against_direct_integration() {
        // direct integral over w with the mediator law under x*, adaptive rule
        let p = reference(-2.0);
        let (x, xs) = (1.0, 0.0);
        let mean = p.theta0 + p.theta_x * xs;
        let sigma = p.sigma();
        let direct = crate::math::integrate_real_line(
            |w| {
                let lin = p.beta0 + p.beta_x * x + p.beta_w * w + p.beta_xw * x * w;
                expit(lin) * crate::math::norm_pdf((w - mean) / sigma) / sigma
            },
            sigma,
            1e-12,
            1e-12,
            400,
        )
        .unwrap();
        assert!((h_exact(&p, x, xs, gh()).unwrap() - direct).abs() < 1e-9);
    }

    #[test]
    fn closed_form_examples() {
        let p = reference(-0.5);
        let e = effects_closed(&p, C01);
        assert!((e.nde - 0.4113).abs() < 0.0005, "{}", e.nde);
        assert!((e.nie - 0.3199).abs() < 0.0001, "{}", e.nie);
        let same = Contrast::new(0.7, 0.7).unwrap();
        assert_eq!(nde_closed(&p, same), 0.0);
        assert_eq!(nie_closed(&p, same), 0.0);
        let mut no_med = p;
        no_med.theta_x = 0.0;
        assert_eq!(nie_closed(&no_med, C01), 0.0);
        let pm = proportion_mediated(e.nde, e.nie).unwrap();
        assert!((pm - 0.4375).abs() < 0.0005, "{pm}");
    }

    #[test]
    fn exact_true_values() {
        let e = effects_exact(&reference(-3.0), C01, gh()).unwrap();
        assert!((e.nde - 0.431).abs() < 0.001);
        assert!((e.nie - 0.322).abs() < 0.001);
        let p = reference(-0.5);
        let e = effects_exact(&p, C01, gh()).unwrap();
        let total = logit(h_exact(&p, 1.0, 1.0, gh()).unwrap()) - logit(h_exact(&p, 0.0, 0.0, gh()).unwrap());
        assert!((e.nte() - total).abs() < 1e-10);
        let z = effects_exact(&p, Contrast::new(1.0, 1.0).unwrap(), gh()).unwrap();
        assert_eq!((z.nde, z.nie), (0.0, 0.0));
    }

    #[test]
    fn closed_form_tracks_exact_across_prevalences() {
        for &b0 in &[-3.0, -2.0, -0.5, 1.0, 2.0] {
            let p = reference(b0);
            let exact = effects_exact(&p, C01, gh()).unwrap();
            let closed = effects_closed(&p, C01);
            assert!((exact.nde - closed.nde).abs() < 0.01, "b0={b0}");
            assert!((exact.nie - closed.nie).abs() < 0.01, "b0={b0}");
        }
    }

    #[test]
    fn vv_baseline() {
        let p = reference(-0.5);
        let e = effects_vv(&p, C01);
        assert!((e.nie - 0.325).abs() < 1e-12);
        let mut no_int = p;
        no_int.beta_xw = 0.0;
        let e = effects_vv(&no_int, Contrast::new(0.5, 2.0).unwrap());
        assert!((e.nde - 0.4 * 1.5).abs() < 1e-15);
        assert!((e.nie - 0.25 * 1.5).abs() < 1e-15);
        let z = effects_vv(&p, Contrast::new(1.0, 1.0).unwrap());
        assert_eq!((z.nde, z.nie), (0.0, 0.0));
    }

    #[test]
    fn gaynor_baseline() {
        let p = reference(-0.5);
        let e = effects_gaynor(&p, C01, GAYNOR_DEFAULT_C);
        assert!((e.nde - 0.409).abs() < 0.02, "{}", e.nde);
        let mut flat = p;
        flat.beta_w = 0.0;
        flat.beta_xw = 0.0;
        let e = effects_gaynor(&flat, C01, 1.6);
        assert_eq!(e.nie, 0.0);
        let expect = logit(norm_cdf(-0.1 / 1.6)) - logit(norm_cdf(-0.5 / 1.6));
        assert!((e.nde - expect).abs() < 1e-14);
        // worse than the closed form when the outcome is rare
        let p = reference(-3.0);
        let truth = effects_exact(&p, C01, gh()).unwrap().nde;
        let g = effects_gaynor(&p, C01, GAYNOR_DEFAULT_C).nde;
        assert!((g - truth).abs() > (nde_closed(&p, C01) - truth).abs());
    }

    #[test]
    fn no_interaction_reduction() {
        let mut p = reference(-0.5);
        p.beta_xw = 0.0;
        let c = Contrast::new(0.3, 1.8).unwrap();
        let d = (p.beta_w * p.beta_w * p.sigma2 + PI_OVER_SQRT3 * PI_OVER_SQRT3).sqrt();
        assert!((nde_closed(&p, c) - PI_OVER_SQRT3 * p.beta_x * 1.5 / d).abs() < 1e-12);
        assert!((nie_closed(&p, c) - PI_OVER_SQRT3 * p.beta_w * p.theta_x * 1.5 / d).abs() < 1e-12);
        let g = grad_nde_closed(&p, c);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[4], 0.0);
        assert_eq!(g[5], 0.0);
    }

    fn finite_difference(f: impl Fn(&ModelParams) -> f64, p: &ModelParams, i: usize) -> f64 {
        let h = 1e-6;
        let mut up = p.to_array();
        let mut dn = p.to_array();
        up[i] += h;
        dn[i] -= h;
        (f(&ModelParams::from_array(up)) - f(&ModelParams::from_array(dn))) / (2.0 * h)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-5 * a.abs().max(b.abs()) + 1e-9
    }

    #[test]
    fn gradients_match_finite_differences_at_reference_point() {
        let p = reference(-0.5);
        let gn = grad_nde_closed(&p, C01);
        let gi = grad_nie_closed(&p, C01);
        for i in 0..7 {
            let fd = finite_difference(|q| nde_closed(q, C01), &p, i);
            assert!(close(gn[i], fd), "nde {i}: {} vs {fd}", gn[i]);
            let fd = finite_difference(|q| nie_closed(q, C01), &p, i);
            assert!(close(gi[i], fd), "nie {i}: {} vs {fd}", gi[i]);
        }
        assert_eq!([gi[0], gi[1], gi[4]], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn delta_se_special_cases() {
        let p = reference(-0.5);
        let zero = fit_with(p, DMatrix::zeros(7, 7));
        assert_eq!(delta_se_nde(&zero, C01, DeltaOptions::default()).unwrap(), 0.0);

        // theta_x = 0 and no interaction: only var(theta_x) contributes to the NIE
        let mut q = p;
        q.theta_x = 0.0;
        q.beta_xw = 0.0;
        let var_tx = 0.013;
        let mut cov = DMatrix::identity(7, 7) * 0.02;
        cov[(5, 5)] = var_tx;
        let fit = fit_with(q, cov);
        let se = delta_se_nie(&fit, C01, DeltaOptions::default()).unwrap();
        let d = (q.beta_w * q.beta_w * q.sigma2 + PI_OVER_SQRT3 * PI_OVER_SQRT3).sqrt();
        let expect = PI_OVER_SQRT3 * var_tx.sqrt() * q.beta_w.abs() / d;
        assert!((se - expect).abs() < 1e-14);

        let mut bad = DMatrix::identity(7, 7);
        bad[(0, 1)] = 2.0;
        bad[(1, 0)] = 2.0;
        let fit = fit_with(p, bad);
        assert!(matches!(
            delta_se_nde(&fit, C01, DeltaOptions::default()),
            Err(Error::SingularCovariance(_))
        ));
    }

    #[test]
    fn sigma2_switch_only_removes_its_block() {
        let p = reference(-0.5);
        let mut cov = DMatrix::identity(7, 7) * 0.01;
        cov[(6, 6)] = 0.5;
        let fit = fit_with(p, cov.clone());
        let with = delta_se_nde(&fit, C01, DeltaOptions { propagate_sigma2: true }).unwrap();
        let without = delta_se_nde(&fit, C01, DeltaOptions { propagate_sigma2: false }).unwrap();
        let g = grad_nde_closed(&p, C01);
        let expected_with: f64 = (0..7).map(|i| g[i] * g[i] * cov[(i, i)]).sum::<f64>().sqrt();
        let expected_without: f64 = (0..6).map(|i| g[i] * g[i] * cov[(i, i)]).sum::<f64>().sqrt();
        assert!((with - expected_with).abs() < 1e-15);
        assert!((without - expected_without).abs() < 1e-15);
    }

    #[test]
    fn proportion_mediated_rules() {
        assert_eq!(proportion_mediated(0.3, 0.0).unwrap(), 0.0);
        assert_eq!(proportion_mediated(0.3, 0.3).unwrap(), 0.5);
        assert_eq!(proportion_mediated(-0.2, -0.2).unwrap(), 0.5);
        assert!(matches!(proportion_mediated(0.3, -0.1), Err(Error::SignMismatch { .. })));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{m}\""));
            assert_eq!(serde_json::from_str::<Method>(&json).unwrap(), m);
        }
        assert!("probit".parse::<Method>().is_err());
    }

    fn arb_point() -> impl Strategy<Value = (ModelParams, Contrast)> {
        (
            prop::array::uniform4(-2.0f64..2.0),
            prop::array::uniform2(-2.0f64..2.0),
            0.2f64..2.0,
            prop::array::uniform2(-2.0f64..2.0),
        )
            .prop_map(|(b, t, s, c)| {
                let p = ModelParams {
                    beta0: b[0],
                    beta_x: b[1],
                    beta_w: b[2],
                    beta_xw: b[3],
                    theta0: t[0],
                    theta_x: t[1],
                    sigma2: s * s,
                };
                (p, Contrast { x_star: c[0], x: c[1] })
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gradients_match_finite_differences((p, c) in arb_point()) {
            let gn = grad_nde_closed(&p, c);
            let gi = grad_nie_closed(&p, c);
            for i in 0..7 {
                let fd = finite_difference(|q| nde_closed(q, c), &p, i);
                prop_assert!(close(gn[i], fd), "nde {}: {} vs {}", i, gn[i], fd);
                let fd = finite_difference(|q| nie_closed(q, c), &p, i);
                prop_assert!(close(gi[i], fd), "nie {}: {} vs {}", i, gi[i], fd);
            }
        }

        #[test]
        fn additivity_for_every_method((p, c) in arb_point()) {
            let settings = MethodSettings::default();
            for m in Method::ALL {
                let e = point_effects(&p, c, m, &settings).unwrap();
                let total = match m {
                    Method::Exact => {
                        logit(h_exact(&p, c.x, c.x, settings.quadrature).unwrap())
                            - logit(h_exact(&p, c.x_star, c.x_star, settings.quadrature).unwrap())
                    }
                    Method::ClosedForm => logit(h_closed(&p, c.x, c.x)) - logit(h_closed(&p, c.x_star, c.x_star)),
                    _ => e.nde + e.nie,
                };
                prop_assert!((e.nte() - total).abs() < 1e-10, "{} {} {}", m, e.nte(), total);
            }
        }

        #[test]
        fn nie_depends_on_contrast_width_without_interaction((mut p, c) in arb_point(), shift in -3.0f64..3.0) {
            p.beta_xw = 0.0;
            let moved = Contrast { x_star: c.x_star + shift, x: c.x + shift };
            prop_assert!((nie_closed(&p, c) - nie_closed(&p, moved)).abs() < 1e-12);
        }
    }
}
