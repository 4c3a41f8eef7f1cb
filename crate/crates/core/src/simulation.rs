//! Monte-Carlo study harness: data generation from the structural models,
//! quadrature truth, and bias / SD / coverage summaries per method.
//!
//! Every replicate draws from a ChaCha8 generator whose seed is a pure
//! function of (study seed, scenario index, replicate index), and results are
//! collected in replicate order, so output does not depend on the number of
//! worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{expit, mean, sample_sd, QuadratureSpec};
use crate::mediation::{
    bootstrap_effects, delta_se_nde, delta_se_nie, effects_exact, point_effects, BootstrapConfig,
    ConfidenceInterval, Contrast, DeltaOptions, Effect, EffectPair, Method, MethodSettings,
};
use crate::regression::{fit_joint, Dataset, ModelParams};

/// Name of the random generator, recorded in study metadata.
pub const GENERATOR: &str = "ChaCha8";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub p_x: f64,
    pub theta0: f64,
    pub theta_x: f64,
    pub sigma: f64,
    pub beta0: f64,
    pub beta_x: f64,
    pub beta_w: f64,
    pub beta_xw: f64,
    pub n: usize,
    pub replications: usize,
    pub contrast: Contrast,
    /// 0 disables the bootstrap.
    pub bootstrap_reps: usize,
    pub ci_level: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Fit the outcome model with the exposure-mediator interaction.
    pub interaction: bool,
    /// Use Firth-penalized fits in every replicate.
    pub firth: bool,
    pub settings: MethodSettings,
    pub delta: DeltaOptions,
}

impl SimConfig {
    pub const MIN_N: usize = 50;
    /// Failed replicates tolerated, in percent.
    pub const FAILURE_LIMIT_PCT: u32 = 20;

    /// The reference design with binary exposure: `p_x = 0.3`, mediator
    /// `N(0.1 + 0.5x, 0.5^2)`, outcome slopes `(0.4, 0.5, 0.15)`.
    pub fn reference(beta0: f64, n: usize) -> Self {
        SimConfig {
            p_x: 0.3,
            theta0: 0.1,
            theta_x: 0.5,
            sigma: 0.5,
            beta0,
            beta_x: 0.4,
            beta_w: 0.5,
            beta_xw: 0.15,
            n,
            replications: 500,
            contrast: Contrast { x_star: 0.0, x: 1.0 },
            bootstrap_reps: 0,
            ci_level: 0.95,
            seed: 2024,
            methods: Method::ALL.to_vec(),
            interaction: true,
            firth: false,
            settings: MethodSettings::default(),
            delta: DeltaOptions::default(),
        }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            beta0: self.beta0,
            beta_x: self.beta_x,
            beta_w: self.beta_w,
            beta_xw: self.beta_xw,
            theta0: self.theta0,
            theta_x: self.theta_x,
            sigma2: self.sigma * self.sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::InvalidConfig(format!("{field}: {why}")));
        if !(self.p_x > 0.0 && self.p_x < 1.0) {
            return bad("p_x", format!("must be in (0, 1), got {}", self.p_x));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma", format!("must be positive, got {}", self.sigma));
        }
        for (name, v) in [
            ("theta0", self.theta0),
            ("theta_x", self.theta_x),
            ("beta0", self.beta0),
            ("beta_x", self.beta_x),
            ("beta_w", self.beta_w),
            ("beta_xw", self.beta_xw),
            ("contrast", self.contrast.x_star),
            ("contrast", self.contrast.x),
        ] {
            if !v.is_finite() {
                return bad(name, format!("must be finite, got {v}"));
            }
        }
        if self.n < Self::MIN_N {
            return bad("n", format!("must be at least {}, got {}", Self::MIN_N, self.n));
        }
        if self.replications == 0 {
            return bad("replications", "must be at least 1".into());
        }
        if self.bootstrap_reps != 0 && self.bootstrap_reps < BootstrapConfig::MIN_REPLICATIONS {
            return bad(
                "bootstrap_reps",
                format!("must be 0 or at least {}, got {}", BootstrapConfig::MIN_REPLICATIONS, self.bootstrap_reps),
            );
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return bad("ci_level", format!("must be in (0, 1), got {}", self.ci_level));
        }
        if self.methods.is_empty() {
            return bad("methods", "at least one method is required".into());
        }
        self.settings.quadrature.validate().map_err(|e| Error::InvalidConfig(format!("quadrature: {e}")))?;
        if !(self.settings.gaynor_c > 0.0 && self.settings.gaynor_c.is_finite()) {
            return bad("gaynor_c", format!("must be positive, got {}", self.settings.gaynor_c));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `replicate` in scenario `scenario` of a study seeded with `seed`.
pub fn replicate_seed(seed: u64, scenario: usize, replicate: usize) -> u64 {
    mix(mix(mix(seed) ^ scenario as u64) ^ replicate as u64)
}

/// Draws `n` rows: `X ~ Bern(p_x)`, `W | X ~ N(theta0 + theta_x X, sigma^2)`,
/// `Y | X, W ~ Bern(expit(b0 + bx X + bw W + bxw X W))`.
pub fn generate_dataset(cfg: &SimConfig, replicate_seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed);
    let n = cfg.n;
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = if rng.random::<f64>() < cfg.p_x { 1.0 } else { 0.0 };
        let z: f64 = rng.sample(StandardNormal);
        let wi = cfg.theta0 + cfg.theta_x * xi + cfg.sigma * z;
        let eta = cfg.beta0 + cfg.beta_x * xi + cfg.beta_w * wi + cfg.beta_xw * xi * wi;
        let yi = if rng.random::<f64>() < expit(eta) { 1.0 } else { 0.0 };
        y.push(yi);
        x.push(xi);
        w.push(wi);
    }
    Dataset::new(y, x, w)
}

/// Draws from a standardized bivariate-normal confounding world:
/// `(X, W)` with unit variances and correlation `rho`, and
/// `Y ~ Bern(expit(b0 + bx X + bw W))`. Returns `(y, x, w)`.
pub fn generate_confounded(
    n: usize,
    beta0: f64,
    beta_x: f64,
    beta_w: f64,
    rho: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let resid = (1.0 - rho * rho).sqrt();
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let wi = rho * xi + resid * e;
        let yi = if rng.random::<f64>() < expit(beta0 + beta_x * xi + beta_w * wi) { 1.0 } else { 0.0 };
        y.push(yi);
        x.push(xi);
        w.push(wi);
    }
    (y, x, w)
}

/// Exact natural effects at the generating parameters.
pub fn true_effects(cfg: &SimConfig, spec: QuadratureSpec) -> Result<EffectPair> {
    effects_exact(&cfg.params(), cfg.contrast, spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub effect: Effect,
    pub true_value: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub sd: f64,
    /// Percent of Delta-method intervals covering the truth (closed form only).
    pub coverage_delta: Option<f64>,
    /// Percent of percentile-bootstrap intervals covering the truth.
    pub coverage_boot: Option<f64>,
    pub n_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub config: SimConfig,
    pub truth: EffectPair,
    pub summaries: Vec<MethodSummary>,
    pub replications: usize,
    pub n_failed: usize,
    /// Replicates whose bootstrap itself failed (too many failed resamples).
    pub n_boot_failed: usize,
}

impl ScenarioResult {
    pub fn get(&self, method: Method, effect: Effect) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method && s.effect == effect)
    }
}

struct ReplicateOutcome {
    estimates: Vec<EffectPair>,
    delta: Option<(ConfidenceInterval, ConfidenceInterval)>,
    boot: Option<Vec<(ConfidenceInterval, ConfidenceInterval)>>,
}

fn run_replicate(cfg: &SimConfig, methods: &[Method], seed: u64) -> Option<ReplicateOutcome> {
    let data = generate_dataset(cfg, seed).ok()?;
    let fit = fit_joint(&data, cfg.interaction, cfg.firth).ok()?;
    let p = fit.params();
    let estimates: Vec<EffectPair> = methods
        .iter()
        .map(|&m| point_effects(&p, cfg.contrast, m, &cfg.settings))
        .collect::<Result<_>>()
        .ok()?;
    let delta = match methods.iter().position(|&m| m == Method::ClosedForm) {
        Some(j) => {
            let se_nde = delta_se_nde(&fit, cfg.contrast, cfg.delta).ok()?;
            let se_nie = delta_se_nie(&fit, cfg.contrast, cfg.delta).ok()?;
            Some((
                ConfidenceInterval::wald(estimates[j].nde, se_nde, cfg.ci_level),
                ConfidenceInterval::wald(estimates[j].nie, se_nie, cfg.ci_level),
            ))
        }
        None => None,
    };
    let boot = if cfg.bootstrap_reps > 0 {
        let bcfg = BootstrapConfig {
            replications: cfg.bootstrap_reps,
            level: cfg.ci_level,
            seed: mix(seed ^ 0xB007),
            interaction: cfg.interaction,
            firth: cfg.firth,
        };
        bootstrap_effects(&data, cfg.contrast, methods, &cfg.settings, &bcfg)
            .ok()
            .map(|b| b.intervals.iter().map(|iv| (iv.nde, iv.nie)).collect())
    } else {
        None
    };
    Some(ReplicateOutcome { estimates, delta, boot })
}

fn percent(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * hits as f64 / total as f64)
}

pub fn run_scenario(cfg: &SimConfig) -> Result<ScenarioResult> {
    run_scenario_indexed(cfg, 0)
}

/// Runs one scenario; `index` selects its block of replicate seeds within a study.
pub fn run_scenario_indexed(cfg: &SimConfig, index: usize) -> Result<ScenarioResult> {
    cfg.validate()?;
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let truth = true_effects(cfg, cfg.settings.quadrature)?;

    let outcomes: Vec<Option<ReplicateOutcome>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replicate(cfg, &methods, replicate_seed(cfg.seed, index, r)))
        .collect();
    let ok: Vec<&ReplicateOutcome> = outcomes.iter().flatten().collect();
    let n_failed = cfg.replications - ok.len();
    if n_failed * 100 > cfg.replications * SimConfig::FAILURE_LIMIT_PCT as usize {
        return Err(Error::TooManyFailures {
            failed: n_failed,
            total: cfg.replications,
            limit_pct: SimConfig::FAILURE_LIMIT_PCT,
        });
    }
    let n_boot_failed = if cfg.bootstrap_reps > 0 { ok.iter().filter(|o| o.boot.is_none()).count() } else { 0 };

    let mut summaries = Vec::new();
    for (j, &method) in methods.iter().enumerate() {
        for effect in [Effect::Nde, Effect::Nie] {
            let pick = |e: &EffectPair| if effect == Effect::Nde { e.nde } else { e.nie };
            let pick_ci = |pair: &(ConfidenceInterval, ConfidenceInterval)| {
                if effect == Effect::Nde { pair.0 } else { pair.1 }
            };
            let true_value = pick(&truth);
            let est: Vec<f64> = ok.iter().map(|o| pick(&o.estimates[j])).collect();
            let mean_estimate = mean(&est);
            let coverage_delta = if method == Method::ClosedForm {
                let hits = ok.iter().filter(|o| o.delta.as_ref().is_some_and(|d| pick_ci(d).contains(true_value))).count();
                percent(hits, ok.len())
            } else {
                None
            };
            let coverage_boot = if cfg.bootstrap_reps > 0 {
                let with: Vec<&Vec<_>> = ok.iter().filter_map(|o| o.boot.as_ref()).collect();
                let hits = with.iter().filter(|b| pick_ci(&b[j]).contains(true_value)).count();
                percent(hits, with.len())
            } else {
                None
            };
            summaries.push(MethodSummary {
                method,
                effect,
                true_value,
                mean_estimate,
                bias: mean_estimate - true_value,
                sd: sample_sd(&est),
                coverage_delta,
                coverage_boot,
                n_used: est.len(),
            });
        }
    }
    Ok(ScenarioResult {
        config: cfg.clone(),
        truth,
        summaries,
        replications: cfg.replications,
        n_failed,
        n_boot_failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub index: usize,
    pub result: Option<ScenarioResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub scenarios: Vec<ScenarioOutcome>,
}

/// One line of the results table: method x effect x beta0 x n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub scenario: usize,
    pub method: Method,
    pub effect: Effect,
    pub beta0: f64,
    pub n: usize,
    pub true_val: f64,
    pub bias: f64,
    pub sd: f64,
    pub cv: Option<f64>,
    pub cvb: Option<f64>,
    pub n_used: usize,
}

impl StudyReport {
    pub fn n_failed_scenarios(&self) -> usize {
        self.scenarios.iter().filter(|s| s.result.is_none()).count()
    }

    pub fn table(&self) -> Vec<TableRow> {
        let mut rows = Vec::new();
        for s in &self.scenarios {
            let Some(r) = &s.result else { continue };
            for m in &r.summaries {
                rows.push(TableRow {
                    scenario: s.index,
                    method: m.method,
                    effect: m.effect,
                    beta0: r.config.beta0,
                    n: r.config.n,
                    true_val: m.true_value,
                    bias: m.bias,
                    sd: m.sd,
                    cv: m.coverage_delta,
                    cvb: m.coverage_boot,
                    n_used: m.n_used,
                });
            }
        }
        rows
    }
}

/// Runs every scenario in order. Configuration errors abort the study;
/// numerical failures are recorded per scenario and the study continues.
pub fn run_study(cfgs: &[SimConfig]) -> Result<StudyReport> {
    if cfgs.is_empty() {
        return Err(Error::InvalidConfig("study has no scenarios".into()));
    }
    for (i, c) in cfgs.iter().enumerate() {
        c.validate().map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("scenario {i}: {m}")),
            other => other,
        })?;
    }
    let scenarios = cfgs
        .iter()
        .enumerate()
        .map(|(index, cfg)| match run_scenario_indexed(cfg, index) {
            Ok(r) => ScenarioOutcome { index, result: Some(r), error: None },
            Err(e) => ScenarioOutcome { index, result: None, error: Some(e.to_string()) },
        })
        .collect();
    Ok(StudyReport { scenarios })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(beta0: f64) -> SimConfig {
        let mut c = SimConfig::reference(beta0, 200);
        c.replications = 20;
        c
    }

    #[test]
    fn validation_names_fields() {
        let mut c = tiny(-0.5);
        c.methods.clear();
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(m)) if m.starts_with("methods")));
        let mut c = tiny(-0.5);
        c.p_x = 1.0;
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(m)) if m.starts_with("p_x")));
        let mut c = tiny(-0.5);
        c.n = 20;
        assert!(c.validate().is_err());
        let mut c = tiny(-0.5);
        c.bootstrap_reps = 5;
        assert!(c.validate().is_err());
        assert!(run_study(&[]).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let c = tiny(-0.5);
        assert_eq!(generate_dataset(&c, 17).unwrap(), generate_dataset(&c, 17).unwrap());
        assert_ne!(generate_dataset(&c, 17).unwrap(), generate_dataset(&c, 18).unwrap());
        assert_ne!(replicate_seed(1, 0, 0), replicate_seed(1, 0, 1));
        assert_ne!(replicate_seed(1, 0, 1), replicate_seed(1, 1, 0));
    }

    #[test]
    fn degenerate_exposure_arm() {
        let mut c = tiny(-0.5);
        c.p_x = 0.0;
        c.n = 4000;
        let d = generate_dataset(&c, 3).unwrap();
        assert!(d.x().iter().all(|&x| x == 0.0));
        let m = mean(d.w());
        assert!((m - c.theta0).abs() < 4.0 * c.sigma / (c.n as f64).sqrt());
    }

    #[test]
    fn truth_ignores_sampling_settings() {
        let a = tiny(1.0);
        let mut b = a.clone();
        b.n = 5000;
        b.replications = 3;
        b.seed = 99;
        let ta = true_effects(&a, QuadratureSpec::default()).unwrap();
        assert_eq!(ta, true_effects(&b, QuadratureSpec::default()).unwrap());
        assert!((ta.nde - 0.398).abs() < 0.001 && (ta.nie - 0.320).abs() < 0.001);
        let mut c = a.clone();
        c.theta_x = 0.0;
        assert_eq!(true_effects(&c, QuadratureSpec::default()).unwrap().nie, 0.0);
    }

    #[test]
    fn single_replicate_is_reproducible() {
        let mut c = tiny(-0.5);
        c.replications = 1;
        let a = run_scenario(&c).unwrap();
        assert_eq!(a, run_scenario(&c).unwrap());
        assert_eq!(a.summaries.len(), 8);
        assert_eq!(a.get(Method::ClosedForm, Effect::Nde).unwrap().sd, 0.0);
        assert!(a.summaries.iter().all(|s| s.coverage_delta.is_some() == (s.method == Method::ClosedForm)));
    }

    #[test]
    fn study_keeps_scenario_order() {
        let study = run_study(&[tiny(-0.5), tiny(1.0)]).unwrap();
        assert_eq!(study.scenarios.len(), 2);
        assert_eq!(study.scenarios[0].index, 0);
        assert_eq!(study.scenarios[1].result.as_ref().unwrap().config.beta0, 1.0);
        let t = study.table();
        assert_eq!(t.len(), 16);
        assert!(t[..8].iter().all(|r| r.beta0 == -0.5));
    }
}
