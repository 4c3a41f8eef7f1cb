//! TOML study configuration.
//!
//! ```toml
//! seed = 2024
//! replications = 500
//! bootstrap_reps = 200
//! methods = ["closed", "exact", "vv", "gaynor"]
//!
//! [grid]
//! beta0 = [-3.0, -2.0, -0.5, 1.0, 2.0]
//! n = [500, 1000]
//!
//! [design]          # optional; defaults to the reference design
//! beta_xw = 0.15
//! ```

use std::path::Path;

use medmarg::math::QuadratureSpec;
use medmarg::mediation::{Contrast, DeltaOptions, Method, MethodSettings, GAYNOR_DEFAULT_C};
use medmarg::simulation::SimConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Generating parameters shared by every scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Design {
    pub p_x: f64,
    pub theta0: f64,
    pub theta_x: f64,
    pub sigma: f64,
    pub beta_x: f64,
    pub beta_w: f64,
    pub beta_xw: f64,
}

impl Default for Design {
    fn default() -> Self {
        let r = SimConfig::reference(0.0, SimConfig::MIN_N);
        Design {
            p_x: r.p_x,
            theta0: r.theta0,
            theta_x: r.theta_x,
            sigma: r.sigma,
            beta_x: r.beta_x,
            beta_w: r.beta_w,
            beta_xw: r.beta_xw,
        }
    }
}

/// Scenarios are the cross product `n x beta0`, `n` outer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub beta0: Vec<f64>,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub seed: u64,
    pub replications: usize,
    pub bootstrap_reps: usize,
    pub ci_level: f64,
    pub methods: Vec<Method>,
    pub interaction: bool,
    pub firth: bool,
    pub gaynor_c: f64,
    pub quadrature_nodes: usize,
    pub propagate_sigma2: bool,
    pub contrast: [f64; 2],
    pub design: Design,
    pub grid: Grid,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            seed: 2024,
            replications: 500,
            bootstrap_reps: 200,
            ci_level: 0.95,
            methods: Method::ALL.to_vec(),
            interaction: true,
            firth: false,
            gaynor_c: GAYNOR_DEFAULT_C,
            quadrature_nodes: QuadratureSpec::DEFAULT_NODES,
            propagate_sigma2: true,
            contrast: [0.0, 1.0],
            design: Design::default(),
            grid: Grid { beta0: Vec::new(), n: Vec::new() },
        }
    }
}

impl StudyConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Expands the grid and validates every scenario.
    pub fn scenarios(&self) -> CliResult<Vec<SimConfig>> {
        if self.grid.beta0.is_empty() {
            return Err(CliError::Config("grid.beta0: must not be empty".into()));
        }
        if self.grid.n.is_empty() {
            return Err(CliError::Config("grid.n: must not be empty".into()));
        }
        let quadrature = QuadratureSpec::GaussHermite { nodes: self.quadrature_nodes };
        let d = &self.design;
        let mut out = Vec::new();
        for &n in &self.grid.n {
            for &beta0 in &self.grid.beta0 {
                let cfg = SimConfig {
                    p_x: d.p_x,
                    theta0: d.theta0,
                    theta_x: d.theta_x,
                    sigma: d.sigma,
                    beta0,
                    beta_x: d.beta_x,
                    beta_w: d.beta_w,
                    beta_xw: d.beta_xw,
                    n,
                    replications: self.replications,
                    contrast: Contrast { x_star: self.contrast[0], x: self.contrast[1] },
                    bootstrap_reps: self.bootstrap_reps,
                    ci_level: self.ci_level,
                    seed: self.seed,
                    methods: self.methods.clone(),
                    interaction: self.interaction,
                    firth: self.firth,
                    settings: MethodSettings { quadrature, gaynor_c: self.gaynor_c },
                    delta: DeltaOptions { propagate_sigma2: self.propagate_sigma2 },
                };
                cfg.validate().map_err(|e| match e {
                    medmarg::Error::InvalidConfig(m) => CliError::Config(m),
                    other => CliError::Config(other.to_string()),
                })?;
                out.push(cfg);
            }
        }
        Ok(out)
    }
}
