//! Serializable reports and their readers.

use std::fs;
use std::io::Write;
use std::path::Path;

use medmarg::mediation::{Effect, MediationReport, Method};
use medmarg::regression::ModelParams;
use medmarg::sensitivity::SensitivityInput;
use medmarg::simulation::{StudyReport, TableRow};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::study::StudyConfig;

/// Version of the JSON report layout.
pub const SPEC_VERSION: &str = "1.0.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionDecision {
    pub mode: String,
    pub included: bool,
    /// Wald statistic of the interaction term, present in auto mode.
    pub wald_z: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub model: String,
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub spec_version: String,
    pub n: usize,
    pub level: f64,
    pub firth: bool,
    pub interaction: InteractionDecision,
    pub iterations: usize,
    pub mediator_df: usize,
    pub coefficients: Vec<CoefRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediateReport {
    pub spec_version: String,
    pub n: usize,
    pub level: f64,
    pub interaction: InteractionDecision,
    pub analysis: MediationReport,
}

/// One flat CSV row of a mediation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub method: Method,
    pub effect: Effect,
    pub estimate: f64,
    pub se_delta: Option<f64>,
    pub ci_delta_lower: Option<f64>,
    pub ci_delta_upper: Option<f64>,
    pub ci_boot_lower: Option<f64>,
    pub ci_boot_upper: Option<f64>,
}

impl MediateReport {
    pub fn rows(&self) -> Vec<EstimateRow> {
        self.analysis
            .estimates
            .iter()
            .map(|e| EstimateRow {
                method: e.method,
                effect: e.effect,
                estimate: e.estimate,
                se_delta: e.se_delta,
                ci_delta_lower: e.ci_delta.map(|c| c.lower),
                ci_delta_upper: e.ci_delta.map(|c| c.upper),
                ci_boot_lower: e.ci_boot.map(|c| c.lower),
                ci_boot_upper: e.ci_boot.map(|c| c.upper),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalRow {
    pub x: f64,
    pub eta_x: f64,
    pub marginal_logit_approx: f64,
    pub marginal_prob_approx: f64,
    /// Empty when the quadrature failed at this point.
    pub marginal_prob_exact: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalReport {
    pub spec_version: String,
    pub params: ModelParams,
    pub source: String,
    pub rows: Vec<MarginalRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub beta_w: f64,
    pub rho: f64,
    pub beta_x_adjusted: Option<f64>,
    pub sign_flipped: Option<bool>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub spec_version: String,
    pub input: SensitivityInput,
    pub eta_source: String,
    pub rows: Vec<SensitivityRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMetadata {
    pub seed: u64,
    pub generator: String,
    pub version: String,
    pub wall_time_seconds: f64,
    pub scenarios: usize,
    pub failed_scenarios: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub spec_version: String,
    pub metadata: StudyMetadata,
    pub config: StudyConfig,
    pub study: StudyReport,
    pub table: Vec<TableRow>,
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(format!("json encoding: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| CliError::Parse { line: e.line() as u64, message: e.to_string() })
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Input(format!("csv encoding: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(format!("csv encoding: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Input(format!("csv encoding: {e}")))
}

pub fn from_csv<T: DeserializeOwned>(text: &str) -> CliResult<Vec<T>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| {
            row.map_err(|e| CliError::Parse { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })
        })
        .collect()
}

/// Writes to `path`, or to stdout when absent.
pub fn write_output(text: &str, path: Option<&Path>) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e)),
    }
}
