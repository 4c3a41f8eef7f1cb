use std::path::PathBuf;
use std::time::Instant;

use medmarg::marginalize::{eta_x, marginal_logit_approx, marginal_prob_exact, StructuralModel};
use medmarg::math::{expit, norm_cdf, norm_quantile, sample_sd, QuadratureSpec};
use medmarg::mediation::{analyze, AnalysisOptions, Contrast, DeltaOptions, MethodSettings};
use medmarg::regression::{fit_joint, fit_logistic, fit_logistic_design, Dataset, ModelParams};
use medmarg::sensitivity::{sweep, SensitivityGrid, SensitivityInput};
use medmarg::simulation::{run_study, GENERATOR};
use nalgebra::DMatrix;

use crate::args::{DataArgs, FitArgs, InteractionMode, MarginalArgs, MediateArgs, SensitivityArgs, SimulateArgs};
use crate::error::{CliError, CliResult};
use crate::input::read_dataset;
use crate::report::{
    to_csv, to_json, CoefRow, FitReport, InteractionDecision, MarginalReport, MarginalRow, MediateReport,
    SensitivityReport, SensitivityRow, SimulateReport, StudyMetadata, SPEC_VERSION,
};
use crate::study::StudyConfig;

/// Significance level of the automatic interaction test.
pub const INTERACTION_ALPHA: f64 = 0.10;

fn load(data: &DataArgs) -> CliResult<Dataset> {
    let path = data.input.as_ref().ok_or_else(|| CliError::Input("--input is required".into()))?;
    Ok(read_dataset(path, &data.columns())?.dataset)
}

fn check_level(level: f64) -> CliResult<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CliError::Input(format!("--level must be in (0, 1), got {level}")))
    }
}

/// Resolves `--interaction`; auto keeps the term when its Wald p-value is below 0.10.
pub fn decide_interaction(data: &Dataset, mode: InteractionMode, firth: bool) -> CliResult<InteractionDecision> {
    let decision = match mode {
        InteractionMode::On => InteractionDecision { mode: "on".into(), included: true, wald_z: None, p_value: None },
        InteractionMode::Off => InteractionDecision { mode: "off".into(), included: false, wald_z: None, p_value: None },
        InteractionMode::Auto => {
            let full = fit_logistic(data, true, firth)?;
            let z = full.beta_xw / full.std_errors()[3];
            let p = 2.0 * norm_cdf(-z.abs());
            let included = p < INTERACTION_ALPHA;
            eprintln!(
                "interaction: auto, wald z = {z:.4}, p = {p:.4}; {} the x*w term",
                if included { "keeping" } else { "dropping" }
            );
            InteractionDecision { mode: "auto".into(), included, wald_z: Some(z), p_value: Some(p) }
        }
    };
    Ok(decision)
}

fn coef_row(model: &str, term: &str, estimate: f64, se: f64, z: f64) -> CoefRow {
    CoefRow { model: model.into(), term: term.into(), estimate, se, lower: estimate - z * se, upper: estimate + z * se }
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<FitReport> {
    check_level(args.level)?;
    let data = load(&args.data)?;
    let interaction = decide_interaction(&data, args.model.interaction, args.model.firth)?;
    let fit = fit_joint(&data, interaction.included, args.model.firth)?;
    let z = norm_quantile(0.5 + args.level / 2.0);

    let mut coefficients = Vec::new();
    let names = ["intercept", "x", "w", "x:w"];
    for ((name, b), se) in names.iter().zip(fit.outcome.coefficients()).zip(fit.outcome.std_errors()) {
        coefficients.push(coef_row("outcome", name, b, se, z));
    }
    let m = &fit.mediator;
    coefficients.push(coef_row("mediator", "intercept", m.theta0, m.cov_theta[(0, 0)].sqrt(), z));
    coefficients.push(coef_row("mediator", "x", m.theta_x, m.cov_theta[(1, 1)].sqrt(), z));
    coefficients.push(coef_row("mediator", "sigma2", m.sigma2, m.var_sigma2.sqrt(), z));

    Ok(FitReport {
        spec_version: SPEC_VERSION.into(),
        n: data.len(),
        level: args.level,
        firth: args.model.firth,
        interaction,
        iterations: fit.outcome.iterations,
        mediator_df: m.df,
        coefficients,
    })
}

pub fn cmd_mediate(args: &MediateArgs) -> CliResult<MediateReport> {
    check_level(args.level)?;
    let contrast = Contrast::new(args.contrast[0], args.contrast[1])?;
    let data = load(&args.data)?;
    let interaction = decide_interaction(&data, args.model.interaction, args.model.firth)?;
    let mut opts = AnalysisOptions::new(contrast, args.methods.clone());
    opts.interaction = interaction.included;
    opts.firth = args.model.firth;
    opts.level = args.level;
    opts.boot_reps = args.boot_reps;
    opts.seed = args.seed;
    opts.delta = DeltaOptions { propagate_sigma2: !args.fixed_sigma2 };
    opts.settings = MethodSettings {
        quadrature: QuadratureSpec::gauss_hermite(args.quad_nodes)?,
        gaynor_c: args.gaynor_c,
    };
    let analysis = analyze(&data, &opts)?;
    for w in &analysis.warnings {
        eprintln!("warning: {w}");
    }
    Ok(MediateReport { spec_version: SPEC_VERSION.into(), n: data.len(), level: args.level, interaction, analysis })
}

/// `start:stop:step` (inclusive, computed as `start + k step`) or a comma list.
pub fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    let num = |s: &str| -> CliResult<f64> {
        let v: f64 = s.trim().parse().map_err(|_| CliError::Input(format!("bad grid value '{s}' in '{spec}'")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CliError::Input(format!("non-finite grid value in '{spec}'")))
        }
    };
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.len() {
        1 => spec.split(',').map(num).collect(),
        3 => {
            let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if step <= 0.0 {
                return Err(CliError::Input(format!("grid step must be positive in '{spec}'")));
            }
            if stop < start {
                return Ok(Vec::new());
            }
            let k = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=k).map(|i| start + i as f64 * step).collect())
        }
        _ => Err(CliError::Input(format!("grid '{spec}' is neither start:stop:step nor a comma list"))),
    }
}

pub fn cmd_marginal(args: &MarginalArgs) -> CliResult<MarginalReport> {
    let (params, source) = match &args.params {
        Some(v) => {
            if v.len() != 7 {
                return Err(CliError::Input(format!("--params needs 7 values b0,bx,bw,bxw,t0,tx,sigma, got {}", v.len())));
            }
            let p = ModelParams { beta0: v[0], beta_x: v[1], beta_w: v[2], beta_xw: v[3], theta0: v[4], theta_x: v[5], sigma2: v[6] * v[6] };
            (p, "params")
        }
        None => {
            let data = load(&args.data)?;
            let inter = decide_interaction(&data, args.model.interaction, args.model.firth)?;
            (fit_joint(&data, inter.included, args.model.firth)?.params(), "fit")
        }
    };
    let grid = parse_grid(&args.grid)?;
    if grid.is_empty() {
        return Err(CliError::Core(medmarg::Error::InvalidConfig("exposure grid is empty".into())));
    }
    let model = StructuralModel::logit_normal(params)?;
    let spec = QuadratureSpec::gauss_hermite(args.quad_nodes)?;
    let mut rows = Vec::with_capacity(grid.len());
    for x in grid {
        let logit = marginal_logit_approx(&model, x)?;
        let (exact, status) = match marginal_prob_exact(&model, x, spec) {
            Ok(p) => (Some(p), "ok".to_string()),
            Err(e @ medmarg::Error::NonConvergence { .. }) => (None, format!("nonconvergence: {e}")),
            Err(e) => return Err(e.into()),
        };
        rows.push(MarginalRow {
            x,
            eta_x: eta_x(&model, x)?,
            marginal_logit_approx: logit,
            marginal_prob_approx: expit(logit),
            marginal_prob_exact: exact,
            status,
        });
    }
    Ok(MarginalReport { spec_version: SPEC_VERSION.into(), params, source: source.into(), rows })
}

pub fn cmd_sensitivity(args: &SensitivityArgs) -> CliResult<SensitivityReport> {
    let (input, source) = match args.eta_x {
        Some(eta) => {
            let input = match args.sigma_x {
                Some(sd) => SensitivityInput::new(eta, sd, false)?,
                None => SensitivityInput::standardized(eta)?,
            };
            (input, "supplied")
        }
        None => {
            let data = load(&args.data)?;
            let design = DMatrix::from_fn(data.len(), 2, |i, j| if j == 0 { 1.0 } else { data.x()[i] });
            let eta = fit_logistic_design(&design, data.y(), false)?.coef[1];
            let sd = args.sigma_x.unwrap_or_else(|| sample_sd(data.x()));
            eprintln!("sensitivity: fitted eta_x = {eta:.6}, sigma_x = {sd:.6}");
            (SensitivityInput::new(eta, sd, false)?, "fitted")
        }
    };
    let grid = SensitivityGrid::new(parse_grid(&args.beta_w)?, parse_grid(&args.rho)?)?;
    let rows = sweep(&input, &grid)?
        .into_iter()
        .map(|r| SensitivityRow {
            beta_w: r.beta_w,
            rho: r.rho,
            beta_x_adjusted: r.beta_x_adjusted,
            sign_flipped: r.sign_flipped,
            status: if r.beta_x_adjusted.is_some() { "ok" } else { "invalid_variance_term" }.into(),
        })
        .collect();
    Ok(SensitivityReport { spec_version: SPEC_VERSION.into(), input, eta_source: source.into(), rows })
}

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub report: SimulateReport,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
}

fn with_extension(prefix: &std::path::Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Runs the study and writes `PREFIX.csv` and `PREFIX.json`.
pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<SimulateOutcome> {
    let config = StudyConfig::load(&args.config)?;
    let scenarios = config.scenarios()?;
    let start = Instant::now();
    let study = run_study(&scenarios)?;
    let wall = start.elapsed().as_secs_f64();
    for s in &study.scenarios {
        if let Some(e) = &s.error {
            eprintln!("scenario {} failed: {e}", s.index);
        }
    }
    let table = study.table();
    let report = SimulateReport {
        spec_version: SPEC_VERSION.into(),
        metadata: StudyMetadata {
            seed: config.seed,
            generator: GENERATOR.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            wall_time_seconds: wall,
            scenarios: study.scenarios.len(),
            failed_scenarios: study.n_failed_scenarios(),
        },
        config,
        study,
        table,
    };
    let csv_path = with_extension(&args.out, "csv");
    let json_path = with_extension(&args.out, "json");
    std::fs::write(&csv_path, to_csv(&report.table)?).map_err(|e| CliError::io(&csv_path, e))?;
    std::fs::write(&json_path, to_json(&report)?).map_err(|e| CliError::io(&json_path, e))?;
    Ok(SimulateOutcome { report, csv_path, json_path })
}
