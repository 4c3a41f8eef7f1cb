//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::Path;
use std::time::Instant;

use clap::Parser;
use medmarg::marginalize::{eta_x, eta_x_slope_nointeraction, marginal_logit_approx, marginal_prob_closed, marginal_prob_exact, StructuralModel};
use medmarg::math::{integrate_adaptive, integrate_link_error, norm_cdf, ErrorDist, Link, QuadratureSpec};
use medmarg::mediation::{
    effects_closed, effects_exact, grad_nde_closed, grad_nie_closed, nde_closed, nie_closed, point_effects, Contrast, Effect,
    Method, MethodSettings,
};
use medmarg::regression::ModelParams;
use medmarg::sensitivity::{adjust_beta_x, sign_flips, SensitivityInput};
use medmarg::simulation::{run_scenario, SimConfig};
use medmarg_cli::{execute, Cli};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2024;
const BETA0: [f64; 5] = [-3.0, -2.0, -0.5, 1.0, 2.0];
const C01: Contrast = Contrast { x_star: 0.0, x: 1.0 };

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn reference(beta0: f64) -> ModelParams {
    SimConfig::reference(beta0, SimConfig::MIN_N).params()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
    ModelParams {
        beta0: rng.random_range(-3.0..2.0),
        beta_x: rng.random_range(-1.0..1.0),
        beta_w: rng.random_range(-1.0..1.0),
        beta_xw: rng.random_range(-0.5..0.5),
        theta0: rng.random_range(-0.5..0.5),
        theta_x: rng.random_range(-1.0..1.0),
        sigma2: rng.random_range(0.1..1.0),
    }
}

fn true_values() -> Outcome {
    let nde = [0.431, 0.425, 0.409, 0.398, 0.395];
    let nie = [0.322, 0.319, 0.317, 0.320, 0.323];
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (i, &b0) in BETA0.iter().enumerate() {
        let e = effects_exact(&reference(b0), C01, QuadratureSpec::default()).map_err(|e| e.to_string())?;
        worst = worst.max((e.nde - nde[i]).abs()).max((e.nie - nie[i]).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst <= 0.001 && secs < 1.0, format!("max deviation {worst:.5}, {secs:.3} s"))
}

fn prevalences() -> Outcome {
    let target = [6.65, 15.95, 44.52, 77.23, 90.03];
    let mut worst = 0.0f64;
    for (i, &b0) in BETA0.iter().enumerate() {
        let cfg = SimConfig::reference(b0, SimConfig::MIN_N);
        let m = StructuralModel::logit_normal(cfg.params()).map_err(|e| e.to_string())?;
        let spec = QuadratureSpec::default();
        let p1 = marginal_prob_exact(&m, 1.0, spec).map_err(|e| e.to_string())?;
        let p0 = marginal_prob_exact(&m, 0.0, spec).map_err(|e| e.to_string())?;
        let prev = 100.0 * (cfg.p_x * p1 + (1.0 - cfg.p_x) * p0);
        worst = worst.max((prev - target[i]).abs());
    }
    check(worst <= 0.05, format!("max deviation {worst:.4} percentage points"))
}

fn closed_form_accuracy() -> Outcome {
    let mut worst = 0.0f64;
    for &b0 in &BETA0 {
        let p = reference(b0);
        let exact = effects_exact(&p, C01, QuadratureSpec::default()).map_err(|e| e.to_string())?;
        let closed = effects_closed(&p, C01);
        worst = worst.max((closed.nde - exact.nde).abs()).max((closed.nie - exact.nie).abs());
    }
    check(worst < 0.01, format!("max |closed - exact| {worst:.5}"))
}

fn central_difference(f: impl Fn(&ModelParams) -> f64, p: &ModelParams, k: usize) -> f64 {
    let a = p.to_array();
    let h = 1e-5 * a[k].abs().max(1.0);
    let mut up = a;
    let mut dn = a;
    up[k] += h;
    dn[k] -= h;
    (f(&ModelParams::from_array(up)) - f(&ModelParams::from_array(dn))) / (2.0 * h)
}

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    let mut zeros_exact = true;
    for _ in 0..20 {
        let p = random_params(&mut rng);
        let x_star = rng.random_range(-1.0..1.0);
        let c = Contrast { x_star, x: x_star + rng.random_range(0.2..1.5) };
        let g1 = grad_nde_closed(&p, c);
        let g2 = grad_nie_closed(&p, c);
        for k in 0..7 {
            let fd1 = central_difference(|q| nde_closed(q, c), &p, k);
            let fd2 = central_difference(|q| nie_closed(q, c), &p, k);
            worst = worst.max((g1[k] - fd1).abs() / fd1.abs().max(1.0));
            worst = worst.max((g2[k] - fd2).abs() / fd2.abs().max(1.0));
        }
        // NIE does not depend on b0, bx or t0
        zeros_exact &= g2[0] == 0.0 && g2[1] == 0.0 && g2[4] == 0.0;
    }
    check(worst < 1e-5 && zeros_exact, format!("max relative error {worst:.2e}, structural zeros exact: {zeros_exact}"))
}

fn simulation_reproduction() -> Outcome {
    let mut cfg = SimConfig::reference(-0.5, 1000);
    cfg.seed = SEED;
    cfg.replications = 500;
    cfg.methods = vec![Method::ClosedForm];
    let start = Instant::now();
    let r = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let mut ok = secs < 300.0;
    let mut parts = Vec::new();
    for (effect, sd_ref) in [(Effect::Nde, 0.178), (Effect::Nie, 0.120)] {
        let s = r.get(Method::ClosedForm, effect).ok_or("missing summary")?;
        let cov = s.coverage_delta.unwrap_or(f64::NAN);
        let sd_ratio = s.sd / sd_ref;
        ok &= s.bias.abs() <= 0.02 && (sd_ratio - 1.0).abs() <= 0.25 && (92.5..=97.5).contains(&cov);
        parts.push(format!("{effect} bias {:.4} sd {:.3} cov {:.1}", s.bias, s.sd, cov));
    }
    check(ok, format!("{}; {} used, {secs:.1} s", parts.join(", "), r.summaries[0].n_used))
}

fn method_ranking() -> Outcome {
    let mut cfg = SimConfig::reference(-3.0, 5000);
    cfg.seed = SEED;
    cfg.replications = 300;
    cfg.methods = vec![Method::ClosedForm, Method::Gaynor];
    let r = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let closed = r.get(Method::ClosedForm, Effect::Nde).ok_or("missing summary")?.bias;
    let gaynor = r.get(Method::Gaynor, Effect::Nde).ok_or("missing summary")?.bias;
    check(
        gaynor.abs() > closed.abs() && closed.abs() < 0.01,
        format!("NDE bias closed {closed:.4}, gaynor {gaynor:.4}"),
    )
}

fn special_cases() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    let mut points = 0;
    for &b0 in &[-2.0, -0.7, 0.0, 0.9, 2.0] {
        for &bw in &[-1.5, -0.4, 0.0, 0.6, 1.5] {
            for &s in &[0.2, 0.5, 0.8, 1.0, 1.5] {
                points += 1;
                let p = ModelParams { beta0: b0, beta_x: 0.4, beta_w: bw, beta_xw: 0.15, theta0: 0.1, theta_x: 0.5, sigma2: s * s };
                for &x in &[0.0, 1.0] {
                    let probit = StructuralModel::new(p, Link::Probit, ErrorDist::normal(s).map_err(|e| e.to_string())?);
                    let d = marginal_prob_closed(&probit, x).map_err(|e| e.to_string())?
                        - marginal_prob_exact(&probit, x, QuadratureSpec::default()).map_err(|e| e.to_string())?;
                    worst.0 = worst.0.max(d.abs());
                    let cauchit = StructuralModel::new(p, Link::Cauchit, ErrorDist::cauchy(s).map_err(|e| e.to_string())?);
                    let d = marginal_prob_closed(&cauchit, x).map_err(|e| e.to_string())?
                        - marginal_prob_exact(&cauchit, x, QuadratureSpec::default_adaptive()).map_err(|e| e.to_string())?;
                    worst.1 = worst.1.max(d.abs());
                }
            }
        }
    }
    check(
        points == 125 && worst.0 < 1e-8 && worst.1 < 1e-5,
        format!("{points} points, probit {:.1e}, cauchit {:.1e}", worst.0, worst.1),
    )
}

fn identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let settings = MethodSettings::default();

    let mut additivity = 0.0f64;
    for _ in 0..20 {
        let p = random_params(&mut rng);
        for method in Method::ALL {
            let e = point_effects(&p, C01, method, &settings).map_err(|e| e.to_string())?;
            additivity = additivity.max((e.nde + e.nie - e.nte()).abs());
        }
    }

    let mut reduction = 0.0f64;
    for _ in 0..20 {
        let mut p = random_params(&mut rng);
        p.beta_xw = 0.0;
        let m = StructuralModel::logit_normal(p).map_err(|e| e.to_string())?;
        let slope = eta_x_slope_nointeraction(&m).map_err(|e| e.to_string())?;
        let intercept = marginal_logit_approx(&m, 0.0).map_err(|e| e.to_string())?;
        for x in [-1.0, 0.5, 2.0] {
            reduction = reduction.max((eta_x(&m, x).map_err(|e| e.to_string())? - slope * x).abs());
            reduction = reduction.max((marginal_logit_approx(&m, x).map_err(|e| e.to_string())? - intercept - slope * x).abs());
        }
    }

    let mut dual = 0.0f64;
    for &(a0, a) in &[(-0.45, 0.25), (-3.0, 0.33), (1.2, -0.8), (0.0, 1.4)] {
        let lhs = integrate_link_error(Link::Logit, ErrorDist::Normal { sigma: 1.0 }, a0, a, QuadratureSpec::default())
            .map_err(|e| e.to_string())?;
        let rhs = integrate_adaptive(|u: f64| norm_cdf((a0 - (u / (1.0 - u)).ln()) / f64::abs(a)), 0.0, 1.0, 1e-13, 1e-13, 400)
            .map_err(|e| e.to_string())?;
        dual = dual.max((lhs - rhs).abs());
    }

    let mut mismatches = 0;
    for &(eta, sd, standardized) in &[(0.15, 1.0, true), (-0.4, 1.0, true), (0.3, 0.5, false), (-0.2, 1.2, false)] {
        let input = SensitivityInput::new(eta, sd, standardized).map_err(|e| e.to_string())?;
        for i in 0..=20 {
            for j in 0..=18 {
                let bw = -2.0 + 0.2 * i as f64;
                let rho = -0.9 + 0.1 * j as f64;
                if let Ok(b) = adjust_beta_x(&input, bw, rho) {
                    let flipped = sign_flips(&input, bw, rho).map_err(|e| e.to_string())?;
                    if b != 0.0 && flipped != (b * eta < 0.0) {
                        mismatches += 1;
                    }
                }
            }
        }
    }

    check(
        additivity <= 1e-10 && reduction <= 1e-12 && dual <= 1e-9 && mismatches == 0,
        format!("additivity {additivity:.1e}, reduction {reduction:.1e}, dual {dual:.1e}, sign mismatches {mismatches}"),
    )
}

fn simulate_csv(dir: &Path, config: &Path, tag: &str, threads: usize) -> Result<Vec<u8>, String> {
    let prefix = dir.join(tag);
    let cli = Cli::try_parse_from([
        "medmarg",
        "--threads",
        &threads.to_string(),
        "simulate",
        config.to_str().unwrap(),
        "--out",
        prefix.to_str().unwrap(),
    ])
    .map_err(|e| e.to_string())?;
    execute(&cli).map_err(|e| e.to_string())?;
    std::fs::read(prefix.with_extension("csv")).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let config = dir.path().join("study.toml");
    std::fs::write(
        &config,
        format!("seed = {SEED}\nreplications = 30\nbootstrap_reps = 100\n\n[grid]\nbeta0 = [-2.0, 1.0]\nn = [200, 400]\n"),
    )
    .map_err(|e| e.to_string())?;
    let a = simulate_csv(dir.path(), &config, "a", 8)?;
    let b = simulate_csv(dir.path(), &config, "b", 8)?;
    let c = simulate_csv(dir.path(), &config, "c", 1)?;
    check(a == b && b == c && !a.is_empty(), format!("{} bytes, runs equal {}, threads 1 vs 8 equal {}", a.len(), a == b, b == c))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("true-value reproduction", true_values),
        ("marginal prevalence reproduction", prevalences),
        ("closed-form accuracy", closed_form_accuracy),
        ("gradient suite", gradients),
        ("desk-scale simulation reproduction", simulation_reproduction),
        ("method ranking at rare outcome", method_ranking),
        ("closed-form special cases", special_cases),
        ("identity and property suites", identities),
        ("simulation determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  {}. {name}: {d} [{secs:.1} s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL  {}. {name}: {d} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
