//! Quadrature engine: Gauss-Hermite rules against the standard normal weight,
//! and an adaptive Gauss-Kronrod (21-point) integrator on a tangent-mapped
//! real line for heavy-tailed weights.

use std::collections::BinaryHeap;
use std::cmp::Ordering;
use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use super::link::{ErrorDist, Link};
use crate::error::{Error, Result};

/// How an integral over the real line is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum QuadratureSpec {
    GaussHermite { nodes: usize },
    Adaptive { abs_tol: f64, rel_tol: f64, max_subdiv: usize },
}

impl QuadratureSpec {
    pub const DEFAULT_NODES: usize = 80;

    pub fn gauss_hermite(nodes: usize) -> Result<Self> {
        let spec = QuadratureSpec::GaussHermite { nodes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn adaptive(abs_tol: f64, rel_tol: f64, max_subdiv: usize) -> Result<Self> {
        let spec = QuadratureSpec::Adaptive { abs_tol, rel_tol, max_subdiv };
        spec.validate()?;
        Ok(spec)
    }

    /// Gauss-Hermite(80) for normal errors, adaptive(1e-10, 1e-10, 200) otherwise.
    pub fn default_for(err: &ErrorDist) -> Self {
        match err {
            ErrorDist::Normal { .. } => QuadratureSpec::GaussHermite { nodes: Self::DEFAULT_NODES },
            ErrorDist::Cauchy { .. } => Self::default_adaptive(),
        }
    }

    pub fn default_adaptive() -> Self {
        QuadratureSpec::Adaptive { abs_tol: 1e-10, rel_tol: 1e-10, max_subdiv: 200 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            QuadratureSpec::GaussHermite { nodes } if nodes < 10 => Err(Error::InvalidInput(
                format!("Gauss-Hermite needs at least 10 nodes, got {nodes}"),
            )),
            QuadratureSpec::Adaptive { abs_tol, rel_tol, max_subdiv }
                if !(abs_tol > 0.0 && rel_tol > 0.0) || max_subdiv == 0 =>
            {
                Err(Error::InvalidInput(
                    "adaptive quadrature needs positive tolerances and subdivisions".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec::GaussHermite { nodes: Self::DEFAULT_NODES }
    }
}

/// Gauss-Hermite rule rescaled to the standard normal weight:
/// `E f(Z) ~= sum_i weights[i] * f(nodes[i])`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds the rule by Newton iteration on the orthonormal Hermite recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite needs at least one node");
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let pim4 = PI.powf(-0.25);
        let nf = n as f64;
        let m = n.div_ceil(2);
        let mut z = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let jf = j as f64;
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let norm = PI.sqrt();
        let nodes = x.iter().rev().map(|xi| SQRT_2 * xi).collect();
        let weights = w.iter().rev().map(|wi| wi / norm).collect();
        GaussHermite { nodes, weights }
    }

    /// Shared, lazily built rule with `n` nodes.
    pub fn cached(n: usize) -> Arc<GaussHermite> {
        static TABLES: OnceLock<RwLock<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let tables = TABLES.get_or_init(|| RwLock::new(HashMap::new()));
        if let Some(rule) = tables.read().expect("quadrature cache poisoned").get(&n) {
            return Arc::clone(rule);
        }
        let rule = Arc::new(GaussHermite::new(n));
        tables
            .write()
            .expect("quadrature cache poisoned")
            .entry(n)
            .or_insert(rule)
            .clone()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E f(Z)` for `Z ~ N(0, 1)`.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }
}

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_323_256_580,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// One Gauss-Kronrod panel: (integral, error estimate).
fn qk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = WGK[10] * fc;
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (result, err)
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]`, bisecting the
/// panel with the largest error estimate until the total error meets
/// `max(abs_tol, rel_tol * |I|)`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_subdiv: usize,
) -> Result<f64> {
    let (v, e) = qk21(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value: v, err: e });
    let mut total = v;
    let mut total_err = e;
    let mut subdivisions = 1;
    loop {
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            // re-sum to drop accumulated update rounding
            return Ok(heap.iter().map(|p| p.value).sum());
        }
        if subdivisions >= max_subdiv {
            return Err(Error::NonConvergence {
                what: "adaptive quadrature".into(),
                detail: format!(
                    "error estimate {total_err:.3e} after {subdivisions} subdivisions"
                ),
            });
        }
        let worst = heap.pop().expect("heap never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = qk21(&f, worst.a, mid);
        let (v2, e2) = qk21(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Panel { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, err: e2 });
        subdivisions += 1;
    }
}

/// `int f(s) ds` over the real line through `s = scale * tan(u)`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(
    f: F,
    scale: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_subdiv: usize,
) -> Result<f64> {
    let mapped = |u: f64| {
        let c = u.cos();
        let jac = scale / (c * c);
        let v = f(scale * u.tan());
        if v == 0.0 {
            0.0
        } else {
            v * jac
        }
    };
    integrate_adaptive(mapped, -FRAC_PI_2, FRAC_PI_2, abs_tol, rel_tol, max_subdiv)
}

/// `int expit(a0 + a_s s) phi(s) ds`.
pub fn integrate_expit_normal(a0: f64, a_s: f64, spec: QuadratureSpec) -> Result<f64> {
    integrate_link_error(Link::Logit, ErrorDist::Normal { sigma: 1.0 }, a0, a_s, spec)
}

/// `int g(a0 + a_s s) f_e(s) ds`, i.e. `P(a_s Z - T > -a0)` with `Z ~ f_e`, `T ~ g`.
///
/// Gauss-Hermite is only accepted for normal errors.
pub fn integrate_link_error(
    link: Link,
    err: ErrorDist,
    a0: f64,
    a_s: f64,
    spec: QuadratureSpec,
) -> Result<f64> {
    if !(a0.is_finite() && a_s.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "linear predictor must be finite (a0={a0}, a_s={a_s})"
        )));
    }
    spec.validate()?;
    if a_s == 0.0 {
        return Ok(link.cdf(a0));
    }
    let value = match (spec, err) {
        (QuadratureSpec::GaussHermite { nodes }, ErrorDist::Normal { sigma }) => {
            let rule = GaussHermite::cached(nodes);
            let slope = a_s * sigma;
            rule.expect(|z| link.cdf(a0 + slope * z))
        }
        (QuadratureSpec::GaussHermite { .. }, ErrorDist::Cauchy { .. }) => {
            return Err(Error::InvalidInput(
                "Gauss-Hermite quadrature is not valid for Cauchy errors; use adaptive".into(),
            ))
        }
        (QuadratureSpec::Adaptive { abs_tol, rel_tol, max_subdiv }, err) => integrate_real_line(
            |s| {
                let d = err.pdf(s);
                if d == 0.0 {
                    0.0
                } else {
                    link.cdf(a0 + a_s * s) * d
                }
            },
            err.scale(),
            abs_tol,
            rel_tol,
            max_subdiv,
        )?,
    };
    Ok(value.clamp(0.0, 1.0))
}
