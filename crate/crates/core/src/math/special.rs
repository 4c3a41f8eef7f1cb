//! Scalar special functions shared by the link functions and the quadrature code.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `1 / sqrt(2 pi)`
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `pi / sqrt(3)`, the standard deviation of the standard logistic distribution.
pub const PI_OVER_SQRT3: f64 = 1.813_799_364_234_217_8;

/// Inverse logit, `exp(t) / (1 + exp(t))`.
#[inline]
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Log-odds of a probability. Returns `-inf`/`+inf` at 0 and 1.
#[inline]
pub fn logit(p: f64) -> f64 {
    if p < 0.5 {
        (p / (1.0 - p)).ln()
    } else {
        // 1 - p is exact here for p in [0.5, 1]
        -((1.0 - p) / p).ln()
    }
}

/// Density of the standard logistic distribution.
#[inline]
pub fn logistic_pdf(t: f64) -> f64 {
    let e = (-t.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

#[inline]
pub fn norm_pdf(t: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * t * t).exp()
}

/// Standard normal CDF via `erfc`, accurate in relative terms in both tails.
#[inline]
pub fn norm_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t * FRAC_1_SQRT_2)
}

/// Standard normal quantile.
///
/// Acklam's rational approximation (relative error ~1e-9) polished with
/// Newton steps on `ln Phi(t) - ln p`, so deep-tail round trips stay exact.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -norm_quantile_lower(1.0 - p);
    }
    norm_quantile_lower(p)
}

fn norm_quantile_lower(p: f64) -> f64 {
    let mut t = acklam_lower(p);
    let target = p.ln();
    for _ in 0..3 {
        let cdf = norm_cdf(t);
        if cdf <= 0.0 {
            break;
        }
        let step = (cdf.ln() - target) * cdf / norm_pdf(t);
        if !step.is_finite() {
            break;
        }
        t -= step;
        if step.abs() <= 1e-16 * t.abs().max(1.0) {
            break;
        }
    }
    t
}

// Starting value for p <= 0.5.
fn acklam_lower(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// CDF of a zero-centred Cauchy distribution with the given scale.
///
/// The lower tail is evaluated as `atan(scale / -t) / pi`, which avoids the
/// cancellation in `1/2 + atan(t/scale)/pi`.
#[inline]
pub fn cauchy_cdf(t: f64, scale: f64) -> f64 {
    let z = t / scale;
    if z < 0.0 {
        (-1.0 / z).atan() / PI
    } else {
        0.5 + z.atan() / PI
    }
}

#[inline]
pub fn cauchy_pdf(t: f64, scale: f64) -> f64 {
    let z = t / scale;
    1.0 / (PI * scale * (1.0 + z * z))
}

/// Quantile of the standard Cauchy distribution.
pub fn cauchy_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p < 0.5 {
        -1.0 / (PI * p).tan()
    } else if p > 0.5 {
        1.0 / (PI * (1.0 - p)).tan()
    } else {
        0.0
    }
}
