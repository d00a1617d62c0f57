//! χ² distribution functions with real-valued degrees of freedom, built on
//! the regularized incomplete gamma function.

use crate::error::{Error, Result};

const MAX_ITER: usize = 100_000;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `(P(a, x), Q(a, x))`, the regularized lower and upper incomplete gamma
/// functions. Series for `x < a + 1`, Lentz continued fraction otherwise, so
/// the smaller tail is always computed directly.
pub fn gamma_pq(a: f64, x: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::invalid(format!("incomplete gamma shape {a} must be positive")));
    }
    if !(x >= 0.0) {
        return Err(Error::invalid(format!("incomplete gamma argument {x} must be >= 0")));
    }
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let p = series_p(a, x, log_prefactor)?;
        Ok((p, 1.0 - p))
    } else {
        let q = cf_q(a, x, log_prefactor)?;
        Ok((1.0 - q, q))
    }
}

fn series_p(a: f64, x: f64, log_prefactor: f64) -> Result<f64> {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            return Ok((log_prefactor + sum.ln()).exp().min(1.0));
        }
    }
    Err(Error::invalid(format!("incomplete gamma series did not converge (a={a}, x={x})")))
}

fn cf_q(a: f64, x: f64, log_prefactor: f64) -> Result<f64> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            return Ok((log_prefactor + h.ln()).exp().min(1.0));
        }
    }
    Err(Error::invalid(format!("incomplete gamma fraction did not converge (a={a}, x={x})")))
}

fn check_df(df: f64) -> Result<()> {
    if df > 0.0 && df.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("degrees of freedom {df} must be positive")))
    }
}

/// Upper tail `P(χ²_df > x) = Q(df/2, x/2)`.
pub fn chi2_sf(x: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !(x >= 0.0) {
        return Err(Error::invalid(format!("chi-square argument {x} must be >= 0")));
    }
    Ok(gamma_pq(df / 2.0, x / 2.0)?.1)
}

/// Lower tail `P(χ²_df ≤ x)`.
pub fn chi2_cdf(x: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !(x >= 0.0) {
        return Err(Error::invalid(format!("chi-square argument {x} must be >= 0")));
    }
    Ok(gamma_pq(df / 2.0, x / 2.0)?.0)
}

fn chi2_ln_pdf(x: f64, df: f64) -> f64 {
    let a = df / 2.0;
    (a - 1.0) * (x / 2.0).ln() - x / 2.0 - ln_gamma(a) - std::f64::consts::LN_2
}

/// The `x` with `P(χ²_df ≤ x) = p`.
///
/// Solves against whichever tail is smaller (lower tail for `p ≤ 1/2`) with
/// safeguarded Newton steps inside a bisection bracket.
pub fn chi2_quantile(p: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("probability {p} must lie in (0, 1)")));
    }
    let lower = p <= 0.5;
    let target = if lower { p } else { 1.0 - p };
    // Increasing in x, root at the quantile.
    let residual = |x: f64| -> Result<f64> {
        let (pl, qu) = gamma_pq(df / 2.0, x / 2.0)?;
        Ok(if lower { pl - target } else { target - qu })
    };

    let mut lo = 0.0;
    let mut hi = wilson_hilferty(p, df).max(f64::MIN_POSITIVE).max(df);
    while residual(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::invalid("chi-square quantile bracket overflow"));
        }
    }
    let mut x = wilson_hilferty(p, df);
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..500 {
        let r = residual(x)?;
        if r == 0.0 || r.abs() <= 1e-15 * target {
            return Ok(x);
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let pdf = chi2_ln_pdf(x, df).exp();
        let newton = x - r / pdf;
        let next = if pdf > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Rough initial guess; only ever refined.
fn wilson_hilferty(p: f64, df: f64) -> f64 {
    let z = normal_quantile(p);
    let h = 2.0 / (9.0 * df);
    let v = 1.0 - h + z * h.sqrt();
    (df * v * v * v).max(0.0)
}

/// Acklam's rational approximation (~1e−9), used only for starting points.
fn normal_quantile(p: f64) -> f64 {
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
    let tail = |q: f64| {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };
    if p < 0.02425 {
        tail(p)
    } else if p > 1.0 - 0.02425 {
        -tail(1.0 - p)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}
