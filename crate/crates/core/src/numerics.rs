//! Special functions and log-space helpers.
//!
//! Everything here is a pure function of its arguments. Quantities that can
//! underflow (binomial weights, moment terms) are carried as natural logs,
//! with `f64::NEG_INFINITY` standing for an exact zero.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A non-negative quantity stored as its natural logarithm.
///
/// `LogValue::ZERO` (negative infinity) encodes an exact zero, so absent
/// terms of a sum can be represented without ever evaluating `ln(0)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct LogValue(f64);

impl LogValue {
    pub const ZERO: LogValue = LogValue(f64::NEG_INFINITY);
    pub const ONE: LogValue = LogValue(0.0);

    /// Wraps a log-domain value; NaN and `+inf` are rejected.
    pub fn new(log: f64) -> Result<Self> {
        if log.is_nan() || log == f64::INFINITY {
            return Err(Error::invalid(
                "log_value",
                format!("{log} is not a valid log-domain value"),
            ));
        }
        Ok(LogValue(log))
    }

    /// Logarithm of a non-negative linear-space value.
    pub fn from_linear(value: f64) -> Result<Self> {
        if !(value >= 0.0) || value.is_infinite() {
            return Err(Error::invalid(
                "log_value",
                format!("{value} is not a finite non-negative number"),
            ));
        }
        Ok(LogValue(value.ln()))
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn exp(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

/// Product in linear space, which is a sum of logs.
#[allow(clippy::suspicious_arithmetic_impl)]
impl std::ops::Mul for LogValue {
    type Output = LogValue;
    fn mul(self, other: LogValue) -> LogValue {
        LogValue(self.0 + other.0)
    }
}

/// Sum in linear space.
impl std::ops::Add for LogValue {
    type Output = LogValue;
    fn add(self, other: LogValue) -> LogValue {
        LogValue(log_add_exp(self.0, other.0))
    }
}

impl TryFrom<f64> for LogValue {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        LogValue::new(value)
    }
}

impl From<LogValue> for f64 {
    fn from(value: LogValue) -> f64 {
        value.0
    }
}

/// `ln(e^a + e^b)` without overflow; `-inf` is the identity.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    if hi == f64::INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(sum(exp(t)))`, computed after subtracting the largest term.
///
/// Returns `-inf` for an empty slice or when every term is `-inf`.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    debug_assert!(terms.iter().all(|t| !t.is_nan()), "NaN passed to log_sum_exp");
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = terms.iter().map(|&t| (t - max).exp()).sum();
    max + sum.ln()
}

// Coefficients of the asymptotic (Stirling) series for ln Γ; used once the
// argument has been shifted to x >= 10 where seven terms reach f64 precision.
const STIRLING: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
];
const STIRLING_SHIFT: f64 = 10.0;

/// Natural log of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain(
            "log_gamma",
            format!("argument must be positive, got {x}"),
        ));
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    // Shift small arguments upward: ln Γ(x) = ln Γ(x+m) - ln(x (x+1) ... (x+m-1)).
    let mut shifted = x;
    let mut product = 1.0;
    while shifted < STIRLING_SHIFT {
        product *= shifted;
        shifted += 1.0;
    }
    Ok(stirling(shifted) - product.ln())
}

fn stirling(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut series = 0.0;
    for c in STIRLING.iter().rev() {
        series = series * inv2 + c;
    }
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + series * inv
}

/// Natural log of the binomial coefficient `C(n, r)`.
pub fn log_binomial(n: u64, r: u64) -> Result<f64> {
    if r > n {
        return Err(Error::domain("log_binomial", format!("r = {r} exceeds n = {n}")));
    }
    let small = r.min(n - r);
    if small == 0 {
        return Ok(0.0);
    }
    // Short products are summed directly; the gamma route loses ~1e-9 absolute
    // to cancellation at n ~ 1e6, which matters when the result is small.
    if small <= 30 {
        let base = (n - small) as f64;
        let mut acc = 0.0;
        for j in 1..=small {
            acc += ((base + j as f64) / j as f64).ln();
        }
        return Ok(acc);
    }
    let n = n as f64;
    let r = r as f64;
    Ok(log_gamma(n + 1.0)? - log_gamma(r + 1.0)? - log_gamma(n - r + 1.0)?)
}

/// Regularized lower incomplete gamma function `P(k, x) = γ(k, x) / Γ(k)`.
///
/// Series expansion below `x = k + 1`, Lentz continued fraction for the
/// complement above it. The iteration budget grows with `sqrt(k)` so shapes
/// up to `1e6` still converge.
pub fn regularized_lower_gamma(k: f64, x: f64) -> Result<f64> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::domain(
            "regularized_lower_gamma",
            format!("shape must be positive, got {k}"),
        ));
    }
    if !(x >= 0.0) {
        return Err(Error::domain(
            "regularized_lower_gamma",
            format!("x must be non-negative, got {x}"),
        ));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let max_iter = 200 + (40.0 * k.sqrt()) as usize;
    if x < k + 1.0 {
        let log_prefactor = k * x.ln() - x - log_gamma(k + 1.0)?;
        if log_prefactor < -745.0 {
            return Ok(0.0);
        }
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut denom = k;
        for _ in 0..max_iter {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        Ok((log_prefactor.exp() * sum).min(1.0))
    } else {
        Ok((1.0 - upper_gamma_cf(k, x, max_iter)?).clamp(0.0, 1.0))
    }
}

// Q(k, x) by the modified Lentz method.
fn upper_gamma_cf(k: f64, x: f64, max_iter: usize) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let log_prefactor = k * x.ln() - x - log_gamma(k)?;
    if log_prefactor < -745.0 {
        return Ok(0.0);
    }
    let mut b = x + 1.0 - k;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=max_iter {
        let an = -(i as f64) * (i as f64 - k);
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
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    Ok(log_prefactor.exp() * h)
}

// 15-point Gauss–Kronrod rule with its embedded 7-point Gauss rule.
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for j in 0..7 {
        let dx = half * GK_NODES[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += KRONROD_WEIGHTS[j] * pair;
        if j % 2 == 1 {
            gauss += GAUSS_WEIGHTS[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn adaptive_gk<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, depth: u32) -> f64 {
    let (value, err) = gauss_kronrod(f, a, b);
    if depth == 0 || err <= rel_tol * value.abs() || err < 1e-300 {
        return value;
    }
    let mid = 0.5 * (a + b);
    adaptive_gk(f, a, mid, rel_tol, depth - 1) + adaptive_gk(f, mid, b, rel_tol, depth - 1)
}

/// Maximum number of geometric panels before the integral is declared divergent.
pub const MAX_PANELS: usize = 10_000;

/// Integrates a non-negative, decreasing integrand over `[lower, inf)`.
///
/// The half-line is cut into panels `[a, 2a + 1]`, each integrated by adaptive
/// Gauss–Kronrod; panels are added until one contributes less than `1e-12` of
/// the running total.
pub fn integrate_decaying<F: Fn(f64) -> f64>(f: F, lower: f64) -> Result<f64> {
    if !lower.is_finite() {
        return Err(Error::domain(
            "integrate_decaying",
            format!("lower bound must be finite, got {lower}"),
        ));
    }
    let mut total = 0.0;
    let mut a = lower;
    for panel in 0..MAX_PANELS {
        let b = a + a.max(0.0) + 1.0;
        if !b.is_finite() {
            return Err(Error::NonConvergence { panels: panel });
        }
        let contribution = adaptive_gk(&f, a, b, 1e-11, 40);
        total += contribution;
        if contribution <= 1e-12 * total || (total == 0.0 && panel > 64) {
            return Ok(total);
        }
        a = b;
    }
    Err(Error::NonConvergence { panels: MAX_PANELS })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn log_gamma_known_values() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-14);
        assert!(close(log_gamma(5.0).unwrap(), 24f64.ln(), 1e-14));
        assert!(close(log_gamma(0.5).unwrap(), 0.5 * PI.ln(), 1e-14));
        assert!(log_gamma(2.0).unwrap().abs() < 1e-14);
        // Γ(1e-3) ≈ 999.4237724845955
        assert!(close(log_gamma(1e-3).unwrap(), 999.423_772_484_595_5f64.ln(), 1e-13));
    }

    #[test]
    fn log_gamma_rejects_non_positive() {
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.5).is_err());
        assert!(log_gamma(f64::NAN).is_err());
    }

    #[test]
    fn log_binomial_small_cases() {
        assert_eq!(log_binomial(7, 0).unwrap(), 0.0);
        assert_eq!(log_binomial(7, 7).unwrap(), 0.0);
        assert!(close(log_binomial(5, 2).unwrap(), 10f64.ln(), 1e-15));
        assert!(close(log_binomial(1_000_000, 1).unwrap(), 1e6f64.ln(), 1e-14));
        assert!(log_binomial(3, 4).is_err());
    }

    #[test]
    fn log_sum_exp_cases() {
        assert!(close(log_sum_exp(&[0.0, 0.0]), 2f64.ln(), 1e-15));
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 1.25]), 1.25);
        assert!(close(log_sum_exp(&[1000.0; 3]), 1000.0 + 3f64.ln(), 1e-15));
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 4]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn lower_gamma_exponential_case() {
        for &x in &[0.0f64, 1e-8, 0.3, 1.0, 2.0, 7.5, 40.0] {
            let expected = -(-x).exp_m1();
            assert!(
                (regularized_lower_gamma(1.0, x).unwrap() - expected).abs() < 1e-14,
                "x={x}"
            );
        }
        assert_eq!(regularized_lower_gamma(3.7, 0.0).unwrap(), 0.0);
        assert!(regularized_lower_gamma(0.0, 1.0).is_err());
        assert!(regularized_lower_gamma(1.0, -1.0).is_err());
    }

    #[test]
    fn lower_gamma_large_shape_converges() {
        // Far below the mean the mass is negligible; at the mean it is ~1/2.
        let k = 1e6;
        assert!(regularized_lower_gamma(k, 0.9 * k).unwrap() < 1e-12);
        let mid = regularized_lower_gamma(k, k).unwrap();
        assert!((mid - 0.5).abs() < 1e-3, "{mid}");
        assert!(regularized_lower_gamma(k, 1.1 * k).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn quadrature_reference_integrals() {
        assert!(close(integrate_decaying(|z| (-z).exp(), 0.0).unwrap(), 1.0, 1e-8));
        assert!(close(
            integrate_decaying(|z| (1.0 + z).powi(-2), 0.0).unwrap(),
            1.0,
            1e-8
        ));
        let v = integrate_decaying(|z| (1.0 + 0.01 * z).powi(-10), 0.0).unwrap();
        assert!(close(v, 100.0 / 9.0, 1e-8), "{v}");
    }

    #[test]
    fn quadrature_flags_divergence() {
        let err = integrate_decaying(|z| 1.0 / (1.0 + z), 0.0).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn log_value_rejects_nan() {
        assert!(LogValue::new(f64::NAN).is_err());
        assert!(LogValue::from_linear(-1.0).is_err());
        assert!(LogValue::ZERO.is_zero());
        let two = LogValue::ONE + LogValue::ONE;
        assert!(close(two.exp(), 2.0, 1e-15));
        assert_eq!(LogValue::ZERO + two, two);
    }
}
