//! Special functions used by the kernels and the closed-form spectrum.
//!
//! Everything that multiplies binomials, gamma functions and powers is meant to
//! be assembled in log space by the callers; the functions here therefore come
//! in log form where that matters.

#![allow(clippy::excessive_precision)]

use core::f64::consts::{LN_2, PI, SQRT_2};

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{domain, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// Lanczos coefficients for g = 671/128, 14 terms.
const LANCZOS_G: f64 = 5.242_187_5;
const LANCZOS: [f64; 14] = [
    57.156_235_665_862_923_5,
    -59.597_960_355_475_491_2,
    14.136_097_974_741_747_1,
    -0.491_913_816_097_620_199,
    0.339_946_499_848_118_887e-4,
    0.465_236_289_270_485_756e-4,
    -0.983_744_753_048_795_646e-4,
    0.158_088_703_224_912_494e-3,
    -0.210_264_441_724_104_883e-3,
    0.217_439_618_115_212_643e-3,
    -0.164_318_106_536_763_890e-3,
    0.844_182_239_838_527_433e-4,
    -0.261_908_384_015_814_087e-4,
    0.368_991_826_595_316_234e-5,
];

/// Natural logarithm of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain("log_gamma requires a finite positive argument"));
    }
    Ok(log_gamma_unchecked(x))
}

/// [`log_gamma`] without argument validation; callers guarantee `x > 0`.
pub(crate) fn log_gamma_unchecked(x: f64) -> f64 {
    let tmp = x + LANCZOS_G;
    let tmp = (x + 0.5) * tmp.ln() - tmp;
    let mut ser = 0.999_999_999_999_997_092;
    let mut y = x;
    for c in LANCZOS {
        y += 1.0;
        ser += c / y;
    }
    tmp + (2.506_628_274_631_000_5 * ser / x).ln()
}

/// `ln C(n, k)`.
pub fn log_binomial(n: u64, k: u64) -> Result<f64> {
    if k > n {
        return Err(domain("log_binomial requires k <= n"));
    }
    if k == 0 || k == n {
        return Ok(0.0);
    }
    let (n, k) = (n as f64, k as f64);
    Ok(log_gamma_unchecked(n + 1.0) - log_gamma_unchecked(k + 1.0) - log_gamma_unchecked(n - k + 1.0))
}

/// Density of the chi-squared law with `k` degrees of freedom.
///
/// Returns `+inf` at `z = 0` for `k = 1`; quadrature callers integrate that
/// cell through [`chi2_cdf`] instead of sampling the singularity.
pub fn chi2_pdf(k: u32, z: f64) -> Result<f64> {
    if k == 0 {
        return Err(domain("chi2_pdf requires k >= 1"));
    }
    if !(z >= 0.0) {
        return Err(domain("chi2_pdf requires z >= 0"));
    }
    let half = 0.5 * k as f64;
    if z == 0.0 {
        return Ok(match k {
            1 => f64::INFINITY,
            2 => 0.5,
            _ => 0.0,
        });
    }
    let log_pdf = (half - 1.0) * z.ln() - 0.5 * z - half * LN_2 - log_gamma_unchecked(half);
    Ok(log_pdf.exp())
}

/// Cumulative distribution of the chi-squared law with `k` degrees of freedom.
pub fn chi2_cdf(k: u32, z: f64) -> Result<f64> {
    if k == 0 {
        return Err(domain("chi2_cdf requires k >= 1"));
    }
    if !(z >= 0.0) {
        return Err(domain("chi2_cdf requires z >= 0"));
    }
    regularized_gamma_p(0.5 * k as f64, 0.5 * z)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Standard normal cumulative distribution function.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        Ok(gamma_series(a, x))
    } else {
        Ok(1.0 - gamma_continued_fraction(a, x))
    }
}

/// Regularized upper incomplete gamma function `Q(a, x) = 1 - P(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        Ok(1.0 - gamma_series(a, x))
    } else {
        Ok(gamma_continued_fraction(a, x))
    }
}

fn check_gamma_args(a: f64, x: f64) -> Result<()> {
    if !(a > 0.0) {
        return Err(domain("incomplete gamma requires a > 0"));
    }
    if !(x >= 0.0) {
        return Err(domain("incomplete gamma requires x >= 0"));
    }
    Ok(())
}

fn gamma_prefactor(a: f64, x: f64) -> f64 {
    (a * x.ln() - x - log_gamma_unchecked(a)).exp()
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..10_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * gamma_prefactor(a, x)
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
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
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    gamma_prefactor(a, x) * h
}

/// Fills `out[k - 1] = Q(k/2, x)` for `k = 1..=out.len()`, i.e. the upper
/// tail probabilities `P(chi2_k > 2x)` for every degree of freedom at once.
///
/// Uses the upward recurrence `Q(a + 1, x) = Q(a, x) + x^a e^{-x} / Γ(a + 1)`
/// separately on the half-integer and integer ladders. All increments are
/// nonnegative, so the recurrence is stable.
pub fn chi2_upper_tail_ladder(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    if x <= 0.0 {
        out.iter_mut().for_each(|q| *q = 1.0);
        return;
    }
    let k_max = out.len();
    if x > 600.0 {
        // e^{-x} underflows; carry the increments in log space.
        let ln_x = x.ln();
        for start in [1usize, 2] {
            let mut a = 0.5 * start as f64;
            let mut q = if start == 1 { libm::erfc(x.sqrt()) } else { (-x).exp() };
            let mut log_t = a * ln_x - x - log_gamma_unchecked(a + 1.0);
            let mut k = start;
            while k <= k_max {
                out[k - 1] = q;
                q += log_t.exp();
                a += 1.0;
                log_t += ln_x - a.ln();
                k += 2;
            }
        }
        return;
    }
    let e = (-x).exp();
    // half-integer ladder: a = 1/2, 3/2, ...
    let mut q = libm::erfc(x.sqrt());
    let mut t = e * x.sqrt() / (0.5 * PI.sqrt()); // x^{1/2} e^{-x} / Γ(3/2)
    let mut a = 0.5;
    let mut k = 1;
    while k <= k_max {
        out[k - 1] = q;
        q += t;
        a += 1.0;
        t *= x / a;
        k += 2;
    }
    // integer ladder: a = 1, 2, ...
    let mut q = e;
    let mut t = e * x; // x e^{-x} / Γ(2)
    let mut a = 1.0;
    let mut k = 2;
    while k <= k_max {
        out[k - 1] = q;
        q += t;
        a += 1.0;
        t *= x / a;
        k += 2;
    }
}

/// `ln Σ exp(v)`, robust to large magnitudes. Returns `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
