//! Closed-form Gaussian building blocks.

use libm::erfc;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `-ln Phi(z)`, accurate in both tails.
pub fn neg_log_norm_cdf(z: f64) -> f64 {
    if z > 0.0 {
        // Phi(z) = 1 - Phi(-z), keep the small complement
        -(-norm_cdf(-z)).ln_1p()
    } else {
        -norm_cdf(z).ln()
    }
}

/// Bachelier expected positive part `E[(m + s Z)^+]` for standard normal `Z`, `s >= 0`.
pub fn expected_positive_part(m: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return m.max(0.0);
    }
    let d = m / s;
    m * norm_cdf(d) + s * norm_pdf(d)
}

/// `E|m + s Z|`.
pub fn expected_abs(m: f64, s: f64) -> f64 {
    expected_positive_part(m, s) + expected_positive_part(-m, s)
}
