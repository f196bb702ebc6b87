//! Semi-analytic ground truth for the zero-correlation reference model.
//!
//! Every value here is a deterministic integral over closed-form Gaussian and
//! exponential densities, computed by adaptive quadrature without any path
//! simulation. Quantities in the `(C, B)` direction are obtained from the
//! `(B, C)` formulas applied to [`ModelConfig::mirrored`].

pub mod gauss;
pub mod quad;

pub use gauss::expected_positive_part;

use crate::error::{Error, Result};
use crate::model::{Closeout, ModelConfig};
use gauss::norm_pdf;
use quad::Quadrature;

/// Absolute floor for oracle integrals; every quantity of interest is many orders larger.
const ABS_TOL: f64 = 1e-20;

/// Gaussian integrals are truncated at this many standard deviations.
const Z_RANGE: f64 = 12.0;

fn require_independent(config: &ModelConfig) -> Result<()> {
    if config.has_zero_correlations() {
        Ok(())
    } else {
        Err(Error::Unsupported(
            "quadrature oracles require zero correlations".into(),
        ))
    }
}

/// `E[f(mean + sd Z)]` by direct integration against the normal density,
/// splitting at `kinks` given in the `x` variable.
pub fn gaussian_expectation<F>(q: &Quadrature, mut f: F, mean: f64, sd: f64, kinks: &[f64]) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if sd <= 0.0 {
        return f(mean);
    }
    let mut cuts: Vec<f64> = kinks
        .iter()
        .map(|k| (k - mean) / sd)
        .filter(|z| z.abs() < Z_RANGE)
        .collect();
    cuts.sort_by(f64::total_cmp);
    let mut edges = vec![-Z_RANGE];
    edges.extend(cuts);
    edges.push(Z_RANGE);
    let mut total = 0.0;
    for w in edges.windows(2) {
        total += q
            .try_integrate(|z| Ok(f(mean + sd * z)? * norm_pdf(z)), w[0], w[1])?
            .value;
    }
    Ok(total)
}

/// `E[(m + s Z)^+]` by numeric integration of the normal density.
pub fn expected_positive_part_numeric(m: f64, s: f64) -> Result<f64> {
    gaussian_expectation(&Quadrature::with_tolerances(1e-13, ABS_TOL), |x| Ok(x.max(0.0)), m, s, &[0.0])
}

/// Law of `M_t(B)`: mean and standard deviation.
fn exposure_law(config: &ModelConfig, t: f64) -> (f64, f64) {
    let a = config.exposure_scale(t);
    (a * config.m0, a * config.sigma * t.sqrt())
}

/// `(1 - R_C) int_{from}^{to} e^{-rt} lambda_C e^{-lambda_C t} [e^{-lambda_B t}] loss(t) dt`.
fn default_leg_c<F>(config: &ModelConfig, first_to_default: bool, from: f64, to: f64, loss: F) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    require_independent(config)?;
    if config.lambda_c == 0.0 || config.recovery_c == 1.0 {
        return Ok(0.0);
    }
    let other = if first_to_default { config.lambda_b } else { 0.0 };
    let q = Quadrature::with_tolerances(1e-11, ABS_TOL);
    let integral = q.integrate(
        |t| (-(config.r + config.lambda_c + other) * t).exp() * config.lambda_c * loss(t),
        from,
        to,
    )?;
    Ok((1.0 - config.recovery_c) * integral.value)
}

/// `UCVA_0(B, C)`.
pub fn ucva_quadrature(config: &ModelConfig) -> Result<f64> {
    default_leg_c(config, false, 0.0, config.maturity, |t| {
        let (mean, sd) = exposure_law(config, t);
        expected_positive_part(mean, sd)
    })
}

/// `UDVA_0(B, C) = UCVA_0(C, B)`.
pub fn udva_quadrature(config: &ModelConfig) -> Result<f64> {
    ucva_quadrature(&config.mirrored())
}

/// `FTDCVA_0(B, C)`.
pub fn ftdcva_quadrature(config: &ModelConfig) -> Result<f64> {
    default_leg_c(config, true, 0.0, config.maturity, |t| {
        let (mean, sd) = exposure_law(config, t);
        expected_positive_part(mean, sd)
    })
}

/// Discounted carry cost of a constant-fraction liquidity correction `kappa |M|`
/// paid on a first default of `C`.
pub fn repo_carry_quadrature(config: &ModelConfig, kappa: f64) -> Result<f64> {
    let leg = default_leg_c(config, true, 0.0, config.maturity, |t| {
        let (mean, sd) = exposure_law(config, t);
        gauss::expected_abs(mean, sd)
    })?;
    Ok(kappa * leg)
}

/// Expected loss `(1 - R_C)(M(C))^-` of a single name, each default paid and
/// discounted at the end of its reset window.
pub fn windowed_loss_quadrature(config: &ModelConfig, resets: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for w in resets.windows(2) {
        let undiscounted = default_leg_c(
            &ModelConfig { r: 0.0, ..config.clone() },
            false,
            w[0],
            w[1],
            |t| {
                let (mean, sd) = exposure_law(config, t);
                expected_positive_part(mean, sd)
            },
        )?;
        total += config.discount(w[1]) * undiscounted;
    }
    Ok(total)
}

/// Lender CVA over a reset window `[start, end]` given `M_start(C) = m_c` and
/// both parties alive at `start`, with the Gaussian expectation integrated numerically.
pub fn window_cva_quadrature(config: &ModelConfig, start: f64, end: f64, m_c: f64) -> Result<f64> {
    require_independent(config)?;
    let a0 = config.exposure_scale(start);
    if a0 == 0.0 || end <= start {
        return Ok(0.0);
    }
    let x = -m_c / a0;
    let q = Quadrature::with_tolerances(1e-11, ABS_TOL);
    let inner = Quadrature::with_tolerances(1e-12, ABS_TOL);
    let hazard = config.lambda_c + config.lambda_b;
    let value = q.try_integrate(
        |u| {
            let a = config.exposure_scale(start + u);
            let loss = gaussian_expectation(&inner, |y| Ok((a * y).max(0.0)), x, config.sigma * u.sqrt(), &[0.0])?;
            Ok((-(config.r + hazard) * u).exp() * config.lambda_c * loss)
        },
        0.0,
        end - start,
    )?;
    Ok((1.0 - config.recovery_c) * value.value)
}

/// `UDVA_t(C, B)` given `M_t(C) = m`: value to `B` of its claim on a later default of `C`.
pub fn conditional_udva(config: &ModelConfig, m: f64, t: f64) -> Result<f64> {
    let a0 = config.exposure_scale(t);
    if config.lambda_c == 0.0 || t >= config.maturity || a0 == 0.0 {
        return Ok(0.0);
    }
    let q = Quadrature::with_tolerances(1e-12, ABS_TOL);
    let value = q.integrate(
        |u| {
            let a = config.exposure_scale(t + u);
            (-(config.lambda_c + config.r) * u).exp()
                * config.lambda_c
                * expected_positive_part(-m * a / a0, a * config.sigma * u.sqrt())
        },
        0.0,
        config.maturity - t,
    )?;
    Ok((1.0 - config.recovery_c) * value.value)
}

/// `Gamma_0(C, B)` under the given close-out: outer integral over the default
/// density of `B` (surviving `C`), middle integral over the Gaussian law of
/// `M_{tau_B}(C)`, inner [`conditional_udva`].
pub fn gamma_quadrature(config: &ModelConfig, closeout: Closeout) -> Result<f64> {
    require_independent(config)?;
    if config.lambda_b == 0.0 || config.lambda_c == 0.0 {
        return Ok(0.0);
    }
    let outer = Quadrature::with_tolerances(1e-9, ABS_TOL);
    let middle = Quadrature::with_tolerances(1e-10, ABS_TOL);
    let lgd_b = 1.0 - config.recovery_b;
    let value = outer.try_integrate(
        |t| {
            let (mean_b, sd) = exposure_law(config, t);
            let mut kinks = vec![0.0];
            if closeout == Closeout::Replacement {
                // the replacement claim M + UDVA changes sign slightly below zero
                let mut k = 0.0;
                for _ in 0..6 {
                    k = -conditional_udva(config, k, t)?;
                }
                kinks.push(k);
            }
            let expected = gaussian_expectation(
                &middle,
                |m_c| {
                    let udva = conditional_udva(config, m_c, t)?;
                    Ok(match closeout {
                        Closeout::RiskFree => udva,
                        Closeout::Replacement => {
                            ((m_c + udva).max(0.0) - m_c.max(0.0)) * lgd_b
                        }
                    })
                },
                -mean_b,
                sd,
                &kinks,
            )?;
            Ok((-(config.r + config.lambda_b + config.lambda_c) * t).exp() * config.lambda_b * expected)
        },
        0.0,
        config.maturity,
    )?;
    Ok(value.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ModelConfig {
        ModelConfig::reference()
    }

    #[test]
    fn positive_part_matches_numeric_integration_on_lattice() {
        let mut worst: f64 = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                let m = -0.5 + 0.1 * i as f64;
                let s = 0.05 + 0.1 * j as f64;
                let closed = expected_positive_part(m, s);
                let numeric = expected_positive_part_numeric(m, s).unwrap();
                worst = worst.max((closed - numeric).abs());
            }
        }
        assert!(worst < 1e-12, "max deviation {worst:e}");
    }

    #[test]
    fn ucva_limits() {
        assert_eq!(ucva_quadrature(&ModelConfig { lambda_c: 0.0, ..reference() }).unwrap(), 0.0);
        assert_eq!(ucva_quadrature(&ModelConfig { recovery_c: 1.0, ..reference() }).unwrap(), 0.0);
        assert!(ucva_quadrature(&ModelConfig { rho_bc: 0.1, ..reference() }).is_err());
    }

    #[test]
    fn ucva_matches_closed_form_integrand_by_brute_force() {
        // coarse direct 2-D midpoint rule over (t, z) as an independent cross-check
        let cfg = reference();
        let (nt, nz) = (4000, 3000);
        let (dt, dz) = (cfg.maturity / nt as f64, 2.0 * Z_RANGE / nz as f64);
        let mut total = 0.0;
        for i in 0..nt {
            let t = (i as f64 + 0.5) * dt;
            let mut e = 0.0;
            for j in 0..nz {
                let z = -Z_RANGE + (j as f64 + 0.5) * dz;
                e += (cfg.sigma * t.sqrt() * z).max(0.0) * norm_pdf(z) * dz;
            }
            total += (-0.05 * t).exp() * 0.02 * e * dt;
        }
        let brute = 0.6 * total;
        let quad = ucva_quadrature(&cfg).unwrap();
        assert!((brute - quad).abs() / quad < 1e-5, "{brute} vs {quad}");
    }

    #[test]
    fn ftd_limits() {
        let cfg = ModelConfig { lambda_b: 0.0, ..reference() };
        assert_eq!(ftdcva_quadrature(&cfg).unwrap(), ucva_quadrature(&cfg).unwrap());
        let cfg = ModelConfig { lambda_b: 1e4, ..reference() };
        assert!(ftdcva_quadrature(&cfg).unwrap() < 1e-8);
    }

    #[test]
    fn conditional_udva_at_origin_equals_unconditional() {
        let cfg = reference();
        let udva = conditional_udva(&cfg, 0.0, 0.0).unwrap();
        assert!((udva - ucva_quadrature(&cfg).unwrap()).abs() < 1e-13);
        assert_eq!(conditional_udva(&cfg, 0.3, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn gamma_limits_and_ordering() {
        assert_eq!(gamma_quadrature(&ModelConfig { lambda_b: 0.0, ..reference() }, Closeout::RiskFree).unwrap(), 0.0);
        assert_eq!(gamma_quadrature(&ModelConfig { lambda_c: 0.0, ..reference() }, Closeout::Replacement).unwrap(), 0.0);
        let c1 = gamma_quadrature(&reference(), Closeout::RiskFree).unwrap();
        let c2 = gamma_quadrature(&reference(), Closeout::Replacement).unwrap();
        assert!(c1 > 0.0 && c2 > 0.0 && c2 < c1);
    }

    #[test]
    fn gamma_c1_matches_collapsed_double_integral() {
        // For C1 the Gaussian expectation of the inner UDVA collapses to the
        // unconditional Bachelier formula at time t + u.
        let cfg = reference();
        let q = Quadrature::with_tolerances(1e-12, ABS_TOL);
        let collapsed = q
            .try_integrate(
                |t| {
                    let inner = q.integrate(
                        |u| {
                            (-(cfg.lambda_c + cfg.r) * u).exp()
                                * cfg.lambda_c
                                * expected_positive_part(0.0, cfg.sigma * (t + u).sqrt())
                        },
                        0.0,
                        cfg.maturity - t,
                    )?;
                    Ok((-(cfg.r + cfg.lambda_b + cfg.lambda_c) * t).exp() * cfg.lambda_b * inner.value)
                },
                0.0,
                cfg.maturity,
            )
            .unwrap()
            .value
            * (1.0 - cfg.recovery_c);
        let nested = gamma_quadrature(&cfg, Closeout::RiskFree).unwrap();
        assert!((collapsed - nested).abs() / collapsed < 1e-8, "{collapsed} vs {nested}");
    }

    #[test]
    fn replacement_expectation_resolves_both_kinks() {
        // E[(1 - R_B)((M + U)^+ - M^+)] at t = 1 for M ~ N(0, 0.1^2); frozen from an
        // independent adaptive integration split at both kinks
        let cfg = reference();
        let g = |m: f64| Ok(0.5 * ((m + conditional_udva(&cfg, m, 1.0)?).max(0.0) - m.max(0.0)));
        let mut k = 0.0;
        for _ in 0..6 {
            k = -conditional_udva(&cfg, k, 1.0).unwrap();
        }
        let q = Quadrature::with_tolerances(1e-10, ABS_TOL);
        let value = gaussian_expectation(&q, g, 0.0, 0.1, &[0.0, k]).unwrap();
        assert!((value - 2.988_549_258_670_076e-4).abs() < 1e-14, "{value:e}");
    }

    #[test]
    fn window_cva_reduces_to_ftd_over_full_horizon() {
        let cfg = reference();
        let w = window_cva_quadrature(&cfg, 0.0, cfg.maturity, 0.0).unwrap();
        let ftd = ftdcva_quadrature(&cfg).unwrap();
        assert!((w - ftd).abs() / ftd < 1e-9, "{w} vs {ftd}");
    }
}
