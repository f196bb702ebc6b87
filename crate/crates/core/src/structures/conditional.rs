//! Conditional values at an interior time `t`, given the current mark to market
//! and survival of both parties, in the zero-correlation reference model.
//!
//! All functions are written for the `(B, C)` direction: `m` is `M_t(B)` and the
//! protection pays on the default of `C`. The `(C, B)` direction is obtained by
//! evaluating on [`ModelConfig::mirrored`].

use rayon::prelude::*;

use crate::error::Result;
use crate::liquidity::LiquiditySpec;
use crate::model::{Closeout, ModelConfig};
use crate::oracle::gauss::{expected_positive_part, norm_pdf};
use crate::oracle::quad::Quadrature;

/// Relative tolerance of the inner conditional quadratures.
pub const INNER_TOL: f64 = 1e-10;

/// Absolute floor for conditional values; far below any interpolation error of the tables.
const ABS_TOL: f64 = 1e-15;

/// Gaussian expectations are truncated at this many standard deviations.
const Z_RANGE: f64 = 10.0;

/// Which hazard pays and which one kills the leg early.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Leg {
    /// Intensity of the default that triggers the payment.
    pub hazard: f64,
    /// Intensity of the competing default that cancels it (first-to-default).
    pub competing: f64,
}

/// `int_0^{end - t} hazard e^{-(hazard + competing + r) u} loss(mean_u, sd_u) du` given
/// `M_t(B) = m`, where `(mean_u, sd_u)` is the law of `M_{t+u}(B)`.
///
/// Integrated in `u = v^2` to remove the `sqrt(u)` singularity of the Gaussian law.
pub(crate) fn leg_integral<F>(config: &ModelConfig, leg: Leg, m: f64, t: f64, end: f64, tol: f64, loss: F) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let a0 = config.exposure_scale(t);
    if leg.hazard == 0.0 || end <= t || a0 == 0.0 {
        return Ok(0.0);
    }
    let x = m / a0;
    let decay = leg.hazard + leg.competing + config.r;
    let q = Quadrature::with_tolerances(tol, ABS_TOL);
    let value = q.integrate(
        |v| {
            let u = v * v;
            let a = config.exposure_scale(t + u);
            2.0 * v * (-decay * u).exp() * loss(a * x, a * config.sigma * v)
        },
        0.0,
        (end - t).sqrt(),
    )?;
    Ok(leg.hazard * value.value)
}

/// Conditional `UDVA_t(C, B)` given `M_t(C) = m`: value of the protection `C` implicitly
/// holds on its own default, i.e. `B`'s loss `(1 - R_C)(M(C))^-` at a later default of `C`.
pub fn inner_udva(config: &ModelConfig, m: f64, t: f64) -> Result<f64> {
    let leg = Leg { hazard: config.lambda_c, competing: 0.0 };
    let value = leg_integral(config, leg, -m, t, config.maturity, INNER_TOL, expected_positive_part)?;
    Ok((1.0 - config.recovery_c) * value)
}

/// Conditional `UDVA_t(B, C) = UCVA_t(C, B)` given `M_t(B) = m`.
pub fn udva_given_b(config: &ModelConfig, m: f64, t: f64) -> Result<f64> {
    inner_udva(&config.mirrored(), m, t)
}

/// Expected loss at the default of `C` under a bipartite close-out:
/// `(1 - R_C)(M(B))^+ + L`.
fn bipartite_loss(config: &ModelConfig, liquidity: &LiquiditySpec) -> impl Fn(f64, f64) -> f64 {
    let lgd = 1.0 - config.recovery_c;
    let liquidity = *liquidity;
    move |mean, sd| lgd * expected_positive_part(mean, sd) + liquidity.expected_correction(mean, sd)
}

/// Conditional `UCVA_t(B, C)` given `M_t(B) = m` and `tau_C > t`.
pub fn conditional_ucva(config: &ModelConfig, liquidity: &LiquiditySpec, m: f64, t: f64) -> Result<f64> {
    let leg = Leg { hazard: config.lambda_c, competing: 0.0 };
    leg_integral(config, leg, m, t, config.maturity, INNER_TOL, bipartite_loss(config, liquidity))
}

/// Conditional `FTDCVA_t(B, C)` given `M_t(B) = m` and both parties alive.
pub fn conditional_ftdcva(config: &ModelConfig, liquidity: &LiquiditySpec, m: f64, t: f64) -> Result<f64> {
    let leg = Leg { hazard: config.lambda_c, competing: config.lambda_b };
    leg_integral(config, leg, m, t, config.maturity, INNER_TOL, bipartite_loss(config, liquidity))
}

/// Lender protection `CVA_t(A, C)` over `[t, end]` given `M_t(B) = m` and both alive:
/// pays `(1 - R_C)((M(C))^- + min(L, H))` on a first default of `C` before `end`.
pub fn conditional_window_cva(
    config: &ModelConfig,
    liquidity: &LiquiditySpec,
    m: f64,
    t: f64,
    end: f64,
) -> Result<f64> {
    let leg = Leg { hazard: config.lambda_c, competing: config.lambda_b };
    let liquidity = *liquidity;
    let value = leg_integral(config, leg, m, t, end.min(config.maturity), INNER_TOL, |mean, sd| {
        expected_positive_part(mean, sd) + liquidity.expected_covered(mean, sd)
    })?;
    Ok((1.0 - config.recovery_c) * value)
}

/// Portable-CVA correction paid at the default of `C` when `B` survives it.
///
/// `m` is `M_tau(B)`; `udva` is `UDVA_tau(B, C)`, the protection `B` loses.
pub fn gamma_payment(config: &ModelConfig, closeout: Closeout, m: f64, udva: f64) -> f64 {
    match closeout {
        Closeout::RiskFree => udva,
        Closeout::Replacement => (1.0 - config.recovery_c) * ((m + udva).max(0.0) - m.max(0.0)),
    }
}

/// A conditional value at a fixed time as a function of `M_t(B)`, tabulated on
/// a uniform grid and interpolated with cubic Hermite splines.
#[derive(Debug, Clone)]
pub struct ConditionalTable {
    t: f64,
    lo: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl ConditionalTable {
    /// Number of nodes of the default tables.
    pub const NODES: usize = 161;
    /// Nodes of tables whose values need nested quadrature.
    pub const NESTED_NODES: usize = 49;
    /// Half-width of the default tables in standard deviations of `M_t(B)`.
    pub const WIDTH_SD: f64 = 8.0;

    /// Default range: the law of `M_t(B)` seen from time 0.
    pub fn default_range(config: &ModelConfig, t: f64) -> (f64, f64) {
        let a = config.exposure_scale(t);
        let centre = a * config.m0;
        let half = (Self::WIDTH_SD * a * config.sigma * t.sqrt()).max(1e-6);
        (centre - half, centre + half)
    }

    /// Tabulate `f` on `nodes` equidistant points of `[lo, hi]`, in parallel.
    pub fn tabulate<F>(t: f64, lo: f64, hi: f64, nodes: usize, f: F) -> Result<ConditionalTable>
    where
        F: Fn(f64) -> Result<f64> + Sync,
    {
        assert!(nodes >= 4 && hi > lo);
        let step = (hi - lo) / (nodes - 1) as f64;
        let values = (0..nodes)
            .into_par_iter()
            .map(|k| f(lo + k as f64 * step))
            .collect::<Result<Vec<f64>>>()?;
        let n = values.len();
        let slopes = (0..n)
            .map(|k| match k {
                0 => (values[1] - values[0]) / step,
                k if k == n - 1 => (values[n - 1] - values[n - 2]) / step,
                k if k == 1 || k == n - 2 => (values[k + 1] - values[k - 1]) / (2.0 * step),
                k => (8.0 * (values[k + 1] - values[k - 1]) - (values[k + 2] - values[k - 2])) / (12.0 * step),
            })
            .collect();
        Ok(ConditionalTable { t, lo, step, values, slopes })
    }

    /// Conditional `Gamma_t(B, C)` on the default range.
    pub fn gamma(config: &ModelConfig, closeout: Closeout, t: f64) -> Result<ConditionalTable> {
        let (lo, hi) = Self::default_range(config, t);
        Self::gamma_on(config, closeout, t, lo, hi, Self::NODES)
    }

    pub fn gamma_on(config: &ModelConfig, closeout: Closeout, t: f64, lo: f64, hi: f64, nodes: usize) -> Result<ConditionalTable> {
        let mirror = config.mirrored();
        Self::tabulate(t, lo, hi, nodes, |m| conditional_gamma(config, &mirror, closeout, m, t))
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Interpolated value at `M_t(B) = m`; clamped outside the table.
    pub fn value(&self, m: f64) -> f64 {
        let n = self.values.len();
        let x = ((m - self.lo) / self.step).clamp(0.0, (n - 1) as f64);
        let k = (x.floor() as usize).min(n - 2);
        let s = x - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (d0, d1) = (self.slopes[k] * self.step, self.slopes[k + 1] * self.step);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1
    }
}

/// `Gamma_t(B, C)` given `M_t(B) = m` by nested quadrature: over the default time of `C`,
/// the Gaussian law of `M(B)` at that time, and the inner UDVA.
pub fn conditional_gamma(config: &ModelConfig, mirror: &ModelConfig, closeout: Closeout, m: f64, t: f64) -> Result<f64> {
    let a0 = config.exposure_scale(t);
    if config.lambda_c == 0.0 || config.lambda_b == 0.0 || t >= config.maturity || a0 == 0.0 {
        return Ok(0.0);
    }
    let decay = config.lambda_c + config.lambda_b + config.r;
    let outer = Quadrature::with_tolerances(1e-7, ABS_TOL);
    let middle = Quadrature::with_tolerances(1e-7, ABS_TOL);
    let x = m / a0;
    let value = outer.try_integrate(
        |v| {
            let u = v * v;
            let s = t + u;
            let a = config.exposure_scale(s);
            let (mean, sd) = (a * x, a * config.sigma * v);
            let g = |mb: f64| -> Result<f64> {
                let udva = inner_udva(mirror, mb, s)?;
                Ok(gamma_payment(config, closeout, mb, udva))
            };
            let expected = if sd == 0.0 {
                g(mean)?
            } else {
                let mut cuts = vec![-Z_RANGE, (-mean / sd).clamp(-Z_RANGE, Z_RANGE), Z_RANGE];
                if closeout == Closeout::Replacement {
                    // second kink where the replacement claim M + UDVA changes sign
                    let mut k = 0.0;
                    for _ in 0..4 {
                        k = -inner_udva(mirror, k, s)?;
                    }
                    cuts.push(((k - mean) / sd).clamp(-Z_RANGE, Z_RANGE));
                    cuts.sort_by(f64::total_cmp);
                }
                let mut total = 0.0;
                for w in cuts.windows(2) {
                    total += middle.try_integrate(|z| Ok(g(mean + sd * z)? * norm_pdf(z)), w[0], w[1])?.value;
                }
                total
            };
            Ok(2.0 * v * (-decay * u).exp() * expected)
        },
        0.0,
        (config.maturity - t).sqrt(),
    )?;
    Ok(config.lambda_c * value.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn reference() -> ModelConfig {
        ModelConfig::reference()
    }

    #[test]
    fn inner_udva_trivial_cases() {
        let cfg = ModelConfig { lambda_c: 0.0, ..reference() };
        assert_eq!(inner_udva(&cfg, 0.2, 1.0).unwrap(), 0.0);
        assert_eq!(inner_udva(&reference(), 0.2, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn inner_udva_at_origin_is_the_ucva_oracle() {
        let cfg = reference();
        let inner = inner_udva(&cfg, 0.0, 0.0).unwrap();
        let oracle = oracle::ucva_quadrature(&cfg).unwrap();
        assert!((inner - oracle).abs() / oracle < 1e-9, "{inner} vs {oracle}");
    }

    #[test]
    fn inner_udva_matches_oracle_route_off_centre() {
        let cfg = ModelConfig { amortizing: true, ..reference() };
        for (m, t) in [(-0.3, 1.0), (0.05, 2.5), (0.4, 4.0)] {
            let a = inner_udva(&cfg, m, t).unwrap();
            let b = oracle::conditional_udva(&cfg, m, t).unwrap();
            assert!((a - b).abs() < 1e-11 * (1.0 + b.abs()), "{m} {t}: {a} vs {b}");
        }
    }

    #[test]
    fn conditional_values_at_zero_match_oracles() {
        let cfg = reference();
        let none = LiquiditySpec::none();
        let u = conditional_ucva(&cfg, &none, 0.0, 0.0).unwrap();
        let f = conditional_ftdcva(&cfg, &none, 0.0, 0.0).unwrap();
        assert!((u - oracle::ucva_quadrature(&cfg).unwrap()).abs() < 1e-12);
        assert!((f - oracle::ftdcva_quadrature(&cfg).unwrap()).abs() < 1e-12);
        let w = conditional_window_cva(&cfg, &none, 0.0, 0.0, 5.0).unwrap();
        assert!((w - f).abs() < 1e-15);
    }

    #[test]
    fn window_cva_matches_numeric_gaussian_route() {
        let cfg = reference();
        let got = conditional_window_cva(&cfg, &LiquiditySpec::none(), 0.1, 1.0, 1.5).unwrap();
        let want = oracle::window_cva_quadrature(&cfg, 1.0, 1.5, -0.1).unwrap();
        assert!((got - want).abs() < 1e-10 * want, "{got} vs {want}");
    }

    #[test]
    fn gamma_at_origin_matches_nested_oracle() {
        // the oracle is written for Gamma(C, B); mirror to get Gamma(B, C)
        let cfg = reference();
        let mirror = cfg.mirrored();
        for closeout in [Closeout::RiskFree, Closeout::Replacement] {
            let g = conditional_gamma(&cfg, &mirror, closeout, 0.0, 0.0).unwrap();
            let o = oracle::gamma_quadrature(&mirror, closeout).unwrap();
            assert!((g - o).abs() / o < 1e-6, "{closeout:?}: {g} vs {o}");
        }
    }

    #[test]
    fn replacement_payment_is_dominated() {
        let cfg = reference();
        for m in [-1.0, -0.1, 0.0, 0.2] {
            for u in [0.0, 0.01, 0.5] {
                let c1 = gamma_payment(&cfg, Closeout::RiskFree, m, u);
                let c2 = gamma_payment(&cfg, Closeout::Replacement, m, u);
                assert!(0.0 <= c2 && c2 <= c1);
            }
        }
    }
}
