//! Premia paid to margin lenders, the lenders' per-window P&L, and the
//! liquidity carry cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liquidity::LiquiditySpec;
use crate::model::{Model, ModelConfig, Party, TimeGrid};
use crate::sim::{mc_estimate, mc_estimate_buckets, mc_estimate_indexed, EstimatorStats, ScenarioPath, SimSettings};
use crate::structures::conditional::{conditional_ucva, conditional_window_cva, ConditionalTable};
use crate::structures::PathPayoffs;

use super::Collateralization;

/// Margin lender whose premium stream is requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LenderSide {
    /// Lender `A`, covering `B` against the default of `C`.
    A,
    /// Lender `D`, covering `C` against the default of `B`.
    D,
}

/// High-frequency premium stream seen from time 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiumStream {
    /// Discounted premium of each grid step `(t_k, t_{k+1}]`.
    pub steps: Vec<EstimatorStats>,
    /// Sum of the discounted step premia, estimated on the same paths.
    pub total: EstimatorStats,
}

impl PremiumStream {
    /// Discretization allowance `2 dt (lambda + r) cva` for comparing the summed
    /// stream with a continuous-time CVA, `dt` being the largest step.
    pub fn discretization_tolerance(grid: &TimeGrid, hazard: f64, r: f64, cva: f64) -> f64 {
        let dt = grid.times().windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        2.0 * dt * (hazard + r) * cva.abs()
    }
}

/// Reset premia fixed at the start of a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPremia {
    /// `Pi_{T_i}(A, C) = CVA_{T_i}(A, C)` over the window.
    pub lender_a: f64,
    /// Quadri-partite: `Pi_{T_i}(D, B)` over the window. Tri-partite: the
    /// unilateral `CVA_{T_i}(C, B)` carried by `B` to maturity, with no window.
    pub protection_b: f64,
}

/// Lender P&L over one reset window, discounted to time 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowFairness {
    pub start: f64,
    pub end: f64,
    /// Premium received by `A` at the window start.
    pub premium_a: EstimatorStats,
    /// Premium minus protection paid by `A`.
    pub pnl_a: EstimatorStats,
    /// Lender `D`; absent in the tri-partite structure.
    pub premium_d: Option<EstimatorStats>,
    pub pnl_d: Option<EstimatorStats>,
}

fn check_grid(model: &Model, grid: &TimeGrid) -> Result<()> {
    if grid.maturity() != model.maturity {
        return Err(Error::Grid(format!(
            "grid ends at {} but the model matures at {}",
            grid.maturity(),
            model.maturity
        )));
    }
    Ok(())
}

/// Only the default times are needed when the exposure is read at default.
fn horizon_grid(model: &Model) -> Result<TimeGrid> {
    TimeGrid::new(vec![0.0, model.maturity])
}

/// Premium stream of a lender under daily-style resets: step `k` carries
/// `E[1_{t_k < tau < t_{k+1}} e^{-r tau} (1 - R)((M_tau)^- + min(L, H))]` for the
/// covered party's default, without a survival condition on the other party.
pub fn highfreq_premium(
    model: &Model,
    grid: &TimeGrid,
    settings: &SimSettings,
    side: LenderSide,
    liquidity: &LiquiditySpec,
) -> Result<PremiumStream> {
    check_grid(model, grid)?;
    liquidity.validate()?;
    let world = match side {
        LenderSide::A => model.clone(),
        LenderSide::D => model.mirrored(),
    };
    let gen = settings.generator(&world, &horizon_grid(model)?);
    let pay = PathPayoffs::new(&world, *liquidity);
    let times = grid.times();
    let payoff = |path: &ScenarioPath| {
        pay.default_of_c(path).map(|e| {
            let step = times.partition_point(|&s| s < e.tau).clamp(1, times.len() - 1) - 1;
            (step, e.discount * pay.lender_payout(&e))
        })
    };
    let steps = mc_estimate_buckets(&gen, settings, times.len() - 1, payoff)?;
    let total = mc_estimate(&gen, settings, |path| payoff(path).map_or(0.0, |(_, x)| x))?;
    Ok(PremiumStream { steps, total })
}

/// Reset premia at the start of `window` given the state `M_{T_i}(C) = m_c` and
/// both parties alive.
pub fn periodic_window_cva(
    config: &ModelConfig,
    window: (f64, f64),
    m_c: f64,
    structure: Collateralization,
    liquidity: &LiquiditySpec,
) -> Result<WindowPremia> {
    liquidity.validate()?;
    let (start, end) = window;
    if !(start >= 0.0 && end >= start) {
        return Err(Error::domain("window", format!("need 0 <= start <= end, got [{start}, {end}]")));
    }
    let mirror = config.mirrored();
    let lender_a = conditional_window_cva(config, liquidity, -m_c, start, end)?;
    let protection_b = match structure {
        Collateralization::Quadripartite => conditional_window_cva(&mirror, liquidity, m_c, start, end)?,
        Collateralization::Tripartite => conditional_ucva(&mirror, liquidity, m_c, start)?,
    };
    Ok(WindowPremia { lender_a, protection_b })
}

/// Expected discounted P&L of the lenders per reset window: the premium set by
/// [`periodic_window_cva`] times `premium_scale`, received at the window start
/// if both parties are alive, minus the protection paid on a first default
/// inside the window.
///
/// Premia are read from conditional tables in `M_{T_i}(B)`, one per window.
pub fn lender_fairness(
    model: &Model,
    grid: &TimeGrid,
    settings: &SimSettings,
    structure: Collateralization,
    liquidity: &LiquiditySpec,
    premium_scale: f64,
) -> Result<Vec<WindowFairness>> {
    check_grid(model, grid)?;
    liquidity.validate()?;
    let config = model.config();
    let mirror = config.mirrored();
    let quadri = structure == Collateralization::Quadripartite;
    let windows: Vec<(f64, f64)> = grid.reset_windows().collect();
    let mut tables_a = Vec::with_capacity(windows.len());
    let mut tables_d = Vec::with_capacity(windows.len());
    for &(start, end) in &windows {
        let (lo, hi) = ConditionalTable::default_range(config, start);
        let nodes = ConditionalTable::NODES;
        tables_a.push(ConditionalTable::tabulate(start, lo, hi, nodes, |m| {
            conditional_window_cva(config, liquidity, m, start, end)
        })?);
        if quadri {
            tables_d.push(ConditionalTable::tabulate(start, lo, hi, nodes, |m| {
                conditional_window_cva(&mirror, liquidity, -m, start, end)
            })?);
        }
    }
    let gen = settings.generator(model, &grid.reset_grid());
    let pay = PathPayoffs::new(config, *liquidity);
    let lgd_b = 1.0 - config.recovery_b;
    let est = mc_estimate_indexed(settings, 4 * windows.len(), &[], ScenarioPath::default, |i, path, out| {
        gen.fill(i, path);
        let event_c = pay.default_of_c(path).filter(|e| e.first);
        let tau_b = path.tau(Party::B);
        for (k, &(start, end)) in windows.iter().enumerate() {
            if !path.alive_at(start) {
                continue;
            }
            let m = path.exposure(Party::B, start);
            let discount = path.discount(start);
            let premium = premium_scale * discount * tables_a[k].value(m);
            let paid = match event_c {
                Some(e) if e.tau <= end => e.discount * pay.lender_payout(&e),
                _ => 0.0,
            };
            out[4 * k] = premium;
            out[4 * k + 1] = premium - paid;
            if quadri {
                let premium = premium_scale * discount * tables_d[k].value(m);
                let paid = if path.defaults_first(Party::B) && tau_b <= end {
                    let m_c = path.exposure(Party::C, tau_b);
                    let l = liquidity.correction(m_c, path.liquidity_normal(Party::B));
                    path.discount(tau_b) * lgd_b * (m_c.max(0.0) + liquidity.covered(l))
                } else {
                    0.0
                };
                out[4 * k + 2] = premium;
                out[4 * k + 3] = premium - paid;
            }
        }
        Ok(())
    })?;
    let s = &est.stats;
    Ok(windows
        .iter()
        .enumerate()
        .map(|(k, &(start, end))| WindowFairness {
            start,
            end,
            premium_a: s[4 * k],
            pnl_a: s[4 * k + 1],
            premium_d: quadri.then_some(s[4 * k + 2]),
            pnl_d: quadri.then_some(s[4 * k + 3]),
        })
        .collect())
}

/// Carry cost to `C` of the liquidity correction:
/// `E[e^{-r tau_C} 1_{tau_C < tau_B, tau_C <= T} (1 - R_C) L_{tau_C}]`.
pub fn repo_carry_cost(model: &Model, settings: &SimSettings, liquidity: &LiquiditySpec) -> Result<EstimatorStats> {
    liquidity.validate()?;
    let gen = settings.generator(model, &horizon_grid(model)?);
    let pay = PathPayoffs::new(model, *liquidity);
    let lgd = 1.0 - model.recovery_c;
    mc_estimate(&gen, settings, |path| match pay.default_of_c(path) {
        Some(e) if e.first => e.discount * lgd * e.liquidity,
        _ => 0.0,
    })
}

/// Liquidity loss above the haircut `H`, left with `B` at a first default of `C`.
pub fn residual_liquidity_cva(model: &Model, settings: &SimSettings, liquidity: &LiquiditySpec) -> Result<EstimatorStats> {
    liquidity.validate()?;
    let gen = settings.generator(model, &horizon_grid(model)?);
    let pay = PathPayoffs::new(model, *liquidity);
    mc_estimate(&gen, settings, |path| pay.residual_liquidity(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;
    use crate::oracle;

    fn model(config: ModelConfig) -> Model {
        validate(config).unwrap()
    }

    #[test]
    fn highfreq_stream_vanishes_without_default_risk() {
        let m = model(ModelConfig { lambda_c: 0.0, ..ModelConfig::reference() });
        let grid = TimeGrid::all_resets(5.0, 1.0 / 365.0).unwrap();
        let s = highfreq_premium(&m, &grid, &SimSettings::new(5000, 1), LenderSide::A, &LiquiditySpec::none()).unwrap();
        assert_eq!(s.steps.len(), grid.times().len() - 1);
        assert!(s.steps.iter().all(|x| x.mean == 0.0));
        assert_eq!(s.total.mean, 0.0);
    }

    #[test]
    fn zero_fraction_liquidity_is_no_liquidity() {
        let m = model(ModelConfig::reference());
        let grid = TimeGrid::all_resets(5.0, 0.25).unwrap();
        let settings = SimSettings::new(20_000, 4);
        let a = highfreq_premium(&m, &grid, &settings, LenderSide::A, &LiquiditySpec::none()).unwrap();
        let b = highfreq_premium(&m, &grid, &settings, LenderSide::A, &LiquiditySpec::constant_fraction(0.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summed_stream_matches_the_ucva_oracle() {
        let config = ModelConfig::reference();
        let m = model(config.clone());
        let grid = TimeGrid::all_resets(5.0, 1.0 / 365.0).unwrap();
        let s = highfreq_premium(&m, &grid, &SimSettings::new(200_000, 8), LenderSide::A, &LiquiditySpec::none()).unwrap();
        let ucva = oracle::ucva_quadrature(&config).unwrap();
        let sum: f64 = s.steps.iter().map(|x| x.mean).sum();
        assert!((sum - s.total.mean).abs() < 1e-12 * ucva);
        let tol = PremiumStream::discretization_tolerance(&grid, config.lambda_c, config.r, ucva);
        assert!((s.total.mean - ucva).abs() < 3.0 * s.total.std_error + tol, "{:?} vs {ucva}", s.total);
    }

    #[test]
    fn lender_d_stream_is_the_mirrored_udva() {
        let config = ModelConfig::reference();
        let m = model(config.clone());
        let grid = TimeGrid::all_resets(5.0, 0.5).unwrap();
        let s = highfreq_premium(&m, &grid, &SimSettings::new(100_000, 2), LenderSide::D, &LiquiditySpec::none()).unwrap();
        let udva = oracle::udva_quadrature(&config).unwrap();
        assert!(s.total.within_se(udva, 3.0), "{:?} vs {udva}", s.total);
    }

    #[test]
    fn window_premium_limits() {
        let config = ModelConfig::reference();
        let none = LiquiditySpec::none();
        for structure in [Collateralization::Tripartite, Collateralization::Quadripartite] {
            let p = periodic_window_cva(&config, (1.0, 1.0), 0.1, structure, &none).unwrap();
            assert_eq!(p.lender_a, 0.0);
        }
        let q = periodic_window_cva(&config, (1.0, 1.0), 0.1, Collateralization::Quadripartite, &none).unwrap();
        assert_eq!(q.protection_b, 0.0);
        let fast_b = ModelConfig { lambda_b: 1e3, ..config.clone() };
        let p = periodic_window_cva(&fast_b, (0.0, 0.5), 0.0, Collateralization::Quadripartite, &none).unwrap();
        let slow = periodic_window_cva(&config, (0.0, 0.5), 0.0, Collateralization::Quadripartite, &none).unwrap();
        assert!(p.lender_a < 1e-3 * slow.lender_a, "{} vs {}", p.lender_a, slow.lender_a);
    }

    #[test]
    fn window_premium_matches_the_oracle() {
        let config = ModelConfig::reference();
        let none = LiquiditySpec::none();
        for (start, end, m_c) in [(0.0, 0.5, 0.0), (1.0, 1.5, -0.1), (2.0, 2.5, 0.2)] {
            let p = periodic_window_cva(&config, (start, end), m_c, Collateralization::Quadripartite, &none).unwrap();
            let a = oracle::window_cva_quadrature(&config, start, end, m_c).unwrap();
            let d = oracle::window_cva_quadrature(&config.mirrored(), start, end, -m_c).unwrap();
            assert!((p.lender_a - a).abs() < 1e-8 * a, "{} vs {a}", p.lender_a);
            assert!((p.protection_b - d).abs() < 1e-8 * d, "{} vs {d}", p.protection_b);
        }
    }

    #[test]
    fn tripartite_b_leg_has_no_window() {
        let config = ModelConfig::reference();
        let p = periodic_window_cva(&config, (0.0, 0.5), 0.0, Collateralization::Tripartite, &LiquiditySpec::none()).unwrap();
        let udva = oracle::udva_quadrature(&config).unwrap();
        assert!((p.protection_b - udva).abs() < 1e-8 * udva);
    }

    #[test]
    fn fairness_without_default_risk_is_exactly_zero() {
        let m = model(ModelConfig { lambda_c: 0.0, ..ModelConfig::reference() });
        let grid = TimeGrid::periodic(5.0, 0.5, 0.5).unwrap();
        let w = lender_fairness(&m, &grid, &SimSettings::new(2000, 3), Collateralization::Tripartite, &LiquiditySpec::none(), 1.0)
            .unwrap();
        assert_eq!(w.len(), 10);
        for x in w {
            assert_eq!(x.pnl_a.mean, 0.0);
            assert_eq!(x.pnl_a.std_error, 0.0);
            assert!(x.pnl_d.is_none());
        }
    }

    #[test]
    fn fair_premia_balance_and_doubled_premia_show_up() {
        let m = model(ModelConfig::reference());
        let grid = TimeGrid::periodic(5.0, 0.5, 0.5).unwrap();
        let settings = SimSettings::new(40_000, 5);
        let none = LiquiditySpec::none();
        let fair = lender_fairness(&m, &grid, &settings, Collateralization::Quadripartite, &none, 1.0).unwrap();
        let doubled = lender_fairness(&m, &grid, &settings, Collateralization::Quadripartite, &none, 2.0).unwrap();
        for (f, d) in fair.iter().zip(&doubled) {
            assert!(f.pnl_a.within_se(0.0, 3.0), "{f:?}");
            assert!(f.pnl_d.unwrap().within_se(0.0, 3.0), "{f:?}");
            let excess = d.pnl_a.mean - f.pnl_a.mean;
            assert!((excess - f.premium_a.mean).abs() < 1e-12 * f.premium_a.mean);
            assert!(d.pnl_a.mean > 3.0 * d.pnl_a.std_error);
        }
    }

    #[test]
    fn carry_cost_limits_and_oracle() {
        let settings = SimSettings::new(100_000, 6);
        let m = model(ModelConfig::reference());
        assert_eq!(repo_carry_cost(&m, &settings, &LiquiditySpec::none()).unwrap().mean, 0.0);
        let full_recovery = model(ModelConfig { recovery_c: 1.0, ..ModelConfig::reference() });
        assert_eq!(repo_carry_cost(&full_recovery, &settings, &LiquiditySpec::constant_fraction(0.1)).unwrap().mean, 0.0);
        let c = repo_carry_cost(&m, &settings, &LiquiditySpec::constant_fraction(0.1)).unwrap();
        let o = oracle::repo_carry_quadrature(&ModelConfig::reference(), 0.1).unwrap();
        assert!(c.within_se(o, 3.0), "{c:?} vs {o}");
    }

    #[test]
    fn residual_liquidity_needs_a_finite_haircut() {
        let m = model(ModelConfig::reference());
        let settings = SimSettings::new(20_000, 7);
        let open = residual_liquidity_cva(&m, &settings, &LiquiditySpec::lognormal(-4.0, 0.5)).unwrap();
        assert_eq!(open.mean, 0.0);
        let capped = residual_liquidity_cva(&m, &settings, &LiquiditySpec::lognormal(-4.0, 0.5).with_haircut(0.01)).unwrap();
        assert!(capped.mean > 0.0);
    }
}
