//! Bipartite CVA/DVA family (unilateral, bilateral, first-to-default, portable),
//! close-out rules and decomposed fair values for all ten styles.
//!
//! Every adjustment is estimated in the `(B, C)` direction on a path world. The
//! `(C, B)` direction uses the same functional on the mirrored model with the
//! same seed, so `DVA(B, C)` and `CVA(C, B)` are one estimator and money
//! conservation holds bit for bit.

mod closeout;
pub mod conditional;

use serde::{Deserialize, Serialize};

pub use closeout::{closeout_value, implied_cva, CloseoutInputs, CloseoutRule};
pub use conditional::{conditional_ftdcva, conditional_ucva, inner_udva, udva_given_b, ConditionalTable};

use crate::error::Result;
use crate::liquidity::LiquiditySpec;
use crate::model::{Closeout, Direction, Model, ModelConfig, Party, StructuringStyle, TimeGrid};
use crate::sim::{mc_estimate_worlds, CrnEstimate, EstimatorStats, PathGenerator, ScenarioPath, SimSettings};

/// Pathwise payoffs of a single world, all in the `(B, C)` direction.
#[derive(Debug, Clone)]
pub struct PathPayoffs {
    config: ModelConfig,
    mirror: ModelConfig,
    liquidity: LiquiditySpec,
}

/// Default of `C` inside the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefaultEvent {
    pub tau: f64,
    pub discount: f64,
    /// `M_tau(B)`.
    pub m: f64,
    /// Liquidity correction `L_tau >= 0`.
    pub liquidity: f64,
    /// `B` is still alive at `tau`.
    pub first: bool,
}

impl PathPayoffs {
    pub fn new(config: &ModelConfig, liquidity: LiquiditySpec) -> Self {
        PathPayoffs {
            config: config.clone(),
            mirror: config.mirrored(),
            liquidity,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn liquidity(&self) -> &LiquiditySpec {
        &self.liquidity
    }

    pub fn default_of_c(&self, path: &ScenarioPath) -> Option<DefaultEvent> {
        let tau = path.tau(Party::C);
        if tau > path.maturity() {
            return None;
        }
        let m = path.exposure(Party::B, tau);
        Some(DefaultEvent {
            tau,
            discount: path.discount(tau),
            m,
            liquidity: self.liquidity.correction(m, path.liquidity_normal(Party::C)),
            first: path.tau(Party::B) > tau,
        })
    }

    /// Loss of `B` at the default of `C` under a bipartite close-out.
    fn bipartite_loss(&self, e: &DefaultEvent) -> f64 {
        (1.0 - self.config.recovery_c) * e.m.max(0.0) + e.liquidity
    }

    /// `e^{-r tau_C} ((1 - R_C)(M(C))^- + L)` on `tau_C <= T`.
    pub fn ucva(&self, path: &ScenarioPath) -> f64 {
        self.default_of_c(path).map_or(0.0, |e| e.discount * self.bipartite_loss(&e))
    }

    /// As [`PathPayoffs::ucva`] with the indicator `tau_C < tau_B`.
    pub fn ftdcva(&self, path: &ScenarioPath) -> f64 {
        match self.default_of_c(path) {
            Some(e) if e.first => e.discount * self.bipartite_loss(&e),
            _ => 0.0,
        }
    }

    /// `UDVA_tau(B, C)` given `M_tau(B) = m`.
    pub fn udva_at(&self, m: f64, tau: f64) -> Result<f64> {
        inner_udva(&self.mirror, m, tau)
    }

    /// Portable correction `Gamma(B, C)`: paid at a first default of `C`.
    pub fn gamma(&self, path: &ScenarioPath, closeout: Closeout) -> Result<f64> {
        match self.default_of_c(path) {
            Some(e) if e.first => {
                let udva = self.udva_at(e.m, e.tau)?;
                Ok(e.discount * conditional::gamma_payment(&self.config, closeout, e.m, udva))
            }
            _ => Ok(0.0),
        }
    }

    /// Lender protection on `C`: `(1 - R_C)((M(C))^- + min(L, H))` at a first default of `C`.
    pub fn lender(&self, path: &ScenarioPath) -> f64 {
        match self.default_of_c(path) {
            Some(e) if e.first => e.discount * self.lender_payout(&e),
            _ => 0.0,
        }
    }

    /// Undiscounted lender payout at a default event.
    pub fn lender_payout(&self, e: &DefaultEvent) -> f64 {
        (1.0 - self.config.recovery_c) * (e.m.max(0.0) + self.liquidity.covered(e.liquidity))
    }

    /// Liquidity loss above the haircut, left with `B`, at a first default of `C`.
    pub fn residual_liquidity(&self, path: &ScenarioPath) -> f64 {
        match self.default_of_c(path) {
            Some(e) if e.first => e.discount * (1.0 - self.config.recovery_c) * self.liquidity.residual(e.liquidity),
            _ => 0.0,
        }
    }

    /// The style's CVA-type charge of `B` on `C` for this path.
    pub fn style_cva(&self, path: &ScenarioPath, style: StructuringStyle) -> Result<f64> {
        use StructuringStyle::*;
        Ok(match style {
            UcvaOnly | BcvaRiskFreeCloseout | BcvaReplacementCloseout => self.ucva(path),
            FtdCva => self.ftdcva(path),
            PortableCvaC1 => self.ucva(path) + self.gamma(path, Closeout::RiskFree)?,
            PortableCvaC2 => self.ucva(path) + self.gamma(path, Closeout::Replacement)?,
            QuadripartiteHighFreq | TripartitePeriodic | QuadripartitePeriodic | PentapartiteCcp => self.lender(path),
        })
    }
}

/// Point estimates of a style's adjustments and fair values.
///
/// `cva`/`dva` are booked by `B`, the `_counterparty` fields by `C`. For the
/// collateralized styles `cva` is the lender protection on `C` funded by `C`'s
/// premia and `dva` the protection on `B`: lender `D` for the quadri-partite
/// styles, the unilateral `CVA(C, B)` carried by `B` in the tri-partite one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationResult {
    pub style: StructuringStyle,
    pub cva: EstimatorStats,
    pub dva: EstimatorStats,
    pub cva_counterparty: EstimatorStats,
    pub dva_counterparty: EstimatorStats,
    /// Portable correction `Gamma(B, C)`; exactly zero for other styles.
    pub gamma: EstimatorStats,
    /// Portable correction `Gamma(C, B)`.
    pub gamma_counterparty: EstimatorStats,
    pub v_b: EstimatorStats,
    pub v_c: EstimatorStats,
    /// Pathwise gap between each side's DVA and the other side's CVA;
    /// identically zero for money-conserving styles.
    pub conservation_gap: EstimatorStats,
}

impl ValuationResult {
    pub fn conserves_money(&self) -> bool {
        self.conservation_gap.mean == 0.0 && self.conservation_gap.std_error == 0.0
    }
}

/// Expected discounted close-out inconsistency, split by defaulting party.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    /// `B` defaults first; the survivor `C` loses its `UDVA(C, B)`.
    pub b_defaults_first: EstimatorStats,
    pub c_defaults_first: EstimatorStats,
    pub total: EstimatorStats,
}

/// Prices the bipartite family on a fixed model, grid and path stream.
#[derive(Debug, Clone)]
pub struct Pricer {
    model: Model,
    mirror: Model,
    grid: TimeGrid,
    settings: SimSettings,
    liquidity: LiquiditySpec,
}

impl Pricer {
    pub fn new(model: &Model, grid: &TimeGrid, settings: &SimSettings) -> Result<Pricer> {
        settings.validate()?;
        if grid.maturity() != model.maturity {
            return Err(crate::Error::Grid(format!(
                "grid ends at {} but the model matures at {}",
                grid.maturity(),
                model.maturity
            )));
        }
        Ok(Pricer {
            model: model.clone(),
            mirror: model.mirrored(),
            grid: grid.clone(),
            settings: settings.clone(),
            liquidity: LiquiditySpec::none(),
        })
    }

    pub fn with_liquidity(mut self, liquidity: LiquiditySpec) -> Result<Pricer> {
        liquidity.validate()?;
        self.liquidity = liquidity;
        Ok(self)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn settings(&self) -> &SimSettings {
        &self.settings
    }

    pub fn liquidity(&self) -> &LiquiditySpec {
        &self.liquidity
    }

    /// Model whose `(B, C)` direction is `direction`.
    pub fn world(&self, direction: Direction) -> &Model {
        match direction {
            Direction::BC => &self.model,
            Direction::CB => &self.mirror,
        }
    }

    pub fn generator(&self, direction: Direction) -> PathGenerator {
        self.settings.generator(self.world(direction), &self.grid)
    }

    pub fn payoffs(&self, direction: Direction) -> PathPayoffs {
        PathPayoffs::new(self.world(direction), self.liquidity)
    }

    /// Estimate functionals of the `(B, C)` world (index 0) and the `(C, B)` world (index 1).
    pub fn estimate<F>(&self, n_outputs: usize, pairs: &[(usize, usize)], payoff: F) -> Result<CrnEstimate>
    where
        F: Fn(&PathPayoffs, &ScenarioPath, &PathPayoffs, &ScenarioPath, &mut [f64]) -> Result<()> + Sync,
    {
        let (gen_bc, gen_cb) = (self.generator(Direction::BC), self.generator(Direction::CB));
        let (pay_bc, pay_cb) = (self.payoffs(Direction::BC), self.payoffs(Direction::CB));
        mc_estimate_worlds(&[&gen_bc, &gen_cb], &self.settings, n_outputs, pairs, |paths, out| {
            payoff(&pay_bc, &paths[0], &pay_cb, &paths[1], out)
        })
    }

    fn estimate_one<F>(&self, direction: Direction, payoff: F) -> Result<EstimatorStats>
    where
        F: Fn(&PathPayoffs, &ScenarioPath) -> Result<f64> + Sync,
    {
        let gen = self.generator(direction);
        let pay = self.payoffs(direction);
        let est = mc_estimate_worlds(&[&gen], &self.settings, 1, &[], |paths, out| {
            out[0] = payoff(&pay, &paths[0])?;
            Ok(())
        })?;
        Ok(est.stats[0])
    }

    /// `UCVA(direction)`: no first-to-default indicator.
    pub fn ucva(&self, direction: Direction) -> Result<EstimatorStats> {
        self.estimate_one(direction, |p, path| Ok(p.ucva(path)))
    }

    /// `UDVA(direction) = UCVA(direction swapped)`, the identical estimator.
    pub fn udva(&self, direction: Direction) -> Result<EstimatorStats> {
        self.ucva(direction.swapped())
    }

    /// `BCVA(B, C) = UCVA(B, C) - UDVA(B, C)` on common random numbers.
    pub fn bcva(&self) -> Result<EstimatorStats> {
        let est = self.estimate(1, &[], |bc, path_bc, cb, path_cb, out| {
            out[0] = bc.ucva(path_bc) - cb.ucva(path_cb);
            Ok(())
        })?;
        Ok(est.stats[0])
    }

    pub fn ftdcva(&self, direction: Direction) -> Result<EstimatorStats> {
        self.estimate_one(direction, |p, path| Ok(p.ftdcva(path)))
    }

    /// Portable correction `Gamma(direction)`, paid at a first default of the
    /// direction's defaulter.
    pub fn pcva_gamma(&self, direction: Direction, closeout: Closeout) -> Result<EstimatorStats> {
        self.estimate_one(direction, |p, path| p.gamma(path, closeout))
    }

    /// `PCVA = UCVA + Gamma` in both directions on common random numbers.
    pub fn pcva(&self, closeout: Closeout) -> Result<ValuationResult> {
        let style = match closeout {
            Closeout::RiskFree => StructuringStyle::PortableCvaC1,
            Closeout::Replacement => StructuringStyle::PortableCvaC2,
        };
        self.fair_value(style)
    }

    /// Expected discounted close-out inconsistency of `style` at the first default.
    pub fn closeout_mismatch(&self, style: StructuringStyle) -> Result<Mismatch> {
        let closeout = match style {
            StructuringStyle::BcvaRiskFreeCloseout => Closeout::RiskFree,
            StructuringStyle::BcvaReplacementCloseout => Closeout::Replacement,
            _ => {
                let zero = EstimatorStats::exact(0.0, self.settings.n_paths);
                return Ok(Mismatch {
                    b_defaults_first: zero,
                    c_defaults_first: zero,
                    total: zero,
                });
            }
        };
        let est = self.estimate(3, &[], |bc, path_bc, cb, path_cb, out| {
            out[0] = cb.gamma(path_cb, closeout)?;
            out[1] = bc.gamma(path_bc, closeout)?;
            out[2] = out[0] + out[1];
            Ok(())
        })?;
        Ok(Mismatch {
            b_defaults_first: est.stats[0],
            c_defaults_first: est.stats[1],
            total: est.stats[2],
        })
    }

    /// Decomposed fair values `V(B) = M(B) - CVA + DVA`, `V(C) = M(C) - CVA' + DVA'`.
    pub fn fair_value(&self, style: StructuringStyle) -> Result<ValuationResult> {
        let m0 = self.model.m0;
        let gamma_rule = match style {
            StructuringStyle::PortableCvaC1 => Some(Closeout::RiskFree),
            StructuringStyle::PortableCvaC2 => Some(Closeout::Replacement),
            _ => None,
        };
        let est = self.estimate(9, &[], |bc, path_bc, cb, path_cb, out| {
            let (gamma_bc, gamma_cb) = match gamma_rule {
                Some(rule) => (bc.gamma(path_bc, rule)?, cb.gamma(path_cb, rule)?),
                None => (0.0, 0.0),
            };
            let (cva, cva_cp, dva, dva_cp, v_b, v_c);
            if style.is_collateralized() {
                cva = bc.lender(path_bc);
                cva_cp = if style == StructuringStyle::TripartitePeriodic {
                    cb.ucva(path_cb)
                } else {
                    cb.lender(path_cb)
                };
                dva = cva_cp;
                dva_cp = cva;
                // premia offset the lender protection at every reset
                if style == StructuringStyle::TripartitePeriodic {
                    v_b = m0 + dva;
                    v_c = -m0 - cva_cp;
                } else {
                    v_b = m0;
                    v_c = -m0;
                }
            } else {
                cva = match gamma_rule {
                    Some(_) => bc.ucva(path_bc) + gamma_bc,
                    None => bc.style_cva(path_bc, style)?,
                };
                cva_cp = match gamma_rule {
                    Some(_) => cb.ucva(path_cb) + gamma_cb,
                    None => cb.style_cva(path_cb, style)?,
                };
                if style.is_money_conserving() {
                    dva = cva_cp;
                    dva_cp = cva;
                } else {
                    dva = 0.0;
                    dva_cp = 0.0;
                }
                v_b = m0 - cva + dva;
                v_c = -m0 - cva_cp + dva_cp;
            }
            // gap between what each side books as DVA and the other side's CVA
            let gap = (dva - cva_cp) + (dva_cp - cva);
            out.copy_from_slice(&[cva, dva, cva_cp, dva_cp, gamma_bc, gamma_cb, v_b, v_c, gap]);
            Ok(())
        })?;
        let s = &est.stats;
        Ok(ValuationResult {
            style,
            cva: s[0],
            dva: s[1],
            cva_counterparty: s[2],
            dva_counterparty: s[3],
            gamma: s[4],
            gamma_counterparty: s[5],
            v_b: s[6],
            v_c: s[7],
            conservation_gap: s[8],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;

    fn pricer(config: ModelConfig, n: u64) -> Pricer {
        let model = validate(config).unwrap();
        let grid = TimeGrid::uniform(model.maturity, 10).unwrap();
        Pricer::new(&model, &grid, &SimSettings::new(n, 11)).unwrap()
    }

    fn symmetric() -> ModelConfig {
        ModelConfig {
            lambda_b: 0.03,
            lambda_c: 0.03,
            recovery_b: 0.4,
            recovery_c: 0.4,
            ..ModelConfig::reference()
        }
    }

    #[test]
    fn trivial_zeros() {
        let p = pricer(ModelConfig { recovery_c: 1.0, ..ModelConfig::reference() }, 2000);
        assert_eq!(p.ucva(Direction::BC).unwrap().mean, 0.0);
        let p = pricer(ModelConfig { lambda_c: 0.0, ..ModelConfig::reference() }, 2000);
        assert_eq!(p.ucva(Direction::BC).unwrap().mean, 0.0);
        assert_eq!(p.ftdcva(Direction::BC).unwrap().mean, 0.0);
        assert_eq!(p.pcva_gamma(Direction::CB, Closeout::RiskFree).unwrap().mean, 0.0);
        let p = pricer(ModelConfig { lambda_b: 0.0, ..ModelConfig::reference() }, 2000);
        assert_eq!(p.udva(Direction::BC).unwrap().mean, 0.0);
        assert_eq!(p.pcva_gamma(Direction::CB, Closeout::Replacement).unwrap().mean, 0.0);
        assert_eq!(p.bcva().unwrap(), p.ucva(Direction::BC).unwrap());
    }

    #[test]
    fn symmetric_config_is_bit_symmetric() {
        let p = pricer(symmetric(), 5000);
        assert_eq!(p.udva(Direction::BC).unwrap(), p.ucva(Direction::BC).unwrap());
        let b = p.bcva().unwrap();
        assert_eq!(b.mean, 0.0);
        assert_eq!(b.std_error, 0.0);
    }

    #[test]
    fn money_conserving_styles_have_zero_gap() {
        let p = pricer(ModelConfig { m0: 0.05, ..ModelConfig::reference() }, 3000);
        for style in StructuringStyle::ALL {
            let v = p.fair_value(style).unwrap();
            assert_eq!(v.conserves_money(), style.is_money_conserving(), "{style}");
            if style.is_money_conserving() {
                assert!((v.v_b.mean + v.v_c.mean).abs() < 1e-12);
                assert_eq!(v.dva.mean.to_bits(), v.cva_counterparty.mean.to_bits());
            }
        }
    }

    #[test]
    fn ucva_only_surfaces_the_conservation_gap() {
        let p = pricer(symmetric(), 5000);
        let v = p.fair_value(StructuringStyle::UcvaOnly).unwrap();
        let u = p.ucva(Direction::BC).unwrap().mean;
        assert!((v.v_b.mean + v.v_c.mean + 2.0 * u).abs() < 1e-12);
        assert!(!v.conserves_money());
    }

    #[test]
    fn portable_and_ftd_mismatch_is_exactly_zero() {
        let p = pricer(ModelConfig::reference(), 1000);
        for style in [StructuringStyle::FtdCva, StructuringStyle::PortableCvaC1, StructuringStyle::PortableCvaC2] {
            assert_eq!(p.closeout_mismatch(style).unwrap().total.mean, 0.0);
        }
    }

    #[test]
    fn replacement_mismatch_is_smaller() {
        let p = pricer(ModelConfig::reference(), 4000);
        let c1 = p.closeout_mismatch(StructuringStyle::BcvaRiskFreeCloseout).unwrap();
        let c2 = p.closeout_mismatch(StructuringStyle::BcvaReplacementCloseout).unwrap();
        assert!(c1.b_defaults_first.mean > c2.b_defaults_first.mean);
        assert!(c2.b_defaults_first.mean > 0.0);
        assert!(c1.total.mean > c2.total.mean);
    }

    #[test]
    fn liquidity_raises_every_charge_pathwise() {
        let model = validate(ModelConfig::reference()).unwrap();
        let plain = PathPayoffs::new(&model, LiquiditySpec::none());
        let liquid = PathPayoffs::new(&model, LiquiditySpec::constant_fraction(0.1));
        let grid = TimeGrid::uniform(5.0, 10).unwrap();
        let gen = PathGenerator::new(&model, &grid, 3);
        for i in 0..3000 {
            let path = gen.generate(i);
            for style in StructuringStyle::ALL {
                assert!(liquid.style_cva(&path, style).unwrap() >= plain.style_cva(&path, style).unwrap());
            }
        }
    }
}
