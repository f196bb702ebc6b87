//! Netting sets cleared through one counterparty: a derivative and its hedge
//! offset before collateral, CVA and carry are computed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liquidity::LiquiditySpec;
use crate::model::{Model, Party, TimeGrid};
use crate::sim::{mc_estimate_indexed, EstimatorStats, ScenarioPath, SimSettings};

/// A position in the simulated trade, scaled by `weight` (negative for the offsetting side).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NettedTrade {
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NettingSet {
    pub trades: Vec<NettedTrade>,
}

/// Expectations over paths of the netted position's risk figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NettingReport {
    /// `max_t |net M_t|` over the sample times.
    pub exposure: EstimatorStats,
    /// Largest collateral balance `|net M_{T_i}|` over the reset dates.
    pub collateral: EstimatorStats,
    /// Unilateral CVA of `B` on the netted position.
    pub cva: EstimatorStats,
    /// Liquidity carry cost of the netted position.
    pub carry: EstimatorStats,
}

impl NettingSet {
    pub fn new(weights: &[f64]) -> Result<NettingSet> {
        let set = NettingSet {
            trades: weights.iter().map(|&weight| NettedTrade { weight }).collect(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.trades.iter().find(|t| !t.weight.is_finite()) {
            return Err(Error::domain("weight", format!("must be finite, got {}", t.weight)));
        }
        Ok(())
    }

    /// Signed sum of the member exposures when the trade is worth `m`.
    pub fn net(&self, m: f64) -> f64 {
        // adding zero folds a signed zero into +0
        self.trades.iter().map(|t| t.weight).sum::<f64>() * m + 0.0
    }

    /// Liquidity correction of the netted position; nothing to novate when it is flat.
    fn liquidity(&self, liquidity: &LiquiditySpec, net: f64, z: f64) -> f64 {
        if net == 0.0 {
            0.0
        } else {
            liquidity.correction(net, z)
        }
    }

    /// Exposure, collateral, CVA and carry of the netted position on common paths.
    pub fn report(&self, model: &Model, grid: &TimeGrid, settings: &SimSettings, liquidity: &LiquiditySpec) -> Result<NettingReport> {
        self.validate()?;
        liquidity.validate()?;
        let gen = settings.generator(model, grid);
        let lgd = 1.0 - model.recovery_c;
        let resets = grid.resets();
        let est = mc_estimate_indexed(settings, 4, &[], ScenarioPath::default, |i, path, out| {
            gen.fill(i, path);
            out[0] = path.exposures_b().map(|(_, m)| self.net(m).abs()).fold(0.0, f64::max);
            out[1] = resets
                .iter()
                .map(|&t| netting_set_exposure(self, path, t).abs())
                .fold(0.0, f64::max);
            let tau = path.tau(Party::C);
            if tau <= path.maturity() {
                let net = netting_set_exposure(self, path, tau);
                let l = self.liquidity(liquidity, net, path.liquidity_normal(Party::C));
                let discount = path.discount(tau);
                out[2] = discount * (lgd * net.max(0.0) + l);
                if path.tau(Party::B) > tau {
                    out[3] = discount * lgd * l;
                }
            }
            Ok(())
        })?;
        let s = &est.stats;
        Ok(NettingReport {
            exposure: s[0],
            collateral: s[1],
            cva: s[2],
            carry: s[3],
        })
    }
}

/// Net `M_t(B)` of the set on a path at a sample time.
pub fn netting_set_exposure(set: &NettingSet, path: &ScenarioPath, t: f64) -> f64 {
    set.net(path.exposure(Party::B, t))
}
