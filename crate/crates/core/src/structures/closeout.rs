//! Close-out values at the first default.

use serde::{Deserialize, Serialize};

use crate::model::Closeout;

/// Close-out rule, optionally with the liquidity correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CloseoutRule {
    C1,
    C2,
    C1Prime,
    C2Prime,
}

impl CloseoutRule {
    pub fn new(closeout: Closeout, with_liquidity: bool) -> Self {
        match (closeout, with_liquidity) {
            (Closeout::RiskFree, false) => CloseoutRule::C1,
            (Closeout::Replacement, false) => CloseoutRule::C2,
            (Closeout::RiskFree, true) => CloseoutRule::C1Prime,
            (Closeout::Replacement, true) => CloseoutRule::C2Prime,
        }
    }

    pub fn closeout(self) -> Closeout {
        match self {
            CloseoutRule::C1 | CloseoutRule::C1Prime => Closeout::RiskFree,
            CloseoutRule::C2 | CloseoutRule::C2Prime => Closeout::Replacement,
        }
    }

    pub fn has_liquidity(self) -> bool {
        matches!(self, CloseoutRule::C1Prime | CloseoutRule::C2Prime)
    }
}

/// State of the surviving party at the default of the other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloseoutInputs {
    /// Mark to market to the survivor at the default time.
    pub m_survivor: f64,
    /// Survivor's own unilateral DVA at the default time.
    pub udva_survivor: f64,
    /// Recovery rate of the defaulted party.
    pub recovery_defaulted: f64,
    /// Liquidity correction `L >= 0`; ignored by the unprimed rules.
    pub liquidity: f64,
}

/// Value of the position to the survivor immediately after the default.
pub fn closeout_value(inputs: &CloseoutInputs, rule: CloseoutRule) -> f64 {
    let claim = match rule.closeout() {
        Closeout::RiskFree => inputs.m_survivor,
        Closeout::Replacement => inputs.m_survivor + inputs.udva_survivor,
    };
    let liquidity = if rule.has_liquidity() { inputs.liquidity } else { 0.0 };
    -(-claim).max(0.0) + inputs.recovery_defaulted * claim.max(0.0) - liquidity
}

/// Survivor's CVA on the defaulted party implied by the rule:
/// `(1 - R) claim^+ + L`, plus the survivor's DVA under the risk-free rule.
pub fn implied_cva(inputs: &CloseoutInputs, rule: CloseoutRule) -> f64 {
    let lgd = 1.0 - inputs.recovery_defaulted;
    let liquidity = if rule.has_liquidity() { inputs.liquidity } else { 0.0 };
    match rule.closeout() {
        Closeout::RiskFree => lgd * inputs.m_survivor.max(0.0) + inputs.udva_survivor + liquidity,
        Closeout::Replacement => lgd * (inputs.m_survivor + inputs.udva_survivor).max(0.0) + liquidity,
    }
}
