//! Margin lending: reset premia of the collateralized styles, lender fairness,
//! tranche losses and spreads of a lender's pool, netting sets and the carry
//! cost of finite liquidity.

mod netting;
mod premia;
mod tranche;

use serde::{Deserialize, Serialize};

use crate::model::StructuringStyle;

pub use netting::{netting_set_exposure, NettedTrade, NettingReport, NettingSet};
pub use premia::{
    highfreq_premium, lender_fairness, periodic_window_cva, repo_carry_cost, residual_liquidity_cva, LenderSide, PremiumStream,
    WindowFairness, WindowPremia,
};
pub use tranche::{
    pool_loss, stack_consistency_sweep, tranche_cashflows, tranche_legs, tranche_loss, tranche_spread, tranche_stack_consistency,
    LossEvent, PathBundle, Pool, PoolConfig, PoolSampler, PoolSide, StackReport, TrancheLegs, TrancheSpec, TrancheSpread,
    STACK_TOLERANCE,
};

/// Who carries the protection on `B`'s default in a collateralized style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collateralization {
    /// Only `C` posts collateral, borrowed from lender `A`; `B` keeps its DVA.
    Tripartite,
    /// Both sides post collateral, borrowed from lenders `A` and `D`.
    Quadripartite,
}

impl Collateralization {
    /// Structure of a collateralized style; the CCP-cleared style is treated as quadri-partite.
    pub fn of(style: StructuringStyle) -> Option<Collateralization> {
        match style {
            StructuringStyle::TripartitePeriodic => Some(Collateralization::Tripartite),
            StructuringStyle::QuadripartiteHighFreq
            | StructuringStyle::QuadripartitePeriodic
            | StructuringStyle::PentapartiteCcp => Some(Collateralization::Quadripartite),
            _ => None,
        }
    }
}
