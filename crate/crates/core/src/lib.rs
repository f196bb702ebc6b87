//! Monte Carlo valuation of counterparty credit risk under ten structuring
//! styles, with semi-analytic oracles and executable consistency checks.
//!
//! * [`model`]: parameters, time grids, parties and styles.
//! * [`sim`]: exact path generation and deterministic parallel estimation.
//! * [`structures`]: bipartite CVA/DVA family, close-out rules, fair values.
//! * [`margin`]: margin-lending premia, tranche losses and spreads, netting, carry cost.
//! * [`axioms`]: martingale, money conservation, close-out and reset checks.
//! * [`oracle`]: quadrature ground truth for the zero-correlation model.

pub mod axioms;
pub mod error;
pub mod liquidity;
pub mod margin;
pub mod model;
pub mod oracle;
pub mod sim;
pub mod structures;

pub use error::{Error, Result};
pub use liquidity::LiquiditySpec;
pub use model::{validate, Closeout, Direction, Model, ModelConfig, Party, StructuringStyle, TimeGrid};
pub use sim::{EstimatorStats, SimSettings};
