//! Liquidity corrections `L_tau >= 0` added to the loss at default when a
//! position has to be novated over an extended close-out period.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::gauss::{expected_abs, expected_positive_part, norm_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LiquidityKind {
    None,
    /// `L = kappa |M_tau|`.
    ConstantFraction { kappa: f64 },
    /// `L = exp(mu + s Z)` with `Z` independent of everything else.
    Lognormal { mu: f64, s: f64 },
}

/// Novation cost model plus the haircut level a margin lender absorbs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiquiditySpec {
    #[serde(flatten)]
    pub kind: LiquidityKind,
    /// Haircut `H`; `None` means the lender absorbs every liquidity loss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub haircut: Option<f64>,
}

impl Default for LiquiditySpec {
    fn default() -> Self {
        LiquiditySpec::none()
    }
}

impl LiquiditySpec {
    pub fn none() -> Self {
        LiquiditySpec {
            kind: LiquidityKind::None,
            haircut: None,
        }
    }

    pub fn constant_fraction(kappa: f64) -> Self {
        LiquiditySpec {
            kind: LiquidityKind::ConstantFraction { kappa },
            haircut: None,
        }
    }

    pub fn lognormal(mu: f64, s: f64) -> Self {
        LiquiditySpec {
            kind: LiquidityKind::Lognormal { mu, s },
            haircut: None,
        }
    }

    pub fn with_haircut(mut self, haircut: f64) -> Self {
        self.haircut = Some(haircut);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            LiquidityKind::ConstantFraction { kappa } if !(kappa >= 0.0 && kappa.is_finite()) => {
                return Err(Error::domain("kappa", format!("must be finite and >= 0, got {kappa}")))
            }
            LiquidityKind::Lognormal { mu, s } if !(mu.is_finite() && s >= 0.0 && s.is_finite()) => {
                return Err(Error::domain("s", format!("lognormal needs finite mu and s >= 0, got ({mu}, {s})")))
            }
            _ => {}
        }
        if let Some(h) = self.haircut {
            if !(h >= 0.0) {
                return Err(Error::domain("haircut", format!("must be >= 0, got {h}")));
            }
        }
        Ok(())
    }

    pub fn is_none(&self) -> bool {
        matches!(self.kind, LiquidityKind::None)
    }

    /// `L_tau` for mark to market `m` at default and the path's liquidity normal `z`.
    pub fn correction(&self, m: f64, z: f64) -> f64 {
        match self.kind {
            LiquidityKind::None => 0.0,
            LiquidityKind::ConstantFraction { kappa } => kappa * m.abs(),
            LiquidityKind::Lognormal { mu, s } => (mu + s * z).exp(),
        }
    }

    /// Part of `l` absorbed by the margin lender.
    pub fn covered(&self, l: f64) -> f64 {
        match self.haircut {
            Some(h) => l.min(h),
            None => l,
        }
    }

    /// Part of `l` above the haircut, left with the novating party.
    pub fn residual(&self, l: f64) -> f64 {
        match self.haircut {
            Some(h) => (l - h).max(0.0),
            None => 0.0,
        }
    }

    /// `E[L]` when the mark to market at default is `N(mean, sd^2)`.
    pub fn expected_correction(&self, mean: f64, sd: f64) -> f64 {
        match self.kind {
            LiquidityKind::None => 0.0,
            LiquidityKind::ConstantFraction { kappa } => kappa * expected_abs(mean, sd),
            LiquidityKind::Lognormal { mu, s } => (mu + 0.5 * s * s).exp(),
        }
    }

    /// `E[min(L, H)]` when the mark to market at default is `N(mean, sd^2)`.
    pub fn expected_covered(&self, mean: f64, sd: f64) -> f64 {
        let Some(h) = self.haircut else {
            return self.expected_correction(mean, sd);
        };
        match self.kind {
            LiquidityKind::None => 0.0,
            LiquidityKind::ConstantFraction { kappa } => {
                if kappa == 0.0 {
                    return 0.0;
                }
                // (|Y| - c)^+ = (Y - c)^+ + (-Y - c)^+ for c >= 0
                let c = h / kappa;
                kappa
                    * (expected_abs(mean, sd)
                        - expected_positive_part(mean - c, sd)
                        - expected_positive_part(-mean - c, sd))
            }
            LiquidityKind::Lognormal { mu, s } => {
                if h == 0.0 {
                    return 0.0;
                }
                if s == 0.0 {
                    return mu.exp().min(h);
                }
                let k = h.ln();
                (mu + 0.5 * s * s).exp() * norm_cdf((k - mu - s * s) / s)
                    + h * norm_cdf(-(k - mu) / s)
            }
        }
    }
}
