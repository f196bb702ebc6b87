//! Executable verdicts for the valuation axioms: discounted martingale
//! conditions, money conservation, close-out rules and reset equilibrium.
//!
//! Exact checks compare estimators bit for bit or evaluate identities on every
//! simulated default; distributional claims are tested with `|z| < 3` per
//! check, and the reported p-value is Bonferroni-adjusted over the checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liquidity::LiquiditySpec;
use crate::margin::{lender_fairness, Collateralization};
use crate::model::{Closeout, Direction, ModelConfig, Party, StructuringStyle};
use crate::oracle::gauss::norm_cdf;
use crate::sim::{mc_estimate_indexed, EstimatorStats, ScenarioPath};
use crate::structures::conditional::{
    conditional_ftdcva, conditional_gamma, conditional_ucva, conditional_window_cva, gamma_payment, ConditionalTable,
};
use crate::structures::{implied_cva, CloseoutInputs, CloseoutRule, PathPayoffs, Pricer};

/// Per-check threshold of the statistical tests.
pub const Z_THRESHOLD: f64 = 3.0;

/// Relative tolerance of the pathwise close-out identity.
pub const CLOSEOUT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    /// Discounted martingale condition until default.
    Martingale,
    /// Money conservation until default.
    MoneyConservation,
    /// Close-out rule at the first default.
    Closeout,
    /// Equilibrium valuations at the reset dates.
    ResetEquilibrium,
}

impl Axiom {
    pub const ALL: [Axiom; 4] = [Axiom::Martingale, Axiom::MoneyConservation, Axiom::Closeout, Axiom::ResetEquilibrium];

    pub fn name(self) -> &'static str {
        match self {
            Axiom::Martingale => "martingale",
            Axiom::MoneyConservation => "money_conservation",
            Axiom::Closeout => "closeout",
            Axiom::ResetEquilibrium => "reset_equilibrium",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    StatisticalPass { p_value: f64 },
    /// The axiom does not constrain this style.
    NotApplicable,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::StatisticalPass { .. } => "statistical_pass",
            Verdict::NotApplicable => "not_applicable",
        }
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail)
    }

    pub fn p_value(&self) -> Option<f64> {
        match self {
            Verdict::StatisticalPass { p_value } => Some(*p_value),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomVerdict {
    pub axiom: Axiom,
    pub style: StructuringStyle,
    pub verdict: Verdict,
    /// Measured discrepancy, currency.
    pub detail: f64,
    pub note: String,
}

impl AxiomVerdict {
    fn new(axiom: Axiom, style: StructuringStyle, verdict: Verdict, detail: f64, note: impl Into<String>) -> Self {
        AxiomVerdict {
            axiom,
            style,
            verdict,
            detail,
            note: note.into(),
        }
    }
}

/// Verdicts of a family of `|z| < 3` tests on estimates whose expectation is zero.
fn z_tests(axiom: Axiom, style: StructuringStyle, stats: &[EstimatorStats], what: &str) -> AxiomVerdict {
    let detail = stats.iter().map(|s| s.mean.abs()).fold(0.0, f64::max);
    if stats.iter().all(|s| s.mean == 0.0 && s.std_error == 0.0) {
        return AxiomVerdict::new(axiom, style, Verdict::Pass, 0.0, format!("{} {what}, all exactly zero", stats.len()));
    }
    let max_z = stats.iter().map(|s| s.z_score(0.0).abs()).fold(0.0, f64::max);
    let n = stats.len() as f64;
    let p_value = (n * 2.0 * (1.0 - norm_cdf(max_z))).min(1.0);
    let note = format!(
        "{} {what}, max |z| = {max_z:.3}; Bonferroni-adjusted p over {} checks, threshold |z| < {Z_THRESHOLD} per check",
        stats.len(),
        stats.len()
    );
    let verdict = if max_z < Z_THRESHOLD {
        Verdict::StatisticalPass { p_value }
    } else {
        Verdict::Fail
    };
    AxiomVerdict::new(axiom, style, verdict, detail, note)
}

fn is_heritage(style: StructuringStyle) -> bool {
    matches!(
        style,
        StructuringStyle::UcvaOnly | StructuringStyle::BcvaRiskFreeCloseout | StructuringStyle::BcvaReplacementCloseout
    )
}

/// Adjustment processes whose discounted value plus paid cash flows is tested.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Leg {
    Ftd,
    Portable(Closeout),
    /// Lender `A` over the current reset window.
    LenderA,
    /// Lender `D` over the current reset window.
    LenderD,
    /// Unilateral `CVA(C, B)` carried by `B` in the tri-partite structure.
    UnilateralCb,
}

fn legs(style: StructuringStyle) -> Vec<Leg> {
    match style {
        StructuringStyle::FtdCva => vec![Leg::Ftd],
        StructuringStyle::PortableCvaC1 => vec![Leg::Portable(Closeout::RiskFree)],
        StructuringStyle::PortableCvaC2 => vec![Leg::Portable(Closeout::Replacement)],
        StructuringStyle::TripartitePeriodic => vec![Leg::LenderA, Leg::UnilateralCb],
        s if s.is_collateralized() => vec![Leg::LenderA, Leg::LenderD],
        _ => vec![],
    }
}

struct Legs<'a> {
    config: &'a ModelConfig,
    mirror: ModelConfig,
    liquidity: LiquiditySpec,
    payoffs: PathPayoffs,
}

impl Legs<'_> {
    /// Conditional value at `t` given `M_t(B) = m` and the leg alive.
    fn value(&self, leg: Leg, m: f64, t: f64, end: f64) -> Result<f64> {
        let (config, mirror, liq) = (self.config, &self.mirror, &self.liquidity);
        match leg {
            Leg::Ftd => conditional_ftdcva(config, liq, m, t),
            Leg::Portable(c) => Ok(conditional_ucva(config, liq, m, t)? + conditional_gamma(config, mirror, c, m, t)?),
            Leg::LenderA => conditional_window_cva(config, liq, m, t, end),
            Leg::LenderD => conditional_window_cva(mirror, liq, -m, t, end),
            Leg::UnilateralCb => conditional_ucva(mirror, liq, -m, t),
        }
    }

    fn alive(leg: Leg, path: &ScenarioPath, t: f64) -> bool {
        match leg {
            Leg::UnilateralCb => path.tau(Party::B) > t,
            _ => path.alive_at(t),
        }
    }

    /// Discounted cash flows of the leg with `from < tau <= to`.
    fn flows(&self, leg: Leg, path: &ScenarioPath, from: f64, to: f64) -> Result<f64> {
        let inside = |tau: f64| from < tau && tau <= to;
        let lgd_c = 1.0 - self.config.recovery_c;
        let lgd_b = 1.0 - self.config.recovery_b;
        let tau_b = path.tau(Party::B);
        let b_side = |first: bool| -> Option<(f64, f64)> {
            if !inside(tau_b) || (first && !path.defaults_first(Party::B)) {
                return None;
            }
            let m_c = path.exposure(Party::C, tau_b);
            Some((m_c, self.liquidity.correction(m_c, path.liquidity_normal(Party::B))))
        };
        let c_event = self.payoffs.default_of_c(path).filter(|e| e.first && inside(e.tau));
        Ok(match leg {
            Leg::Ftd => c_event.map_or(0.0, |e| e.discount * (lgd_c * e.m.max(0.0) + e.liquidity)),
            Leg::Portable(c) => {
                let mut x = 0.0;
                if let Some(e) = c_event {
                    let udva = self.payoffs.udva_at(e.m, e.tau)?;
                    x += e.discount * (lgd_c * e.m.max(0.0) + e.liquidity + gamma_payment(self.config, c, e.m, udva));
                }
                if path.defaults_first(Party::B) && inside(tau_b) {
                    let m = path.exposure(Party::B, tau_b);
                    x += path.discount(tau_b) * conditional_ucva(self.config, &self.liquidity, m, tau_b)?;
                }
                x
            }
            Leg::LenderA => c_event.map_or(0.0, |e| e.discount * self.payoffs.lender_payout(&e)),
            Leg::LenderD => b_side(true).map_or(0.0, |(m_c, l)| {
                path.discount(tau_b) * lgd_b * (m_c.max(0.0) + self.liquidity.covered(l))
            }),
            Leg::UnilateralCb => b_side(false).map_or(0.0, |(m_c, l)| path.discount(tau_b) * (lgd_b * m_c.max(0.0) + l)),
        })
    }
}

enum Start {
    Exact(f64),
    Table(ConditionalTable),
}

struct MartingaleCheck {
    leg: Leg,
    t: f64,
    start: f64,
    at_t: ConditionalTable,
    at_start: Start,
}

/// A1-A4: on each checkpoint `t`, `E[e^{-rt} CVA_t 1_{alive} + discounted flows in (s, t]]`
/// equals the value at the window start `s` (time 0 for uncollateralized styles),
/// with `CVA_t` read from the conditional formula on each surviving path.
///
/// The heritage styles fail by construction: the close-out at default does
/// not deliver the adjustment they carry. Their verdict is `Fail` with the
/// expected discounted close-out mismatch (the omitted DVA for `UcvaOnly`).
pub fn check_martingale(pricer: &Pricer, style: StructuringStyle, checkpoints: &[f64]) -> Result<AxiomVerdict> {
    let axiom = Axiom::Martingale;
    if is_heritage(style) {
        if style == StructuringStyle::UcvaOnly {
            let udva = pricer.udva(Direction::BC)?;
            return Ok(AxiomVerdict::new(axiom, style, Verdict::Fail, udva.mean, "own-default leg UDVA(B, C) is not valued"));
        }
        let mismatch = pricer.closeout_mismatch(style)?;
        return Ok(AxiomVerdict::new(
            axiom,
            style,
            Verdict::Fail,
            mismatch.b_defaults_first.mean,
            format!(
                "close-out mismatch: B defaults first {:e}, C defaults first {:e}, total {:e}",
                mismatch.b_defaults_first.mean, mismatch.c_defaults_first.mean, mismatch.total.mean
            ),
        ));
    }
    let model = pricer.model();
    let maturity = model.maturity;
    if let Some(&t) = checkpoints.iter().find(|&&t| !(t > 0.0 && t < maturity)) {
        return Err(Error::domain("checkpoints", format!("{t} is outside (0, T)")));
    }
    let config = model.config();
    let ctx = Legs {
        config,
        mirror: config.mirrored(),
        liquidity: *pricer.liquidity(),
        payoffs: pricer.payoffs(Direction::BC),
    };
    let resets: Vec<f64> = if style.is_collateralized() {
        pricer.grid().resets().to_vec()
    } else {
        vec![0.0, maturity]
    };
    let mut checks = Vec::new();
    for &t in checkpoints {
        let j = resets.partition_point(|&r| r < t);
        let (start, end) = (resets[j - 1], resets[j]);
        for leg in legs(style) {
            let (lo, hi) = ConditionalTable::default_range(config, t);
            let nodes = match leg {
                Leg::Portable(_) => ConditionalTable::NESTED_NODES,
                _ => ConditionalTable::NODES,
            };
            let at_t = ConditionalTable::tabulate(t, lo, hi, nodes, |m| ctx.value(leg, m, t, end))?;
            let at_start = if start == 0.0 {
                Start::Exact(ctx.value(leg, config.m0, 0.0, end)?)
            } else {
                let (lo, hi) = ConditionalTable::default_range(config, start);
                Start::Table(ConditionalTable::tabulate(start, lo, hi, nodes, |m| {
                    ctx.value(leg, m, start, end)
                })?)
            };
            checks.push(MartingaleCheck { leg, t, start, at_t, at_start });
        }
    }
    let grid = pricer.grid().reset_grid().refined(checkpoints)?;
    let gen = pricer.settings().generator(model, &grid);
    let est = mc_estimate_indexed(pricer.settings(), checks.len(), &[], ScenarioPath::default, |i, path, out| {
        gen.fill(i, path);
        for (k, c) in checks.iter().enumerate() {
            let value_at = |table: &ConditionalTable, s: f64| {
                if Legs::alive(c.leg, path, s) {
                    path.discount(s) * table.value(path.exposure(Party::B, s))
                } else {
                    0.0
                }
            };
            let y_t = value_at(&c.at_t, c.t) + ctx.flows(c.leg, path, c.start, c.t)?;
            let y_s = match &c.at_start {
                Start::Exact(v) => *v,
                Start::Table(table) => value_at(table, c.start),
            };
            out[k] = y_t - y_s;
        }
        Ok(())
    })?;
    Ok(z_tests(axiom, style, &est.stats, "checkpoint x leg tests"))
}

/// B1/B2: each side's DVA is the other side's CVA, as the same estimator.
pub fn check_money_conservation(pricer: &Pricer, style: StructuringStyle) -> Result<AxiomVerdict> {
    let axiom = Axiom::MoneyConservation;
    let v = pricer.fair_value(style)?;
    if v.conserves_money() && v.dva.mean.to_bits() == v.cva_counterparty.mean.to_bits() {
        return Ok(AxiomVerdict::new(axiom, style, Verdict::Pass, 0.0, "DVA and counterparty CVA are bit-identical"));
    }
    let udva = pricer.udva(Direction::BC)?;
    Ok(AxiomVerdict::new(
        axiom,
        style,
        Verdict::Fail,
        udva.mean,
        format!("DVA booked as zero; conservation gap {:e}", v.conservation_gap.mean),
    ))
}

/// C1/C2: on every simulated first default, in both directions, the CVA the
/// style carries at default against the CVA implied by `rule`.
///
/// The survivor's DVA in the rule is the unilateral DVA, except for the
/// first-to-default style whose DVA vanishes at the other party's default.
/// `detail` is the expected discounted residual when `B` defaults first.
pub fn check_closeout(pricer: &Pricer, style: StructuringStyle, rule: CloseoutRule) -> Result<AxiomVerdict> {
    let axiom = Axiom::Closeout;
    if style.is_collateralized() {
        return Ok(AxiomVerdict::new(
            axiom,
            style,
            Verdict::NotApplicable,
            0.0,
            "close-out exposure is collateralized and covered by the margin lender",
        ));
    }
    let portable = match style {
        StructuringStyle::PortableCvaC1 => Some(Closeout::RiskFree),
        StructuringStyle::PortableCvaC2 => Some(Closeout::Replacement),
        _ => None,
    };
    let ftd = style == StructuringStyle::FtdCva;
    let residual = |p: &PathPayoffs, path: &ScenarioPath| -> Result<(f64, f64)> {
        let Some(e) = p.default_of_c(path).filter(|e| e.first) else {
            return Ok((0.0, 0.0));
        };
        let config = p.config();
        let udva = p.udva_at(e.m, e.tau)?;
        let mut carried = (1.0 - config.recovery_c) * e.m.max(0.0) + e.liquidity;
        if let Some(c) = portable {
            carried += gamma_payment(config, c, e.m, udva);
        }
        let inputs = CloseoutInputs {
            m_survivor: e.m,
            udva_survivor: if ftd { 0.0 } else { udva },
            recovery_defaulted: config.recovery_c,
            liquidity: e.liquidity,
        };
        let r = implied_cva(&inputs, rule) - carried;
        let violated = r.abs() >= CLOSEOUT_TOLERANCE * (1.0 + e.m.abs());
        Ok((e.discount * r, if violated { 1.0 } else { 0.0 }))
    };
    let est = pricer.estimate(4, &[], |bc, path_bc, cb, path_cb, out| {
        let (r_cb, v_cb) = residual(cb, path_cb)?;
        let (r_bc, v_bc) = residual(bc, path_bc)?;
        out.copy_from_slice(&[r_cb, r_bc, v_cb, v_bc]);
        Ok(())
    })?;
    let s = &est.stats;
    let n = pricer.settings().n_paths as f64;
    let violations = ((s[2].mean + s[3].mean) * n).round() as u64;
    let note = format!(
        "{violations} first-default events violate {rule:?}; expected discounted residual: B defaults first {:e}, C defaults first {:e}",
        s[0].mean, s[1].mean
    );
    let verdict = if violations == 0 { Verdict::Pass } else { Verdict::Fail };
    Ok(AxiomVerdict::new(axiom, style, verdict, s[0].mean, note))
}

/// Reset equilibrium: lenders break even in every reset window, so that
/// `V_{T_i}(A) = V_{T_i}(D) = 0` and `V_{T_i}(B) = M_{T_i}(B)`.
pub fn check_reset_equilibrium(pricer: &Pricer, style: StructuringStyle) -> Result<AxiomVerdict> {
    let axiom = Axiom::ResetEquilibrium;
    let Some(structure) = Collateralization::of(style) else {
        return Ok(AxiomVerdict::new(axiom, style, Verdict::NotApplicable, 0.0, "no reset dates in a bipartite style"));
    };
    let windows = lender_fairness(pricer.model(), pricer.grid(), pricer.settings(), structure, pricer.liquidity(), 1.0)?;
    let stats: Vec<EstimatorStats> = windows
        .iter()
        .flat_map(|w| std::iter::once(w.pnl_a).chain(w.pnl_d))
        .collect();
    let mut v = z_tests(axiom, style, &stats, "lender window P&L tests");
    if structure == Collateralization::Tripartite {
        let model = pricer.model();
        let dva = conditional_ucva(&model.mirrored(), pricer.liquidity(), -model.m0, 0.0)?;
        v.note.push_str(&format!("; V(B) carries the persistent DVA(B, C) leg, {dva:e} at time 0"));
    }
    Ok(v)
}

/// One row of the verdict matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub style: StructuringStyle,
    pub verdicts: Vec<AxiomVerdict>,
}

/// Close-out rule a style is checked against: its contractual rule, primed when liquidity is priced.
pub fn contractual_rule(style: StructuringStyle, liquidity: &LiquiditySpec) -> Option<CloseoutRule> {
    style.closeout().map(|c| CloseoutRule::new(c, !liquidity.is_none()))
}

/// All four checks for one style.
pub fn check_style(pricer: &Pricer, style: StructuringStyle, checkpoints: &[f64]) -> Result<VerdictRow> {
    let closeout = match contractual_rule(style, pricer.liquidity()) {
        Some(rule) => check_closeout(pricer, style, rule)?,
        None => check_closeout(pricer, style, CloseoutRule::C1)?,
    };
    Ok(VerdictRow {
        style,
        verdicts: vec![
            check_martingale(pricer, style, checkpoints)?,
            check_money_conservation(pricer, style)?,
            closeout,
            check_reset_equilibrium(pricer, style)?,
        ],
    })
}

/// The styles x axioms verdict matrix.
pub fn verdict_matrix(pricer: &Pricer, styles: &[StructuringStyle], checkpoints: &[f64]) -> Result<Vec<VerdictRow>> {
    styles.iter().map(|&s| check_style(pricer, s, checkpoints)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, TimeGrid};
    use crate::sim::SimSettings;

    fn pricer(config: ModelConfig, n: u64) -> Pricer {
        let model = validate(config).unwrap();
        let grid = TimeGrid::periodic(model.maturity, 0.5, 0.5).unwrap();
        Pricer::new(&model, &grid, &SimSettings::new(n, 21)).unwrap()
    }

    #[test]
    fn riskless_counterparty_passes_trivially() {
        let p = pricer(ModelConfig { lambda_c: 0.0, ..ModelConfig::reference() }, 2000);
        let v = check_martingale(&p, StructuringStyle::FtdCva, &[1.0, 2.5]).unwrap();
        assert_eq!(v.verdict, Verdict::Pass);
        let v = check_reset_equilibrium(&p, StructuringStyle::TripartitePeriodic).unwrap();
        assert_eq!(v.verdict, Verdict::Pass);
    }

    #[test]
    fn ftd_is_a_martingale() {
        let p = pricer(ModelConfig::reference(), 20_000);
        let v = check_martingale(&p, StructuringStyle::FtdCva, &[1.0, 2.5]).unwrap();
        assert!(matches!(v.verdict, Verdict::StatisticalPass { .. }), "{v:?}");
    }

    #[test]
    fn collateralized_legs_are_martingales() {
        let p = pricer(ModelConfig::reference(), 20_000);
        for style in [StructuringStyle::TripartitePeriodic, StructuringStyle::QuadripartitePeriodic] {
            let v = check_martingale(&p, style, &[0.75, 2.5]).unwrap();
            assert!(matches!(v.verdict, Verdict::StatisticalPass { .. }), "{v:?}");
        }
    }

    #[test]
    fn heritage_styles_fail_the_martingale_condition() {
        let p = pricer(ModelConfig::reference(), 2000);
        let v = check_martingale(&p, StructuringStyle::BcvaRiskFreeCloseout, &[1.0]).unwrap();
        assert!(v.verdict.is_fail());
        let m = p.closeout_mismatch(StructuringStyle::BcvaRiskFreeCloseout).unwrap();
        assert_eq!(v.detail, m.b_defaults_first.mean);
    }

    #[test]
    fn money_conservation_verdicts() {
        let p = pricer(ModelConfig::reference(), 2000);
        for style in [StructuringStyle::FtdCva, StructuringStyle::QuadripartitePeriodic] {
            assert_eq!(check_money_conservation(&p, style).unwrap().verdict, Verdict::Pass);
        }
        let v = check_money_conservation(&p, StructuringStyle::UcvaOnly).unwrap();
        assert!(v.verdict.is_fail());
        assert_eq!(v.detail, p.udva(Direction::BC).unwrap().mean);
    }

    #[test]
    fn closeout_verdicts() {
        let p = pricer(ModelConfig::reference(), 3000);
        for rule in [CloseoutRule::C1, CloseoutRule::C2] {
            assert_eq!(check_closeout(&p, StructuringStyle::FtdCva, rule).unwrap().verdict, Verdict::Pass);
        }
        assert_eq!(check_closeout(&p, StructuringStyle::PortableCvaC1, CloseoutRule::C1).unwrap().verdict, Verdict::Pass);
        assert_eq!(check_closeout(&p, StructuringStyle::PortableCvaC2, CloseoutRule::C2).unwrap().verdict, Verdict::Pass);
        let c2 = check_closeout(&p, StructuringStyle::BcvaReplacementCloseout, CloseoutRule::C2).unwrap();
        assert!(c2.verdict.is_fail());
        let m = p.closeout_mismatch(StructuringStyle::BcvaReplacementCloseout).unwrap();
        assert!((c2.detail - m.b_defaults_first.mean).abs() < 1e-12 * m.b_defaults_first.mean);
        assert_eq!(
            check_closeout(&p, StructuringStyle::QuadripartitePeriodic, CloseoutRule::C1).unwrap().verdict,
            Verdict::NotApplicable
        );
    }

    #[test]
    fn bipartite_styles_have_no_reset_check() {
        let p = pricer(ModelConfig::reference(), 100);
        let v = check_reset_equilibrium(&p, StructuringStyle::PortableCvaC1).unwrap();
        assert_eq!(v.verdict, Verdict::NotApplicable);
    }
}
