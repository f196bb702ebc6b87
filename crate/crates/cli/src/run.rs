use ccr_core::axioms::verdict_matrix;
use ccr_core::margin::{tranche_legs, Pool, PoolConfig, PoolSide, TrancheSpec};
use ccr_core::oracle::{ftdcva_quadrature, gamma_quadrature, ucva_quadrature, udva_quadrature, windowed_loss_quadrature};
use ccr_core::structures::Pricer;
use ccr_core::{validate, Closeout, EstimatorStats, Model, ModelConfig, StructuringStyle};

use crate::error::CliError;
use crate::report::{Report, ReportRow, VerdictCell};
use crate::spec::RunSpec;

/// Notional of the tranche that carries the whole pool loss.
const WHOLE_POOL: f64 = 1e100;

/// What a run computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Mode {
    /// Style CVA, DVA and fair value to `B`.
    Price,
    /// Every adjustment of every style, both sides, plus close-out mismatches.
    Compare,
    /// Styles x axioms verdict matrix.
    Check,
    /// Tranche legs and spreads on the margin-lending pool.
    Tranche,
}

/// A finished job: the report and the expected passes that failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub failed_expectations: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        if self.failed_expectations.is_empty() {
            0
        } else {
            3
        }
    }
}

pub fn run(spec: &RunSpec, mode: Mode) -> Result<Outcome, CliError> {
    spec.validate()?;
    let model = validate(spec.model.clone())?;
    match mode {
        Mode::Tranche => {
            if spec.tranches.as_deref().unwrap_or(&[]).is_empty() {
                return Err(CliError::invalid("tranches", "tranche mode needs at least one tranche"));
            }
        }
        _ => {
            if spec.styles.is_empty() {
                return Err(CliError::invalid("styles", "this mode needs at least one style"));
            }
        }
    }
    let report = match mode {
        Mode::Price | Mode::Compare => Report::Rows(price_rows(spec, &model, mode == Mode::Compare)?),
        Mode::Check => {
            let cells = check_cells(spec, &model)?;
            let failed = cells
                .iter()
                .filter(|c| c.verdict == "fail" && spec.expect_pass.iter().any(|s| s.name() == c.style))
                .map(|c| format!("{} fails {}", c.style, c.axiom))
                .collect();
            return Ok(Outcome {
                report: Report::Matrix(cells),
                failed_expectations: failed,
            });
        }
        Mode::Tranche => Report::Rows(tranche_rows(spec)?),
    };
    Ok(Outcome {
        report,
        failed_expectations: Vec::new(),
    })
}

fn pricer(spec: &RunSpec, model: &Model) -> Result<Pricer, CliError> {
    Ok(Pricer::new(model, &spec.grid, &spec.sim)?.with_liquidity(spec.liquidity)?)
}

fn price_rows(spec: &RunSpec, model: &Model, full: bool) -> Result<Vec<ReportRow>, CliError> {
    let pricer = pricer(spec, model)?;
    let oracles = (spec.liquidity.is_none()).then(|| Oracles::new(&spec.model, &spec.styles)).flatten();
    let seed = spec.sim.seed;
    let mut rows = Vec::new();
    for &style in &spec.styles {
        let v = pricer.fair_value(style)?;
        let o = oracles.as_ref().map(|o| o.style(style, spec.model.m0));
        let name = style.name();
        let mut push = |quantity: &str, stats: &EstimatorStats, oracle: Option<f64>| {
            rows.push(ReportRow::new(name, quantity, stats, seed, oracle));
        };
        let field = |f: fn(&StyleOracle) -> f64| o.as_ref().map(f);
        push("cva", &v.cva, field(|o| o.cva));
        push("dva", &v.dva, field(|o| o.dva));
        if full {
            push("cva_counterparty", &v.cva_counterparty, field(|o| o.cva_counterparty));
            push("dva_counterparty", &v.dva_counterparty, field(|o| o.dva_counterparty));
            push("gamma", &v.gamma, field(|o| o.gamma));
            push("gamma_counterparty", &v.gamma_counterparty, field(|o| o.gamma_counterparty));
        }
        push("fair_value", &v.v_b, field(|o| o.v_b));
        if full {
            push("fair_value_counterparty", &v.v_c, field(|o| o.v_c));
            push("conservation_gap", &v.conservation_gap, field(|o| o.gap));
            push_mismatch(&pricer, style, &oracles, &mut push)?;
        }
    }
    Ok(rows)
}

fn push_mismatch(
    pricer: &Pricer,
    style: StructuringStyle,
    oracles: &Option<Oracles>,
    push: &mut impl FnMut(&str, &EstimatorStats, Option<f64>),
) -> Result<(), CliError> {
    let Some(closeout) = heritage_closeout(style) else {
        return Ok(());
    };
    let m = pricer.closeout_mismatch(style)?;
    let oracle = oracles.as_ref().and_then(|o| o.gamma(closeout));
    push("closeout_mismatch", &m.total, oracle.map(|(bc, cb)| bc + cb));
    Ok(())
}

fn heritage_closeout(style: StructuringStyle) -> Option<Closeout> {
    match style {
        StructuringStyle::BcvaRiskFreeCloseout => Some(Closeout::RiskFree),
        StructuringStyle::BcvaReplacementCloseout => Some(Closeout::Replacement),
        _ => None,
    }
}

fn check_cells(spec: &RunSpec, model: &Model) -> Result<Vec<VerdictCell>, CliError> {
    let pricer = pricer(spec, model)?;
    let matrix = verdict_matrix(&pricer, &spec.styles, &spec.martingale_checkpoints())?;
    Ok(matrix
        .iter()
        .flat_map(|row| row.verdicts.iter())
        .map(|v| VerdictCell::new(v, spec.sim.n_paths, spec.sim.seed))
        .collect())
}

fn tranche_rows(spec: &RunSpec) -> Result<Vec<ReportRow>, CliError> {
    let tranches = spec.tranches.clone().unwrap_or_default();
    let (members, side, single) = match &spec.pool {
        Some(p) => match &p.counterparties {
            Some(c) if !c.is_empty() => (c.clone(), p.side, false),
            Some(_) => return Err(CliError::invalid("pool", "counterparties must not be empty")),
            None => (vec![spec.model.clone()], p.side, true),
        },
        None => (vec![spec.model.clone()], PoolSide::Quadripartite, true),
    };
    let pool = Pool::new(&PoolConfig {
        counterparties: members,
        resets: spec.grid.resets().to_vec(),
        side,
    })?;
    let mut all = tranches.clone();
    all.push(TrancheSpec::new(0.0, WHOLE_POOL)?);
    let legs = tranche_legs(&pool, &all, &spec.sim)?;
    let seed = spec.sim.seed;
    let mut rows = Vec::new();
    for l in &legs[..tranches.len()] {
        let name = format!("tranche_{}_{}", l.tranche.attachment, l.tranche.notional);
        rows.push(ReportRow::new(&name, "protection_leg", &l.protection, seed, None));
        rows.push(ReportRow::new(&name, "premium_leg", &l.premium, seed, None));
        let spread = EstimatorStats::exact(l.spread()?, l.protection.n);
        let mut row = ReportRow::new(&name, "spread", &spread, seed, None);
        // a ratio of leg means; no standard error is reported
        row.std_error = None;
        rows.push(row);
    }
    let oracle = (single && side == PoolSide::Quadripartite && spec.liquidity.is_none())
        .then(|| windowed_loss_quadrature(&spec.model, spec.grid.resets()).ok())
        .flatten();
    rows.push(ReportRow::new("pool", "expected_loss", &legs[tranches.len()].protection, seed, oracle));
    Ok(rows)
}

/// Quadrature values of one style's report rows.
#[derive(Debug, Clone, Copy, PartialEq)]
struct StyleOracle {
    cva: f64,
    dva: f64,
    cva_counterparty: f64,
    dva_counterparty: f64,
    gamma: f64,
    gamma_counterparty: f64,
    v_b: f64,
    v_c: f64,
    gap: f64,
}

/// Zero-correlation ground truth, evaluated once per run.
struct Oracles {
    ucva: f64,
    udva: f64,
    ftd: f64,
    ftd_counterparty: f64,
    /// `(Gamma(B, C), Gamma(C, B))` per close-out, when requested.
    gamma_risk_free: Option<(f64, f64)>,
    gamma_replacement: Option<(f64, f64)>,
}

impl Oracles {
    fn new(config: &ModelConfig, styles: &[StructuringStyle]) -> Option<Oracles> {
        use StructuringStyle::*;
        let mirror = config.mirrored();
        let gamma = |closeout: Closeout, users: [StructuringStyle; 2]| -> Option<(f64, f64)> {
            if !styles.iter().any(|s| users.contains(s)) {
                return None;
            }
            Some((gamma_quadrature(&mirror, closeout).ok()?, gamma_quadrature(config, closeout).ok()?))
        };
        Some(Oracles {
            ucva: ucva_quadrature(config).ok()?,
            udva: udva_quadrature(config).ok()?,
            ftd: ftdcva_quadrature(config).ok()?,
            ftd_counterparty: ftdcva_quadrature(&mirror).ok()?,
            gamma_risk_free: gamma(Closeout::RiskFree, [BcvaRiskFreeCloseout, PortableCvaC1]),
            gamma_replacement: gamma(Closeout::Replacement, [BcvaReplacementCloseout, PortableCvaC2]),
        })
    }

    fn gamma(&self, closeout: Closeout) -> Option<(f64, f64)> {
        match closeout {
            Closeout::RiskFree => self.gamma_risk_free,
            Closeout::Replacement => self.gamma_replacement,
        }
    }

    fn style(&self, style: StructuringStyle, m0: f64) -> StyleOracle {
        use StructuringStyle::*;
        let (cva, dva, cva_cp, dva_cp, g, g_cp) = match style {
            UcvaOnly => (self.ucva, 0.0, self.udva, 0.0, 0.0, 0.0),
            BcvaRiskFreeCloseout | BcvaReplacementCloseout => (self.ucva, self.udva, self.udva, self.ucva, 0.0, 0.0),
            FtdCva => (self.ftd, self.ftd_counterparty, self.ftd_counterparty, self.ftd, 0.0, 0.0),
            PortableCvaC1 | PortableCvaC2 => {
                let closeout = if style == PortableCvaC1 { Closeout::RiskFree } else { Closeout::Replacement };
                let (g, g_cp) = self.gamma(closeout).unwrap_or((f64::NAN, f64::NAN));
                (self.ucva + g, self.udva + g_cp, self.udva + g_cp, self.ucva + g, g, g_cp)
            }
            TripartitePeriodic => (self.ftd, self.udva, self.udva, self.ftd, 0.0, 0.0),
            QuadripartiteHighFreq | QuadripartitePeriodic | PentapartiteCcp => {
                (self.ftd, self.ftd_counterparty, self.ftd_counterparty, self.ftd, 0.0, 0.0)
            }
        };
        let (v_b, v_c) = match style {
            TripartitePeriodic => (m0 + dva, -m0 - cva_cp),
            QuadripartiteHighFreq | QuadripartitePeriodic | PentapartiteCcp => (m0, -m0),
            _ => (m0 - cva + dva, -m0 - cva_cp + dva_cp),
        };
        StyleOracle {
            cva,
            dva,
            cva_counterparty: cva_cp,
            dva_counterparty: dva_cp,
            gamma: g,
            gamma_counterparty: g_cp,
            v_b,
            v_c,
            gap: (dva - cva_cp) + (dva_cp - cva),
        }
    }
}
