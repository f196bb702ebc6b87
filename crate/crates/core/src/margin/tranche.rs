//! Tranches of a margin lender's pool: cumulative default losses of the
//! counterparties it covers, sliced by attachment and hypothec notional.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate, Model, ModelConfig, Party, TimeGrid};
use crate::sim::rng::member_seed;
use crate::sim::{map_batches, mc_estimate_indexed, EstimatorStats, PathGenerator, ScenarioPath, SimSettings};
use crate::structures::inner_udva;

/// Absolute tolerance of the stack telescoping identity.
pub const STACK_TOLERANCE: f64 = 1e-12;

/// Slice `(L, L + N]` of the pool loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrancheSpec {
    pub attachment: f64,
    pub notional: f64,
}

impl TrancheSpec {
    pub fn new(attachment: f64, notional: f64) -> Result<TrancheSpec> {
        let t = TrancheSpec { attachment, notional };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.attachment >= 0.0 && self.attachment.is_finite()) {
            return Err(Error::domain("attachment", format!("must be finite and >= 0, got {}", self.attachment)));
        }
        if !(self.notional > 0.0 && self.notional.is_finite()) {
            return Err(Error::domain("notional", format!("must be finite and > 0, got {}", self.notional)));
        }
        Ok(())
    }

    pub fn detachment(&self) -> f64 {
        self.attachment + self.notional
    }

    /// `(min{loss, L + N} - L)^+`.
    pub fn absorb(&self, pool_loss: f64) -> f64 {
        (pool_loss.min(self.detachment()) - self.attachment).clamp(0.0, self.notional)
    }
}

/// Loss process of the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolSide {
    /// `X`: each default of `C` costs `(1 - R_C)(M(C))^-`.
    Quadripartite,
    /// `Y`: each default of `C` costs `(1 - R_C)(-M(C) + UDVA(B, C))^+`.
    Tripartite,
}

/// Counterparties served by one lender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub counterparties: Vec<ModelConfig>,
    /// Premium dates `T_i`; `0` and `T` are added when missing.
    pub resets: Vec<f64>,
    pub side: PoolSide,
}

/// Validated pool.
#[derive(Debug, Clone)]
pub struct Pool {
    members: Vec<Model>,
    mirrors: Vec<ModelConfig>,
    resets: Vec<f64>,
    side: PoolSide,
}

/// One default inside the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossEvent {
    pub tau: f64,
    pub loss: f64,
}

/// Path `i` of every member, each from its own seed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathBundle {
    pub paths: Vec<ScenarioPath>,
}

/// Generators of a pool's path bundles.
#[derive(Debug, Clone)]
pub struct PoolSampler {
    gens: Vec<PathGenerator>,
}

impl PoolSampler {
    pub fn sample(&self, index: u64) -> PathBundle {
        let mut bundle = PathBundle::default();
        self.fill(index, &mut bundle);
        bundle
    }

    pub fn fill(&self, index: u64, bundle: &mut PathBundle) {
        bundle.paths.resize(self.gens.len(), ScenarioPath::default());
        for (gen, path) in self.gens.iter().zip(bundle.paths.iter_mut()) {
            gen.fill(index, path);
        }
    }
}

impl Pool {
    pub fn new(config: &PoolConfig) -> Result<Pool> {
        let first = config
            .counterparties
            .first()
            .ok_or_else(|| Error::domain("counterparties", "pool needs at least one member"))?;
        if config.counterparties.iter().any(|c| c.r != first.r || c.maturity != first.maturity) {
            return Err(Error::domain("counterparties", "all members must share r and T"));
        }
        let members = config
            .counterparties
            .iter()
            .map(|c| validate(c.clone()))
            .collect::<Result<Vec<_>>>()?;
        let grid = TimeGrid::new(vec![0.0, first.maturity])?.refined_with_resets(config.resets.clone())?;
        Ok(Pool {
            mirrors: members.iter().map(|m| m.mirrored().into_config()).collect(),
            members,
            resets: grid.resets().to_vec(),
            side: config.side,
        })
    }

    pub fn members(&self) -> &[Model] {
        &self.members
    }

    pub fn resets(&self) -> &[f64] {
        &self.resets
    }

    pub fn side(&self) -> PoolSide {
        self.side
    }

    pub fn maturity(&self) -> f64 {
        self.members[0].maturity
    }

    pub fn discount(&self, t: f64) -> f64 {
        self.members[0].discount(t)
    }

    /// Member `k` draws from `member_seed(seed, k)`; exposure is only read at default.
    pub fn sampler(&self, settings: &SimSettings) -> Result<PoolSampler> {
        let grid = TimeGrid::new(vec![0.0, self.maturity()])?;
        Ok(PoolSampler {
            gens: self
                .members
                .iter()
                .enumerate()
                .map(|(k, m)| PathGenerator::new(m, &grid, member_seed(settings.seed, k)).with_antithetic(settings.antithetic))
                .collect(),
        })
    }

    /// In-horizon defaults of the bundle with their pool losses, in time order.
    pub fn loss_events(&self, bundle: &PathBundle) -> Result<Vec<LossEvent>> {
        assert_eq!(bundle.paths.len(), self.members.len(), "bundle does not match the pool");
        let mut events = Vec::new();
        for ((member, mirror), path) in self.members.iter().zip(&self.mirrors).zip(&bundle.paths) {
            let tau = path.tau(Party::C);
            if tau > path.maturity() {
                continue;
            }
            let m = path.exposure(Party::B, tau);
            let claim = match self.side {
                PoolSide::Quadripartite => m,
                PoolSide::Tripartite => m + inner_udva(mirror, m, tau)?,
            };
            events.push(LossEvent {
                tau,
                loss: (1.0 - member.recovery_c) * claim.max(0.0),
            });
        }
        events.sort_by(|a, b| a.tau.total_cmp(&b.tau));
        Ok(events)
    }
}

/// Cumulative pool loss at `t`.
pub fn pool_loss(events: &[LossEvent], t: f64) -> f64 {
    events.iter().take_while(|e| e.tau <= t).map(|e| e.loss).sum()
}

/// `X(t)` or `Y(t)` of the tranche on one bundle.
pub fn tranche_loss(pool: &Pool, tranche: &TrancheSpec, bundle: &PathBundle, t: f64) -> Result<f64> {
    Ok(tranche.absorb(pool_loss(&pool.loss_events(bundle)?, t)))
}

/// Pathwise legs of the spread ratio: protection
/// `sum_i e^{-r T_{i+1}} (X(T_{i+1}) - X(T_i))` and premium
/// `sum_i e^{-r T_{i+1}} (T_{i+1} - T_i)(N - X(T_{i+1}))`.
pub fn tranche_cashflows(tranche: &TrancheSpec, resets: &[f64], discount: impl Fn(f64) -> f64, events: &[LossEvent]) -> (f64, f64) {
    let mut protection = 0.0;
    let mut premium = 0.0;
    let mut prev = tranche.absorb(pool_loss(events, resets[0]));
    for w in resets.windows(2) {
        let x = tranche.absorb(pool_loss(events, w[1]));
        let d = discount(w[1]);
        protection += d * (x - prev);
        premium += d * (w[1] - w[0]) * (tranche.notional - x);
        prev = x;
    }
    (protection, premium)
}

/// Estimated legs of one tranche.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrancheLegs {
    pub tranche: TrancheSpec,
    pub protection: EstimatorStats,
    pub premium: EstimatorStats,
}

impl TrancheLegs {
    /// Ratio of the leg estimates; fails when the premium leg is not positive.
    pub fn spread(&self) -> Result<f64> {
        if self.premium.mean <= 0.0 {
            return Err(Error::DegeneratePool { denominator: self.premium.mean });
        }
        Ok(self.protection.mean / self.premium.mean)
    }
}

/// Fair tranche spread with its legs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrancheSpread {
    pub spread: f64,
    pub legs: TrancheLegs,
}

/// Legs of every tranche, all on the same path bundles.
pub fn tranche_legs(pool: &Pool, tranches: &[TrancheSpec], settings: &SimSettings) -> Result<Vec<TrancheLegs>> {
    for t in tranches {
        t.validate()?;
    }
    let sampler = pool.sampler(settings)?;
    let resets = pool.resets();
    let est = mc_estimate_indexed(settings, 2 * tranches.len(), &[], PathBundle::default, |i, bundle, out| {
        sampler.fill(i, bundle);
        let events = pool.loss_events(bundle)?;
        for (k, t) in tranches.iter().enumerate() {
            let (protection, premium) = tranche_cashflows(t, resets, |s| pool.discount(s), &events);
            out[2 * k] = protection;
            out[2 * k + 1] = premium;
        }
        Ok(())
    })?;
    Ok(tranches
        .iter()
        .enumerate()
        .map(|(k, &tranche)| TrancheLegs {
            tranche,
            protection: est.stats[2 * k],
            premium: est.stats[2 * k + 1],
        })
        .collect())
}

pub fn tranche_spread(pool: &Pool, tranche: &TrancheSpec, settings: &SimSettings) -> Result<TrancheSpread> {
    let legs = tranche_legs(pool, std::slice::from_ref(tranche), settings)?[0];
    Ok(TrancheSpread { spread: legs.spread()?, legs })
}

/// Outcome of the telescoping check `sum_k X_k(t) = (min{loss(t), top} - bottom)^+`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StackReport {
    pub checks: u64,
    pub max_residual: f64,
    /// Checks with residual above [`STACK_TOLERANCE`].
    pub violations: u64,
}

impl StackReport {
    fn merge(self, other: StackReport) -> StackReport {
        StackReport {
            checks: self.checks + other.checks,
            max_residual: self.max_residual.max(other.max_residual),
            violations: self.violations + other.violations,
        }
    }
}

fn check_stack(stack: &[TrancheSpec]) -> Result<()> {
    if stack.is_empty() {
        return Err(Error::domain("stack", "need at least one tranche"));
    }
    for t in stack {
        t.validate()?;
    }
    if stack.windows(2).any(|w| w[1].attachment != w[0].detachment()) {
        return Err(Error::domain("stack", "tranches must be contiguous and ordered by attachment"));
    }
    Ok(())
}

fn stack_report(stack: &[TrancheSpec], resets: &[f64], events: &[LossEvent]) -> StackReport {
    let bottom = stack[0].attachment;
    let top = stack[stack.len() - 1].detachment();
    let mut report = StackReport::default();
    for t in resets.iter().copied().chain(events.iter().map(|e| e.tau)) {
        let loss = pool_loss(events, t);
        let sliced: f64 = stack.iter().map(|tr| tr.absorb(loss)).sum();
        let residual = (sliced - (loss.min(top) - bottom).max(0.0)).abs();
        report.checks += 1;
        report.max_residual = report.max_residual.max(residual);
        report.violations += u64::from(residual > STACK_TOLERANCE);
    }
    report
}

/// Telescoping check on one bundle, at every reset and default time.
pub fn tranche_stack_consistency(pool: &Pool, stack: &[TrancheSpec], bundle: &PathBundle) -> Result<StackReport> {
    check_stack(stack)?;
    Ok(stack_report(stack, pool.resets(), &pool.loss_events(bundle)?))
}

/// Telescoping check over `settings.n_paths` bundles.
pub fn stack_consistency_sweep(pool: &Pool, stack: &[TrancheSpec], settings: &SimSettings) -> Result<StackReport> {
    check_stack(stack)?;
    settings.validate()?;
    let sampler = pool.sampler(settings)?;
    let partials = map_batches(settings, |range| -> Result<StackReport> {
        let mut bundle = PathBundle::default();
        let mut report = StackReport::default();
        for i in range {
            sampler.fill(i, &mut bundle);
            report = report.merge(stack_report(stack, pool.resets(), &pool.loss_events(&bundle)?));
        }
        Ok(report)
    });
    partials
        .into_iter()
        .try_fold(StackReport::default(), |acc, p| Ok(acc.merge(p?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn single(config: ModelConfig, resets: Vec<f64>, side: PoolSide) -> Pool {
        Pool::new(&PoolConfig { counterparties: vec![config], resets, side }).unwrap()
    }

    fn event(loss: f64) -> Vec<LossEvent> {
        vec![LossEvent { tau: 0.001, loss }]
    }

    #[test]
    fn slicing_arithmetic() {
        let loss = pool_loss(&event(7.0), 1.0);
        assert_eq!(TrancheSpec::new(0.0, 5.0).unwrap().absorb(loss), 5.0);
        assert_eq!(TrancheSpec::new(5.0, 5.0).unwrap().absorb(loss), 2.0);
        assert_eq!(TrancheSpec::new(10.0, 5.0).unwrap().absorb(loss), 0.0);
        assert_eq!(pool_loss(&event(7.0), 0.0), 0.0);
    }

    #[test]
    fn stack_examples() {
        let stack = [TrancheSpec::new(0.0, 5.0).unwrap(), TrancheSpec::new(5.0, 5.0).unwrap()];
        for (loss, expected) in [(7.0, 7.0), (12.0, 10.0)] {
            let sliced: f64 = stack.iter().map(|t| t.absorb(loss)).sum();
            assert_eq!(sliced, expected);
            let report = stack_report(&stack, &[0.0, 1.0], &event(loss));
            assert_eq!(report.violations, 0);
            assert_eq!(report.max_residual, 0.0);
        }
        assert!(check_stack(&[TrancheSpec::new(0.0, 5.0).unwrap(), TrancheSpec::new(6.0, 5.0).unwrap()]).is_err());
    }

    #[test]
    fn wiped_out_tranche_is_degenerate() {
        let tranche = TrancheSpec::new(0.0, 5.0).unwrap();
        let (protection, premium) = tranche_cashflows(&tranche, &[0.0, 1.0], |_| 1.0, &event(7.0));
        assert_eq!(protection, 5.0);
        assert_eq!(premium, 0.0);
        let legs = TrancheLegs {
            tranche,
            protection: EstimatorStats::exact(protection, 1),
            premium: EstimatorStats::exact(premium, 1),
        };
        assert!(matches!(legs.spread(), Err(Error::DegeneratePool { .. })));
    }

    #[test]
    fn invalid_pools_are_rejected() {
        let a = ModelConfig::reference();
        let b = ModelConfig { r: 0.01, ..a.clone() };
        let side = PoolSide::Quadripartite;
        assert!(Pool::new(&PoolConfig { counterparties: vec![], resets: vec![], side }).is_err());
        assert!(Pool::new(&PoolConfig { counterparties: vec![a, b], resets: vec![], side }).is_err());
        assert!(TrancheSpec::new(-1.0, 1.0).is_err());
        assert!(TrancheSpec::new(0.0, 0.0).is_err());
    }

    #[test]
    fn riskless_pool_has_zero_spread() {
        let pool = single(ModelConfig { lambda_c: 0.0, ..ModelConfig::reference() }, vec![1.0, 2.0, 3.0, 4.0], PoolSide::Quadripartite);
        let s = tranche_spread(&pool, &TrancheSpec::new(0.0, 1.0).unwrap(), &SimSettings::new(2000, 1)).unwrap();
        assert_eq!(s.spread, 0.0);
    }

    #[test]
    fn wide_tranche_carries_the_windowed_loss() {
        let config = ModelConfig::reference();
        let resets: Vec<f64> = (0..=10).map(|i| 0.5 * i as f64).collect();
        let pool = single(config.clone(), resets.clone(), PoolSide::Quadripartite);
        let s = tranche_spread(&pool, &TrancheSpec::new(0.0, 1e6).unwrap(), &SimSettings::new(100_000, 2)).unwrap();
        let o = oracle::windowed_loss_quadrature(&config, &resets).unwrap();
        assert!(s.legs.protection.within_se(o, 3.0), "{:?} vs {o}", s.legs.protection);
        assert!((s.spread * s.legs.premium.mean - s.legs.protection.mean).abs() < 1e-12 * o);
    }

    #[test]
    fn tripartite_losses_dominate_quadripartite_losses() {
        let members = vec![ModelConfig::reference(), ModelConfig { lambda_c: 0.05, sigma: 0.2, ..ModelConfig::reference() }];
        let x = Pool::new(&PoolConfig { counterparties: members.clone(), resets: vec![], side: PoolSide::Quadripartite }).unwrap();
        let y = Pool::new(&PoolConfig { counterparties: members, resets: vec![], side: PoolSide::Tripartite }).unwrap();
        let settings = SimSettings::new(1, 3);
        let (sx, sy) = (x.sampler(&settings).unwrap(), y.sampler(&settings).unwrap());
        for i in 0..2000 {
            let (ex, ey) = (x.loss_events(&sx.sample(i)).unwrap(), y.loss_events(&sy.sample(i)).unwrap());
            assert_eq!(ex.len(), ey.len());
            for (a, b) in ex.iter().zip(&ey) {
                assert_eq!(a.tau, b.tau);
                assert!(b.loss >= a.loss);
            }
        }
    }

    #[test]
    fn stack_sweep_has_no_violations() {
        let members = vec![ModelConfig { lambda_c: 0.3, ..ModelConfig::reference() }; 4];
        let pool = Pool::new(&PoolConfig { counterparties: members, resets: vec![1.0, 2.0, 3.0, 4.0], side: PoolSide::Quadripartite }).unwrap();
        let stack: Vec<TrancheSpec> = (0..5).map(|k| TrancheSpec::new(0.02 * k as f64, 0.02).unwrap()).collect();
        let report = stack_consistency_sweep(&pool, &stack, &SimSettings::new(5000, 4)).unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.checks >= 5000 * 6);
    }
}
