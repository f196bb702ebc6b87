//! Exact path generation under the reference model.
//!
//! Default times are drawn first from the Gaussian copula. The Brownian driver
//! is then sampled on the grid as a bridge pinned at the correlated terminal
//! value `W_T`, and finally at the in-horizon default times (first `tau_C`,
//! then `tau_B`) from bridges between their sampled neighbours. All conditional
//! increments are exact, so adding the default times leaves the law of the
//! grid values unchanged, and `M` at `tau_C` never depends on `lambda_B`.

use crate::model::{Model, Party, TimeGrid};
use crate::oracle::gauss::neg_log_norm_cdf;

use super::rng::PathRng;

/// Draw layout of one path.
mod dim {
    pub const COPULA: u64 = 0; // 0, 1, 2
    pub const LIQUIDITY_B: u64 = 3;
    pub const LIQUIDITY_C: u64 = 4;
    pub const BRIDGE_TAU_C: u64 = 5;
    pub const BRIDGE_TAU_B: u64 = 6;
    pub const GRID: u64 = 7;
}

const MAX_REDRAWS: u64 = 64;

/// One simulated world: default times and the exposure sampled on the grid
/// augmented with the in-horizon default times.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioPath {
    index: u64,
    tau_b: f64,
    tau_c: f64,
    times: Vec<f64>,
    // m0 + sigma W_t
    driver: Vec<f64>,
    liquidity_normals: [f64; 2],
    redraws: u32,
    r: f64,
    maturity: f64,
    amortizing: bool,
}

impl ScenarioPath {
    pub fn index(&self) -> u64 {
        self.index
    }

    /// Default time of `party`; `f64::INFINITY` when it never defaults.
    pub fn tau(&self, party: Party) -> f64 {
        match party {
            Party::B => self.tau_b,
            Party::C => self.tau_c,
        }
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    /// The party defaulting first within `[0, T]`, with its default time.
    pub fn first_default(&self) -> Option<(Party, f64)> {
        let (party, tau) = if self.tau_b < self.tau_c {
            (Party::B, self.tau_b)
        } else {
            (Party::C, self.tau_c)
        };
        (tau <= self.maturity).then_some((party, tau))
    }

    /// `true` when `party` defaults within the horizon strictly before the other party.
    pub fn defaults_first(&self, party: Party) -> bool {
        let tau = self.tau(party);
        tau <= self.maturity && tau < self.tau(party.other())
    }

    /// Both parties alive at `t`.
    pub fn alive_at(&self, t: f64) -> bool {
        self.tau_b > t && self.tau_c > t
    }

    pub fn discount(&self, t: f64) -> f64 {
        (-self.r * t).exp()
    }

    /// Number of tie redraws that were needed to produce this path.
    pub fn redraws(&self) -> u32 {
        self.redraws
    }

    /// Independent standard normal reserved for the liquidity correction at `party`'s default.
    pub fn liquidity_normal(&self, party: Party) -> f64 {
        match party {
            Party::B => self.liquidity_normals[0],
            Party::C => self.liquidity_normals[1],
        }
    }

    pub fn sample_times(&self) -> &[f64] {
        &self.times
    }

    fn scale(&self, t: f64) -> f64 {
        if self.amortizing {
            ((self.maturity - t) / self.maturity).max(0.0)
        } else {
            1.0
        }
    }

    /// `M_t(B)` if `t` is a sample time.
    pub fn try_exposure_b(&self, t: f64) -> Option<f64> {
        let i = self.times.binary_search_by(|s| s.total_cmp(&t)).ok()?;
        Some(self.scale(t) * self.driver[i])
    }

    /// `M_t(party)` at a sample time. Panics if `t` was not sampled.
    pub fn exposure(&self, party: Party, t: f64) -> f64 {
        let m = self
            .try_exposure_b(t)
            .unwrap_or_else(|| panic!("time {t} is not a sample point of path {}", self.index));
        party.sign() * m
    }

    /// `M(B)` at every sample time, in time order.
    pub fn exposures_b(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times
            .iter()
            .zip(&self.driver)
            .map(|(&t, &x)| (t, self.scale(t) * x))
    }
}

/// Reproducible generator: path `i` depends on `(seed, i)` only.
#[derive(Debug, Clone)]
pub struct PathGenerator {
    model: Model,
    grid: TimeGrid,
    seed: u64,
    antithetic: bool,
}

impl PathGenerator {
    pub fn new(model: &Model, grid: &TimeGrid, seed: u64) -> Self {
        assert!(
            (grid.maturity() - model.maturity).abs() <= 1e-12 * model.maturity,
            "grid ends at {} but the trade matures at {}",
            grid.maturity(),
            model.maturity
        );
        PathGenerator {
            model: model.clone(),
            grid: grid.clone(),
            seed,
            antithetic: false,
        }
    }

    pub fn with_antithetic(mut self, antithetic: bool) -> Self {
        self.antithetic = antithetic;
        self
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn generate(&self, index: u64) -> ScenarioPath {
        let mut path = ScenarioPath::default();
        self.fill(index, &mut path);
        path
    }

    /// Regenerate path `index` into `path`, reusing its buffers.
    pub fn fill(&self, index: u64, path: &mut ScenarioPath) {
        let cfg = self.model.config();
        let (base_stream, sign) = if self.antithetic {
            (index / 2, if index % 2 == 1 { -1.0 } else { 1.0 })
        } else {
            (index, 1.0)
        };
        let mut redraws = 0u64;
        let (mut rng, z_m, tau_b, tau_c) = loop {
            let mut rng = PathRng::new(self.seed, base_stream | (redraws << 56));
            let e = [
                sign * rng.normal(dim::COPULA),
                sign * rng.normal(dim::COPULA + 1),
                sign * rng.normal(dim::COPULA + 2),
            ];
            let l = self.model.factor();
            let z = [
                l[0][0] * e[0],
                l[1][0] * e[0] + l[1][1] * e[1],
                l[2][0] * e[0] + l[2][1] * e[1] + l[2][2] * e[2],
            ];
            let tau_b = trigger_time(z[1], cfg.lambda_b);
            let tau_c = trigger_time(z[2], cfg.lambda_c);
            if tau_b != tau_c || tau_b.is_infinite() || redraws >= MAX_REDRAWS {
                break (rng, z[0], tau_b, tau_c);
            }
            redraws += 1;
        };

        let maturity = self.grid.maturity();
        let grid = self.grid.times();
        path.index = index;
        path.tau_b = tau_b;
        path.tau_c = tau_c;
        path.redraws = redraws as u32;
        path.r = cfg.r;
        path.maturity = maturity;
        path.amortizing = cfg.amortizing;
        path.liquidity_normals = [
            sign * rng.normal(dim::LIQUIDITY_B),
            sign * rng.normal(dim::LIQUIDITY_C),
        ];

        // Brownian bridge on the grid pinned at W_T = sqrt(T) Z_M
        path.times.clear();
        path.times.extend_from_slice(grid);
        let w = &mut path.driver;
        w.clear();
        w.resize(grid.len(), 0.0);
        let n = grid.len() - 1;
        w[n] = maturity.sqrt() * z_m;
        for k in 1..n {
            let (t0, t1) = (grid[k - 1], grid[k]);
            let frac = (t1 - t0) / (maturity - t0);
            let mean = w[k - 1] + frac * (w[n] - w[k - 1]);
            let var = (t1 - t0) * (maturity - t1) / (maturity - t0);
            w[k] = mean + var.sqrt() * sign * rng.normal(dim::GRID + k as u64 - 1);
        }

        for (tau, d) in [(tau_c, dim::BRIDGE_TAU_C), (tau_b, dim::BRIDGE_TAU_B)] {
            if tau > 0.0 && tau <= maturity {
                let z = sign * rng.normal(d);
                insert_bridge_point(&mut path.times, &mut path.driver, tau, z);
            }
        }

        for x in path.driver.iter_mut() {
            *x = cfg.m0 + cfg.sigma * *x;
        }
    }
}

fn trigger_time(z: f64, hazard: f64) -> f64 {
    if hazard == 0.0 {
        f64::INFINITY
    } else {
        neg_log_norm_cdf(z) / hazard
    }
}

fn insert_bridge_point(times: &mut Vec<f64>, w: &mut Vec<f64>, tau: f64, z: f64) {
    let pos = match times.binary_search_by(|t| t.total_cmp(&tau)) {
        Ok(_) => return,
        Err(pos) => pos,
    };
    // 0 < tau < T and both endpoints are grid points, so both neighbours exist
    let (t0, t1) = (times[pos - 1], times[pos]);
    let (w0, w1) = (w[pos - 1], w[pos]);
    let frac = (tau - t0) / (t1 - t0);
    let var = (tau - t0) * (t1 - tau) / (t1 - t0);
    times.insert(pos, tau);
    w.insert(pos, w0 + frac * (w1 - w0) + var.sqrt() * z);
}
