//! Reference model: parameters, parties, time grids and the ten structuring styles.
//!
//! Exposure follows an arithmetic Brownian motion, `M_t(B) = a(t) (m0 + sigma W_t)`,
//! with `a(t) = 1` or `(T - t) / T` for an amortizing trade. Default times are
//! exponential triggers `tau = -ln Phi(Z) / lambda` where the Gaussian triggers of
//! `B` and `C` are correlated with each other and with the terminal exposure
//! driver `W_T / sqrt(T)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A party to the bipartite trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    B,
    C,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::B => Party::C,
            Party::C => Party::B,
        }
    }

    /// Sign relating the party's mark to market to `M_t(B)`: `M_t(p) = sign * M_t(B)`.
    pub fn sign(self) -> f64 {
        match self {
            Party::B => 1.0,
            Party::C => -1.0,
        }
    }
}

/// Ordered pair `(assessor, defaulter)` of an adjustment such as `CVA(B, C)`.
///
/// `CVA(B, C)` is the protection `B` sells on the default of `C`, so the
/// defaulting party is always the second one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// `(B, C)`: assessed by `B`, contingent on the default of `C`.
    BC,
    /// `(C, B)`: assessed by `C`, contingent on the default of `B`.
    CB,
}

impl Direction {
    pub fn assessor(self) -> Party {
        match self {
            Direction::BC => Party::B,
            Direction::CB => Party::C,
        }
    }

    pub fn defaulter(self) -> Party {
        self.assessor().other()
    }

    pub fn swapped(self) -> Direction {
        match self {
            Direction::BC => Direction::CB,
            Direction::CB => Direction::BC,
        }
    }

    /// The direction whose protection is contingent on the default of `party`.
    pub fn against(party: Party) -> Direction {
        match party {
            Party::C => Direction::BC,
            Party::B => Direction::CB,
        }
    }
}

/// Raw parameters of the reference model. Call [`validate`] before use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Constant risk-free short rate, per year.
    pub r: f64,
    pub lambda_b: f64,
    pub lambda_c: f64,
    pub recovery_b: f64,
    pub recovery_c: f64,
    /// Exposure volatility, currency per sqrt(year).
    pub sigma: f64,
    /// Initial mark to market to `B`.
    pub m0: f64,
    /// Final maturity `T` in years.
    pub maturity: f64,
    #[serde(default)]
    pub rho_bc: f64,
    #[serde(default)]
    pub rho_mb: f64,
    #[serde(default)]
    pub rho_mc: f64,
    #[serde(default)]
    pub amortizing: bool,
}

impl ModelConfig {
    /// The zero-correlation configuration used throughout the test suites.
    pub fn reference() -> Self {
        ModelConfig {
            r: 0.03,
            lambda_b: 0.05,
            lambda_c: 0.02,
            recovery_b: 0.5,
            recovery_c: 0.4,
            sigma: 0.1,
            m0: 0.0,
            maturity: 5.0,
            rho_bc: 0.0,
            rho_mb: 0.0,
            rho_mc: 0.0,
            amortizing: false,
        }
    }

    /// Same trade seen with the roles of `B` and `C` exchanged.
    pub fn mirrored(&self) -> Self {
        ModelConfig {
            lambda_b: self.lambda_c,
            lambda_c: self.lambda_b,
            recovery_b: self.recovery_c,
            recovery_c: self.recovery_b,
            m0: -self.m0,
            rho_mb: -self.rho_mc,
            rho_mc: -self.rho_mb,
            ..self.clone()
        }
    }

    pub fn hazard(&self, party: Party) -> f64 {
        match party {
            Party::B => self.lambda_b,
            Party::C => self.lambda_c,
        }
    }

    pub fn recovery(&self, party: Party) -> f64 {
        match party {
            Party::B => self.recovery_b,
            Party::C => self.recovery_c,
        }
    }

    /// Exposure scale `a(t)`.
    pub fn exposure_scale(&self, t: f64) -> f64 {
        if self.amortizing {
            ((self.maturity - t) / self.maturity).max(0.0)
        } else {
            1.0
        }
    }

    pub fn discount(&self, t: f64) -> f64 {
        (-self.r * t).exp()
    }

    pub fn has_zero_correlations(&self) -> bool {
        self.rho_bc == 0.0 && self.rho_mb == 0.0 && self.rho_mc == 0.0
    }

    /// Correlation matrix over (exposure driver, trigger B, trigger C).
    pub fn correlation_matrix(&self) -> [[f64; 3]; 3] {
        [
            [1.0, self.rho_mb, self.rho_mc],
            [self.rho_mb, 1.0, self.rho_bc],
            [self.rho_mc, self.rho_bc, 1.0],
        ]
    }
}

const PSD_TOLERANCE: f64 = 1e-12;

/// A validated model with its correlation factor cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    factor: [[f64; 3]; 3],
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Lower-triangular factor `L` with `L L^T` equal to the correlation matrix.
    pub fn factor(&self) -> &[[f64; 3]; 3] {
        &self.factor
    }

    pub fn into_config(self) -> ModelConfig {
        self.config
    }

    /// The validated mirror image, see [`ModelConfig::mirrored`].
    pub fn mirrored(&self) -> Model {
        validate(self.config.mirrored()).expect("mirror of a valid model is valid")
    }
}

impl std::ops::Deref for Model {
    type Target = ModelConfig;

    fn deref(&self) -> &ModelConfig {
        &self.config
    }
}

/// Check every parameter and factorize the correlation matrix.
pub fn validate(config: ModelConfig) -> Result<Model> {
    let finite = [
        ("r", config.r),
        ("lambda_b", config.lambda_b),
        ("lambda_c", config.lambda_c),
        ("recovery_b", config.recovery_b),
        ("recovery_c", config.recovery_c),
        ("sigma", config.sigma),
        ("m0", config.m0),
        ("maturity", config.maturity),
        ("rho_bc", config.rho_bc),
        ("rho_mb", config.rho_mb),
        ("rho_mc", config.rho_mc),
    ];
    for (field, value) in finite {
        if !value.is_finite() {
            return Err(Error::domain(field, format!("must be finite, got {value}")));
        }
    }
    for (field, value) in [("lambda_b", config.lambda_b), ("lambda_c", config.lambda_c)] {
        if value < 0.0 {
            return Err(Error::domain(field, format!("hazard must be >= 0, got {value}")));
        }
    }
    for (field, value) in [("recovery_b", config.recovery_b), ("recovery_c", config.recovery_c)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::domain(field, format!("recovery must lie in [0, 1], got {value}")));
        }
    }
    if config.sigma < 0.0 {
        return Err(Error::domain("sigma", format!("must be >= 0, got {}", config.sigma)));
    }
    if config.maturity <= 0.0 {
        return Err(Error::domain("maturity", format!("must be > 0, got {}", config.maturity)));
    }
    for (field, value) in [
        ("rho_bc", config.rho_bc),
        ("rho_mb", config.rho_mb),
        ("rho_mc", config.rho_mc),
    ] {
        if value.abs() > 1.0 {
            return Err(Error::domain(field, format!("correlation must lie in [-1, 1], got {value}")));
        }
    }
    let factor = semidefinite_cholesky(&config.correlation_matrix())?;
    Ok(Model { config, factor })
}

/// Cholesky factorization accepting singular positive semi-definite input.
fn semidefinite_cholesky(a: &[[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
    let mut l = [[0.0; 3]; 3];
    for j in 0..3 {
        let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d < -PSD_TOLERANCE {
            return Err(Error::NonPsdCorrelation { pivot: j, value: d });
        }
        if d <= PSD_TOLERANCE {
            // zero pivot: the remaining column must vanish as well
            for i in (j + 1)..3 {
                let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                if s.abs() > 1e-9 {
                    return Err(Error::NonPsdCorrelation { pivot: j, value: d });
                }
            }
            continue;
        }
        let pivot = d.sqrt();
        l[j][j] = pivot;
        for i in (j + 1)..3 {
            let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = s / pivot;
        }
    }
    Ok(l)
}

/// Strictly increasing simulation times `0 = t_0 < ... < t_n = T` with a
/// subsequence of reset dates that always contains both endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDef", into = "GridDef")]
pub struct TimeGrid {
    times: Vec<f64>,
    resets: Vec<f64>,
}

/// Serialized form of a [`TimeGrid`]: either explicit times or a regular step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maturity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resets: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset_period: Option<f64>,
}

impl TryFrom<GridDef> for TimeGrid {
    type Error = Error;

    fn try_from(def: GridDef) -> Result<TimeGrid> {
        let times = match (def.times, def.maturity, def.step) {
            (Some(times), _, None) => times,
            (None, Some(maturity), Some(step)) => regular_times(maturity, step)?,
            _ => {
                return Err(Error::Grid(
                    "give either `times` or both `maturity` and `step`".into(),
                ))
            }
        };
        let maturity = *times.last().ok_or_else(|| Error::Grid("empty time grid".into()))?;
        let resets = match (def.resets, def.reset_period) {
            (Some(resets), None) => resets,
            (None, Some(period)) => regular_times(maturity, period)?,
            (None, None) => vec![0.0, maturity],
            (Some(_), Some(_)) => {
                return Err(Error::Grid("give at most one of `resets` and `reset_period`".into()))
            }
        };
        TimeGrid::new(times)?.refined_with_resets(resets)
    }
}

impl From<TimeGrid> for GridDef {
    fn from(grid: TimeGrid) -> GridDef {
        GridDef {
            times: Some(grid.times),
            maturity: None,
            step: None,
            resets: Some(grid.resets),
            reset_period: None,
        }
    }
}

fn regular_times(maturity: f64, step: f64) -> Result<Vec<f64>> {
    if !(maturity > 0.0 && maturity.is_finite()) {
        return Err(Error::Grid(format!("maturity must be positive, got {maturity}")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Grid(format!("step must be positive, got {step}")));
    }
    let n = (maturity / step - 1e-9).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
    times.push(maturity);
    Ok(times)
}

impl TimeGrid {
    /// Grid with resets only at `0` and `T`.
    pub fn new(times: Vec<f64>) -> Result<TimeGrid> {
        let maturity = *times.last().ok_or_else(|| Error::Grid("empty time grid".into()))?;
        TimeGrid::with_resets(times, vec![0.0, maturity])
    }

    pub fn with_resets(times: Vec<f64>, mut resets: Vec<f64>) -> Result<TimeGrid> {
        if times.len() < 2 {
            return Err(Error::Grid("need at least the two points 0 and T".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::Grid(format!("first time must be exactly 0, got {}", times[0])));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Grid("times must be finite".into()));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Grid(format!(
                "times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let maturity = *times.last().unwrap();
        if resets.first() != Some(&0.0) {
            resets.insert(0, 0.0);
        }
        if resets.last() != Some(&maturity) {
            resets.push(maturity);
        }
        if resets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Grid("resets must be strictly increasing".into()));
        }
        if let Some(r) = resets.iter().find(|r| times.binary_search_by(|t| t.total_cmp(r)).is_err()) {
            return Err(Error::Grid(format!("reset {r} is not a grid time")));
        }
        Ok(TimeGrid { times, resets })
    }

    /// `n` equal steps over `[0, T]`, resets at the endpoints.
    pub fn uniform(maturity: f64, n: usize) -> Result<TimeGrid> {
        if n == 0 || !(maturity > 0.0) {
            return Err(Error::Grid("need n >= 1 steps and a positive maturity".into()));
        }
        let mut times: Vec<f64> = (0..n).map(|i| maturity * i as f64 / n as f64).collect();
        times.push(maturity);
        TimeGrid::new(times)
    }

    /// Regular simulation step with regular reset period; reset dates are merged into the grid.
    pub fn periodic(maturity: f64, step: f64, reset_period: f64) -> Result<TimeGrid> {
        let times = regular_times(maturity, step)?;
        let resets = regular_times(maturity, reset_period)?;
        TimeGrid::new(times)?.refined_with_resets(resets)
    }

    /// Grid whose every point is a reset date.
    pub fn all_resets(maturity: f64, step: f64) -> Result<TimeGrid> {
        let times = regular_times(maturity, step)?;
        TimeGrid::with_resets(times.clone(), times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn resets(&self) -> &[f64] {
        &self.resets
    }

    pub fn maturity(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Consecutive reset windows `[T_i, T_{i+1}]`.
    pub fn reset_windows(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.resets.windows(2).map(|w| (w[0], w[1]))
    }

    /// Coarse grid made of the reset dates only.
    pub fn reset_grid(&self) -> TimeGrid {
        TimeGrid {
            times: self.resets.clone(),
            resets: self.resets.clone(),
        }
    }

    /// Add extra sample times inside `[0, T]`; resets are preserved.
    pub fn refined(&self, extra: &[f64]) -> Result<TimeGrid> {
        let maturity = self.maturity();
        let mut times = self.times.clone();
        for &t in extra {
            if !(0.0..=maturity).contains(&t) {
                return Err(Error::Grid(format!("point {t} outside [0, {maturity}]")));
            }
            times.push(t);
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        Ok(TimeGrid {
            times,
            resets: self.resets.clone(),
        })
    }

    /// Add reset dates, merging them into the sample times as needed.
    pub fn refined_with_resets(&self, resets: Vec<f64>) -> Result<TimeGrid> {
        let mut grid = self.refined(&resets)?;
        let mut all = grid.resets.clone();
        all.extend(resets);
        all.sort_by(f64::total_cmp);
        all.dedup();
        grid.resets = all;
        Ok(grid)
    }
}

/// The ten contractual designs priced by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuringStyle {
    /// Unilateral CVA with the DVA set to zero.
    UcvaOnly,
    /// Unilateral CVA and DVA, risk-free close-out.
    BcvaRiskFreeCloseout,
    /// Unilateral CVA and DVA, replacement close-out.
    BcvaReplacementCloseout,
    FtdCva,
    PortableCvaC1,
    PortableCvaC2,
    QuadripartiteHighFreq,
    TripartitePeriodic,
    QuadripartitePeriodic,
    PentapartiteCcp,
}

/// Close-out convention at the first default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closeout {
    /// Survivor's claim based on the default-free mark (C1).
    RiskFree,
    /// Survivor's claim includes its own DVA (C2).
    Replacement,
}

impl StructuringStyle {
    pub const ALL: [StructuringStyle; 10] = [
        StructuringStyle::UcvaOnly,
        StructuringStyle::BcvaRiskFreeCloseout,
        StructuringStyle::BcvaReplacementCloseout,
        StructuringStyle::FtdCva,
        StructuringStyle::PortableCvaC1,
        StructuringStyle::PortableCvaC2,
        StructuringStyle::QuadripartiteHighFreq,
        StructuringStyle::TripartitePeriodic,
        StructuringStyle::QuadripartitePeriodic,
        StructuringStyle::PentapartiteCcp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StructuringStyle::UcvaOnly => "ucva_only",
            StructuringStyle::BcvaRiskFreeCloseout => "bcva_risk_free_closeout",
            StructuringStyle::BcvaReplacementCloseout => "bcva_replacement_closeout",
            StructuringStyle::FtdCva => "ftd_cva",
            StructuringStyle::PortableCvaC1 => "portable_cva_c1",
            StructuringStyle::PortableCvaC2 => "portable_cva_c2",
            StructuringStyle::QuadripartiteHighFreq => "quadripartite_high_freq",
            StructuringStyle::TripartitePeriodic => "tripartite_periodic",
            StructuringStyle::QuadripartitePeriodic => "quadripartite_periodic",
            StructuringStyle::PentapartiteCcp => "pentapartite_ccp",
        }
    }

    /// Every style except `UcvaOnly` books DVA equal to the other side's CVA.
    pub fn is_money_conserving(self) -> bool {
        self != StructuringStyle::UcvaOnly
    }

    /// Styles 7-10, fully collateralized through margin lenders.
    pub fn is_collateralized(self) -> bool {
        matches!(
            self,
            StructuringStyle::QuadripartiteHighFreq
                | StructuringStyle::TripartitePeriodic
                | StructuringStyle::QuadripartitePeriodic
                | StructuringStyle::PentapartiteCcp
        )
    }

    /// Contractual close-out rule of an uncollateralized style.
    pub fn closeout(self) -> Option<Closeout> {
        match self {
            StructuringStyle::UcvaOnly
            | StructuringStyle::BcvaRiskFreeCloseout
            | StructuringStyle::FtdCva
            | StructuringStyle::PortableCvaC1 => Some(Closeout::RiskFree),
            StructuringStyle::BcvaReplacementCloseout | StructuringStyle::PortableCvaC2 => {
                Some(Closeout::Replacement)
            }
            _ => None,
        }
    }
}

impl fmt::Display for StructuringStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StructuringStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StructuringStyle::ALL
            .into_iter()
            .find(|style| style.name() == s)
            .ok_or_else(|| Error::Unsupported(format!("unknown structuring style `{s}`")))
    }
}
