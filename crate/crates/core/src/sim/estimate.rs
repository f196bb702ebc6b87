//! Deterministic parallel Monte Carlo estimation.
//!
//! Paths are split into fixed batches of `batch_size` consecutive indices.
//! Each batch accumulates sequentially; batch partials are then merged by a
//! fixed-shape pairwise tree. The result is therefore bit-identical for any
//! number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::path::{PathGenerator, ScenarioPath};

/// Monte Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub n_paths: u64,
    pub seed: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: u64,
    #[serde(default)]
    pub antithetic: bool,
    /// Worker threads; `None` uses the global rayon pool. Never affects results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_batch_size() -> u64 {
    4096
}

impl SimSettings {
    pub fn new(n_paths: u64, seed: u64) -> Self {
        SimSettings {
            n_paths,
            seed,
            batch_size: default_batch_size(),
            antithetic: false,
            workers: None,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::domain("n_paths", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::domain("batch_size", "must be >= 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::domain("workers", "must be >= 1"));
        }
        Ok(())
    }

    pub fn generator(&self, model: &crate::model::Model, grid: &crate::model::TimeGrid) -> PathGenerator {
        PathGenerator::new(model, grid, self.seed).with_antithetic(self.antithetic)
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub mean: f64,
    pub std_error: f64,
    pub n: u64,
}

impl EstimatorStats {
    /// A value known without sampling error.
    pub fn exact(value: f64, n: u64) -> Self {
        EstimatorStats {
            mean: value,
            std_error: 0.0,
            n,
        }
    }

    /// `(mean - reference) / std_error`; zero when both the error and the gap vanish.
    pub fn z_score(&self, reference: f64) -> f64 {
        let gap = self.mean - reference;
        if self.std_error > 0.0 {
            gap / self.std_error
        } else if gap == 0.0 {
            0.0
        } else {
            gap.signum() * f64::INFINITY
        }
    }

    pub fn within_se(&self, reference: f64, k: f64) -> bool {
        self.z_score(reference).abs() < k
    }
}

/// Welford accumulator with Chan's merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &Accumulator) -> Accumulator {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * (other.n as f64 / n as f64);
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64 / n as f64);
        Accumulator { n, mean, m2 }
    }

    pub fn stats(&self) -> EstimatorStats {
        let std_error = if self.n > 1 {
            (self.m2.max(0.0) / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            0.0
        };
        EstimatorStats {
            mean: self.mean,
            std_error,
            n: self.n,
        }
    }
}

/// Pathwise comparison of two functionals evaluated on the same paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairComparison {
    pub left: usize,
    pub right: usize,
    /// Paths with `left > right`, i.e. violations of `left <= right`.
    pub violations: u64,
    /// Paths where both values are bit-identical.
    pub equal: u64,
}

/// Per-functional statistics plus pathwise comparisons on a common path stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CrnEstimate {
    pub stats: Vec<EstimatorStats>,
    pub comparisons: Vec<PairComparison>,
}

#[derive(Clone)]
struct Partial {
    acc: Vec<Accumulator>,
    cmp: Vec<PairComparison>,
}

impl Partial {
    fn merge(&self, other: &Partial) -> Partial {
        Partial {
            acc: self.acc.iter().zip(&other.acc).map(|(a, b)| a.merge(b)).collect(),
            cmp: self
                .cmp
                .iter()
                .zip(&other.cmp)
                .map(|(a, b)| PairComparison {
                    violations: a.violations + b.violations,
                    equal: a.equal + b.equal,
                    ..*a
                })
                .collect(),
        }
    }
}

/// Merge partials with a tree whose shape depends only on their count.
pub(crate) fn pairwise_reduce<T: Clone>(items: &[T], merge: &impl Fn(&T, &T) -> T) -> T {
    match items.len() {
        0 => panic!("nothing to reduce"),
        1 => items[0].clone(),
        n => {
            let (left, right) = items.split_at(n / 2);
            merge(&pairwise_reduce(left, merge), &pairwise_reduce(right, merge))
        }
    }
}

/// Run `f` on the configured worker pool.
pub(crate) fn in_pool<R: Send>(settings: &SimSettings, f: impl FnOnce() -> R + Send) -> R {
    match settings.workers {
        Some(workers) => rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("failed to build worker pool")
            .install(f),
        None => f(),
    }
}

/// Map every batch of path indices in parallel; results come back in batch order.
pub(crate) fn map_batches<T, F>(settings: &SimSettings, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<u64>) -> T + Sync,
{
    let n_batches = settings.n_paths.div_ceil(settings.batch_size);
    in_pool(settings, || {
        (0..n_batches)
            .into_par_iter()
            .map(|b| {
                let start = b * settings.batch_size;
                let end = (start + settings.batch_size).min(settings.n_paths);
                f(start..end)
            })
            .collect()
    })
}

/// Core estimator over path indices `0..n_paths`.
///
/// `eval` fills the per-batch scratch `state` for index `i` and writes one value
/// per output. Non-finite outputs and the first error (in index order) abort.
pub fn mc_estimate_indexed<S, M, F>(
    settings: &SimSettings,
    n_outputs: usize,
    pairs: &[(usize, usize)],
    make_state: M,
    eval: F,
) -> Result<CrnEstimate>
where
    M: Fn() -> S + Sync,
    F: Fn(u64, &mut S, &mut [f64]) -> Result<()> + Sync,
{
    settings.validate()?;
    let partials = map_batches(settings, |range| -> Result<Partial> {
        let mut state = make_state();
        let mut out = vec![0.0; n_outputs];
        let mut partial = Partial {
            acc: vec![Accumulator::default(); n_outputs],
            cmp: pairs
                .iter()
                .map(|&(left, right)| PairComparison { left, right, ..Default::default() })
                .collect(),
        };
        for i in range {
            out.iter_mut().for_each(|x| *x = 0.0);
            eval(i, &mut state, &mut out)?;
            for (k, (&x, acc)) in out.iter().zip(partial.acc.iter_mut()).enumerate() {
                if !x.is_finite() {
                    return Err(Error::NonFinitePayoff { path: i, output: k });
                }
                acc.push(x);
            }
            for c in partial.cmp.iter_mut() {
                let (a, b) = (out[c.left], out[c.right]);
                if a > b {
                    c.violations += 1;
                }
                if a.to_bits() == b.to_bits() {
                    c.equal += 1;
                }
            }
        }
        Ok(partial)
    });
    let partials = partials.into_iter().collect::<Result<Vec<_>>>()?;
    let total = pairwise_reduce(&partials, &Partial::merge);
    Ok(CrnEstimate {
        stats: total.acc.iter().map(Accumulator::stats).collect(),
        comparisons: total.cmp,
    })
}

/// Evaluate `n_outputs` functionals on every path, with pathwise comparisons for `pairs`.
///
/// `payoff` writes one value per output; the first error (in path order) aborts.
pub fn mc_estimate_crn<F>(
    gen: &PathGenerator,
    settings: &SimSettings,
    n_outputs: usize,
    pairs: &[(usize, usize)],
    payoff: F,
) -> Result<CrnEstimate>
where
    F: Fn(&ScenarioPath, &mut [f64]) -> Result<()> + Sync,
{
    mc_estimate_indexed(settings, n_outputs, pairs, ScenarioPath::default, |i, path, out| {
        gen.fill(i, path);
        payoff(path, out)
    })
}

/// Like [`mc_estimate_crn`] over several generators sharing path indices.
///
/// Path `i` of every generator is produced from the same `(seed, i)` stream, so
/// functionals of different worlds are compared on common random numbers.
pub fn mc_estimate_worlds<F>(
    gens: &[&PathGenerator],
    settings: &SimSettings,
    n_outputs: usize,
    pairs: &[(usize, usize)],
    payoff: F,
) -> Result<CrnEstimate>
where
    F: Fn(&[ScenarioPath], &mut [f64]) -> Result<()> + Sync,
{
    mc_estimate_indexed(
        settings,
        n_outputs,
        pairs,
        || vec![ScenarioPath::default(); gens.len()],
        |i, paths, out| {
            for (gen, path) in gens.iter().zip(paths.iter_mut()) {
                gen.fill(i, path);
            }
            payoff(paths, out)
        },
    )
}

/// Estimate `E[payoff(path)]` for a single functional.
pub fn mc_estimate<F>(gen: &PathGenerator, settings: &SimSettings, payoff: F) -> Result<EstimatorStats>
where
    F: Fn(&ScenarioPath) -> f64 + Sync,
{
    let est = mc_estimate_crn(gen, settings, 1, &[], |path, out| {
        out[0] = payoff(path);
        Ok(())
    })?;
    Ok(est.stats[0])
}

/// Per-bucket means where every path contributes to at most one bucket.
///
/// Used for long stepwise profiles where a dense accumulator per step would
/// dominate the cost. Each bucket mean is taken over all `n_paths` paths.
pub fn mc_estimate_buckets<F>(
    gen: &PathGenerator,
    settings: &SimSettings,
    n_buckets: usize,
    payoff: F,
) -> Result<Vec<EstimatorStats>>
where
    F: Fn(&ScenarioPath) -> Option<(usize, f64)> + Sync,
{
    settings.validate()?;
    let partials = map_batches(settings, |range| -> Result<Vec<(f64, f64)>> {
        let mut path = ScenarioPath::default();
        let mut sums = vec![(0.0, 0.0); n_buckets];
        for i in range {
            gen.fill(i, &mut path);
            if let Some((bucket, x)) = payoff(&path) {
                if !x.is_finite() {
                    return Err(Error::NonFinitePayoff { path: i, output: bucket });
                }
                sums[bucket].0 += x;
                sums[bucket].1 += x * x;
            }
        }
        Ok(sums)
    });
    let partials = partials.into_iter().collect::<Result<Vec<_>>>()?;
    let total = pairwise_reduce(&partials, &|a: &Vec<(f64, f64)>, b: &Vec<(f64, f64)>| {
        a.iter().zip(b).map(|(x, y)| (x.0 + y.0, x.1 + y.1)).collect()
    });
    let n = settings.n_paths;
    Ok(total
        .into_iter()
        .map(|(sum, sq)| {
            let mean = sum / n as f64;
            let var = if n > 1 {
                ((sq - sum * mean) / (n - 1) as f64).max(0.0)
            } else {
                0.0
            };
            EstimatorStats {
                mean,
                std_error: (var / n as f64).sqrt(),
                n,
            }
        })
        .collect())
}
