//! Seeded trajectory simulation and occupation statistics.
//!
//! Path `k` of a run with seed `s` draws from `ChaCha8Rng::seed_from_u64(s)`
//! with its stream set to `k`, so every path is reproducible on its own and
//! aggregates do not depend on how paths are scheduled. Per-path results are
//! reduced in path order using integer counts wherever possible.
//!
//! Visits are counted at steps `1..=n`; the initial state `X_0` is not a visit.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainSpec, Distribution, StochasticMatrix};
use crate::exec::Execution;
use crate::family::GeneratorChain;
use crate::limits::LimitReport;
use crate::structure::Classification;

/// Identifies the random stream construction in reports.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha 0.9); seed_from_u64(seed), stream = path index";

/// Dichotomy band used when none is given and the target has no finite `m`.
pub const DEFAULT_BAND: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("target {0} is positive recurrent but no mean return time is known for it")]
    MissingMeanReturnTime(i64),
    #[error("target {0} is not a state of the chain")]
    UnknownTarget(i64),
    #[error("{0} must be at least 1")]
    Zero(&'static str),
}

/// Something that can be simulated: an initial law and a pure step rule.
pub trait Kernel: Sync {
    fn initial(&self, u: f64) -> i64;
    fn step(&self, state: i64, u: f64) -> i64;
}

/// Inverse-CDF sampler over a finite chain.
#[derive(Debug, Clone)]
pub struct FiniteKernel {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    cum: Vec<f64>,
    init_states: Vec<usize>,
    init_cum: Vec<f64>,
}

impl FiniteKernel {
    pub fn new(p: &StochasticMatrix, mu0: &Distribution) -> Self {
        let n = p.n_states();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(p.nnz());
        let mut cum = Vec::with_capacity(p.nnz());
        row_ptr.push(0);
        for i in 0..n {
            let mut acc = 0.0;
            for (j, prob) in p.row(i) {
                acc += prob;
                cols.push(j);
                cum.push(acc);
            }
            row_ptr.push(cols.len());
        }
        let mut acc = 0.0;
        let (init_states, init_cum) = mu0
            .iter()
            .map(|(i, w)| {
                acc += w;
                (i, acc)
            })
            .unzip();
        FiniteKernel { row_ptr, cols, cum, init_states, init_cum }
    }

    pub fn from_spec(spec: &ChainSpec) -> Self {
        Self::new(&spec.p, &spec.mu0)
    }

    pub fn n_states(&self) -> usize {
        self.row_ptr.len() - 1
    }
}

/// First index whose cumulative mass exceeds `u`; rounding slack goes to the last entry.
#[inline]
fn pick(cum: &[f64], u: f64) -> usize {
    if cum.len() <= 8 {
        cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
    } else {
        cum.partition_point(|&c| c <= u).min(cum.len() - 1)
    }
}

impl Kernel for FiniteKernel {
    fn initial(&self, u: f64) -> i64 {
        self.init_states[pick(&self.init_cum, u)] as i64
    }

    #[inline]
    fn step(&self, state: i64, u: f64) -> i64 {
        let i = state as usize;
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.start + pick(&self.cum[span], u)] as i64
    }
}

impl Kernel for GeneratorChain {
    fn initial(&self, _u: f64) -> i64 {
        self.start
    }

    #[inline]
    fn step(&self, state: i64, u: f64) -> i64 {
        GeneratorChain::step(self, state, u)
    }
}

/// A real function on states with finite support.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Observable {
    #[default]
    Zero,
    Dense(Vec<f64>),
    Sparse(BTreeMap<i64, f64>),
}

impl Observable {
    #[inline]
    fn at(&self, state: i64) -> f64 {
        match self {
            Observable::Zero => 0.0,
            Observable::Dense(v) => v.get(state as usize).copied().unwrap_or(0.0),
            Observable::Sparse(m) => m.get(&state).copied().unwrap_or(0.0),
        }
    }
}

/// Visit counts and first-passage steps over a growable integer window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occupation {
    offset: i64,
    counts: Vec<u64>,
    first: Vec<u64>,
}

impl Occupation {
    fn new(lo: i64, hi: i64) -> Self {
        let len = (hi - lo + 1) as usize;
        Occupation { offset: lo, counts: vec![0; len], first: vec![0; len] }
    }

    #[inline]
    fn slot(&mut self, state: i64) -> usize {
        let hi = self.offset + self.counts.len() as i64;
        if state < self.offset || state >= hi {
            self.grow(state);
        }
        (state - self.offset) as usize
    }

    #[cold]
    fn grow(&mut self, state: i64) {
        let len = self.counts.len() as i64;
        let lo = self.offset.min(state - len);
        let hi = (self.offset + len).max(state + len + 1);
        let mut counts = vec![0; (hi - lo) as usize];
        let mut first = vec![0; (hi - lo) as usize];
        let shift = (self.offset - lo) as usize;
        counts[shift..shift + self.counts.len()].copy_from_slice(&self.counts);
        first[shift..shift + self.first.len()].copy_from_slice(&self.first);
        self.offset = lo;
        self.counts = counts;
        self.first = first;
    }

    #[inline]
    fn visit(&mut self, state: i64, step: u64) {
        let k = self.slot(state);
        if self.counts[k] == 0 {
            self.first[k] = step;
        }
        self.counts[k] += 1;
    }

    /// `M_j(n)`.
    pub fn count(&self, state: i64) -> u64 {
        let k = state - self.offset;
        if k < 0 || k >= self.counts.len() as i64 {
            0
        } else {
            self.counts[k as usize]
        }
    }

    /// First step `>= 1` at which `state` was visited.
    pub fn first_passage(&self, state: i64) -> Option<u64> {
        match self.count(state) {
            0 => None,
            _ => Some(self.first[(state - self.offset) as usize]),
        }
    }

    /// Visited states with their counts, ascending.
    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (self.offset + k as i64, c))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStats {
    pub n: u64,
    pub start: i64,
    pub occupation: Occupation,
    pub target: Option<i64>,
    /// Inter-visit gaps `n_{m+1} - n_m` at the target.
    pub gaps: Vec<u64>,
    pub last_visit: Option<u64>,
    /// `(1/n) Σ_{k=1}^n g(X_k)`.
    pub g_running: f64,
}

impl TrajectoryStats {
    pub fn fraction(&self, state: i64) -> f64 {
        self.occupation.count(state) as f64 / self.n as f64
    }

    pub fn first_passage(&self, state: i64) -> Option<u64> {
        self.occupation.first_passage(state)
    }
}

fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Simulates `n` transitions of path `path_index`.
pub fn sample_path<K: Kernel + ?Sized>(
    kernel: &K,
    n: u64,
    seed: u64,
    path_index: u64,
    target: Option<i64>,
    g: &Observable,
) -> TrajectoryStats {
    let mut rng = path_rng(seed, path_index);
    let start = kernel.initial(rng.random::<f64>());
    let mut occupation = Occupation::new(start - 8, start + 8);
    let mut gaps = Vec::new();
    let mut last_visit: Option<u64> = None;
    let mut g_sum = 0.0;
    let mut state = start;
    for k in 1..=n {
        state = kernel.step(state, rng.random::<f64>());
        occupation.visit(state, k);
        g_sum += g.at(state);
        if target == Some(state) {
            if let Some(prev) = last_visit {
                gaps.push(k - prev);
            }
            last_visit = Some(k);
        }
    }
    TrajectoryStats {
        n,
        start,
        occupation,
        target,
        gaps,
        last_visit,
        g_running: g_sum / n as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub n: u64,
    pub paths: u64,
    pub seed: u64,
    /// Dichotomy band; `None` picks `min(1/(2 m_j), 0.05)` or 0.05.
    pub band: Option<f64>,
    pub execution: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 10_000,
            paths: 1000,
            seed: 0,
            band: None,
            execution: Execution::default(),
        }
    }
}

/// What the exact side (or declared metadata) says about the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetReference {
    pub classification: Classification,
    pub mean_return_time: Option<f64>,
    /// `Σ_i μ⁽⁰⁾_i f_ij`.
    pub hit_mass: Option<f64>,
    /// Limit of `E[M_j(n)/n]`.
    pub occupation_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub paths: u64,
    pub horizon: u64,
    pub target: i64,
    pub seed: u64,
    pub band: f64,
    pub reference: TargetReference,
    /// Fraction of paths with `|M_j(n)/n - 1/m_j| < band` (positive-recurrent targets only).
    pub frac_near_inverse_m: Option<f64>,
    pub frac_near_inverse_m_stderr: Option<f64>,
    /// Fraction of paths with `M_j(n)/n < band` not already counted above.
    pub frac_near_zero: f64,
    pub frac_near_zero_stderr: f64,
    /// Predicted mass of the near-zero event: `1 - hit mass`, or 1 off positive recurrence.
    pub predicted_zero_mass: Option<f64>,
    /// Fraction of paths visiting the target at some step in `1..=n`.
    pub frac_hit: f64,
    pub frac_hit_stderr: f64,
    pub predicted_hit_mass: Option<f64>,
    pub mean_occupation: f64,
    pub mean_occupation_stderr: f64,
    pub gap_count: u64,
    pub mean_gap: Option<f64>,
    pub mean_gap_stderr: Option<f64>,
}

/// Per-path reduction; integer fields aggregate exactly.
#[derive(Debug, Clone, Copy)]
struct PathOutcome {
    count: u64,
    hit: bool,
    gaps: u64,
    gap_sum: u64,
    gap_sq_sum: u128,
}

/// Runs `paths` trajectories and summarizes occupation of `target`.
pub fn convergence_experiment<K: Kernel + ?Sized>(
    kernel: &K,
    target: i64,
    reference: TargetReference,
    cfg: &ExperimentConfig,
) -> Result<ExperimentSummary, ExperimentError> {
    if cfg.paths == 0 {
        return Err(ExperimentError::Zero("paths"));
    }
    if cfg.n == 0 {
        return Err(ExperimentError::Zero("horizon"));
    }
    let positive = reference.classification == Classification::PositiveRecurrent;
    let inverse_m = match (positive, reference.mean_return_time) {
        (true, Some(m)) => Some(1.0 / m),
        (true, None) => return Err(ExperimentError::MissingMeanReturnTime(target)),
        (false, _) => None,
    };
    let band = cfg
        .band
        .unwrap_or_else(|| inverse_m.map_or(DEFAULT_BAND, |im| (0.5 * im).min(DEFAULT_BAND)));

    let outcomes = cfg.execution.map(cfg.paths as usize, |k| {
        let s = sample_path(kernel, cfg.n, cfg.seed, k as u64, Some(target), &Observable::Zero);
        PathOutcome {
            count: s.occupation.count(target),
            hit: s.last_visit.is_some(),
            gaps: s.gaps.len() as u64,
            gap_sum: s.gaps.iter().sum(),
            gap_sq_sum: s.gaps.iter().map(|&z| (z as u128) * (z as u128)).sum(),
        }
    });

    let paths = cfg.paths as f64;
    let n = cfg.n as f64;
    let (mut near_m, mut near_zero, mut hits) = (0u64, 0u64, 0u64);
    let (mut gaps, mut gap_sum, mut gap_sq) = (0u64, 0u128, 0u128);
    let mut counts = Vec::with_capacity(outcomes.len());
    for o in &outcomes {
        let frac = o.count as f64 / n;
        match inverse_m {
            Some(im) if (frac - im).abs() < band => near_m += 1,
            _ if frac < band => near_zero += 1,
            _ => {}
        }
        hits += o.hit as u64;
        gaps += o.gaps;
        gap_sum += o.gap_sum as u128;
        gap_sq += o.gap_sq_sum;
        counts.push(o.count);
    }
    let (mean_occupation, occ_sd) = mean_sd(counts.iter().map(|&c| c as f64 / n));

    let binomial = |k: u64| {
        let p = k as f64 / paths;
        (p, (p * (1.0 - p) / paths).sqrt())
    };
    let (frac_near_zero, frac_near_zero_stderr) = binomial(near_zero);
    let (frac_hit, frac_hit_stderr) = binomial(hits);
    let (mean_gap, mean_gap_stderr) = if gaps == 0 {
        (None, None)
    } else {
        let g = gaps as f64;
        let mean = gap_sum as f64 / g;
        let stderr = (gaps > 1).then(|| {
            let var = (gap_sq as f64 - g * mean * mean) / (g - 1.0);
            (var.max(0.0) / g).sqrt()
        });
        (Some(mean), stderr)
    };
    let predicted_zero_mass = if positive {
        reference.hit_mass.map(|h| 1.0 - h)
    } else {
        Some(1.0)
    };

    Ok(ExperimentSummary {
        paths: cfg.paths,
        horizon: cfg.n,
        target,
        seed: cfg.seed,
        band,
        reference,
        frac_near_inverse_m: inverse_m.map(|_| binomial(near_m).0),
        frac_near_inverse_m_stderr: inverse_m.map(|_| binomial(near_m).1),
        frac_near_zero,
        frac_near_zero_stderr,
        predicted_zero_mass,
        frac_hit,
        frac_hit_stderr,
        predicted_hit_mass: reference.hit_mass,
        mean_occupation,
        mean_occupation_stderr: occ_sd / paths.sqrt(),
        gap_count: gaps,
        mean_gap,
        mean_gap_stderr,
    })
}

/// Reference values for target state `j` of an analyzed finite chain.
pub fn finite_reference(report: &LimitReport, mu0: &Distribution, j: usize) -> TargetReference {
    let hit_mass = report
        .hitting
        .is_computed(j)
        .then(|| mu0.iter().map(|(i, w)| w * report.hitting.get(i, j).unwrap_or(0.0)).sum());
    TargetReference {
        classification: report.structure.classification[j],
        mean_return_time: report.mean_return[j],
        hit_mass,
        occupation_limit: Some(report.occupation[j]),
    }
}

/// Reference values for `target` of a generator family, from declared metadata.
pub fn family_reference(chain: &GeneratorChain, target: i64) -> TargetReference {
    let analytic = chain.analytic_for(target);
    let classification = chain.declared_class_of_target;
    let mean_return_time = analytic.and_then(|a| a.m_target);
    TargetReference {
        classification,
        mean_return_time,
        hit_mass: analytic.and_then(|a| a.f_start_target),
        occupation_limit: match classification {
            Classification::PositiveRecurrent => mean_return_time.map(|m| 1.0 / m),
            _ => Some(0.0),
        },
    }
}

/// Convenience wrapper for a finite chain whose exact report is at hand.
pub fn finite_convergence_experiment(
    spec: &ChainSpec,
    report: &LimitReport,
    target: usize,
    cfg: &ExperimentConfig,
) -> Result<ExperimentSummary, ExperimentError> {
    if target >= spec.n_states() {
        return Err(ExperimentError::UnknownTarget(target as i64));
    }
    let kernel = FiniteKernel::from_spec(spec);
    convergence_experiment(&kernel, target as i64, finite_reference(report, &spec.mu0, target), cfg)
}

pub fn family_convergence_experiment(
    chain: &GeneratorChain,
    target: i64,
    cfg: &ExperimentConfig,
) -> Result<ExperimentSummary, ExperimentError> {
    convergence_experiment(chain, target, family_reference(chain, target), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub center: f64,
    pub count: u64,
    pub mass: f64,
    pub mass_stderr: f64,
}

/// Empirical law of the per-path `g`-averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicSummary {
    pub paths: u64,
    pub horizon: u64,
    pub seed: u64,
    pub band: f64,
    /// Per-path `(1/n) Σ g(X_k)`, in path order.
    pub values: Vec<f64>,
    pub mean: f64,
    pub mean_stderr: f64,
    pub clusters: Vec<Cluster>,
}

impl ErgodicSummary {
    /// Fraction of paths within `band` of `value`, with its binomial stderr.
    pub fn mass_near(&self, value: f64) -> (f64, f64) {
        let k = self.values.iter().filter(|&&v| (v - value).abs() < self.band).count();
        let p = k as f64 / self.paths as f64;
        (p, (p * (1.0 - p) / self.paths as f64).sqrt())
    }
}

/// Per-path time-averages of `g`, clustered with radius `band`.
pub fn ergodic_average_experiment<K: Kernel + ?Sized>(
    kernel: &K,
    g: &Observable,
    band: f64,
    cfg: &ExperimentConfig,
) -> Result<ErgodicSummary, ExperimentError> {
    if cfg.paths == 0 {
        return Err(ExperimentError::Zero("paths"));
    }
    if cfg.n == 0 {
        return Err(ExperimentError::Zero("horizon"));
    }
    let values = cfg.execution.map(cfg.paths as usize, |k| {
        sample_path(kernel, cfg.n, cfg.seed, k as u64, None, g).g_running
    });
    let (mean, sd) = mean_sd(values.iter().copied());
    let paths = cfg.paths as f64;

    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let mut clusters: Vec<(f64, Vec<f64>)> = Vec::new();
    for v in sorted {
        match clusters.last_mut() {
            Some((lead, members)) if v - *lead <= band => members.push(v),
            _ => clusters.push((v, vec![v])),
        }
    }
    let clusters = clusters
        .into_iter()
        .map(|(_, members)| {
            let count = members.len() as u64;
            let mass = count as f64 / paths;
            Cluster {
                center: members.iter().sum::<f64>() / count as f64,
                count,
                mass,
                mass_stderr: (mass * (1.0 - mass) / paths).sqrt(),
            }
        })
        .collect();

    Ok(ErgodicSummary {
        paths: cfg.paths,
        horizon: cfg.n,
        seed: cfg.seed,
        band,
        values,
        mean,
        mean_stderr: sd / paths.sqrt(),
        clusters,
    })
}

/// Sample mean and (n-1)-normalized standard deviation.
fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (count, sum) = xs.clone().fold((0usize, 0.0), |(c, s), x| (c + 1, s + x));
    if count == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / count as f64;
    if count == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (count - 1) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::DEFAULT_ROW_TOL;

    fn kernel(rows: &[Vec<f64>], start: usize) -> FiniteKernel {
        let p = StochasticMatrix::from_dense(rows, DEFAULT_ROW_TOL).unwrap();
        FiniteKernel::new(&p, &Distribution::point(start))
    }

    #[test]
    fn cycle_path_is_deterministic() {
        let k = kernel(&[vec![0.0, 1.0], vec![1.0, 0.0]], 0);
        let s = sample_path(&k, 4, 7, 3, Some(0), &Observable::Zero);
        assert_eq!(s.occupation.count(0), 2);
        assert_eq!(s.occupation.count(1), 2);
        assert_eq!(s.gaps, vec![2]);
        assert_eq!(s.first_passage(0), Some(2));
        assert_eq!(s.first_passage(1), Some(1));
        assert_eq!(s.occupation.total(), 4);
    }

    #[test]
    fn identity_stays_put() {
        let k = kernel(&[vec![1.0, 0.0], vec![0.0, 1.0]], 0);
        let s = sample_path(&k, 100, 1, 0, Some(0), &Observable::Zero);
        assert_eq!(s.fraction(0), 1.0);
        assert_eq!(s.gaps.len(), 99);
        assert!(s.gaps.iter().all(|&z| z == 1));
    }

    #[test]
    fn same_seed_same_path() {
        let k = kernel(&[vec![0.2, 0.3, 0.5], vec![0.6, 0.0, 0.4], vec![0.1, 0.8, 0.1]], 1);
        let g = Observable::Dense(vec![1.0, -2.0, 0.5]);
        let a = sample_path(&k, 1000, 42, 9, Some(2), &g);
        let b = sample_path(&k, 1000, 42, 9, Some(2), &g);
        assert_eq!(a, b);
        let c = sample_path(&k, 1000, 42, 10, Some(2), &g);
        assert_ne!(a.occupation, c.occupation);
    }

    #[test]
    fn window_grows_both_ways() {
        let mut occ = Occupation::new(-1, 1);
        occ.visit(40, 1);
        occ.visit(-75, 2);
        occ.visit(40, 3);
        assert_eq!(occ.count(40), 2);
        assert_eq!(occ.count(-75), 1);
        assert_eq!(occ.first_passage(40), Some(1));
        assert_eq!(occ.first_passage(0), None);
        assert_eq!(occ.iter().collect::<Vec<_>>(), vec![(-75, 1), (40, 2)]);
    }

    #[test]
    fn gaps_sum_to_visit_span() {
        let k = kernel(&[vec![0.5, 0.5], vec![0.3, 0.7]], 0);
        let s = sample_path(&k, 5000, 3, 0, Some(0), &Observable::Zero);
        let first = s.first_passage(0).unwrap();
        assert_eq!(s.gaps.iter().sum::<u64>(), s.last_visit.unwrap() - first);
        assert!(s.gaps.iter().all(|&z| z >= 1));
    }

    #[test]
    fn missing_mean_return_time() {
        let k = kernel(&[vec![1.0]], 0);
        let reference = TargetReference {
            classification: Classification::PositiveRecurrent,
            mean_return_time: None,
            hit_mass: None,
            occupation_limit: None,
        };
        assert_eq!(
            convergence_experiment(&k, 0, reference, &ExperimentConfig::default()),
            Err(ExperimentError::MissingMeanReturnTime(0))
        );
    }

    #[test]
    fn zero_g_gives_zero_averages() {
        let k = kernel(&[vec![0.5, 0.5], vec![0.3, 0.7]], 0);
        let cfg = ExperimentConfig { n: 100, paths: 50, ..Default::default() };
        let e = ergodic_average_experiment(&k, &Observable::Zero, 0.05, &cfg).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.0));
        assert_eq!(e.clusters.len(), 1);
        assert_eq!(e.clusters[0].mass, 1.0);
    }

    #[test]
    fn cycle_ergodic_average_converges() {
        let k = kernel(&[vec![0.0, 1.0], vec![1.0, 0.0]], 0);
        let g = Observable::Dense(vec![1.0, 0.0]);
        let s = sample_path(&k, 10_000, 0, 0, None, &g);
        assert!((s.g_running - 0.5).abs() <= 1e-4);
    }
}
