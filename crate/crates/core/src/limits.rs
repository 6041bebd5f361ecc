//! Exact Cesàro limits of transition powers and of time-averages, plus the
//! finite-`n` running averages they are the limits of.
//!
//! For a positive-recurrent column `j` the limit matrix is `A_ij = f_ij / m_j`;
//! every other column is zero. Averaged occupation, the expected long-run
//! `g`-average and the almost-sure law of the pathwise `g`-average all follow
//! from `A`, the absorption probabilities and `m`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainSpec, Distribution, StochasticMatrix};
use crate::linalg::Dense;
use crate::solve::{self, ClassStationary, HittingMatrix, SolveConfig, SolveError};
use crate::structure::{communicating_classes, ClassStructure, Classification};

/// Largest chain accepted by the dense finite-`n` oracle.
pub const DENSE_CAP: usize = 4096;

/// Atoms closer than this are merged in the pathwise law.
pub const MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitsError {
    #[error("{n_states} states exceed the dense oracle cap of {cap}")]
    DimensionGuard { n_states: usize, cap: usize },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
}

/// One value of the almost-sure limit of `(1/n) Σ g(X_k)`, with its probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub probability: f64,
}

/// `A_ij = f_ij / m_j` for positive-recurrent `j`, zero otherwise.
pub fn cesaro_limit_matrix(
    f: &HittingMatrix,
    m: &[Option<f64>],
    classification: &[Classification],
) -> Dense {
    let n = f.n;
    let mut a = Dense::zeros(n);
    for j in 0..n {
        if classification[j] != Classification::PositiveRecurrent {
            continue;
        }
        let mj = m[j].expect("positive-recurrent state without mean return time");
        for i in 0..n {
            let fij = f.get(i, j).expect("positive-recurrent column not computed");
            *a.at_mut(i, j) = fij / mj;
        }
    }
    a
}

/// `o_j = Σ_i μ⁽⁰⁾_i A_ij`.
pub fn average_occupation_limit(a: &Dense, mu0: &Distribution) -> Vec<f64> {
    let mut o = vec![0.0; a.n];
    for (i, w) in mu0.iter() {
        for (oj, aij) in o.iter_mut().zip(a.row(i)) {
            *oj += w * aij;
        }
    }
    o
}

/// `Σ_j g(j) o_j`; `o` vanishes off the positive-recurrent states.
pub fn g_average_limit(o: &[f64], g: &[f64]) -> f64 {
    o.iter().zip(g).map(|(oj, gj)| oj * gj).sum()
}

/// Law of the almost-sure limit of `(1/n) Σ_{k≤n} g(X_k)`.
///
/// On a finite chain every path is absorbed in exactly one closed class `K`
/// and then visits all of it, so the limit equals `Σ_{j∈K} g(j)/m_j` with
/// probability `Σ_i μ⁽⁰⁾_i h_i(K)`. Atoms are sorted by value; values within
/// [`MERGE_TOL`] are merged and zero-probability atoms dropped.
pub fn pathwise_limit_distribution(
    structure: &ClassStructure,
    f: &HittingMatrix,
    m: &[Option<f64>],
    mu0: &Distribution,
    g: &[f64],
) -> Vec<Atom> {
    let absorption = &f.absorption;
    let mut atoms: Vec<Atom> = absorption
        .closed_ids
        .iter()
        .enumerate()
        .map(|(pos, &cid)| {
            let value = structure.classes[cid]
                .members
                .iter()
                .map(|&j| g[j] / m[j].expect("closed-class state without m"))
                .sum();
            let probability = mu0.iter().map(|(i, w)| w * absorption.get(i, pos)).sum();
            Atom { value, probability }
        })
        .collect();
    atoms.sort_by(|a, b| a.value.total_cmp(&b.value));

    let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
    let mut anchor = f64::NAN;
    for atom in atoms {
        match merged.last_mut() {
            Some(last) if (atom.value - anchor).abs() <= MERGE_TOL => last.probability += atom.probability,
            _ => {
                anchor = atom.value;
                merged.push(atom);
            }
        }
    }
    merged.retain(|a| a.probability > 0.0);
    merged
}

/// `(1/n) Σ_{k=1}^n P^k` and `(1/n) Σ_{k=1}^n μ⁽⁰⁾ P^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteCesaro {
    pub n: u64,
    pub matrix: Dense,
    pub occupation: Vec<f64>,
}

pub fn finite_cesaro(p: &StochasticMatrix, mu0: &Distribution, n: u64) -> Result<FiniteCesaro, LimitsError> {
    Ok(finite_cesaro_at(p, mu0, &[n])?.pop().expect("one checkpoint"))
}

/// Running averages captured at each horizon in `horizons` (any order) in a
/// single pass up to the largest.
pub fn finite_cesaro_at(
    p: &StochasticMatrix,
    mu0: &Distribution,
    horizons: &[u64],
) -> Result<Vec<FiniteCesaro>, LimitsError> {
    let n = p.n_states();
    if n > DENSE_CAP {
        return Err(LimitsError::DimensionGuard { n_states: n, cap: DENSE_CAP });
    }
    if horizons.contains(&0) {
        return Err(LimitsError::ZeroHorizon);
    }
    let last = horizons.iter().copied().max().unwrap_or(0);
    let mut out: Vec<Option<FiniteCesaro>> = vec![None; horizons.len()];

    let mut power = Dense::zeros(n);
    for i in 0..n {
        for (j, prob) in p.row(i) {
            *power.at_mut(i, j) = prob;
        }
    }
    let mut next = Dense::zeros(n);
    let mut sum = power.clone();
    let mut v = vec![0.0; n];
    let mut v_next = vec![0.0; n];
    p.left_mul(&mu0.to_dense(n), &mut v);
    let mut v_sum = v.clone();

    for k in 1..=last {
        if k > 1 {
            next.data.iter_mut().for_each(|x| *x = 0.0);
            for r in 0..n {
                for l in 0..n {
                    let w = power.at(r, l);
                    if w == 0.0 {
                        continue;
                    }
                    for (c, prob) in p.row(l) {
                        *next.at_mut(r, c) += w * prob;
                    }
                }
            }
            std::mem::swap(&mut power, &mut next);
            sum.data.iter_mut().zip(&power.data).for_each(|(s, x)| *s += x);
            p.left_mul(&v, &mut v_next);
            std::mem::swap(&mut v, &mut v_next);
            v_sum.iter_mut().zip(&v).for_each(|(s, x)| *s += x);
        }
        for (slot, _) in out.iter_mut().zip(horizons).filter(|(_, &h)| h == k) {
            let scale = 1.0 / k as f64;
            *slot = Some(FiniteCesaro {
                n: k,
                matrix: Dense {
                    n,
                    data: sum.data.iter().map(|x| x * scale).collect(),
                },
                occupation: v_sum.iter().map(|x| x * scale).collect(),
            });
        }
    }
    Ok(out.into_iter().map(|x| x.expect("checkpoint reached")).collect())
}

/// Vector path only: `(1/n) Σ_{k=1}^n μ⁽⁰⁾ P^k` in `O(nnz)` per step, no size cap.
pub fn finite_occupation(p: &StochasticMatrix, mu0: &Distribution, n: u64) -> Result<Vec<f64>, LimitsError> {
    if n == 0 {
        return Err(LimitsError::ZeroHorizon);
    }
    let size = p.n_states();
    let mut v = mu0.to_dense(size);
    let mut next = vec![0.0; size];
    let mut sum = vec![0.0; size];
    for _ in 0..n {
        p.left_mul(&v, &mut next);
        std::mem::swap(&mut v, &mut next);
        sum.iter_mut().zip(&v).for_each(|(s, x)| *s += x);
    }
    Ok(sum.into_iter().map(|x| x / n as f64).collect())
}

/// Everything the exact side knows about a finite chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitReport {
    pub structure: ClassStructure,
    pub stationary: Vec<ClassStationary>,
    pub hitting: HittingMatrix,
    pub mean_return: Vec<Option<f64>>,
    pub cesaro: Dense,
    pub occupation: Vec<f64>,
    pub g_mean: f64,
    pub pathwise: Vec<Atom>,
}

/// Runs the full exact pipeline on a validated chain.
pub fn analyze(spec: &ChainSpec, cfg: &SolveConfig, transient_targets: bool) -> Result<LimitReport, SolveError> {
    let structure = communicating_classes(&spec.p);
    let stationary = solve::class_stationary(&spec.p, &structure, cfg)?;
    let mean_return = solve::mean_return_times(spec.n_states(), &stationary);
    let hitting = solve::hitting_probabilities(&spec.p, &structure, cfg, transient_targets)?;
    let cesaro = cesaro_limit_matrix(&hitting, &mean_return, &structure.classification);
    let occupation = average_occupation_limit(&cesaro, &spec.mu0);
    let g = spec.g_dense();
    let g_mean = g_average_limit(&occupation, &g);
    let pathwise = pathwise_limit_distribution(&structure, &hitting, &mean_return, &spec.mu0, &g);
    Ok(LimitReport {
        structure,
        stationary,
        hitting,
        mean_return,
        cesaro,
        occupation,
        g_mean,
        pathwise,
    })
}

/// `max |x - y|` over two equally sized matrices.
pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::DEFAULT_ROW_TOL;

    fn spec(rows: &[Vec<f64>], mu0: usize, g: Option<&[f64]>) -> ChainSpec {
        let p = StochasticMatrix::from_dense(rows, DEFAULT_ROW_TOL).unwrap();
        let n = p.n_states();
        ChainSpec {
            space: crate::chain::StateSpace::numbered(n).unwrap(),
            p,
            mu0: Distribution::point(mu0),
            g: g.map(|g| g.iter().copied().enumerate().collect()),
        }
    }

    fn cycle() -> Vec<Vec<f64>> {
        vec![vec![0.0, 1.0], vec![1.0, 0.0]]
    }

    fn splitter() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.3, 0.7], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]
    }

    fn gamblers_ruin() -> Vec<Vec<f64>> {
        vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.5, 0.0],
            vec![0.0, 0.5, 0.0, 0.5],
            vec![0.0, 0.0, 0.0, 1.0],
        ]
    }

    #[test]
    fn cycle_limits() {
        let r = analyze(&spec(&cycle(), 0, Some(&[1.0, 0.0])), &SolveConfig::default(), false).unwrap();
        assert!(r.cesaro.data.iter().all(|&x| x == 0.5));
        assert_eq!(r.occupation, vec![0.5, 0.5]);
        assert_eq!(r.g_mean, 0.5);
        assert_eq!(r.pathwise, vec![Atom { value: 0.5, probability: 1.0 }]);
    }

    #[test]
    fn gamblers_ruin_row() {
        let r = analyze(&spec(&gamblers_ruin(), 1, None), &SolveConfig::default(), false).unwrap();
        let row: Vec<f64> = r.cesaro.row(1).to_vec();
        for (x, e) in row.iter().zip([2.0 / 3.0, 0.0, 0.0, 1.0 / 3.0]) {
            assert!((x - e).abs() < 1e-12);
        }
        assert_eq!(r.occupation, row);
        assert_eq!(r.g_mean, 0.0);
        assert_eq!(r.pathwise, vec![Atom { value: 0.0, probability: 1.0 }]);
    }

    #[test]
    fn identity_limit_is_identity() {
        let id = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let r = analyze(&spec(&id, 2, None), &SolveConfig::default(), false).unwrap();
        assert_eq!(r.cesaro, Dense { n: 3, data: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0] });
    }

    #[test]
    fn splitter_occupation_and_laws() {
        let r = analyze(&spec(&splitter(), 0, Some(&[0.0, 1.0, 0.0])), &SolveConfig::default(), false).unwrap();
        let expect = [0.0, 0.3, 0.7];
        for (x, e) in r.occupation.iter().zip(expect) {
            assert!((x - e).abs() < 1e-15);
        }
        assert!((r.g_mean - 0.3).abs() < 1e-15);
        assert_eq!(r.pathwise.len(), 2);
        assert_eq!(r.pathwise[0].value, 0.0);
        assert!((r.pathwise[0].probability - 0.7).abs() < 1e-15);
        assert_eq!(r.pathwise[1].value, 1.0);
        assert!((r.pathwise[1].probability - 0.3).abs() < 1e-15);

        let ones = analyze(&spec(&splitter(), 0, Some(&[1.0, 1.0, 1.0])), &SolveConfig::default(), false).unwrap();
        assert!((ones.g_mean - 1.0).abs() < 1e-15);
        assert_eq!(ones.pathwise.len(), 1);
    }

    #[test]
    fn finite_oracle_small_cases() {
        let p = StochasticMatrix::from_dense(&cycle(), DEFAULT_ROW_TOL).unwrap();
        let fc = finite_cesaro(&p, &Distribution::point(0), 2).unwrap();
        assert!(fc.matrix.data.iter().all(|&x| x == 0.5));
        assert_eq!(fc.occupation, vec![0.5, 0.5]);

        let p = StochasticMatrix::from_dense(&splitter(), DEFAULT_ROW_TOL).unwrap();
        let fc = finite_cesaro(&p, &Distribution::point(0), 1).unwrap();
        assert_eq!(fc.matrix.row(0), &[0.0, 0.3, 0.7]);
        assert_eq!(fc.occupation, vec![0.0, 0.3, 0.7]);
        assert_eq!(finite_occupation(&p, &Distribution::point(0), 1).unwrap(), fc.occupation);
    }

    #[test]
    fn finite_oracle_approaches_limit() {
        let s = spec(&gamblers_ruin(), 1, None);
        let r = analyze(&s, &SolveConfig::default(), false).unwrap();
        let fc = finite_cesaro(&s.p, &s.mu0, 10_000).unwrap();
        assert!(max_abs_diff(&fc.matrix, &r.cesaro) < 5e-4);
    }

    #[test]
    fn oracle_guards() {
        let p = StochasticMatrix::identity(DENSE_CAP + 1);
        assert!(matches!(
            finite_cesaro(&p, &Distribution::point(0), 1),
            Err(LimitsError::DimensionGuard { .. })
        ));
        let p = StochasticMatrix::identity(2);
        assert_eq!(finite_cesaro(&p, &Distribution::point(0), 0), Err(LimitsError::ZeroHorizon));
    }

    #[test]
    fn merge_of_equal_values() {
        // Two absorbing states with the same g collapse into one atom.
        let r = analyze(&spec(&splitter(), 0, Some(&[5.0, 2.0, 2.0])), &SolveConfig::default(), false).unwrap();
        assert_eq!(r.pathwise.len(), 1);
        assert_eq!(r.pathwise[0].value, 2.0);
        assert!((r.pathwise[0].probability - 1.0).abs() < 1e-15);
    }
}
