//! Hitting probabilities, per-class stationary laws and mean return times.
//!
//! Systems up to `direct_cutoff` unknowns are solved by dense LU; larger ones
//! by fixed-point iteration. Independent systems (one per closed class, one
//! per transient target) are dispatched through [`Execution`].

use thiserror::Error;

use crate::chain::StochasticMatrix;
use crate::exec::Execution;
use crate::linalg::{residual, Dense, Lu};
use crate::structure::ClassStructure;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub direct_cutoff: usize,
    pub solve_tol: f64,
    pub max_iters: usize,
    pub execution: Execution,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            direct_cutoff: 2048,
            solve_tol: 1e-10,
            max_iters: 1_000_000,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("singular system while solving {context} (residual {residual:e})")]
    SingularSystem { context: String, residual: f64 },
    #[error("no convergence while solving {context}: {iterations} iterations, last change {last_delta:e}")]
    NoConvergence {
        context: String,
        iterations: usize,
        last_delta: f64,
    },
}

/// Stationary law and mean return times of one closed class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStationary {
    pub class_id: usize,
    pub members: Vec<usize>,
    /// Aligned with `members`.
    pub pi: Vec<f64>,
    /// `m_j = 1 / pi_j`, aligned with `members`.
    pub m: Vec<f64>,
}

/// Probability `h_i(K)` that the chain started at `i` is absorbed in closed class `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Absorption {
    /// Class ids of the closed classes, in structure order; column order of `h`.
    pub closed_ids: Vec<usize>,
    /// Row-major `N x closed_ids.len()`.
    pub h: Vec<f64>,
}

impl Absorption {
    pub fn get(&self, state: usize, closed_pos: usize) -> f64 {
        self.h[state * self.closed_ids.len() + closed_pos]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let k = self.closed_ids.len();
        &self.h[state * k..(state + 1) * k]
    }
}

/// Dense `f_ij` table. Columns of transient targets are only filled on request.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingMatrix {
    pub n: usize,
    f: Vec<f64>,
    computed: Vec<bool>,
    pub absorption: Absorption,
}

impl HittingMatrix {
    /// `f_ij`, or `None` when column `j` was not computed.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.computed[j].then(|| self.f[i * self.n + j])
    }

    pub fn is_computed(&self, j: usize) -> bool {
        self.computed[j]
    }

    pub fn computed_columns(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(|&j| self.computed[j])
    }
}

/// Stationary law of `P` restricted to a closed class (`members` ascending).
pub fn stationary_distribution(
    p: &StochasticMatrix,
    members: &[usize],
    cfg: &SolveConfig,
) -> Result<Vec<f64>, SolveError> {
    let s = members.len();
    let context = || format!("stationary law of class containing state {}", members[0]);
    if s == 1 {
        return Ok(vec![1.0]);
    }
    let local = LocalIndex::new(p.n_states(), members);

    let pi = if s <= cfg.direct_cutoff {
        // (P_K^T - I) pi = 0 with the last balance equation replaced by sum(pi) = 1.
        let mut a = Dense::zeros(s);
        for (c, &i) in members.iter().enumerate() {
            for (j, prob) in p.row(i) {
                let r = local.get(j).expect("closed class leaks");
                *a.at_mut(r, c) += prob;
            }
            *a.at_mut(c, c) -= 1.0;
        }
        for c in 0..s {
            *a.at_mut(s - 1, c) = 1.0;
        }
        let mut b = vec![0.0; s];
        b[s - 1] = 1.0;
        let lu = Lu::factor(a.clone()).map_err(|_| SolveError::SingularSystem {
            context: context(),
            residual: f64::INFINITY,
        })?;
        let pi = lu.solve(&b);
        let r = residual(&a, &pi, &b);
        if !(r < cfg.solve_tol) {
            return Err(SolveError::SingularSystem { context: context(), residual: r });
        }
        pi
    } else {
        // Lazy kernel (I + P) / 2 is aperiodic on the class.
        let mut pi = vec![1.0 / s as f64; s];
        let mut next = vec![0.0; s];
        let mut delta = f64::INFINITY;
        let mut iters = 0;
        while delta >= cfg.solve_tol {
            if iters == cfg.max_iters {
                return Err(SolveError::NoConvergence {
                    context: context(),
                    iterations: iters,
                    last_delta: delta,
                });
            }
            next.iter_mut().zip(&pi).for_each(|(n, x)| *n = 0.5 * x);
            for (c, &i) in members.iter().enumerate() {
                let w = 0.5 * pi[c];
                for (j, prob) in p.row(i) {
                    next[local.get(j).expect("closed class leaks")] += w * prob;
                }
            }
            let total: f64 = next.iter().sum();
            delta = 0.0;
            for (x, n) in pi.iter_mut().zip(&next) {
                let v = n / total;
                delta = f64::max(delta, (v - *x).abs());
                *x = v;
            }
            iters += 1;
        }
        pi
    };

    if let Some(bad) = pi.iter().position(|&x| !(x > 0.0)) {
        return Err(SolveError::SingularSystem {
            context: format!("{}: non-positive mass at member {}", context(), members[bad]),
            residual: pi[bad].abs(),
        });
    }
    let total: f64 = pi.iter().sum();
    Ok(pi.into_iter().map(|x| x / total).collect())
}

/// Stationary laws of every closed class.
pub fn class_stationary(
    p: &StochasticMatrix,
    structure: &ClassStructure,
    cfg: &SolveConfig,
) -> Result<Vec<ClassStationary>, SolveError> {
    let closed: Vec<_> = structure.closed_classes().collect();
    cfg.execution
        .map(closed.len(), |k| {
            let class = closed[k];
            let pi = stationary_distribution(p, &class.members, cfg)?;
            Ok(ClassStationary {
                class_id: class.id,
                members: class.members.clone(),
                m: pi.iter().map(|x| 1.0 / x).collect(),
                pi,
            })
        })
        .into_iter()
        .collect()
}

/// `m_j` for every positive-recurrent state; `None` elsewhere.
pub fn mean_return_times(n_states: usize, stationary: &[ClassStationary]) -> Vec<Option<f64>> {
    let mut m = vec![None; n_states];
    for cs in stationary {
        for (&j, &mj) in cs.members.iter().zip(&cs.m) {
            m[j] = Some(mj);
        }
    }
    m
}

/// Absorption probabilities into every closed class.
pub fn absorption_probabilities(
    p: &StochasticMatrix,
    structure: &ClassStructure,
    cfg: &SolveConfig,
) -> Result<Absorption, SolveError> {
    let n = p.n_states();
    let closed_ids: Vec<usize> = structure.closed_classes().map(|c| c.id).collect();
    let k = closed_ids.len();
    let mut pos_of_class = vec![usize::MAX; structure.classes.len()];
    for (pos, &id) in closed_ids.iter().enumerate() {
        pos_of_class[id] = pos;
    }
    let mut h = vec![0.0; n * k];
    for i in 0..n {
        let pos = pos_of_class[structure.class_of[i]];
        if pos != usize::MAX {
            h[i * k + pos] = 1.0;
        }
    }

    let transient = structure.transient_states();
    if transient.is_empty() {
        return Ok(Absorption { closed_ids, h });
    }
    let local = LocalIndex::new(n, &transient);
    let t = transient.len();

    // One right-hand side per closed class: one-step mass into that class.
    let mut rhs = vec![vec![0.0; t]; k];
    for (li, &i) in transient.iter().enumerate() {
        for (j, prob) in p.row(i) {
            let pos = pos_of_class[structure.class_of[j]];
            if pos != usize::MAX {
                rhs[pos][li] += prob;
            }
        }
    }

    let solutions = if t <= cfg.direct_cutoff {
        let a = transient_block(p, &transient, &local);
        let lu = Lu::factor(a.clone()).map_err(|_| SolveError::SingularSystem {
            context: "absorption probabilities".into(),
            residual: f64::INFINITY,
        })?;
        cfg.execution.map(k, |pos| {
            let x = lu.solve(&rhs[pos]);
            let r = residual(&a, &x, &rhs[pos]);
            if r < cfg.solve_tol {
                Ok(x)
            } else {
                Err(SolveError::SingularSystem {
                    context: format!("absorption into class {}", closed_ids[pos]),
                    residual: r,
                })
            }
        })
    } else {
        cfg.execution.map(k, |pos| {
            jacobi(p, &transient, &local, &rhs[pos], cfg)
                .map_err(|e| with_context(e, format!("absorption into class {}", closed_ids[pos])))
        })
    };

    for (pos, sol) in solutions.into_iter().enumerate() {
        for (li, x) in sol?.into_iter().enumerate() {
            h[transient[li] * k + pos] = snap(x, cfg.solve_tol);
        }
    }
    Ok(Absorption { closed_ids, h })
}

/// `f_ij` for every positive-recurrent column, and for transient columns too
/// when `transient_targets` is set.
pub fn hitting_probabilities(
    p: &StochasticMatrix,
    structure: &ClassStructure,
    cfg: &SolveConfig,
    transient_targets: bool,
) -> Result<HittingMatrix, SolveError> {
    let n = p.n_states();
    let absorption = absorption_probabilities(p, structure, cfg)?;
    let mut f = vec![0.0; n * n];
    let mut computed = vec![false; n];

    for (pos, &cid) in absorption.closed_ids.iter().enumerate() {
        for &j in &structure.classes[cid].members {
            computed[j] = true;
            for i in 0..n {
                f[i * n + j] = absorption.get(i, pos);
            }
        }
    }

    if transient_targets {
        let targets = structure.transient_states();
        let preds = predecessors(p);
        let cols = cfg
            .execution
            .map(targets.len(), |t| transient_target_column(p, &preds, targets[t], cfg));
        for (t, col) in cols.into_iter().enumerate() {
            let j = targets[t];
            for (i, x) in col?.into_iter().enumerate() {
                f[i * n + j] = x;
            }
            computed[j] = true;
        }
    }

    Ok(HittingMatrix { n, f, computed, absorption })
}

/// Column `f_{., j}` for a transient target: first-step analysis with `j`
/// absorbing, restricted to states that can reach `j`.
fn transient_target_column(
    p: &StochasticMatrix,
    preds: &[Vec<usize>],
    j: usize,
    cfg: &SolveConfig,
) -> Result<Vec<f64>, SolveError> {
    let n = p.n_states();
    let mut reaches = vec![false; n];
    let mut queue: Vec<usize> = preds[j].clone();
    for &i in &queue {
        reaches[i] = true;
    }
    while let Some(v) = queue.pop() {
        for &u in &preds[v] {
            if !reaches[u] {
                reaches[u] = true;
                queue.push(u);
            }
        }
    }
    // Every state that reaches a transient state is itself transient.
    let unknowns: Vec<usize> = (0..n).filter(|&i| reaches[i] && i != j).collect();
    let local = LocalIndex::new(n, &unknowns);
    let b: Vec<f64> = unknowns.iter().map(|&i| p.get(i, j)).collect();
    let context = || format!("hitting probabilities of transient state {j}");

    let u = if unknowns.is_empty() {
        Vec::new()
    } else if unknowns.len() <= cfg.direct_cutoff {
        let a = transient_block(p, &unknowns, &local);
        let lu = Lu::factor(a.clone()).map_err(|_| SolveError::SingularSystem {
            context: context(),
            residual: f64::INFINITY,
        })?;
        let x = lu.solve(&b);
        let r = residual(&a, &x, &b);
        if !(r < cfg.solve_tol) {
            return Err(SolveError::SingularSystem { context: context(), residual: r });
        }
        x
    } else {
        jacobi(p, &unknowns, &local, &b, cfg).map_err(|e| with_context(e, context()))?
    };

    let mut col = vec![0.0; n];
    for (li, &i) in unknowns.iter().enumerate() {
        col[i] = snap(u[li], cfg.solve_tol);
    }
    // Return probability: first step into j, or into a state that reaches it.
    let ret = p.row(j).fold(0.0, |acc, (k, prob)| {
        acc + prob * if k == j { 1.0 } else { local.get(k).map_or(0.0, |lk| u[lk]) }
    });
    col[j] = snap(ret, cfg.solve_tol);
    Ok(col)
}

/// `I - Q` where `Q` is `P` restricted to `states`.
fn transient_block(p: &StochasticMatrix, states: &[usize], local: &LocalIndex) -> Dense {
    let mut a = Dense::zeros(states.len());
    for (li, &i) in states.iter().enumerate() {
        *a.at_mut(li, li) += 1.0;
        for (j, prob) in p.row(i) {
            if let Some(lj) = local.get(j) {
                *a.at_mut(li, lj) -= prob;
            }
        }
    }
    a
}

/// Fixed point of `x = Q x + b`, started from zero.
fn jacobi(
    p: &StochasticMatrix,
    states: &[usize],
    local: &LocalIndex,
    b: &[f64],
    cfg: &SolveConfig,
) -> Result<Vec<f64>, SolveError> {
    let mut x = vec![0.0; states.len()];
    let mut next = vec![0.0; states.len()];
    for iters in 0..cfg.max_iters {
        let mut delta = 0.0f64;
        for (li, &i) in states.iter().enumerate() {
            let mut v = b[li];
            for (j, prob) in p.row(i) {
                if let Some(lj) = local.get(j) {
                    v += prob * x[lj];
                }
            }
            delta = delta.max((v - x[li]).abs());
            next[li] = v;
        }
        std::mem::swap(&mut x, &mut next);
        if delta < cfg.solve_tol {
            return Ok(x);
        }
        if iters + 1 == cfg.max_iters {
            return Err(SolveError::NoConvergence {
                context: String::new(),
                iterations: cfg.max_iters,
                last_delta: delta,
            });
        }
    }
    Err(SolveError::NoConvergence {
        context: String::new(),
        iterations: 0,
        last_delta: f64::INFINITY,
    })
}

fn with_context(e: SolveError, context: String) -> SolveError {
    match e {
        SolveError::NoConvergence { iterations, last_delta, .. } => SolveError::NoConvergence {
            context,
            iterations,
            last_delta,
        },
        SolveError::SingularSystem { residual, .. } => SolveError::SingularSystem { context, residual },
    }
}

fn predecessors(p: &StochasticMatrix) -> Vec<Vec<usize>> {
    let mut preds = vec![Vec::new(); p.n_states()];
    for i in 0..p.n_states() {
        for &j in p.row_cols(i) {
            preds[j].push(i);
        }
    }
    preds
}

/// Clamp to `[0, 1]`, snapping values within `tol` of either end.
fn snap(x: f64, tol: f64) -> f64 {
    if x < tol {
        0.0
    } else if x > 1.0 - tol {
        1.0
    } else {
        x
    }
}

/// Global index -> position within a subset.
struct LocalIndex(Vec<u32>);

impl LocalIndex {
    const NONE: u32 = u32::MAX;

    fn new(n: usize, subset: &[usize]) -> Self {
        let mut v = vec![Self::NONE; n];
        for (k, &i) in subset.iter().enumerate() {
            v[i] = k as u32;
        }
        LocalIndex(v)
    }

    #[inline]
    fn get(&self, i: usize) -> Option<usize> {
        let k = self.0[i];
        (k != Self::NONE).then_some(k as usize)
    }
}
