#![allow(dead_code)]

use ergode::chain::{ChainSpec, Distribution, StateSpace, StochasticMatrix, DEFAULT_ROW_TOL};
use ergode::Dense;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random chain with at most `max_states` states and a mixed class structure:
/// absorbing states, deterministic cycles, two-periodic blocks and random
/// irreducible blocks as closed classes, plus transient states that may form
/// their own open cycles. State indices are shuffled.
pub fn random_chain(seed: u64, max_states: usize) -> ChainSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut closed_states: Vec<usize> = Vec::new();

    let n_closed = rng.random_range(1..=3usize);
    for _ in 0..n_closed {
        let room = max_states.saturating_sub(rows.len() + 1);
        if room == 0 {
            break;
        }
        let base = rows.len();
        match rng.random_range(0..4) {
            0 => rows.push(vec![(base, 1.0)]),
            1 => {
                let d = rng.random_range(2..=5usize).min(room);
                for k in 0..d {
                    rows.push(vec![(base + (k + 1) % d, 1.0)]);
                }
            }
            2 if room >= 4 => {
                // Bipartite block {a0,a1} <-> {b0,b1}: period 2.
                for k in 0..4 {
                    let other = if k < 2 { [base + 2, base + 3] } else { [base, base + 1] };
                    let w = rng.random_range(0.1..1.0);
                    rows.push(vec![(other[0], w), (other[1], 1.0 - w)]);
                }
            }
            _ => {
                let d = rng.random_range(1..=5usize).min(room);
                for k in 0..d {
                    let mut row = vec![(base + (k + 1) % d, rng.random_range(0.1..1.0))];
                    for _ in 0..rng.random_range(0..3) {
                        row.push((base + rng.random_range(0..d), rng.random_range(0.1..1.0)));
                    }
                    rows.push(row);
                }
            }
        }
        closed_states.extend(base..rows.len());
    }

    let first_transient = rows.len();
    let n_transient = rng.random_range(0..=max_states - first_transient);
    let n = first_transient + n_transient;
    for t in 0..n_transient {
        // Escape route: a closed state or an earlier transient state.
        let escape = if t == 0 || rng.random_bool(0.5) {
            closed_states[rng.random_range(0..closed_states.len())]
        } else {
            first_transient + rng.random_range(0..t)
        };
        let mut row = vec![(escape, rng.random_range(0.1..1.0))];
        for _ in 0..rng.random_range(0..3) {
            row.push((rng.random_range(0..n), rng.random_range(0.1..1.0)));
        }
        rows.push(row);
    }

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut shuffled = vec![Vec::new(); n];
    for (old, row) in rows.into_iter().enumerate() {
        let total: f64 = row.iter().map(|(_, w)| w).sum();
        shuffled[perm[old]] = row.into_iter().map(|(j, w)| (perm[j], w / total)).collect();
    }
    let p = StochasticMatrix::from_rows(shuffled, DEFAULT_ROW_TOL).unwrap();

    let support = rng.random_range(1..=n.min(3));
    let weights: Vec<(usize, f64)> = (0..support)
        .map(|_| (rng.random_range(0..n), rng.random_range(0.1..1.0)))
        .collect();
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let mu0 = Distribution::from_weights(n, weights.into_iter().map(|(i, w)| (i, w / total)), DEFAULT_ROW_TOL).unwrap();
    let g = (0..n).map(|i| (i, rng.random_range(-2.0..2.0))).collect();

    ChainSpec {
        space: StateSpace::numbered(n).unwrap(),
        p,
        mu0,
        g: Some(g),
    }
}

pub fn dense_p(p: &StochasticMatrix) -> Dense {
    Dense {
        n: p.n_states(),
        data: p.to_dense().into_iter().flatten().collect(),
    }
}

/// `P(X_k = j for some 1 <= k <= horizon | X_0 = i)` for every `i`, by
/// dynamic programming over the horizon.
pub fn hit_by_horizon(p: &StochasticMatrix, j: usize, horizon: usize) -> Vec<f64> {
    let n = p.n_states();
    let mut u = vec![0.0; n];
    for _ in 0..horizon {
        let next: Vec<f64> = (0..n)
            .map(|i| p.row(i).map(|(k, w)| if k == j { w } else { w * u[k] }).sum())
            .collect();
        u = next;
    }
    u
}

pub fn max_abs(a: &Dense, b: &Dense) -> f64 {
    a.data.iter().zip(&b.data).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

pub fn splitter() -> ChainSpec {
    let raw: ergode::RawChain = serde_json::from_str(
        r#"{"states":["s","c1","c2"],
            "transitions":{"s":{"c1":0.3,"c2":0.7},"c1":{"c1":1},"c2":{"c2":1}},
            "initial":{"s":1},
            "g":{"c1":1,"c2":0}}"#,
    )
    .unwrap();
    ergode::validate_chain(&raw, DEFAULT_ROW_TOL).unwrap()
}
