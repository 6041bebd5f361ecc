mod common;

use common::{dense_p, hit_by_horizon, max_abs, random_chain};
use ergode::chain::{StochasticMatrix, DEFAULT_ROW_TOL};
use ergode::limits::{analyze, average_occupation_limit, finite_cesaro_at};
use ergode::solve::{absorption_probabilities, hitting_probabilities};
use ergode::structure::communicating_classes;
use ergode::{validate_chain, Classification, Dense, SolveConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn validation_is_idempotent(seed in any::<u64>()) {
        let spec = random_chain(seed, 20);
        let again = validate_chain(&spec.to_raw(), DEFAULT_ROW_TOL).unwrap();
        prop_assert_eq!(&again, &spec);
        for i in 0..spec.n_states() {
            let s: f64 = spec.p.row_probs(i).iter().sum();
            prop_assert!((s - 1.0).abs() <= DEFAULT_ROW_TOL);
            prop_assert!(spec.p.row_probs(i).iter().all(|&x| x > 0.0 && x <= 1.0));
        }
    }

    #[test]
    fn class_structure_invariants(seed in any::<u64>()) {
        let spec = random_chain(seed, 20);
        let s = communicating_classes(&spec.p);
        let n = spec.n_states();
        prop_assert_eq!(s.classes.iter().map(|c| c.members.len()).sum::<usize>(), n);
        for c in &s.classes {
            for &i in &c.members {
                prop_assert_eq!(s.class_of[i], c.id);
            }
            let inside = |i: usize| spec.p.row(i).filter(|(j, _)| s.class_of[*j] == c.id).map(|(_, w)| w).sum::<f64>();
            if c.closed {
                for &i in &c.members {
                    prop_assert!((inside(i) - 1.0).abs() <= DEFAULT_ROW_TOL);
                }
            } else {
                prop_assert!(c.members.iter().any(|&i| inside(i) < 1.0));
            }
        }
        // Topological: edges never go to an earlier class.
        for i in 0..n {
            for &j in spec.p.row_cols(i) {
                prop_assert!(s.class_of[i] <= s.class_of[j]);
            }
        }
        let first_closed = s.classes.iter().position(|c| c.closed).unwrap();
        prop_assert!(s.classes[first_closed..].iter().all(|c| c.closed));
        for i in 0..n {
            let expect = if s.classes[s.class_of[i]].closed {
                Classification::PositiveRecurrent
            } else {
                Classification::Transient
            };
            prop_assert_eq!(s.classification[i], expect);
        }
    }

    #[test]
    fn hitting_matches_dynamic_programming(seed in any::<u64>()) {
        let spec = random_chain(seed, 8);
        let s = communicating_classes(&spec.p);
        let f = hitting_probabilities(&spec.p, &s, &SolveConfig::default(), true).unwrap();
        for j in 0..spec.n_states() {
            let oracle = hit_by_horizon(&spec.p, j, 10_000);
            for (i, o) in oracle.iter().enumerate() {
                let fij = f.get(i, j).unwrap();
                prop_assert!((fij - o).abs() < 1e-6, "f[{}][{}] = {} vs {}", i, j, fij, o);
            }
        }
    }

    #[test]
    fn absorption_rows_sum_to_one(seed in any::<u64>()) {
        let spec = random_chain(seed, 20);
        let s = communicating_classes(&spec.p);
        for cfg in [SolveConfig::default(), SolveConfig { direct_cutoff: 0, ..Default::default() }] {
            let h = absorption_probabilities(&spec.p, &s, &cfg).unwrap();
            for i in 0..spec.n_states() {
                let total: f64 = h.row(i).iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn limit_report_invariants(seed in any::<u64>()) {
        let spec = random_chain(seed, 20);
        let r = analyze(&spec, &SolveConfig::default(), false).unwrap();
        let n = spec.n_states();
        let p = dense_p(&spec.p);

        // Stationary residuals and m = 1/pi.
        for cs in &r.stationary {
            let total: f64 = cs.pi.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
            for (k, &i) in cs.members.iter().enumerate() {
                let flow: f64 = cs.members.iter().enumerate().map(|(l, &j)| cs.pi[l] * spec.p.get(j, i)).sum();
                prop_assert!((flow - cs.pi[k]).abs() < 1e-10);
                prop_assert!(cs.m[k] >= 1.0 - 1e-12);
            }
        }

        // Rows sum to one; transient columns vanish.
        for i in 0..n {
            let total: f64 = r.cesaro.row(i).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-8);
        }
        for j in 0..n {
            if r.structure.classification[j] == Classification::Transient {
                prop_assert!((0..n).all(|i| r.cesaro.at(i, j) == 0.0));
            }
        }

        // Projection identities.
        prop_assert!(max_abs(&r.cesaro.matmul(&p), &r.cesaro) < 1e-8);
        prop_assert!(max_abs(&p.matmul(&r.cesaro), &r.cesaro) < 1e-8);
        prop_assert!(max_abs(&r.cesaro.matmul(&r.cesaro), &r.cesaro) < 1e-8);

        // Occupation = sum of mu0-weighted rows; equals (1/m_j) sum_i mu_i f_ij.
        let direct: Vec<f64> = (0..n)
            .map(|j| spec.mu0.iter().map(|(i, w)| w * r.cesaro.at(i, j)).sum())
            .collect();
        prop_assert_eq!(&average_occupation_limit(&r.cesaro, &spec.mu0), &r.occupation);
        for j in 0..n {
            prop_assert!((direct[j] - r.occupation[j]).abs() < 1e-10);
            if let Some(m) = r.mean_return[j] {
                let via_f: f64 = spec.mu0.iter().map(|(i, w)| w * r.hitting.get(i, j).unwrap()).sum::<f64>() / m;
                prop_assert!((via_f - r.occupation[j]).abs() < 1e-10);
            }
        }

        // Expected and pathwise g-limits agree.
        let g = spec.g_dense();
        let g_mean: f64 = g.iter().zip(&r.occupation).map(|(a, b)| a * b).sum();
        prop_assert!((g_mean - r.g_mean).abs() < 1e-10);
        let total: f64 = r.pathwise.iter().map(|a| a.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        let mean: f64 = r.pathwise.iter().map(|a| a.value * a.probability).sum();
        prop_assert!((mean - r.g_mean).abs() < 1e-8);
    }
}

#[test]
fn more_mass_into_a_class_never_lowers_its_absorption() {
    let cfg = SolveConfig::default();
    let mut checked = 0;
    for seed in 0..200u64 {
        let spec = random_chain(seed, 10);
        let s = communicating_classes(&spec.p);
        let h = absorption_probabilities(&spec.p, &s, &cfg).unwrap();
        let Some(i) = s.transient_states().first().copied() else { continue };
        for (pos, &cid) in h.closed_ids.iter().enumerate() {
            let k = s.classes[cid].members[0];
            let mut rows = spec.p.to_dense();
            rows[i][k] += 0.25;
            let total: f64 = rows[i].iter().sum();
            rows[i].iter_mut().for_each(|x| *x /= total);
            let bumped = StochasticMatrix::from_dense(&rows, DEFAULT_ROW_TOL).unwrap();
            let s2 = communicating_classes(&bumped);
            let h2 = absorption_probabilities(&bumped, &s2, &cfg).unwrap();
            let pos2 = h2.closed_ids.iter().position(|&c| s2.classes[c].members.contains(&k)).unwrap();
            for t in 0..spec.n_states() {
                assert!(
                    h2.get(t, pos2) >= h.get(t, pos) - 1e-12,
                    "seed {seed}: h[{t}] fell from {} to {}",
                    h.get(t, pos),
                    h2.get(t, pos2)
                );
            }
            let oracle = hit_by_horizon(&bumped, k, 10_000);
            assert!((oracle[i] - h2.get(i, pos2)).abs() < 1e-6 || s2.classes[s2.class_of[k]].members.len() > 1);
            checked += 1;
        }
    }
    assert!(checked > 50);
}

#[test]
fn oracle_error_shrinks_like_one_over_n() {
    for seed in 0..20u64 {
        let spec = random_chain(seed, 12);
        let r = analyze(&spec, &SolveConfig::default(), false).unwrap();
        let horizons = [100u64, 1000, 10_000];
        let runs = finite_cesaro_at(&spec.p, &spec.mu0, &horizons).unwrap();
        for fc in &runs {
            let err = max_abs(&fc.matrix, &r.cesaro);
            assert!(err < 10.0 / fc.n as f64, "seed {seed}, n {}: {err}", fc.n);
            let occ_err = fc.occupation.iter().zip(&r.occupation).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(occ_err < 10.0 / fc.n as f64);
        }
    }
}

#[test]
fn identity_chain_is_its_own_limit() {
    let p = StochasticMatrix::identity(4);
    let spec = ergode::ChainSpec {
        space: ergode::StateSpace::numbered(4).unwrap(),
        p,
        mu0: ergode::Distribution::point(0),
        g: None,
    };
    let r = analyze(&spec, &SolveConfig::default(), false).unwrap();
    assert_eq!(r.cesaro, Dense::identity(4));
}
