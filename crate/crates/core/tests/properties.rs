use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sgi_core::adapt::{random_policy, RandomPolicy, UcbState};
use sgi_core::env::{rollout_episode, CostModel, EnvConfig, EpisodeState, Observation, StepBudget, Trajectory};
use sgi_core::graph::{
    for_each_assignment, generate_graph, logical_equivalence, parse_graph, serialize_graph, Literal, Preset, SopExpr,
    SubtaskGraph,
};
use sgi_core::grprop::{choose_by_gradient, soft_and, soft_or, ActionMode};
use sgi_core::harness::{coverage, precondition_prf, PrfMode};
use sgi_core::infer::{build_datasets, fit_cart, infer_rewards, split_impurity, DecisionTree, EligibilityDataset};

const N: usize = 6;

fn raw_terms(n: usize) -> impl Strategy<Value = Vec<Vec<(usize, bool)>>> {
    prop::collection::vec(prop::collection::vec((0..n, any::<bool>()), 0..4), 0..4)
}

fn to_literals(raw: &[Vec<(usize, bool)>]) -> Vec<Vec<Literal>> {
    raw.iter().map(|t| t.iter().map(|&(i, neg)| Literal { index: i, negated: neg }).collect()).collect()
}

fn naive_eval(raw: &[Vec<(usize, bool)>], x: &[bool]) -> bool {
    raw.iter().any(|t| t.iter().all(|&(i, neg)| x[i] != neg))
}

fn preset_graph() -> impl Strategy<Value = SubtaskGraph> {
    (0usize..4, any::<u64>()).prop_map(|(p, seed)| {
        let preset = [Preset::D1, Preset::D2, Preset::D3, Preset::D4][p];
        generate_graph(&preset.config(), seed).unwrap()
    })
}

/// Plain Gini impurity of a label multiset.
fn gini(labels: &[bool]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let p = labels.iter().filter(|&&y| y).count() as f64 / labels.len() as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

proptest! {
    #[test]
    fn canonical_form_preserves_semantics(raw in raw_terms(N)) {
        let e = SopExpr::from_terms(to_literals(&raw));
        for_each_assignment(N, |x| assert_eq!(e.eval(x), naive_eval(&raw, x)));
    }

    #[test]
    fn canonical_form_is_idempotent(raw in raw_terms(N)) {
        let e = SopExpr::from_terms(to_literals(&raw));
        // TRUE has no term list to rebuild from.
        if e != SopExpr::True {
            let again = SopExpr::from_terms(e.terms().iter().map(|t| t.literals().to_vec()));
            prop_assert_eq!(e.clone(), again);
        }
    }

    #[test]
    fn equivalence_reflexive_and_symmetric(a in raw_terms(N), b in raw_terms(N)) {
        let (a, b) = (SopExpr::from_terms(to_literals(&a)), SopExpr::from_terms(to_literals(&b)));
        prop_assert!(logical_equivalence(&a, &a, N).unwrap().0);
        prop_assert_eq!(logical_equivalence(&a, &b, N).unwrap(), logical_equivalence(&b, &a, N).unwrap());
    }

    #[test]
    fn text_round_trip(g in preset_graph()) {
        let text = serialize_graph(&g);
        let parsed = parse_graph(&text).unwrap();
        prop_assert_eq!(&parsed, &g);
        prop_assert_eq!(serialize_graph(&parsed), text);
    }

    #[test]
    fn soft_or_bounded_and_symmetric(mut v in prop::collection::vec(0.0f64..1.0, 1..8), w in 0.1f64..5.0) {
        let out = soft_or(&v, w).unwrap();
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(out >= lo - 1e-12 && out <= hi + 1e-12);
        v.reverse();
        prop_assert!((soft_or(&v, w).unwrap() - out).abs() < 1e-12);
    }

    #[test]
    fn soft_and_monotone(v in prop::collection::vec(0.0f64..1.0, 1..8), k in 0usize..8, bump in 0.0f64..1.0) {
        let k = k % v.len();
        let mut up = v.clone();
        up[k] = (up[k] + bump).min(1.0);
        let (a, b) = (soft_and(&v, 3.0).unwrap(), soft_and(&up, 3.0).unwrap());
        prop_assert!(b >= a - 1e-12);
        prop_assert!(a > 0.0 && a <= 1.0 + 1e-12);
    }

    #[test]
    fn gradient_choice_respects_mask_and_scale(
        grad in prop::collection::vec(-5.0f64..5.0, N),
        e in prop::collection::vec(any::<bool>(), N),
        x in prop::collection::vec(any::<bool>(), N),
        scale in 0.01f64..100.0,
        seed in any::<u64>(),
    ) {
        let obs = Observation { x, e, step_remaining: 1, epi_remaining: 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if !obs.has_legal() {
            prop_assert!(choose_by_gradient(&grad, &obs, 40.0, ActionMode::Sample, &mut rng).is_err());
            return Ok(());
        }
        let a = choose_by_gradient(&grad, &obs, 40.0, ActionMode::Sample, &mut rng).unwrap();
        prop_assert!(obs.is_legal(a));
        let best = choose_by_gradient(&grad, &obs, 40.0, ActionMode::Argmax, &mut rng).unwrap();
        let scaled: Vec<f64> = grad.iter().map(|g| g * scale).collect();
        prop_assert_eq!(choose_by_gradient(&scaled, &obs, 40.0, ActionMode::Argmax, &mut rng).unwrap(), best);
    }

    #[test]
    fn ucb_counts_track_steps(obs in prop::collection::vec(prop::collection::vec(any::<bool>(), 2 * N), 0..40)) {
        let mut s = UcbState::new(N);
        let mut distinct = std::collections::HashSet::new();
        let mut paid = 0;
        for (t, v) in obs.iter().enumerate() {
            let (e, x) = v.split_at(N);
            if s.intrinsic_reward(x, e) > 0.0 {
                paid += 1;
            }
            let novel = s.update_counts(e, x).unwrap();
            prop_assert_eq!(novel, distinct.insert(x.to_vec()));
            let total: u64 = s.counts().iter().map(|c| c[0] + c[1]).sum();
            prop_assert_eq!(total, (N * (t + 1 + 2)) as u64);
        }
        prop_assert_eq!(paid, distinct.len());
    }

    #[test]
    fn ucb_weight_monotone(n0 in 1u64..50, n1 in 1u64..50) {
        let w = |c: [u64; 2]| UcbState::with_counts(vec![c]).ucb_weight(&[true]);
        prop_assert!(w([n0, n1 + 1]) < w([n0, n1]));
        prop_assert!(w([n0 + 1, n1]) > w([n0, n1]));
    }

    #[test]
    fn cart_root_split_minimizes_impurity(
        rows in prop::collection::vec((prop::collection::vec(any::<bool>(), N), any::<bool>()), 2..40),
    ) {
        let mut ds = EligibilityDataset::new(0, N);
        ds.rows = rows;
        let tree = fit_cart(&ds);
        if let DecisionTree::Split { var, .. } = tree {
            let refs: Vec<&(Vec<bool>, bool)> = ds.rows.iter().collect();
            let weighted = |v: usize| {
                let ones: Vec<bool> = ds.rows.iter().filter(|r| r.0[v]).map(|r| r.1).collect();
                let zeros: Vec<bool> = ds.rows.iter().filter(|r| !r.0[v]).map(|r| r.1).collect();
                if ones.is_empty() || zeros.is_empty() {
                    return None;
                }
                let n = ds.rows.len() as f64;
                Some((ones.len() as f64 * gini(&ones) + zeros.len() as f64 * gini(&zeros)) / n)
            };
            let chosen = weighted(var).unwrap();
            prop_assert!((split_impurity(&refs, var).unwrap() - chosen).abs() < 1e-12);
            for v in 0..N {
                if let Some(g) = weighted(v) {
                    prop_assert!(chosen <= g + 1e-9);
                }
            }
        }
    }

    #[test]
    fn cart_fits_consistent_data(raw in raw_terms(N), xs in prop::collection::vec(prop::collection::vec(any::<bool>(), N), 1..40)) {
        let truth = SopExpr::from_terms(to_literals(&raw));
        let mut ds = EligibilityDataset::new(0, N);
        for x in &xs {
            if !ds.rows.iter().any(|r| &r.0 == x) {
                ds.rows.push((x.clone(), truth.eval(x)));
            }
        }
        let tree = fit_cart(&ds);
        for (x, y) in &ds.rows {
            prop_assert_eq!(tree.eval(x), *y);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rollouts_respect_env_invariants(g in preset_graph(), seed in any::<u64>(), lo in 1usize..4, hi in 4usize..7) {
        let env = EnvConfig {
            step_budget: StepBudget::PerSubtask(0.5, 2.0),
            cost_model: CostModel::UniformInt(lo, hi),
            ..EnvConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ep = EpisodeState::reset(&g, &env, 1, &mut rng).unwrap();
        let budget = ep.observation().step_remaining;
        let mut executed = 0usize;
        while !ep.is_done() {
            let before = ep.observation().clone();
            let a = random_policy(&before, &mut rng).unwrap();
            ep.step(a, &mut rng).unwrap();
            executed += 1;
            let after = ep.observation();
            for i in 0..g.len() {
                prop_assert!(!before.x[i] || after.x[i]);
            }
            prop_assert_eq!(&after.e, &g.eval_eligibility(&after.x).unwrap());
            prop_assert!(after.step_remaining <= before.step_remaining);
        }
        prop_assert!((executed - 1) * lo < budget);
    }

    #[test]
    fn inferred_rewards_and_coverage_match_recount(g in preset_graph(), seed in any::<u64>()) {
        let env = EnvConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut traj = Trajectory::new();
        for k in 0..3 {
            rollout_episode(&g, &env, &mut RandomPolicy, &mut traj, 3 - k, &mut rng).unwrap();
        }
        let n = g.len();
        let (est, counts) = infer_rewards(&traj, n);
        for i in 0..n {
            let rs: Vec<f64> = traj.steps().filter(|s| s.option == i).map(|s| s.reward).collect();
            prop_assert_eq!(counts[i], rs.len());
            match est[i] {
                Some(m) => prop_assert!((m - rs.iter().sum::<f64>() / rs.len() as f64).abs() < 1e-12),
                None => prop_assert!(rs.is_empty()),
            }
        }
        let mut hit = vec![false; n];
        let mut mark = |x: &[bool], e: &[bool]| {
            for (i, h) in hit.iter_mut().enumerate() {
                *h |= x[i] || e[i];
            }
        };
        for ep in &traj.episodes {
            for s in &ep.steps {
                mark(&s.x, &s.e);
            }
            let (x, e) = ep.terminal.as_ref().unwrap();
            mark(x, e);
        }
        let expected = hit.iter().filter(|&&h| h).count() as f64 / n as f64;
        prop_assert!((coverage(&traj, n) - expected).abs() < 1e-12);

        // Labels in every dataset agree with the true graph.
        for ds in build_datasets(&traj, n).unwrap() {
            for (x, y) in &ds.rows {
                prop_assert_eq!(*y, g.subtask(ds.subtask).precondition.eval(x));
            }
        }
    }

    #[test]
    fn prf_all_true_precision_is_eligible_fraction(g in preset_graph()) {
        let n = g.len();
        let all_true = vec![SopExpr::True; n];
        let (p, r) = precondition_prf(&g, &all_true, PrfMode::default()).unwrap();
        let mut eligible = 0u64;
        for_each_assignment(n, |x| {
            eligible += g.preconditions().filter(|pre| pre.eval(x)).count() as u64;
        });
        prop_assert_eq!(r, 1.0);
        prop_assert!((p - eligible as f64 / (n as f64 * (1u64 << n) as f64)).abs() < 1e-12);
        let same: Vec<SopExpr> = g.preconditions().cloned().collect();
        prop_assert_eq!(precondition_prf(&g, &same, PrfMode::default()).unwrap(), (1.0, 1.0));
    }
}

#[test]
fn random_policy_is_uniform() {
    let obs =
        Observation { x: vec![false, false, true], e: vec![true, true, true], step_remaining: 1, epi_remaining: 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let draws = 10_000;
    let zeros = (0..draws).filter(|_| random_policy(&obs, &mut rng).unwrap() == 0).count();
    let freq = zeros as f64 / draws as f64;
    assert!((freq - 0.5).abs() <= 0.02, "{freq}");
}
