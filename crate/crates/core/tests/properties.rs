//! Property tests for invariants that span modules.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use opfuzz::analysis::{aggregate, rel_cov, Axis, SeriesPoint, StrategyRun};
use opfuzz::corpus::{Corpus, EnergyConfig, ExecMeta};
use opfuzz::coverage::{Novelty, NoveltyRule};
use opfuzz::mutation::{
    apply_mutation, mutate_child, sample_mutation_site, Dictionary, LengthEffect,
    MutationOperator, MAX_INPUT,
};
use opfuzz::scheduler::{
    active_arms, empirical_distribution, ArmSet, BetaPrior, OperatorCounts, OperatorDistribution,
};

fn dictionary() -> Dictionary {
    Dictionary::new(["SEND", "QUERY", "VISUALIZE"])
}

fn operator() -> impl Strategy<Value = MutationOperator> {
    (0..MutationOperator::COUNT).prop_map(|i| MutationOperator::ALL[i])
}

fn input() -> impl Strategy<Value = Vec<u8>> {
    proptest::collection::vec(any::<u8>(), 1..200)
}

proptest! {
    #[test]
    fn operators_respect_length_effect(op in operator(), data in input(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let site = sample_mutation_site(data.len(), op.inserts(), &mut rng);
        let out = apply_mutation(op, &data, site, &mut rng, &dictionary());
        match op.length_effect() {
            LengthEffect::Preserve => prop_assert_eq!(out.len(), data.len()),
            LengthEffect::Shrink => prop_assert!(out.len() < data.len()),
            LengthEffect::Grow => prop_assert!(out.len() > data.len()),
        }
    }

    #[test]
    fn children_are_reproducible_and_bounded(
        parent in proptest::collection::vec(any::<u8>(), 0..64),
        stack in 1usize..130,
        seed in any::<u64>(),
        with_dict in any::<bool>(),
    ) {
        let dict = if with_dict { dictionary() } else { Dictionary::default() };
        let dist = OperatorDistribution::uniform(active_arms(with_dict));
        let a = mutate_child(&parent, stack, &dist, &mut ChaCha8Rng::seed_from_u64(seed), &dict);
        let b = mutate_child(&parent, stack, &dist, &mut ChaCha8Rng::seed_from_u64(seed), &dict);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.1.len(), stack);
        prop_assert!(a.0.len() <= MAX_INPUT);
        prop_assert!(a.1.operators().all(|op| with_dict || !op.uses_dictionary()));
    }

    #[test]
    fn weights_normalize(weights in proptest::collection::vec(0.0f64..100.0, MutationOperator::COUNT)) {
        prop_assume!(weights.iter().sum::<f64>() > 0.0);
        let d = OperatorDistribution::from_weights(MutationOperator::ALL.to_vec(), weights).unwrap();
        prop_assert!((d.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(d.probabilities().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn empirical_counts_normalize(
        counts in proptest::collection::vec(0u64..10_000, MutationOperator::COUNT),
        smoothing in any::<bool>(),
    ) {
        let total: u64 = counts.iter().sum();
        match empirical_distribution(&counts, smoothing) {
            Ok(p) => {
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                if !smoothing {
                    for (c, q) in counts.iter().zip(&p) {
                        prop_assert_eq!(*q, *c as f64 / total as f64);
                    }
                }
            }
            Err(_) => prop_assert!(total == 0 && !smoothing),
        }
    }

    #[test]
    fn resampled_distributions_are_valid(
        successes in proptest::collection::vec(0u64..50, MutationOperator::COUNT),
        failures in proptest::collection::vec(0u64..5000, MutationOperator::COUNT),
        seed in any::<u64>(),
    ) {
        let mut set = ArmSet::new(MutationOperator::ALL.to_vec(), BetaPrior::default());
        for (i, op) in MutationOperator::ALL.into_iter().enumerate() {
            let arm = set.get_mut(op).unwrap();
            arm.n_success = successes[i];
            arm.n_failure = failures[i];
        }
        let d = set.resample_distribution(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!((d.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(d.probabilities().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn counts_merge_additively(
        a in proptest::collection::vec(0u64..1000, MutationOperator::COUNT),
        b in proptest::collection::vec(0u64..1000, MutationOperator::COUNT),
    ) {
        let mut x = OperatorCounts::default();
        let mut y = OperatorCounts::default();
        for (i, op) in MutationOperator::ALL.into_iter().enumerate() {
            x.add(op, a[i]);
            y.add(op, b[i]);
        }
        x.merge(&y);
        prop_assert_eq!(x.total(), a.iter().sum::<u64>() + b.iter().sum::<u64>());
    }

    #[test]
    fn queue_only_grows(verdicts in proptest::collection::vec(0u8..3, 1..100), edge_only in any::<bool>()) {
        let rule = if edge_only { NoveltyRule::EdgeOnly } else { NoveltyRule::EdgeOrBucket };
        let mut corpus = Corpus::new(EnergyConfig::default());
        let mut expected = 0u64;
        for (i, v) in verdicts.iter().enumerate() {
            let verdict = [Novelty::Nothing, Novelty::NewBucket, Novelty::NewEdge][*v as usize];
            let meta = ExecMeta { discovery_time: i as u64, exec_time: 10, path_edges: 3, parent_id: None };
            let before = corpus.len();
            let added = corpus.add_if_interesting(&[*v], verdict, rule, meta).unwrap();
            prop_assert_eq!(added.is_some(), verdict.is_interesting(rule));
            if let Some(id) = added {
                prop_assert_eq!(id, expected);
                expected += 1;
            }
            prop_assert!(corpus.len() >= before);
        }
        for (i, e) in corpus.entries().iter().enumerate() {
            prop_assert_eq!(e.id, i as u64);
        }
    }

    #[test]
    fn energy_stays_in_range(
        times in proptest::collection::vec(1u64..100_000, 1..30),
        edges in proptest::collection::vec(1usize..500, 30),
    ) {
        let mut corpus = Corpus::new(EnergyConfig::default());
        for (i, t) in times.iter().enumerate() {
            let meta = ExecMeta { discovery_time: i as u64, exec_time: *t, path_edges: edges[i], parent_id: None };
            corpus.add_if_interesting(&[i as u8], Novelty::NewEdge, NoveltyRule::EdgeOrBucket, meta).unwrap();
        }
        for e in corpus.entries() {
            prop_assert!((16..=1600).contains(&corpus.score(e)));
        }
    }

    #[test]
    fn rel_cov_is_scale_free(paths in proptest::collection::vec(0u32..1000, 2..6), scale in 1u32..50) {
        prop_assume!(paths.iter().any(|&p| p > 0));
        let map = |k: u32| -> BTreeMap<String, f64> {
            paths.iter().enumerate().map(|(i, &p)| (format!("s{i}"), (p * k) as f64)).collect()
        };
        let base = rel_cov(&map(1)).unwrap();
        let scaled = rel_cov(&map(scale)).unwrap();
        for (s, v) in &base {
            prop_assert!((v - scaled[s]).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(v));
        }
        let max = *paths.iter().max().unwrap();
        for (i, &p) in paths.iter().enumerate() {
            prop_assert_eq!(base[&format!("s{i}")] == 1.0, p == max);
        }
    }

    #[test]
    fn wins_are_bounded_by_programs(
        grid in proptest::collection::vec(proptest::collection::vec(1u64..100, 3), 1..6),
    ) {
        let strategies = ["a", "b", "c"];
        let mut runs = Vec::new();
        for (p, row) in grid.iter().enumerate() {
            for (s, &paths) in strategies.iter().zip(row) {
                let series = vec![SeriesPoint { secs: 1.0, execs: 10, paths }];
                runs.push(StrategyRun::new(*s, format!("p{p}"), series, 0).unwrap());
            }
        }
        let report = aggregate(&runs, &[10.0], Axis::Execs).unwrap();
        let programs = grid.len() as u32;
        for a in 0..3 {
            prop_assert!(report.wins_all[a] <= programs);
            prop_assert_eq!(report.wins[a][a], 0);
            for b in 0..3 {
                prop_assert!(report.wins[a][b] + report.wins[b][a] <= programs);
            }
        }
        prop_assert!(report.wins_all.iter().sum::<u32>() <= programs);
    }
}
