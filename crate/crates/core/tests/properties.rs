use gwbart::prior::{sample_tree, tree_log_prior, DEFAULT_MAX_NODES};
use gwbart::{stream_rng, BinaryTreePartition, Design, SplitSchedule};
use proptest::prelude::*;

fn schedule() -> impl Strategy<Value = SplitSchedule> {
    prop_oneof![
        (0.05f64..0.99, 0.0f64..3.0).prop_map(|(a, g)| SplitSchedule::polynomial(a, g).unwrap()),
        (0.01f64..0.49).prop_map(|a| SplitSchedule::geometric(a).unwrap()),
        prop::collection::vec(0.0f64..=1.0, 1..5)
            .prop_map(|mut p| {
                p.push(0.0);
                SplitSchedule::table(p).unwrap()
            }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sampled_trees_are_consistent(
        s in schedule(),
        (p, values) in (1usize..4).prop_flat_map(|p| (Just(p), prop::collection::vec(0.0f64..=1.0, p..60 * p))),
        seed in any::<u64>(),
    ) {
        let n = values.len() / p;
        let design = Design::new(n, p, values[..n * p].to_vec()).unwrap();
        let (tree, m) = sample_tree(&s, &design, &mut stream_rng(seed, 0), DEFAULT_MAX_NODES).unwrap();
        prop_assert_eq!(m.check(), Ok(()));
        prop_assert_eq!(2 * m.leaves, m.total_nodes + 1);
        prop_assert_eq!(tree.leaf_count(), m.leaves);
        prop_assert_eq!(m.generation_sizes.iter().sum::<usize>(), tree.node_count());

        let lp = tree_log_prior(&tree, &s, &design).unwrap();
        prop_assert!(lp.is_finite() && lp <= 0.0);

        // Leaf cells partition the design the same way routing does.
        let cells = tree.leaf_cells(p);
        for (i, leaf) in tree.leaf_assignment(&design).into_iter().enumerate() {
            let owners: Vec<usize> = (0..cells.len()).filter(|&k| cells[k].contains(design.row(i))).collect();
            prop_assert_eq!(owners, vec![leaf]);
        }

        let text = serde_json::to_string(&tree).unwrap();
        prop_assert_eq!(serde_json::from_str::<BinaryTreePartition>(&text).unwrap(), tree);
    }

    #[test]
    fn schedules_round_trip_through_json(s in schedule(), cap in proptest::option::of(0u32..6)) {
        let s = match cap { Some(d) => s.with_max_depth(d), None => s };
        let back: SplitSchedule = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        for d in 0..10 {
            prop_assert_eq!(back.split_probability(d), s.split_probability(d));
        }
        prop_assert_eq!(back, s);
    }

    #[test]
    fn split_probabilities_stay_in_unit_interval(s in schedule(), d in 0u32..200) {
        let q = s.split_probability(d);
        prop_assert!((0.0..=1.0).contains(&q));
    }
}
