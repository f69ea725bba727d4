use std::collections::HashMap;

use gwbart::bart::{enumerate_posterior, leaf_marginal_loglik, oracle_schedule, run_chain, BartConfig};
use gwbart::branching::dwass_progeny_pmf;
use gwbart::data::{load_dataset, write_dataset};
use gwbart::kd::{build_kd_tree, chop_ensemble, ensemble_heights, kd_prior_mass, project_step_function};
use gwbart::prior::{sample_tree, tree_log_prior, DEFAULT_MAX_NODES};
use gwbart::survival::simulate_prior;
use gwbart::tree::TreeKey;
use gwbart::{stream_rng, BinaryTreePartition, Design, SplitRule, SplitSchedule};
use rand_distr::{Distribution, StandardNormal};

fn within(observed: f64, expected: f64, draws: f64, z: f64) -> bool {
    let se = (expected * (1.0 - expected) / draws).sqrt();
    (observed - expected).abs() <= z * se + 1e-12
}

#[test]
fn homogeneous_progeny_matches_closed_form() {
    let s = SplitSchedule::table(vec![0.3]).unwrap();
    let draws = 100_000;
    let sample = simulate_prior(&s, draws, 11, DEFAULT_MAX_NODES).unwrap();
    for k in [1, 3, 5, 7, 9] {
        assert!(within(sample.progeny_pmf(k), dwass_progeny_pmf(0.3, k), draws as f64, 4.5), "k={k}");
    }
    assert_eq!(sample.progeny_pmf(2), 0.0);
}

#[test]
fn geometric_generation_means_match_product() {
    let s = SplitSchedule::geometric(0.4).unwrap();
    let sample = simulate_prior(&s, 100_000, 5, DEFAULT_MAX_NODES).unwrap();
    let mut mean = 1.0;
    for t in 0..4 {
        let est = sample.generation_mean(t);
        assert!((est.value - mean).abs() < 5.0 * est.se + 1e-12, "t={t}: {} vs {mean}", est.value);
        mean *= 2.0 * s.split_probability(t as u32);
    }
}

#[test]
fn tree_frequencies_match_exact_prior() {
    let design = Design::from_column(&[0.1, 0.3, 0.6, 0.9]).unwrap();
    let s = SplitSchedule::geometric(0.45).unwrap();
    let draws = 1_000_000;
    let mut rng = stream_rng(21, 0);
    let mut counts: HashMap<TreeKey, (BinaryTreePartition, u64)> = HashMap::new();
    for _ in 0..draws {
        let (tree, _) = sample_tree(&s, &design, &mut rng, DEFAULT_MAX_NODES).unwrap();
        counts.entry(tree.key()).or_insert((tree, 0)).1 += 1;
    }
    let mut total_mass = 0.0;
    for (tree, hits) in counts.values() {
        let p = tree_log_prior(tree, &s, &design).unwrap().exp();
        total_mass += p;
        assert!(within(*hits as f64 / draws as f64, p, draws as f64, 5.0), "{:?}", tree.bfs_rules());
    }
    // every tree on four points is reachable within a million draws save negligible mass
    assert!(total_mass > 0.999, "{total_mass}");
}

#[test]
fn leaf_marginal_matches_quadrature() {
    let r = [0.3, -0.2, 1.1, 0.45];
    let (sigma2, tau2) = (0.5f64, 2.0f64);
    let log_density = |mu: f64| {
        let lik: f64 = r
            .iter()
            .map(|x| -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln() - (x - mu).powi(2) / (2.0 * sigma2))
            .sum();
        lik - 0.5 * (2.0 * std::f64::consts::PI * tau2).ln() - mu * mu / (2.0 * tau2)
    };
    // composite Simpson on [-15, 15]
    let m = 20_000;
    let h = 30.0 / m as f64;
    let integral: f64 = (0..=m)
        .map(|i| {
            let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            w * log_density(-15.0 + i as f64 * h).exp()
        })
        .sum::<f64>()
        * h
        / 3.0;
    let exact = leaf_marginal_loglik(&r, sigma2, tau2);
    assert!((exact - integral.ln()).abs() < 1e-8, "{exact} vs {}", integral.ln());
}

#[test]
fn pure_noise_keeps_trees_small() {
    let design = Design::regular_grid_1d(200).unwrap();
    let mut rng = stream_rng(4, 1);
    let y: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut config = BartConfig::new(10, SplitSchedule::geometric(0.25).unwrap());
    config.sweeps = 400;
    config.burn_in = 100;
    let result = run_chain(&design, &y, &config, &mut stream_rng(4, 2)).unwrap();
    assert!(result.mean_max_leaves() < 5.0, "{}", result.mean_max_leaves());
}

#[test]
fn step_posterior_mode_is_the_true_split() {
    let design = Design::regular_grid_1d(20).unwrap();
    let y: Vec<f64> = (0..20).map(|i| if i < 10 { -1.0 } else { 1.0 }).collect();
    let table = enumerate_posterior(&design, &y, &oracle_schedule(), 0.1, 1.0, 1_000_000).unwrap();
    let mode = table.entries.iter().max_by(|a, b| a.probability.total_cmp(&b.probability)).unwrap();
    assert_eq!(mode.tree.leaf_count(), 2);
    assert_eq!(mode.tree.node(0).split, Some(SplitRule::new(0, design.get(9, 0))));
}

#[test]
fn kd_projection_error_halves_per_round() {
    let design = Design::regular_grid_1d(256).unwrap();
    let target: Vec<f64> = (0..256).map(|i| design.get(i, 0)).collect();
    let errors: Vec<f64> = (1..=5)
        .map(|s| project_step_function(&build_kd_tree(&design, s).unwrap().tree, &design, &target).unwrap().error)
        .collect();
    for w in errors.windows(2) {
        assert!((w[1] / w[0] - 0.5).abs() < 0.02, "{errors:?}");
    }
}

#[test]
fn leaf_means_are_the_least_squares_fit() {
    let design = Design::scrambled_grid(64, 2).unwrap();
    let target: Vec<f64> = (0..64).map(|i| (6.0 * design.get(i, 0)).sin() + design.get(i, 1).powi(2)).collect();
    let kd = build_kd_tree(&design, 2).unwrap();
    let fit = project_step_function(&kd.tree, &design, &target).unwrap();
    let assign = kd.tree.leaf_assignment(&design);
    for leaf in 0..kd.leaf_count() {
        for delta in [-0.01, 0.01] {
            let err: f64 = (0..64)
                .map(|i| {
                    let v = fit.leaf_values[assign[i]] + if assign[i] == leaf { delta } else { 0.0 };
                    (target[i] - v).powi(2)
                })
                .sum::<f64>()
                / 64.0;
            assert!(err.sqrt() > fit.error);
        }
    }
}

#[test]
fn chopped_ensemble_reproduces_kd_fit() {
    let design = Design::regular_grid_1d(64).unwrap();
    let kd = build_kd_tree(&design, 3).unwrap();
    let target: Vec<f64> = (0..64).map(|i| design.get(i, 0).sqrt()).collect();
    let fit = project_step_function(&kd.tree, &design, &target).unwrap();
    let chopped = chop_ensemble(&kd, 2).unwrap();
    for c in &chopped {
        assert!((4..=8).contains(&c.tree.leaf_count()), "{}", c.tree.leaf_count());
    }
    let heights = ensemble_heights(&kd, &chopped, &design, &fit);
    for i in 0..64 {
        let total: f64 = chopped
            .iter()
            .zip(&heights)
            .map(|(c, h)| h[c.tree.leaf_assignment(&design)[i]])
            .sum();
        assert!((total - fit.fitted[i]).abs() < 1e-12);
    }
}

#[test]
fn kd_prior_mass_hand_example() {
    let design = Design::from_column(&[0.125, 0.375, 0.625, 0.875]).unwrap();
    let s = SplitSchedule::geometric(0.3).unwrap();
    let kd = build_kd_tree(&design, 1).unwrap();
    let mass = kd_prior_mass(&kd, &s, &design).unwrap();
    // root: p(0) = 0.3 times one of three thresholds; two splittable leaves at depth 1
    assert!((mass.exact - (0.3f64 / 3.0 * 0.91 * 0.91).ln()).abs() < 1e-12);
    assert!((mass.per_depth_bound - (0.7f64 * 0.7 * 0.3 / 4.0).ln()).abs() < 1e-12);
    assert!(mass.exact_dominates_per_depth());
}

#[test]
fn dataset_round_trips_through_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let design = Design::scrambled_grid(17, 3).unwrap();
    let y: Vec<f64> = (0..17).map(|i| i as f64 * 0.37 - 2.0).collect();
    write_dataset(&design, &y, std::fs::File::create(&path).unwrap()).unwrap();
    let (back, y_back) = load_dataset(&path).unwrap();
    assert_eq!(back, design);
    assert_eq!(y_back, y);
}
