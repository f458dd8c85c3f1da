use std::collections::BTreeMap;

use ral_core::backends::{ClusterConfig, WorldSpec};
use ral_core::experiment::{
    compare_strategies, curves_from_csv, curves_to_csv, run_al_experiment, run_dir, summarize, summary_to_csv,
    ExperimentConfig,
};
use ral_core::pool::SamplePool;
use ral_core::strategies::StrategyKind;
use ral_core::Error;

fn small() -> ExperimentConfig {
    ExperimentConfig {
        backend: WorldSpec::Cluster(ClusterConfig { clusters: 4, per_cluster: 15, dim: 3, spread: 0.3, seed: 0 }),
        initial_labeled: 4,
        budget: 4,
        cycles: 3,
        rl_iterations: 15,
        lut_size: 12,
        seeds: vec![0, 1],
        ..ExperimentConfig::default()
    }
}

#[test]
fn zero_cycles_gives_initial_point_only() {
    let config = ExperimentConfig { cycles: 0, ..small() };
    for s in StrategyKind::ALL {
        let r = run_al_experiment(&config, s, 0).unwrap();
        assert_eq!(r.curve.len(), 1);
        assert_eq!((r.curve[0].cycle, r.curve[0].labeled), (0, 4));
    }
}

#[test]
fn matrix_row_count_and_order() {
    let config = ExperimentConfig {
        strategies: vec![StrategyKind::Random, StrategyKind::Coreset],
        seeds: vec![0, 1, 2],
        cycles: 5,
        initial_labeled: 4,
        budget: 4,
        ..small()
    };
    let rows = compare_strategies(&config).unwrap();
    assert_eq!(rows.len(), 36);
    let keys: Vec<_> = rows.iter().map(|r| (r.strategy.clone(), r.seed, r.cycle)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    for w in rows.windows(2) {
        if w[0].strategy == w[1].strategy && w[0].seed == w[1].seed {
            assert!(w[1].labeled > w[0].labeled);
        }
    }
}

#[test]
fn csv_round_trips_and_summary_matches_recomputation() {
    let rows = compare_strategies(&small()).unwrap();
    let text = curves_to_csv(&rows);
    assert_eq!(curves_from_csv(&text).unwrap(), rows);

    // Independent recomputation: group, mean, population std.
    let mut groups: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for r in &rows {
        groups.entry((r.strategy.clone(), r.cycle)).or_default().push(r.performance);
    }
    let summary = summarize(&rows);
    assert_eq!(summary.len(), groups.len());
    for s in &summary {
        let v = &groups[&(s.strategy.clone(), s.cycle)];
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        assert!((s.mean - mean).abs() < 1e-12 && (s.std - std).abs() < 1e-12);
        assert_eq!(s.seeds, v.len());
    }
    assert!(summary_to_csv(&summary).lines().count() == summary.len() + 1);
}

#[test]
fn runs_replay_exactly() {
    let config = small();
    let a = run_al_experiment(&config, StrategyKind::Mgral, 1).unwrap();
    let b = run_al_experiment(&config, StrategyKind::Mgral, 1).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.iterations.len(), 3);
    assert!(a.iterations.iter().all(|c| c.len() == 15));
}

#[test]
fn adding_a_strategy_does_not_perturb_others() {
    let base = ExperimentConfig { strategies: vec![StrategyKind::Random, StrategyKind::Coreset], ..small() };
    let more = ExperimentConfig { strategies: StrategyKind::ALL.to_vec(), ..small() };
    let a = compare_strategies(&base).unwrap();
    let b: Vec<_> = compare_strategies(&more)
        .unwrap()
        .into_iter()
        .filter(|r| r.strategy == "random" || r.strategy == "coreset")
        .collect();
    assert_eq!(a, b);
}

#[test]
fn run_directory_holds_replay_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        strategies: vec![StrategyKind::Mgral, StrategyKind::Random],
        seeds: vec![3],
        output_dir: Some(dir.path().to_path_buf()),
        ..small()
    };
    compare_strategies(&config).unwrap();
    let run = run_dir(dir.path(), StrategyKind::Mgral, 3);
    for f in [
        "config.json",
        "world.json",
        "lut-cycle-0.jsonl",
        "lut-cycle-2.jsonl",
        "iterations.jsonl",
        "agent.json",
        "curve.csv",
    ] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    assert!(dir.path().join("curves.csv").exists() && dir.path().join("summary.csv").exists());

    // The snapshots regenerate the same world and config.
    let world = WorldSpec::load(&run.join("world.json")).unwrap();
    assert_eq!(world, config.world_for(3));
    assert_eq!(ExperimentConfig::load(&run.join("config.json")).unwrap(), config);
    let log = std::fs::read_to_string(run.join("iterations.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3 * 15);
}

#[test]
fn pool_snapshot_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let world = small().world_for(0).generate().unwrap();
    let pool = world.pool().label(&[2, 9, 11]).unwrap();
    let path = dir.path().join("pool.json");
    pool.save(&path).unwrap();
    let back = SamplePool::load(&path).unwrap();
    assert_eq!(back, pool);
    assert_eq!(back.fingerprint(), pool.fingerprint());
}

#[test]
fn invalid_configs_fail_before_work() {
    let too_big = ExperimentConfig { budget: 30, cycles: 3, ..small() };
    assert!(matches!(run_al_experiment(&too_big, StrategyKind::Random, 0), Err(Error::Config(_))));
    let no_seeds = ExperimentConfig { seeds: vec![], ..small() };
    assert!(matches!(compare_strategies(&no_seeds), Err(Error::Config(_))));
}
