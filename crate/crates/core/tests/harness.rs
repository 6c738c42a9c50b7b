use cellsleep::clustering::ClusterMethod;
use cellsleep::experiment::{run_experiment, run_single, write_outputs, RunConfig};
use cellsleep::scenario::{generate_scenario, GeometryParams, RadioConfig};
use cellsleep::sim::{SimConfig, Strategy, World};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn layout(num_sbs: usize, num_ues: usize, seed: u64) -> cellsleep::network::NetworkScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geometry = GeometryParams { num_sbs, num_ues, radius_m: 500.0 };
    generate_scenario(&geometry, &RadioConfig::default(), seed, &mut rng).unwrap()
}

#[test]
fn minimum_distances_hold_over_many_layouts() {
    for seed in 0..100 {
        let sc = layout(10, 50, seed);
        // independent pairwise audit
        let md = &sc.min_distances;
        for (i, a) in sc.base_stations.iter().enumerate() {
            for b in &sc.base_stations[i + 1..] {
                let need = if a.kind == b.kind { md.small_small } else { md.macro_small };
                assert!(a.position.distance(&b.position) >= need, "seed {seed}");
            }
            for u in &sc.users {
                let need = if i == 0 { md.macro_user } else { md.small_user };
                assert!(a.position.distance(&u.position) >= need, "seed {seed}");
            }
        }
        assert!(sc.distance_violations().is_empty());
    }
}

#[test]
fn layouts_are_reproducible() {
    let a = serde_json::to_string(&layout(10, 50, 42)).unwrap();
    let b = serde_json::to_string(&layout(10, 50, 42)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, serde_json::to_string(&layout(10, 50, 43)).unwrap());
}

#[test]
fn lone_user_without_small_cells_uses_the_macro() {
    let sc = layout(0, 1, 5);
    let mut w = World::new(sc, SimConfig::default(), Strategy::RandomOnOff, 0).unwrap();
    for _ in 0..50 {
        let o = w.step().unwrap();
        assert_eq!(o.unserved, 0);
        assert!(o.load[0] > 0.0);
    }
}

#[test]
fn classical_never_sleeps_and_settles() {
    let slots = 20_000u64;
    let mut per_slot = Vec::new();
    let m = run_single(layout(10, 50, 3), &SimConfig::default(), Strategy::Classical, slots, 3, |o| {
        per_slot.push(o.cost.iter().sum::<f64>() / o.cost.len() as f64);
    })
    .unwrap();
    assert_eq!(m.off_fraction, 0.0);
    let q = &per_slot[(3 * slots / 4) as usize..];
    let (first, second) = q.split_at(q.len() / 2);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let drift = (mean(second) - mean(first)).abs() / mean(first);
    assert!(drift < 0.01, "drift {drift}");
}

#[test]
fn random_baseline_sleeps_half_the_time() {
    let slots = 10_000u64;
    let m = run_single(layout(10, 50, 4), &SimConfig::default(), Strategy::RandomOnOff, slots, 4, |_| {}).unwrap();
    let draws = 10.0 * (slots / 2) as f64;
    let sigma = (0.25 / draws).sqrt();
    assert!((m.off_fraction_sbs - 0.5).abs() < 3.0 * sigma, "{}", m.off_fraction_sbs);
}

#[test]
fn random_without_small_cells_equals_classical() {
    let sim = SimConfig::default();
    let a = run_single(layout(0, 20, 6), &sim, Strategy::Classical, 500, 6, |_| {}).unwrap();
    let b = run_single(layout(0, 20, 6), &sim, Strategy::RandomOnOff, 500, 6, |_| {}).unwrap();
    assert_eq!(a.avg_cost, b.avg_cost);
    assert_eq!(a.bs_energy, b.bs_energy);
}

#[test]
fn learning_restricted_to_all_on_equals_classical() {
    let sim = SimConfig { allow_switching: false, ..SimConfig::default() };
    let a = run_single(layout(10, 50, 8), &sim, Strategy::Classical, 1000, 8, |_| {}).unwrap();
    let b = run_single(layout(10, 50, 8), &sim, Strategy::Learning(ClusterMethod::None), 1000, 8, |_| {}).unwrap();
    assert_eq!(a.avg_cost, b.avg_cost);
    assert_eq!(a.bs_load, b.bs_load);
}

#[test]
fn sweep_outputs_are_byte_identical_across_runs() {
    let mut cfg = RunConfig::default();
    cfg.run.slots = 400;
    cfg.run.seeds = vec![1, 2];
    cfg.run.threads = 2;
    cfg.sweep.chi = vec![0.0, 6e-3];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_outputs(a.path(), &run_experiment(&cfg).unwrap()).unwrap();
    write_outputs(b.path(), &run_experiment(&cfg).unwrap()).unwrap();
    for name in ["runs.csv", "summary.json", "cdf_energy.csv", "cdf_load.csv", "clusters.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty(), "{name}");
        assert_eq!(x, y, "{name}");
    }
    let runs = std::fs::read_to_string(a.path().join("runs.csv")).unwrap();
    // header + 2 cells × 6 strategies × 2 seeds
    assert_eq!(runs.lines().count(), 1 + 24);
}

#[test]
fn failing_cells_do_not_abort_the_sweep() {
    let mut cfg = RunConfig::default();
    cfg.run.slots = 50;
    cfg.run.seeds = vec![0];
    cfg.run.strategies = vec![Strategy::Classical];
    // a negative overhead sensitivity is rejected when the layout is built
    cfg.sweep.chi = vec![3e-3, -1.0];
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.len(), 2);
    assert!(res[0].metrics.is_ok());
    assert!(res[1].metrics.is_err());
}

#[test]
fn config_files_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 2);
}
