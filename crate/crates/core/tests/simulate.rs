use proptest::prelude::*;
use sc_resilience::epidemic::{EpiParams, HealthState};
use sc_resilience::experiments::{compare_world, ExperimentConfig};
use sc_resilience::rng::SeedStream;
use sc_resilience::scenario::{EconomyKnobs, IntSpan, ScenarioSpec};
use sc_resilience::simulate::*;
use sc_resilience::strategy::StrategyMode;
use sc_resilience::world::*;
use sc_resilience::worldgen::{build_world, silence_pandemic};

/// One location, one factory selling one raw product, one consumer who also
/// works at the factory. Amounts in cents.
fn toy_world() -> World {
    World {
        products: vec![Product { price: 500, prep_time: 1, ingredients: vec![], rank: 0 }],
        locations: vec![Location {
            epi: EpiParams { beta: 0.0, theta: 5, gamma: 14, rho: 0.99 },
            consumers: 0..1,
            firms: vec![0],
        }],
        consumers: vec![Consumer {
            money: 1000,
            salary: 700,
            demand: vec![DemandEntry { product: 0, base: 1, shift: 0.0 }],
            home: 0,
            employer: Some(0),
        }],
        initial_health: vec![HealthState::SUSCEPTIBLE],
        firms: vec![Firm {
            location: 0,
            catalog: vec![CatalogItem { product: 0, price: 500, unit_cost: 0, planned_volume: 1.0 }],
            initial_money: 10_000,
            op_cost: 100,
            workers: vec![0],
            margin: 0.1,
            inputs: vec![],
            out_links: vec![],
        }],
        links: vec![],
        knobs: EconomyKnobs::default(),
    }
}

#[test]
fn toy_world_matches_hand_ledger() {
    // Every step: salary 700 in, one unit bought at 500, operating cost 100.
    // The factory starts with 2 units on the shelf and refills to
    // ceil(2 x 1 unit/step x (prep 1 + 1)) = 4 within the step.
    let w = toy_world();
    w.check_invariants().unwrap();
    let r = run_simulation(&w, 10, 3);
    let expected: Vec<i64> = (0..=10).map(|t| 10_000 + 400 * t).collect();
    assert_eq!(r.trajectories.money[0], expected);
    assert!(r.trajectories.ledger_residual.iter().all(|&x| x == 0));
    assert_eq!(r.ob, vec![10]);
    assert!((r.op[0] - 120.0).abs() < 1e-9, "{}", r.op[0]);
}

#[test]
fn op_and_ob_examples() {
    assert_eq!(compute_op(&[10_000; 6]), 100.0);
    assert_eq!(compute_op(&[0, 100, 200, 300, 400]), 2.0);
    assert_eq!(compute_ob(&[5, 3, 0, 2]), 3);
    assert_eq!(compute_ob(&[-1, 3, 4]), 0);
    let mut dip = vec![100i64; 121];
    dip[37] = -1;
    assert_eq!(compute_ob(&dip), 37);
}

proptest! {
    #[test]
    fn op_is_the_plain_average(money in prop::collection::vec(-1_000_000i64..1_000_000, 1..400)) {
        let brute = money.iter().map(|&m| m as f64 / 100.0).sum::<f64>() / money.len() as f64;
        prop_assert!((compute_op(&money) - brute).abs() < 1e-6 * (1.0 + brute.abs()));
    }

    #[test]
    fn ob_is_the_first_negative_step(money in prop::collection::vec(-100i64..1_000, 1..400)) {
        let t = compute_ob(&money);
        let scan = money.iter().position(|&m| m < 0).unwrap_or(money.len() - 1);
        prop_assert_eq!(t as usize, scan);
        prop_assert!(t as usize <= money.len() - 1);
    }

    #[test]
    fn normalization_stays_in_unit_interval(
        a in prop::collection::vec(-1_000i64..1_000, 20),
        b in prop::collection::vec(-1_000i64..1_000, 20),
    ) {
        let traj = |m: Vec<i64>| {
            let since = m.iter().position(|&x| x < 0).map(|t| t as u32);
            Trajectories { money: vec![m], bankrupt_since: vec![since], ledger_residual: vec![] }
        };
        for v in normalized_series(&traj(a), &traj(b), None) {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn normalized_performance_examples() {
    let traj = |money: Vec<Vec<i64>>| {
        let bankrupt_since = money.iter().map(|m| m.iter().position(|&x| x < 0).map(|t| t as u32)).collect();
        Trajectories { money, bankrupt_since, ledger_residual: vec![] }
    };
    let base = traj(vec![vec![100; 5], vec![100; 5]]);
    assert!(normalized_series(&base, &base, None).iter().all(|&v| v == 1.0));
    // One firm at baseline, one at zero profit and bankrupt from the start.
    let hurt = traj(vec![vec![100; 5], vec![-1; 5]]);
    assert!(normalized_series(&hurt, &base, None).iter().all(|&v| (v - 0.5).abs() < 1e-12));
    let ruined = traj(vec![vec![-1; 5], vec![-1; 5]]);
    assert!(normalized_series(&ruined, &base, None).iter().all(|&v| v == 0.0));
}

fn small_spec() -> ScenarioSpec {
    let mut spec = ScenarioSpec::desk();
    spec.locations = IntSpan::new(1, 3);
    spec
}

#[test]
fn null_pandemic_run_equals_its_baseline() {
    let spec = small_spec();
    for seed in 0..5 {
        let mut w = build_world(&spec, seed).unwrap();
        silence_pandemic(&mut w);
        let run = run_simulation(&w, 120, seed);
        let base = run_baseline(&w, 120, seed);
        assert_eq!(result_csv(&w, &run), result_csv(&w, &base));
        assert_eq!(serde_json::to_string(&run).unwrap(), serde_json::to_string(&base).unwrap());
        let first = run.epi[0].clone();
        assert!(run.epi.iter().all(|row| *row == first));
        assert!(normalized_series(&run.trajectories, &base.trajectories, None).iter().all(|&v| v == 1.0));
    }
}

#[test]
fn null_pandemic_comparison_is_flat_for_every_mode() {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario = small_spec();
    cfg.mc_samples = 6;
    cfg.panel = 1;
    cfg.modes = StrategyMode::ALL.to_vec();
    let mut w = sc_resilience::experiments::build_strategic_world(&cfg.scenario, SeedStream::new(4)).unwrap();
    silence_pandemic(&mut w);
    let run = compare_world(&w, &cfg, 0, SeedStream::new(4)).unwrap();
    for series in &run.series {
        assert!(series.iter().all(|&v| v == series[0]), "{series:?}");
    }
}

#[test]
fn runs_conserve_people_and_money() {
    let spec = small_spec();
    for seed in 0..10 {
        let w = build_world(&spec, 100 + seed).unwrap();
        let r = run_simulation(&w, 120, seed);
        assert_eq!(r.trajectories.money[0].len(), 121);
        for row in &r.epi {
            for c in row {
                assert_eq!(c.s + c.e + c.i + c.r + c.d, c.n0);
            }
        }
        assert!(r.trajectories.ledger_residual.iter().all(|&x| x == 0));
        for (f, m) in r.trajectories.money.iter().enumerate() {
            assert_eq!(r.ob[f] == 120, m.iter().all(|&x| x >= 0));
            assert_eq!(r.trajectories.bankrupt_since[f].map_or(120, |t| t), r.ob[f].min(r.trajectories.bankrupt_since[f].unwrap_or(120)));
        }
    }
}

#[test]
fn same_seed_same_result() {
    let w = build_world(&small_spec(), 8).unwrap();
    assert_eq!(run_simulation(&w, 120, 5), run_simulation(&w, 120, 5));
    let csv = result_csv(&w, &run_simulation(&w, 120, 5));
    assert!(csv.starts_with("step,firm_id,money,location,s,e,i,r,d\n"));
    assert_eq!(csv.lines().count(), 1 + 121 * w.firms.len());
}
