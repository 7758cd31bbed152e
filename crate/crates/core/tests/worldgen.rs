use sc_resilience::scenario::{bounds, IntSpan, ScenarioSpec};
use sc_resilience::world::World;
use sc_resilience::worldgen::*;

fn has_cycle(world: &World) -> bool {
    // Depth-first search for a back edge, independent of the crate's sort.
    fn visit(w: &World, p: usize, color: &mut [u8]) -> bool {
        color[p] = 1;
        for &(q, _) in &w.products[p].ingredients {
            if color[q] == 1 || (color[q] == 0 && visit(w, q, color)) {
                return true;
            }
        }
        color[p] = 2;
        false
    }
    let mut color = vec![0u8; world.products.len()];
    (0..world.products.len()).any(|p| color[p] == 0 && visit(world, p, &mut color))
}

#[test]
fn a_thousand_desk_worlds_are_acyclic_feasible_and_priced_in_margin() {
    let spec = ScenarioSpec::desk();
    for seed in 0..1000 {
        let w = build_world(&spec, seed).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert!(!has_cycle(&w), "seed {seed}: cyclic recipes");
        assert!(w.topological_products().is_some());
        assert!(supply_plan(&w, Routing::Proportional).is_feasible(), "seed {seed}: infeasible");
        w.check_invariants().unwrap();
        for (f, firm) in w.firms.iter().enumerate() {
            for item in &firm.catalog {
                if w.products[item.product].is_raw() {
                    let dollars = item.price as f64 / 100.0;
                    assert!(bounds::PRODUCT_PRICE.contains(dollars), "seed {seed}: raw price {dollars}");
                } else {
                    let margin = (item.price - item.unit_cost) as f64 / item.unit_cost as f64;
                    assert!(
                        (0.01 - 1e-9..=0.5 + 1e-9).contains(&margin),
                        "seed {seed} firm {f}: margin {margin} (price {}, cost {})",
                        item.price,
                        item.unit_cost
                    );
                }
            }
        }
    }
}

#[test]
fn sampled_parameters_stay_in_range() {
    let spec = ScenarioSpec::desk();
    for seed in 0..10_000 {
        let w = generate_world(&spec, seed).unwrap();
        assert!(spec.locations.contains(w.locations.len() as u32));
        assert!(spec.products.contains(w.products.len() as u32));
        for loc in &w.locations {
            assert!(spec.consumers_per_location.contains(loc.consumers.len() as u32));
            assert!(spec.firms_per_location.contains(loc.firms.len() as u32));
            assert!(spec.beta.contains(loc.epi.beta));
            assert!(spec.theta.contains(loc.epi.theta));
            assert!(spec.gamma.contains(loc.epi.gamma));
            assert!(spec.rho.contains(loc.epi.rho));
            let infected = w.initial_health[loc.consumers.clone()].iter().filter(|h| !matches!(h.state, sc_resilience::epidemic::Compartment::S)).count();
            assert_eq!(infected, 1);
        }
        for c in &w.consumers {
            assert!(spec.consumer_money.contains(c.money as f64 / 100.0 ), "{}", c.money);
            assert!(spec.salary.contains(c.salary as f64 / 100.0));
        }
        for f in &w.firms {
            assert!(spec.firm_money.contains(f.initial_money as f64 / 100.0));
            assert!(spec.workers.contains(f.workers.len() as u32) || f.workers.len() < spec.workers.lo as usize);
            assert!(spec.retail_products_per_firm.contains(f.catalog.len() as u32) || f.catalog.len() > spec.retail_products_per_firm.lo as usize);
        }
        for p in &w.products {
            if !p.is_raw() {
                let units: u32 = p.ingredients.iter().map(|&(_, u)| u).sum();
                assert!(spec.ingredients_per_product.contains(units));
            }
        }
    }
}

#[test]
fn built_accounts_stay_in_range() {
    let spec = ScenarioSpec::desk();
    for seed in 0..200 {
        let w = build_world(&spec, seed).unwrap();
        for f in &w.firms {
            let money = f.initial_money as f64 / 100.0;
            assert!(spec.firm_money.contains(money), "{money}");
            let frac = f.op_cost as f64 / f.initial_money as f64;
            assert!(frac >= spec.op_cost_fraction.lo - 1e-6 && frac <= spec.op_cost_fraction.hi + 1e-6, "{frac}");
        }
    }
}

#[test]
fn same_seed_same_world() {
    let spec = ScenarioSpec::desk();
    for seed in [0, 7, 99] {
        let a = serde_json::to_string(&build_world(&spec, seed).unwrap()).unwrap();
        let b = serde_json::to_string(&build_world(&spec, seed).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn one_location_spec_gives_one_location() {
    let mut spec = ScenarioSpec::desk();
    spec.locations = IntSpan::point(1);
    for seed in 0..20 {
        assert_eq!(build_world(&spec, seed).unwrap().locations.len(), 1);
    }
}

#[test]
fn invalid_spec_names_the_field() {
    let mut spec = ScenarioSpec::desk();
    spec.products = IntSpan::point(0);
    let err = generate_world(&spec, 1).unwrap_err().to_string();
    assert!(err.contains("products"), "{err}");
}

#[test]
fn markup_formula_instance() {
    assert_eq!(markup_price(10_000, 0.01), 10_100);
}

/// Rebuilds a generated world with only the links the plan cannot do without.
fn stripped(seed: u64) -> World {
    let mut w = generate_world(&ScenarioSpec::desk(), seed).unwrap();
    for l in &mut w.links {
        l.established = false;
    }
    w
}

#[test]
fn bootstrap_adds_the_only_possible_link() {
    // Tiny world: firm 3 has exactly one supplier per input once the
    // alternatives are removed, so bootstrap must pick those links.
    let mut w = tiny_world(1);
    let keep: Vec<usize> = (0..w.links.len()).filter(|&l| w.links[l].seller == 2).collect();
    for input in &mut w.firms[TINY_FOCAL_FIRM].inputs {
        input.links.retain(|l| keep.contains(l));
    }
    for f in &mut w.firms {
        f.out_links.retain(|l| keep.contains(l));
    }
    for l in &mut w.links {
        l.established = false;
    }
    let added = bootstrap_supply_chains(&mut w, &mut sc_resilience::rng::SeedStream::new(0).rng()).unwrap();
    assert_eq!(added, 2);
    assert!(keep.iter().all(|&l| w.links[l].established));
}

#[test]
fn bootstrap_is_vacuous_when_demand_is_already_met() {
    let mut w = tiny_world(2);
    assert_eq!(bootstrap_supply_chains(&mut w, &mut sc_resilience::rng::SeedStream::new(0).rng()).unwrap(), 0);
}

#[test]
fn bootstrap_result_passes_the_check_again() {
    let mut feasible = 0;
    for seed in 0..100 {
        let mut w = stripped(seed);
        if bootstrap_supply_chains(&mut w, &mut sc_resilience::rng::SeedStream::new(seed).rng()).is_ok() {
            assert!(supply_plan(&w, Routing::Proportional).is_feasible());
            feasible += 1;
        }
    }
    assert!(feasible > 0);
}
