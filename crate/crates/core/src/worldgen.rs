//! Random world construction: products and recipes, agents, incumbent supply
//! chains, prices and firm accounts.
//!
//! [`build_world`] chains the stages and resamples when bootstrap cannot make
//! the world demand-feasible.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::epidemic::{EpiParams, HealthState};
use crate::error::{Error, Result};
use crate::money::{to_cents, Cents};
use crate::rng::{SeedStream, SimRng};
use crate::scenario::{bounds, ScenarioSpec, Span};
use crate::world::{
    CatalogItem, Consumer, DemandEntry, Firm, FirmId, InputNeed, LinkId, Location, Product, ProductId,
    SupplyLink, World,
};

/// Worlds tried per seed before [`build_world`] gives up.
pub const MAX_ATTEMPTS: u64 = 50;

/// Samples a world without incumbent links, prices or calibrated accounts.
pub fn generate_world(spec: &ScenarioSpec, seed: u64) -> Result<World> {
    spec.validate()?;
    let mut rng = SeedStream::new(seed).child("world").rng();
    let knobs = spec.economy.clone();
    let rng = &mut rng;

    // Products: a random rank order; ingredients only come from lower ranks.
    let n_products = spec.products.sample(rng) as usize;
    let mut by_rank: Vec<ProductId> = (0..n_products).collect();
    by_rank.shuffle(rng);
    let n_raw = ((knobs.raw_product_share * n_products as f64).round() as usize).clamp(1, n_products.max(2) - 1);
    let mut products = vec![
        Product { price: 0, prep_time: 1, ingredients: Vec::new(), rank: 0 };
        n_products
    ];
    for (rank, &p) in by_rank.iter().enumerate() {
        let product = &mut products[p];
        product.rank = rank as u32;
        product.prep_time = knobs.prep_time.sample(rng);
        if rank >= n_raw {
            let units = spec.ingredients_per_product.sample(rng);
            let mut recipe: Vec<(ProductId, u32)> = Vec::new();
            for _ in 0..units {
                let ing = by_rank[rng.random_range(0..rank)];
                match recipe.iter_mut().find(|(q, _)| *q == ing) {
                    Some(entry) => entry.1 += 1,
                    None => recipe.push((ing, 1)),
                }
            }
            recipe.sort_unstable();
            product.ingredients = recipe;
        }
    }
    let raw: Vec<ProductId> = by_rank[..n_raw].to_vec();
    let made: Vec<ProductId> = by_rank[n_raw..].to_vec();

    let theta = spec.theta.sample(rng);
    let gamma = spec.gamma.sample(rng);
    let rho = spec.rho.sample(rng);

    // Locations, firms and consumers.
    let n_locations = spec.locations.sample(rng) as usize;
    let mut locations = Vec::with_capacity(n_locations);
    let mut firms: Vec<Firm> = Vec::new();
    let mut consumers: Vec<Consumer> = Vec::new();
    let mut factory_flags: Vec<bool> = Vec::new();
    for loc in 0..n_locations {
        let beta = spec.beta.sample(rng);
        let n_firms = spec.firms_per_location.sample(rng) as usize;
        let n_consumers = spec.consumers_per_location.sample(rng) as usize;
        let start = consumers.len();
        for _ in 0..n_consumers {
            consumers.push(Consumer {
                money: to_cents(spec.consumer_money.sample(rng)),
                salary: to_cents(spec.salary.sample(rng)),
                demand: Vec::new(),
                home: loc,
                employer: None,
            });
        }
        let mut ids = Vec::with_capacity(n_firms);
        for _ in 0..n_firms {
            ids.push(firms.len());
            factory_flags.push(rng.random_bool(knobs.factory_share));
            let money = to_cents(spec.firm_money.sample(rng));
            let frac = spec.op_cost_fraction.sample(rng);
            firms.push(Firm {
                location: loc,
                catalog: Vec::new(),
                initial_money: money,
                op_cost: (money as f64 * frac).round() as Cents,
                workers: Vec::new(),
                margin: bounds::MARGIN.sample(rng),
                inputs: Vec::new(),
                out_links: Vec::new(),
            });
        }
        locations.push(Location {
            epi: EpiParams { beta, theta, gamma, rho },
            consumers: start..consumers.len(),
            firms: ids,
        });
    }
    if !factory_flags.iter().any(|&f| f) {
        factory_flags[0] = true;
    }
    if !factory_flags.iter().any(|&f| !f) && firms.len() > 1 {
        let last = firms.len() - 1;
        factory_flags[last] = false;
    }

    // Catalogs: factories make raw products, everyone else makes composites.
    for (fid, firm) in firms.iter_mut().enumerate() {
        let pool = if factory_flags[fid] { &raw } else { &made };
        let k = (spec.retail_products_per_firm.sample(rng) as usize).min(pool.len());
        let mut picks: Vec<ProductId> = pool.choose_multiple(rng, k).copied().collect();
        picks.sort_unstable();
        firm.catalog = picks.into_iter().map(|product| CatalogItem { product, ..empty_item() }).collect();
    }

    // Every ingredient a firm needs must have a producer other than that firm.
    let factories: Vec<FirmId> = (0..firms.len()).filter(|&f| factory_flags[f]).collect();
    let assemblers: Vec<FirmId> = (0..firms.len()).filter(|&f| !factory_flags[f]).collect();
    for rank in (0..n_products).rev() {
        let p = by_rank[rank];
        let needers: Vec<FirmId> = (0..firms.len())
            .filter(|&f| {
                firms[f]
                    .catalog
                    .iter()
                    .any(|c| products[c.product].ingredients.iter().any(|&(q, _)| q == p))
            })
            .collect();
        for f in needers {
            if (0..firms.len()).any(|m| m != f && firms[m].catalog_slot(p).is_some()) {
                continue;
            }
            let kind = if products[p].is_raw() { &factories } else { &assemblers };
            let mut options: Vec<FirmId> = kind.iter().copied().filter(|&m| m != f).collect();
            if options.is_empty() {
                options = (0..firms.len()).filter(|&m| m != f).collect();
            }
            let Some(&m) = options.choose(rng) else {
                return Err(Error::Generation(format!("no firm can supply product {p}")));
            };
            firms[m].catalog.push(CatalogItem { product: p, ..empty_item() });
            firms[m].catalog.sort_by_key(|c| c.product);
        }
    }

    // Demand baskets from what is sold locally; workers from local residents.
    for location in &locations {
        let mut local: Vec<ProductId> =
            location.firms.iter().flat_map(|&f| firms[f].catalog.iter().map(|c| c.product)).collect();
        local.sort_unstable();
        local.dedup();
        for c in location.consumers.clone() {
            let k = (knobs.demanded_products.sample(rng) as usize).min(local.len());
            let mut picks: Vec<ProductId> = local.choose_multiple(rng, k).copied().collect();
            picks.sort_unstable();
            consumers[c].demand = picks
                .into_iter()
                .map(|product| DemandEntry {
                    product,
                    base: knobs.base_demand.sample(rng),
                    shift: knobs.demand_shift.sample(rng),
                })
                .collect();
        }
        let mut residents: Vec<usize> = location.consumers.clone().collect();
        residents.shuffle(rng);
        let mut next = 0;
        for &f in &location.firms {
            let want = spec.workers.sample(rng) as usize;
            let take = want.min(residents.len() - next);
            let mut staff: Vec<usize> = residents[next..next + take].to_vec();
            next += take;
            staff.sort_unstable();
            for &w in &staff {
                consumers[w].employer = Some(f);
            }
            firms[f].workers = staff;
        }
    }

    // One index case per location with a non-zero transmission rate.
    let mut initial_health = vec![HealthState::SUSCEPTIBLE; consumers.len()];
    for location in &locations {
        if location.epi.beta > 0.0 && !location.consumers.is_empty() {
            let c = rng.random_range(location.consumers.clone());
            initial_health[c] = HealthState::INFECTED;
        }
    }

    // The candidate link universe: every other producer of every needed input.
    let mut links = Vec::new();
    for buyer in 0..firms.len() {
        let mut needs: Vec<ProductId> = firms[buyer]
            .catalog
            .iter()
            .flat_map(|c| products[c.product].ingredients.iter().map(|&(q, _)| q))
            .collect();
        needs.sort_unstable();
        needs.dedup();
        let mut inputs = Vec::with_capacity(needs.len());
        for p in needs {
            let mut ids = Vec::new();
            for seller in 0..firms.len() {
                if seller == buyer || firms[seller].catalog_slot(p).is_none() {
                    continue;
                }
                let lead = if firms[seller].location == firms[buyer].location {
                    knobs.local_lead_time.sample(rng)
                } else {
                    knobs.remote_lead_time.sample(rng)
                };
                ids.push(links.len());
                links.push(SupplyLink {
                    seller,
                    buyer,
                    product: p,
                    setup_cost: 0,
                    lead_time: lead,
                    unit_price: 0,
                    established: false,
                });
            }
            inputs.push(InputNeed { product: p, links: ids });
        }
        firms[buyer].inputs = inputs;
    }
    for (l, link) in links.iter().enumerate() {
        firms[link.seller].out_links.push(l);
    }

    let world = World { products, locations, consumers, initial_health, firms, links, knobs };
    world.check_invariants().map_err(Error::Generation)?;
    Ok(world)
}

fn empty_item() -> CatalogItem {
    CatalogItem { product: 0, price: 0, unit_cost: 0, planned_volume: 0.0 }
}

/// Why a world cannot yet serve its consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deficiency {
    /// A firm with planned output has no incumbent supplier of an ingredient.
    Unsupplied { firm: FirmId, product: ProductId },
    /// A firm's planned volume of a product exceeds its production capacity.
    Overloaded { firm: FirmId, product: ProductId },
    /// Local sellers of a product cannot cover local base demand.
    RetailShortfall { location: usize, product: ProductId },
}

/// Static routing of base demand through the incumbent network.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplyPlan {
    /// Planned units per step, per firm and catalog slot.
    pub volume: Vec<Vec<f64>>,
    /// Planned units per step over each link.
    pub link_flow: Vec<f64>,
    pub deficiencies: Vec<Deficiency>,
}

impl SupplyPlan {
    pub fn is_feasible(&self) -> bool {
        self.deficiencies.is_empty()
    }
}

/// Units per step one catalog line can turn out with a healthy workforce.
pub fn line_capacity(world: &World, product: ProductId) -> f64 {
    f64::from(world.knobs.batch_cap) / f64::from(world.products[product].prep_time)
}

/// How demand is split between competing sellers in a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Routing {
    /// In proportion to capacity; used before prices exist.
    Proportional,
    /// Cheapest first up to capacity, as buyers behave once prices are set.
    Priced,
}

/// Routes aggregate base demand down the recipe tree (highest rank first) and
/// reports every place the incumbent network falls short.
pub fn supply_plan(world: &World, routing: Routing) -> SupplyPlan {
    let n = world.n_products();
    let mut volume: Vec<Vec<f64>> = world.firms.iter().map(|f| vec![0.0; f.catalog.len()]).collect();
    let mut link_flow = vec![0.0; world.links.len()];
    let mut deficiencies = Vec::new();
    let mut retail_only = vec![vec![true; n]; world.firms.len()];

    let mut demand = vec![vec![0.0f64; n]; world.locations.len()];
    for c in &world.consumers {
        for e in &c.demand {
            demand[c.home][e.product] += f64::from(e.base);
        }
    }
    let mut order: Vec<ProductId> = (0..n).collect();
    order.sort_by_key(|&p| std::cmp::Reverse(world.products[p].rank));

    let cap = |f: FirmId, p: ProductId| -> f64 {
        let _ = f;
        line_capacity(world, p)
    };

    for &p in &order {
        // Retail demand at each location.
        for (loc, location) in world.locations.iter().enumerate() {
            let d = demand[loc][p];
            if d <= 0.0 {
                continue;
            }
            let mut sellers: Vec<(FirmId, usize)> = location
                .firms
                .iter()
                .filter_map(|&f| world.firms[f].catalog_slot(p).map(|s| (f, s)))
                .collect();
            if sellers.is_empty() {
                deficiencies.push(Deficiency::RetailShortfall { location: loc, product: p });
                continue;
            }
            let total_cap: f64 = sellers.iter().map(|&(f, _)| cap(f, p)).sum();
            if total_cap + 1e-9 < d {
                deficiencies.push(Deficiency::RetailShortfall { location: loc, product: p });
            }
            match routing {
                Routing::Proportional => {
                    for &(f, s) in &sellers {
                        volume[f][s] += d * cap(f, p) / total_cap;
                    }
                }
                Routing::Priced => {
                    sellers.sort_by_key(|&(f, s)| (world.firms[f].catalog[s].price, f));
                    let mut left = d;
                    for &(f, s) in &sellers {
                        let room = (cap(f, p) - volume[f][s]).max(0.0);
                        let take = left.min(room);
                        volume[f][s] += take;
                        left -= take;
                    }
                    if left > 0.0 {
                        let (f, s) = sellers[0];
                        volume[f][s] += left;
                    }
                }
            }
        }
        // Everyone making p now knows its volume; pass ingredient needs upstream.
        for (f, firm) in world.firms.iter().enumerate() {
            let Some(slot) = firm.catalog_slot(p) else { continue };
            let v = volume[f][slot];
            if v <= 0.0 {
                continue;
            }
            for &(ing, units) in &world.products[p].ingredients {
                let need = v * f64::from(units);
                let input = &firm.inputs[firm.input_slot(ing).expect("input listed")];
                let mut links: Vec<LinkId> =
                    input.links.iter().copied().filter(|&l| world.links[l].established).collect();
                if links.is_empty() {
                    deficiencies.push(Deficiency::Unsupplied { firm: f, product: ing });
                    continue;
                }
                match routing {
                    Routing::Proportional => {
                        let share = need / links.len() as f64;
                        for &l in &links {
                            let s = world.links[l].seller;
                            let slot = world.firms[s].catalog_slot(ing).expect("seller makes input");
                            link_flow[l] += share;
                            volume[s][slot] += share;
                            retail_only[s][ing] = false;
                        }
                    }
                    Routing::Priced => {
                        links.sort_by_key(|&l| (world.links[l].unit_price, l));
                        let mut left = need;
                        for &l in &links {
                            let s = world.links[l].seller;
                            let slot = world.firms[s].catalog_slot(ing).expect("seller makes input");
                            let room = (cap(s, ing) - volume[s][slot]).max(0.0);
                            let take = left.min(room);
                            link_flow[l] += take;
                            volume[s][slot] += take;
                            left -= take;
                            retail_only[s][ing] = false;
                        }
                        if left > 0.0 {
                            let l = links[0];
                            let s = world.links[l].seller;
                            let slot = world.firms[s].catalog_slot(ing).expect("seller makes input");
                            link_flow[l] += left;
                            volume[s][slot] += left;
                        }
                    }
                }
            }
        }
    }

    for (f, firm) in world.firms.iter().enumerate() {
        for (slot, item) in firm.catalog.iter().enumerate() {
            if volume[f][slot] > cap(f, item.product) * (1.0 + 1e-9) && !retail_only[f][item.product] {
                deficiencies.push(Deficiency::Overloaded { firm: f, product: item.product });
            }
        }
    }
    SupplyPlan { volume, link_flow, deficiencies }
}

/// Establishes random incumbent links until the static plan is feasible.
/// Returns the number of links added.
pub fn bootstrap_supply_chains(world: &mut World, rng: &mut SimRng) -> Result<usize> {
    let limit = world.knobs.bootstrap_limit as usize;
    let mut added = 0;
    loop {
        let plan = supply_plan(world, Routing::Proportional);
        if plan.is_feasible() {
            return Ok(added);
        }
        if added >= limit {
            return Err(Error::Generation(format!("no feasible supply network after {limit} links")));
        }
        let deficiency = *plan.deficiencies.choose(rng).expect("non-empty");
        let link = match deficiency {
            Deficiency::RetailShortfall { location, product } => {
                return Err(Error::Generation(format!(
                    "location {location} cannot cover demand for product {product}"
                )));
            }
            Deficiency::Unsupplied { firm, product } => {
                let input = &world.firms[firm].inputs[world.firms[firm].input_slot(product).expect("input")];
                let open: Vec<LinkId> =
                    input.links.iter().copied().filter(|&l| !world.links[l].established).collect();
                *open.choose(rng).ok_or_else(|| {
                    Error::Generation(format!("firm {firm} has no possible supplier of product {product}"))
                })?
            }
            Deficiency::Overloaded { firm, product } => {
                // Give one of the overloaded seller's customers a second source.
                let mut options = Vec::new();
                for &l in &world.firms[firm].out_links {
                    let link = &world.links[l];
                    if !link.established || link.product != product || plan.link_flow[l] <= 0.0 {
                        continue;
                    }
                    let buyer = &world.firms[link.buyer];
                    let input = &buyer.inputs[buyer.input_slot(product).expect("input")];
                    options.extend(input.links.iter().copied().filter(|&c| !world.links[c].established));
                }
                *options.choose(rng).ok_or_else(|| {
                    Error::Generation(format!("firm {firm} cannot shed load on product {product}"))
                })?
            }
        };
        world.links[link].established = true;
        added += 1;
    }
}

/// Selling price after a profit margin `x` on `cost`, kept inside the margin bounds.
pub fn markup_price(cost: Cents, x: f64) -> Cents {
    let lo = (cost as f64 * (1.0 + bounds::MARGIN.lo)).ceil() as Cents;
    let hi = (cost as f64 * (1.0 + bounds::MARGIN.hi)).floor() as Cents;
    let p = (cost as f64 * (1.0 + x)).ceil() as Cents;
    p.clamp(lo, hi.max(lo))
}

/// Posts prices in recipe order: factories draw from the price range, other
/// firms mark up the cost of their recipe at their cheapest incumbent supplier.
pub fn assign_prices(world: &mut World, price_range: Span, rng: &mut SimRng) {
    let order = world.topological_products().expect("acyclic recipes");
    let mut reference: Vec<Option<Cents>> = vec![None; world.n_products()];
    for &p in &order {
        for f in 0..world.firms.len() {
            let Some(slot) = world.firms[f].catalog_slot(p) else { continue };
            let (price, cost) = if world.products[p].is_raw() {
                (to_cents(price_range.sample(rng)).max(to_cents(bounds::PRODUCT_PRICE.lo)), 0)
            } else {
                let mut cost: Cents = 0;
                for &(ing, units) in &world.products[p].ingredients {
                    cost += Cents::from(units) * cheapest_input(world, f, ing);
                }
                (markup_price(cost, world.firms[f].margin), cost)
            };
            let item = &mut world.firms[f].catalog[slot];
            item.price = price;
            item.unit_cost = cost;
            reference[p] = Some(reference[p].map_or(price, |r: Cents| r.min(price)));
            for l in world.firms[f].out_links.clone() {
                if world.links[l].product == p {
                    world.links[l].unit_price = price;
                }
            }
        }
        world.products[p].price = reference[p].unwrap_or(0);
    }
    for firm in &mut world.firms {
        for input in &mut firm.inputs {
            let links = &world.links;
            input.links.sort_by_key(|&l| (links[l].unit_price, l));
        }
    }
}

/// Unit price at the cheapest incumbent supplier, or at any possible supplier
/// when the firm has none yet (idle lines still carry a price).
fn cheapest_input(world: &World, firm: FirmId, product: ProductId) -> Cents {
    let input = &world.firms[firm].inputs[world.firms[firm].input_slot(product).expect("input")];
    let pick = |established_only: bool| {
        input
            .links
            .iter()
            .filter(|&&l| !established_only || world.links[l].established)
            .map(|&l| world.links[l].unit_price)
            .min()
    };
    pick(true).or_else(|| pick(false)).expect("every input has a possible supplier")
}

/// Trims baskets to what salaries pay for, then sizes each firm's money and
/// operating cost from its planned gross margin so the economy can run
/// without a pandemic, and sets link setup costs.
pub fn calibrate_accounts(world: &mut World, spec: &ScenarioSpec, rng: &mut SimRng) {
    let n = world.n_products();
    for c in 0..world.consumers.len() {
        let home = world.consumers[c].home;
        let mut cheapest = vec![Cents::MAX; n];
        for &f in &world.locations[home].firms {
            for item in &world.firms[f].catalog {
                cheapest[item.product] = cheapest[item.product].min(item.price);
            }
        }
        let consumer = &mut world.consumers[c];
        let budget = (consumer.salary as f64 * world.knobs.basket_budget_share).floor() as Cents;
        let cost = |d: &[DemandEntry]| d.iter().map(|e| Cents::from(e.base) * cheapest[e.product]).sum::<Cents>();
        while cost(&consumer.demand) > budget {
            let live: Vec<usize> = (0..consumer.demand.len()).filter(|&i| consumer.demand[i].base > 0).collect();
            let Some(&i) = live.choose(rng) else { break };
            consumer.demand[i].base -= 1;
        }
    }

    let plan = supply_plan(world, Routing::Priced);
    let money_range = spec.firm_money;
    let frac_range = spec.op_cost_fraction;
    for f in 0..world.firms.len() {
        let firm = &mut world.firms[f];
        let mut gross = 0.0;
        for (slot, item) in firm.catalog.iter_mut().enumerate() {
            item.planned_volume = plan.volume[f][slot];
            gross += item.planned_volume * (item.price - item.unit_cost) as f64;
        }
        let frac = (firm.op_cost as f64 / firm.initial_money.max(1) as f64).clamp(frac_range.lo, frac_range.hi);
        let share = world.knobs.op_cost_share.sample(rng);
        let target_cost = share * gross;
        let lo = to_cents(money_range.lo) as f64;
        let hi = to_cents(money_range.hi) as f64;
        let money = (target_cost / frac).clamp(lo, hi);
        let frac = (target_cost / money).clamp(frac_range.lo, frac_range.hi);
        firm.initial_money = money.round() as Cents;
        firm.op_cost = (money * frac).round() as Cents;
    }
    for l in 0..world.links.len() {
        let buyer_money = world.firms[world.links[l].buyer].initial_money;
        let fraction = world.knobs.setup_cost_fraction.sample(rng);
        world.links[l].setup_cost = (buyer_money as f64 * fraction).round() as Cents;
    }
}

/// Generates, bootstraps, prices and calibrates a world, resampling when a
/// draw cannot be made demand-feasible.
pub fn build_world(spec: &ScenarioSpec, seed: u64) -> Result<World> {
    spec.validate()?;
    let root = SeedStream::new(seed).child("build");
    let mut last = None;
    for attempt in 0..MAX_ATTEMPTS {
        let s = root.indexed("attempt", attempt);
        let mut world = match generate_world(spec, s.seed()) {
            Ok(w) => w,
            Err(e) => {
                last = Some(e);
                continue;
            }
        };
        let mut rng = s.child("economy").rng();
        if let Err(e) = bootstrap_supply_chains(&mut world, &mut rng) {
            last = Some(e);
            continue;
        }
        assign_prices(&mut world, spec.product_price, &mut rng);
        calibrate_accounts(&mut world, spec, &mut rng);
        world.check_invariants().map_err(Error::Generation)?;
        return Ok(world);
    }
    Err(last.unwrap_or_else(|| Error::Generation("no attempts made".into())))
}

/// Turns transmission off everywhere. Like a generated location with zero
/// transmission rate, no location keeps an index case.
pub fn silence_pandemic(world: &mut World) {
    for loc in &mut world.locations {
        loc.epi.beta = 0.0;
    }
    world.initial_health.fill(HealthState::SUSCEPTIBLE);
}

/// Firm whose sourcing choice [`tiny_world`] is built around.
pub const TINY_FOCAL_FIRM: FirmId = 3;

/// A fixed two-location, four-firm economy. Firms 0 and 1 (location 0) and
/// firm 2 (location 1) make raw products 0 and 1; firm 3 (location 1) turns
/// one of each into product 2. Firm 3 buys both inputs from its neighbour
/// firm 2 and can add the four remote links from firms 0 and 1. `seed` only
/// drives account sizes, margins and lead times.
pub fn tiny_world(seed: u64) -> World {
    let spec = ScenarioSpec::desk();
    let mut rng = SeedStream::new(seed).child("tiny").rng();
    let rng = &mut rng;
    let knobs = spec.economy.clone();
    let products = vec![
        Product { price: 0, prep_time: 1, ingredients: Vec::new(), rank: 0 },
        Product { price: 0, prep_time: 1, ingredients: Vec::new(), rank: 1 },
        Product { price: 0, prep_time: 2, ingredients: vec![(0, 1), (1, 1)], rank: 2 },
    ];
    let per_location = 200;
    let mut consumers = Vec::new();
    for loc in 0..2 {
        for k in 0..per_location {
            let demand = if loc == 0 {
                vec![DemandEntry { product: k % 2, base: 1, shift: -0.5 }]
            } else {
                vec![
                    DemandEntry { product: k % 2, base: 1, shift: -0.5 },
                    DemandEntry { product: 2, base: 1, shift: -1.0 },
                ]
            };
            consumers.push(Consumer {
                money: to_cents(rng.random_range(200.0..1000.0)),
                salary: to_cents(rng.random_range(150.0..400.0)),
                demand,
                home: loc,
                employer: None,
            });
        }
    }
    let catalog = |ps: &[ProductId]| ps.iter().map(|&product| CatalogItem { product, ..empty_item() }).collect();
    let mut firms: Vec<Firm> = [(0, vec![0, 1]), (0, vec![0, 1]), (1, vec![0, 1]), (1, vec![2])]
        .into_iter()
        .map(|(location, ps)| Firm {
            location,
            catalog: catalog(&ps),
            initial_money: 0,
            op_cost: 0,
            workers: Vec::new(),
            margin: bounds::MARGIN.sample(rng),
            inputs: Vec::new(),
            out_links: Vec::new(),
        })
        .collect();
    for (f, firm) in firms.iter_mut().enumerate() {
        let start = firm.location * per_location + (f % 2) * 5;
        firm.workers = (start..start + 5).collect();
        for &w in &firm.workers {
            consumers[w].employer = Some(f);
        }
    }
    let mut links = Vec::new();
    for product in 0..2 {
        let mut ids = Vec::new();
        for seller in [2, 0, 1] {
            let local = seller == 2;
            ids.push(links.len());
            links.push(SupplyLink {
                seller,
                buyer: TINY_FOCAL_FIRM,
                product,
                setup_cost: 0,
                lead_time: if local { knobs.local_lead_time.sample(rng) } else { knobs.remote_lead_time.sample(rng) },
                unit_price: 0,
                established: local,
            });
        }
        firms[TINY_FOCAL_FIRM].inputs.push(InputNeed { product, links: ids });
    }
    for (l, link) in links.iter().enumerate() {
        firms[link.seller].out_links.push(l);
    }
    let epi = EpiParams { beta: 0.004, theta: 5, gamma: 14, rho: 0.98 };
    let locations = vec![
        Location { epi, consumers: 0..per_location, firms: vec![0, 1] },
        Location { epi, consumers: per_location..2 * per_location, firms: vec![2, 3] },
    ];
    let mut initial_health = vec![HealthState::SUSCEPTIBLE; consumers.len()];
    initial_health[per_location - 1] = HealthState::INFECTED;
    initial_health[2 * per_location - 1] = HealthState::INFECTED;
    let mut world = World { products, locations, consumers, initial_health, firms, links, knobs };
    for f in &mut world.firms {
        f.initial_money = to_cents(rng.random_range(2e4..1e5));
        f.op_cost = (f.initial_money as f64 * 0.01).round() as Cents;
    }
    assign_prices(&mut world, Span::new(5.0, 20.0), rng);
    calibrate_accounts(&mut world, &spec, rng);
    world.check_invariants().expect("tiny world is well formed");
    world
}
