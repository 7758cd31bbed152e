//! Local supply and demand: consumer purchasing, workforce capacity and the
//! firm's five actions per round.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::money::Cents;
use crate::rng::SimRng;
use crate::world::{Consumer, FirmId, LinkId, ProductId, World};

/// Units of one product demanded when a share `fraction` of the living
/// population is infectious: `round(base + shift * fraction)`, floored at zero.
pub fn demand_units(base: u32, shift: f64, fraction: f64) -> u32 {
    let v = (f64::from(base) + shift * fraction).round();
    if v <= 0.0 {
        0
    } else {
        v as u32
    }
}

/// Dense form of [`demand_units`] over whole product vectors.
pub fn effective_demand(base: &[u32], shift: &[f64], fraction: f64) -> Vec<u32> {
    assert_eq!(base.len(), shift.len(), "demand vectors differ in length");
    base.iter().zip(shift).map(|(&b, &s)| demand_units(b, s, fraction)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Capacity {
    /// Multiplier (>= 1) on preparation time.
    Slowdown(f64),
    /// Every worker is infectious or dead; nothing can be prepared.
    Halted,
}

/// `w / (w - w_i - w_d)`, or `Halted` when no healthy worker remains.
pub fn capacity_factor(workers: usize, unavailable: usize) -> Capacity {
    if workers == 0 || unavailable >= workers {
        Capacity::Halted
    } else {
        Capacity::Slowdown(workers as f64 / (workers - unavailable) as f64)
    }
}

/// Production batch in progress on one catalog line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub slot: usize,
    pub quantity: u64,
    /// Last step of work; the batch enters inventory at the end of this step.
    pub ready_at: u32,
}

/// Goods bought over a link and not yet delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shipment {
    pub link: LinkId,
    pub product: ProductId,
    pub quantity: u64,
    pub arrival: u32,
}

/// Mutable per-run state of one firm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmState {
    pub money: Cents,
    /// Units on hand, indexed by product.
    pub inventory: Vec<u64>,
    /// Units bought and in transit, indexed by product.
    pub on_order: Vec<u64>,
    pub wip: Vec<Job>,
    pub pending: Vec<Shipment>,
    pub bankrupt_since: Option<u32>,
    /// Units requested this round per catalog slot, served or not.
    pub requests: Vec<u64>,
    /// Trailing request counts, `window` entries per catalog slot.
    history: Vec<u64>,
    window: usize,
    cursor: usize,
}

impl FirmState {
    pub fn new(world: &World, firm: FirmId) -> Self {
        let f = &world.firms[firm];
        let knobs = &world.knobs;
        let window = knobs.forecast_window as usize;
        let n = world.n_products();
        let mut inventory = vec![0u64; n];
        let mut history = vec![0u64; f.catalog.len() * window];
        for (slot, item) in f.catalog.iter().enumerate() {
            // Warm start at the planned steady state.
            let v = item.planned_volume;
            inventory[item.product] = (knobs.replenish_multiplier * v).ceil() as u64;
            let per_step = v.round() as u64;
            history[slot * window..(slot + 1) * window].fill(per_step);
        }
        let mut st = FirmState {
            money: f.initial_money,
            inventory,
            on_order: vec![0; n],
            wip: Vec::new(),
            pending: Vec::new(),
            bankrupt_since: None,
            requests: vec![0; f.catalog.len()],
            history,
            window,
            cursor: 0,
        };
        for input in &f.inputs {
            let lead = input
                .links
                .iter()
                .filter(|&&l| world.links[l].established)
                .map(|&l| world.links[l].lead_time)
                .max()
                .unwrap_or(0);
            let level = st.input_level(world, firm, input.product, lead);
            st.inventory[input.product] += level;
        }
        st
    }

    /// Mean requests per step over the trailing window.
    pub fn forecast(&self, slot: usize) -> f64 {
        let w = &self.history[slot * self.window..(slot + 1) * self.window];
        w.iter().sum::<u64>() as f64 / self.window as f64
    }

    /// Rolls this round's requests into the trailing window.
    pub fn close_round(&mut self) {
        let w = self.window;
        for (slot, r) in self.requests.iter_mut().enumerate() {
            self.history[slot * w + self.cursor] = *r;
            *r = 0;
        }
        self.cursor = (self.cursor + 1) % w;
    }

    /// Order-up-to level for an ingredient: forecast consumption over the
    /// lead time plus one step, times the replenishment multiplier.
    fn input_level(&self, world: &World, firm: FirmId, product: ProductId, lead: u32) -> u64 {
        let f = &world.firms[firm];
        let mut per_step = 0.0;
        for (slot, item) in f.catalog.iter().enumerate() {
            let recipe = &world.products[item.product].ingredients;
            if let Some(&(_, units)) = recipe.iter().find(|(p, _)| *p == product) {
                per_step += self.forecast(slot) * f64::from(units);
            }
        }
        (world.knobs.replenish_multiplier * per_step * f64::from(lead + 1)).ceil() as u64
    }

    fn line_busy(&self, slot: usize) -> bool {
        self.wip.iter().any(|j| j.slot == slot)
    }
}

fn pair_mut<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

/// One retail offer: a firm's catalog line at its posted price.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Offer {
    pub firm: FirmId,
    pub slot: usize,
    pub price: Cents,
}

/// Retail offers per (location, product), cheapest first with ties to the
/// lower firm id, plus a cursor to the first offer still in stock.
#[derive(Debug, Clone)]
pub struct Market {
    n_products: usize,
    offers: Vec<Vec<Offer>>,
    cursor: Vec<usize>,
}

impl Market {
    pub fn new(world: &World) -> Self {
        let n = world.n_products();
        let mut offers = vec![Vec::new(); world.locations.len() * n];
        for (fid, firm) in world.firms.iter().enumerate() {
            for (slot, item) in firm.catalog.iter().enumerate() {
                offers[firm.location * n + item.product].push(Offer { firm: fid, slot, price: item.price });
            }
        }
        for list in &mut offers {
            list.sort_by_key(|o| (o.price, o.firm));
        }
        let cursor = vec![0; offers.len()];
        Market { n_products: n, offers, cursor }
    }

    /// Builds a market from explicit offers at a single location.
    pub fn from_offers(n_products: usize, per_product: Vec<Vec<Offer>>) -> Self {
        assert_eq!(per_product.len(), n_products);
        let mut offers = per_product;
        for list in &mut offers {
            list.sort_by_key(|o| (o.price, o.firm));
        }
        let cursor = vec![0; offers.len()];
        Market { n_products, offers, cursor }
    }

    /// Stock only falls while consumers shop, so cursors are reset once per round.
    pub fn reset(&mut self) {
        self.cursor.fill(0);
    }

    pub fn offers(&self, location: usize, product: ProductId) -> &[Offer] {
        &self.offers[location * self.n_products + product]
    }

    fn first_in_stock(&mut self, key: usize, product: ProductId, firms: &[FirmState]) -> Option<usize> {
        let list = &self.offers[key];
        let mut c = self.cursor[key];
        while c < list.len() && firms[list[c].firm].inventory[product] == 0 {
            c += 1;
        }
        self.cursor[key] = c;
        (c < list.len()).then_some(c)
    }
}

/// One consumer purchase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Purchase {
    pub firm: FirmId,
    pub product: ProductId,
    pub price: Cents,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PurchaseSummary {
    pub units: u32,
    pub spent: Cents,
    /// Demanded units that no local firm had in stock.
    pub stockouts: u32,
}

/// Reusable buffers for [`consumer_step`].
#[derive(Debug, Default)]
pub struct ShoppingScratch {
    units: Vec<(ProductId, usize)>,
    wants: Vec<(ProductId, usize, u32)>,
    /// When enabled, every purchase of the last call is recorded here.
    pub log: Option<Vec<Purchase>>,
}

impl ShoppingScratch {
    pub fn with_log() -> Self {
        ShoppingScratch { log: Some(Vec::new()), ..Default::default() }
    }
}

/// A living consumer's round: collect salary, then buy the effective basket
/// from the cheapest in-stock firms at the home location.
///
/// If the whole basket is affordable it is bought outright. Otherwise the
/// demanded units are shuffled and bought one by one while money allows.
/// Products nobody has in stock are skipped.
pub fn consumer_step(
    consumer: &Consumer,
    money: &mut Cents,
    fraction: f64,
    market: &mut Market,
    firms: &mut [FirmState],
    rng: &mut SimRng,
    scratch: &mut ShoppingScratch,
) -> PurchaseSummary {
    *money += consumer.salary;
    if let Some(log) = scratch.log.as_mut() {
        log.clear();
    }
    scratch.wants.clear();
    let mut summary = PurchaseSummary::default();
    let base_key = consumer.home * market.n_products;

    // Price the basket against current stock without touching it.
    let mut basket_cost: Cents = 0;
    for entry in &consumer.demand {
        let units = if fraction == 0.0 { entry.base } else { demand_units(entry.base, entry.shift, fraction) };
        if units == 0 {
            continue;
        }
        let key = base_key + entry.product;
        let Some(start) = market.first_in_stock(key, entry.product, firms) else {
            summary.stockouts += units;
            note_missed(market, key, firms, units);
            continue;
        };
        if start > 0 {
            note_missed(market, key, firms, units);
        }
        let mut left = u64::from(units);
        for offer in &market.offers[key][start..] {
            let take = left.min(firms[offer.firm].inventory[entry.product]);
            basket_cost += take as Cents * offer.price;
            left -= take;
            if left == 0 {
                break;
            }
        }
        summary.stockouts += left as u32;
        let available = units - left as u32;
        if available > 0 {
            scratch.wants.push((entry.product, key, available));
        }
    }

    if basket_cost <= *money {
        for &(product, key, n) in &scratch.wants {
            let mut left = u64::from(n);
            while left > 0 {
                let idx = market.first_in_stock(key, product, firms).expect("stock was counted");
                let offer = market.offers[key][idx];
                let seller = &mut firms[offer.firm];
                let take = left.min(seller.inventory[product]);
                let cost = take as Cents * offer.price;
                *money -= cost;
                seller.money += cost;
                seller.inventory[product] -= take;
                seller.requests[offer.slot] += take;
                left -= take;
                summary.units += take as u32;
                summary.spent += cost;
                if let Some(log) = scratch.log.as_mut() {
                    log.extend(std::iter::repeat_n(Purchase { firm: offer.firm, product, price: offer.price }, take as usize));
                }
            }
        }
    } else {
        scratch.units.clear();
        for &(product, key, n) in &scratch.wants {
            scratch.units.extend(std::iter::repeat_n((product, key), n as usize));
        }
        scratch.units.shuffle(rng);
        for &(product, key) in &scratch.units {
            let Some(idx) = market.first_in_stock(key, product, firms) else { continue };
            let offer = market.offers[key][idx];
            if offer.price > *money {
                continue;
            }
            *money -= offer.price;
            let seller = &mut firms[offer.firm];
            seller.money += offer.price;
            seller.inventory[product] -= 1;
            seller.requests[offer.slot] += 1;
            summary.units += 1;
            summary.spent += offer.price;
            if let Some(log) = scratch.log.as_mut() {
                log.push(Purchase { firm: offer.firm, product, price: offer.price });
            }
        }
    }
    summary
}

fn note_missed(market: &Market, key: usize, firms: &mut [FirmState], units: u32) {
    // The preferred (cheapest) seller keeps seeing demand while it is out of stock.
    if let Some(first) = market.offers[key].first() {
        firms[first.firm].requests[first.slot] += u64::from(units);
    }
}

/// Links scheduled to open at a given step (configuration links open at 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledLink {
    pub link: LinkId,
    pub step: u32,
}

/// Opens every due link the buyer can pay for, transferring the setup cost to the seller.
pub fn establish_due_links(
    world: &World,
    firm: FirmId,
    t: u32,
    schedule: &mut Vec<ScheduledLink>,
    established: &mut [bool],
    firms: &mut [FirmState],
) {
    schedule.retain(|s| {
        if s.step > t || established[s.link] {
            return !established[s.link];
        }
        let link = &world.links[s.link];
        debug_assert_eq!(link.buyer, firm);
        let (buyer, seller) = pair_mut(firms, link.buyer, link.seller);
        if buyer.money >= link.setup_cost {
            buyer.money -= link.setup_cost;
            seller.money += link.setup_cost;
            established[s.link] = true;
            false
        } else {
            true
        }
    });
}

/// What happened during one firm step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepReport {
    pub ordered_units: u64,
    pub started_units: u64,
    pub finished_units: u64,
    pub halted: bool,
}

/// The firm's five actions at step `t >= 1`: pay operating cost, order
/// ingredients, open scheduled links, produce, and stock shelves.
///
/// `unavailable` is the number of the firm's workers currently infectious or dead.
pub fn firm_step(
    world: &World,
    firm: FirmId,
    t: u32,
    unavailable: usize,
    firms: &mut [FirmState],
    established: &mut [bool],
    schedule: &mut Vec<ScheduledLink>,
) -> StepReport {
    debug_assert!(t >= 1);
    let f = &world.firms[firm];
    let knobs = &world.knobs;
    let mut report = StepReport::default();

    // (1) operating cost
    firms[firm].money -= f.op_cost;

    // (2) replenish ingredients, cheapest established supplier first
    for input in &f.inputs {
        let p = input.product;
        let lead = input
            .links
            .iter()
            .filter(|&&l| established[l])
            .map(|&l| world.links[l].lead_time)
            .max();
        let Some(lead) = lead else { continue };
        let level = firms[firm].input_level(world, firm, p, lead);
        let position = firms[firm].inventory[p] + firms[firm].on_order[p];
        let mut need = level.saturating_sub(position);
        let mut preferred = true;
        for &l in &input.links {
            if need == 0 {
                break;
            }
            if !established[l] {
                continue;
            }
            let link = &world.links[l];
            let slot = world.firms[link.seller].catalog_slot(p).expect("seller makes product");
            let (buyer, seller) = pair_mut(firms, firm, link.seller);
            if preferred {
                seller.requests[slot] += need;
                preferred = false;
            }
            if buyer.money <= 0 {
                break;
            }
            let affordable = (buyer.money / link.unit_price.max(1)) as u64;
            let qty = need.min(seller.inventory[p]).min(affordable);
            if qty == 0 {
                continue;
            }
            let cost = qty as Cents * link.unit_price;
            buyer.money -= cost;
            seller.money += cost;
            seller.inventory[p] -= qty;
            buyer.on_order[p] += qty;
            buyer.pending.push(Shipment { link: l, product: p, quantity: qty, arrival: t + link.lead_time });
            need -= qty;
            report.ordered_units += qty;
        }
    }

    // (3) open links scheduled by the strategy
    if !schedule.is_empty() {
        establish_due_links(world, firm, t, schedule, established, firms);
    }

    // (4) prepare products
    let capacity = capacity_factor(f.workers.len(), unavailable);
    let st = &mut firms[firm];
    match capacity {
        Capacity::Halted => {
            report.halted = true;
            for job in &mut st.wip {
                job.ready_at += 1;
            }
        }
        Capacity::Slowdown(factor) => {
            for (slot, item) in f.catalog.iter().enumerate() {
                if st.line_busy(slot) {
                    continue;
                }
                let product = &world.products[item.product];
                let prep = (f64::from(product.prep_time) * factor).ceil().max(1.0) as u32;
                let target = (knobs.replenish_multiplier * st.forecast(slot) * f64::from(prep + 1)).ceil() as u64;
                let mut batch = target.saturating_sub(st.inventory[item.product]).min(u64::from(knobs.batch_cap));
                for &(ing, units) in &product.ingredients {
                    batch = batch.min(st.inventory[ing] / u64::from(units));
                }
                if batch == 0 {
                    continue;
                }
                for &(ing, units) in &product.ingredients {
                    st.inventory[ing] -= batch * u64::from(units);
                }
                st.wip.push(Job { slot, quantity: batch, ready_at: t + prep - 1 });
                report.started_units += batch;
            }
            // (5) finished batches go on the shelves for the next round's shoppers
            let mut i = 0;
            while i < st.wip.len() {
                if st.wip[i].ready_at <= t {
                    let job = st.wip.swap_remove(i);
                    st.inventory[f.catalog[job.slot].product] += job.quantity;
                    report.finished_units += job.quantity;
                } else {
                    i += 1;
                }
            }
            st.wip.sort_by_key(|j| (j.slot, j.ready_at));
        }
    }
    report
}

/// Delivers every shipment due by `t`.
pub fn deliver_shipments(state: &mut FirmState, t: u32) {
    let mut i = 0;
    while i < state.pending.len() {
        if state.pending[i].arrival <= t {
            let s = state.pending.swap_remove(i);
            state.inventory[s.product] += s.quantity;
            state.on_order[s.product] -= s.quantity;
        } else {
            i += 1;
        }
    }
    state.pending.sort_by_key(|s| (s.arrival, s.link));
}
