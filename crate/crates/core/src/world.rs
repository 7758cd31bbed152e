//! Static description of an economy: products, consumers, firms, locations and
//! the universe of possible supply links.
//!
//! A `World` never changes during a run; all mutable quantities live in
//! [`crate::simulate::SimState`].

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::epidemic::{EpiParams, HealthState};
use crate::money::Cents;
use crate::scenario::EconomyKnobs;

pub type ProductId = usize;
pub type FirmId = usize;
pub type ConsumerId = usize;
pub type LocationId = usize;
pub type LinkId = usize;

/// A good; `ingredients` is the sparse form of the recipe vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    /// Reference price: the lowest price any producer posts.
    pub price: Cents,
    pub prep_time: u32,
    pub ingredients: Vec<(ProductId, u32)>,
    /// Position in the recipe order; ingredients always have a lower rank.
    pub rank: u32,
}

impl Product {
    pub fn is_raw(&self) -> bool {
        self.ingredients.is_empty()
    }
}

/// One product line in a consumer's basket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandEntry {
    pub product: ProductId,
    /// Units demanded per step without a pandemic.
    pub base: u32,
    /// Change in units when the whole living population is infectious.
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consumer {
    pub money: Cents,
    pub salary: Cents,
    pub demand: Vec<DemandEntry>,
    pub home: LocationId,
    pub employer: Option<FirmId>,
}

/// A product a firm makes and sells, with its posted price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub product: ProductId,
    pub price: Cents,
    /// Ingredient cost per unit at the firm's incumbent suppliers.
    pub unit_cost: Cents,
    /// Units per step the supply plan routes through this line.
    pub planned_volume: f64,
}

/// An ingredient a firm needs and every link that could deliver it, cheapest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNeed {
    pub product: ProductId,
    pub links: Vec<LinkId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Firm {
    pub location: LocationId,
    pub catalog: Vec<CatalogItem>,
    pub initial_money: Cents,
    pub op_cost: Cents,
    pub workers: Vec<ConsumerId>,
    /// Profit margin used when pricing the catalog.
    pub margin: f64,
    pub inputs: Vec<InputNeed>,
    pub out_links: Vec<LinkId>,
}

impl Firm {
    pub fn is_factory(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn catalog_slot(&self, product: ProductId) -> Option<usize> {
        self.catalog.iter().position(|c| c.product == product)
    }

    pub fn input_slot(&self, product: ProductId) -> Option<usize> {
        self.inputs.iter().position(|i| i.product == product)
    }

    pub fn in_links(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.inputs.iter().flat_map(|i| i.links.iter().copied())
    }
}

/// Directed seller-to-buyer channel for one product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyLink {
    pub seller: FirmId,
    pub buyer: FirmId,
    pub product: ProductId,
    pub setup_cost: Cents,
    pub lead_time: u32,
    pub unit_price: Cents,
    /// Established during bootstrap; present in every run at no cost.
    pub established: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub epi: EpiParams,
    pub consumers: Range<ConsumerId>,
    pub firms: Vec<FirmId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub products: Vec<Product>,
    pub locations: Vec<Location>,
    pub consumers: Vec<Consumer>,
    /// Health of every consumer at t = 0, indexed like `consumers`.
    pub initial_health: Vec<HealthState>,
    pub firms: Vec<Firm>,
    pub links: Vec<SupplyLink>,
    pub knobs: EconomyKnobs,
}

impl World {
    pub fn n_products(&self) -> usize {
        self.products.len()
    }

    pub fn established_links(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.links.iter().enumerate().filter(|(_, l)| l.established).map(|(i, _)| i)
    }

    /// Links the firm could add on top of its incumbent suppliers.
    pub fn candidate_links(&self, firm: FirmId) -> Vec<LinkId> {
        self.firms[firm].in_links().filter(|&l| !self.links[l].established).collect()
    }

    /// Firms with at least one candidate link; only these face a sourcing choice.
    pub fn strategic_firms(&self) -> Vec<FirmId> {
        (0..self.firms.len()).filter(|&f| !self.candidate_links(f).is_empty()).collect()
    }

    /// Products in topological recipe order (ingredients first), or `None` on a cycle.
    pub fn topological_products(&self) -> Option<Vec<ProductId>> {
        let n = self.products.len();
        let mut indeg = vec![0usize; n];
        let mut users: Vec<Vec<ProductId>> = vec![Vec::new(); n];
        for (q, p) in self.products.iter().enumerate() {
            for &(ing, _) in &p.ingredients {
                indeg[q] += 1;
                users[ing].push(q);
            }
        }
        let mut order: Vec<ProductId> = (0..n).filter(|&q| indeg[q] == 0).collect();
        let mut head = 0;
        while head < order.len() {
            let p = order[head];
            head += 1;
            for &u in &users[p] {
                indeg[u] -= 1;
                if indeg[u] == 0 {
                    order.push(u);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Structural invariants. Returns the first violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.locations.is_empty() {
            return Err("world has no locations".into());
        }
        if self.topological_products().is_none() {
            return Err("ingredient graph has a cycle".into());
        }
        let mut employed = vec![false; self.consumers.len()];
        for (f, firm) in self.firms.iter().enumerate() {
            for &w in &firm.workers {
                if employed[w] {
                    return Err(format!("consumer {w} works for more than one firm"));
                }
                employed[w] = true;
                if self.consumers[w].home != firm.location {
                    return Err(format!("worker {w} of firm {f} lives elsewhere"));
                }
                if self.consumers[w].employer != Some(f) {
                    return Err(format!("worker {w} does not record employer {f}"));
                }
            }
        }
        for (l, link) in self.links.iter().enumerate() {
            if link.seller == link.buyer {
                return Err(format!("link {l} is a self-loop"));
            }
            if link.setup_cost < 0 {
                return Err(format!("link {l} has negative setup cost"));
            }
            if self.firms[link.seller].catalog_slot(link.product).is_none() {
                return Err(format!("link {l} seller does not make product {}", link.product));
            }
        }
        for (c, consumer) in self.consumers.iter().enumerate() {
            if !self.locations[consumer.home].consumers.contains(&c) {
                return Err(format!("consumer {c} is not in its home location range"));
            }
        }
        Ok(())
    }
}
