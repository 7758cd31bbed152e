//! Scenario description: sampling ranges for every world parameter.
//!
//! Documents are JSON objects. Parsing is strict: unknown keys are rejected,
//! and every missing field and every out-of-range value is reported in one
//! error instead of stopping at the first problem.

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, FieldError, Result};
use crate::rng::SimRng;

/// Inclusive real interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Span {
    fn from(v: [f64; 2]) -> Self {
        Span { lo: v[0], hi: v[1] }
    }
}

impl From<Span> for [f64; 2] {
    fn from(s: Span) -> Self {
        [s.lo, s.hi]
    }
}

impl Span {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Span { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Span { lo: v, hi: v }
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Inclusive integer interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct IntSpan {
    pub lo: u32,
    pub hi: u32,
}

impl From<[u32; 2]> for IntSpan {
    fn from(v: [u32; 2]) -> Self {
        IntSpan { lo: v[0], hi: v[1] }
    }
}

impl From<IntSpan> for [u32; 2] {
    fn from(s: IntSpan) -> Self {
        [s.lo, s.hi]
    }
}

impl IntSpan {
    pub const fn new(lo: u32, hi: u32) -> Self {
        IntSpan { lo, hi }
    }

    pub const fn point(v: u32) -> Self {
        IntSpan { lo: v, hi: v }
    }

    pub fn sample(&self, rng: &mut SimRng) -> u32 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    pub fn contains(&self, v: u32) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Published parameter bounds. Every sampled value must fall inside these.
pub mod bounds {
    use super::{IntSpan, Span};

    pub const HORIZON: u32 = 365;
    pub const STEP_DAYS: f64 = 1.0;
    pub const MC_REPETITIONS: u32 = 1000;
    pub const LOCATIONS: IntSpan = IntSpan::new(1, 20);
    pub const CONSUMERS_PER_LOCATION: IntSpan = IntSpan::new(500, 5000);
    pub const FIRMS_PER_LOCATION: IntSpan = IntSpan::new(5, 50);
    pub const PRODUCTS: IntSpan = IntSpan::new(10, 250);
    pub const CONSUMER_MONEY: Span = Span::new(1e2, 5e6);
    pub const SALARY: Span = Span::new(55.0, 5500.0);
    pub const FIRM_MONEY: Span = Span::new(1e4, 5e7);
    pub const OP_COST_FRACTION: Span = Span::new(0.0025, 0.025);
    pub const WORKERS: IntSpan = IntSpan::new(1, 1000);
    pub const PRODUCT_PRICE: Span = Span::new(1.0, 1e4);
    pub const BETA: Span = Span::new(5e-5, 1e-2);
    pub const THETA: IntSpan = IntSpan::new(5, 9);
    pub const GAMMA: IntSpan = IntSpan::new(10, 18);
    pub const RHO: Span = Span::new(0.975, 0.995);
    pub const INGREDIENTS_PER_PRODUCT: IntSpan = IntSpan::new(1, 20);
    pub const RETAIL_PRODUCTS_PER_FIRM: IntSpan = IntSpan::new(1, 10);
    /// Profit margin over unit cost when pricing downstream products.
    pub const MARGIN: Span = Span::new(0.01, 0.5);
}

/// Economic mechanics with no published value. All have defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EconomyKnobs {
    /// Largest production batch a firm starts per product line.
    pub batch_cap: u32,
    /// Multiplier of the order-up-to level over forecast demand.
    pub replenish_multiplier: f64,
    /// Trailing window, in steps, for demand forecasts.
    pub forecast_window: u32,
    /// Preparation time of products, in steps.
    pub prep_time: IntSpan,
    /// Share of firms that are factories.
    pub factory_share: f64,
    /// Share of products with no ingredients.
    pub raw_product_share: f64,
    /// Distinct products a consumer demands.
    pub demanded_products: IntSpan,
    /// Units per demanded product per step.
    pub base_demand: IntSpan,
    /// Pandemic demand shift per demanded product, in units at full prevalence.
    pub demand_shift: Span,
    /// Link setup cost as a fraction of the buyer's initial money.
    pub setup_cost_fraction: Span,
    /// Lead time of links between firms at the same location.
    pub local_lead_time: IntSpan,
    /// Lead time of links crossing locations.
    pub remote_lead_time: IntSpan,
    /// Operational cost as a share of a firm's planned gross margin.
    pub op_cost_share: Span,
    /// Largest share of salary a consumer's base basket may cost.
    pub basket_budget_share: f64,
    /// Random links added before giving up on a world.
    pub bootstrap_limit: u32,
}

impl Default for EconomyKnobs {
    fn default() -> Self {
        EconomyKnobs {
            batch_cap: 100,
            replenish_multiplier: 2.0,
            forecast_window: 7,
            prep_time: IntSpan::new(1, 3),
            factory_share: 0.35,
            raw_product_share: 0.3,
            demanded_products: IntSpan::new(1, 2),
            base_demand: IntSpan::new(1, 1),
            demand_shift: Span::new(-1.5, 1.0),
            setup_cost_fraction: Span::new(0.02, 0.15),
            local_lead_time: IntSpan::new(0, 1),
            remote_lead_time: IntSpan::new(2, 5),
            op_cost_share: Span::new(0.5, 0.9),
            basket_budget_share: 1.0,
            bootstrap_limit: 5000,
        }
    }
}

/// Sampling ranges for one family of worlds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub locations: IntSpan,
    pub consumers_per_location: IntSpan,
    pub firms_per_location: IntSpan,
    pub products: IntSpan,
    pub consumer_money: Span,
    pub salary: Span,
    pub firm_money: Span,
    pub op_cost_fraction: Span,
    pub workers: IntSpan,
    pub product_price: Span,
    pub beta: Span,
    pub theta: IntSpan,
    pub gamma: IntSpan,
    pub rho: Span,
    pub ingredients_per_product: IntSpan,
    pub retail_products_per_firm: IntSpan,
    #[serde(default = "default_horizon")]
    pub horizon: u32,
    #[serde(default = "default_step_days")]
    pub step_days: f64,
    #[serde(default = "default_mc")]
    pub mc_repetitions: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub economy: EconomyKnobs,
}

fn default_horizon() -> u32 {
    bounds::HORIZON
}
fn default_step_days() -> f64 {
    bounds::STEP_DAYS
}
fn default_mc() -> u32 {
    bounds::MC_REPETITIONS
}

const REQUIRED: &[&str] = &[
    "locations",
    "consumers_per_location",
    "firms_per_location",
    "products",
    "consumer_money",
    "salary",
    "firm_money",
    "op_cost_fraction",
    "workers",
    "product_price",
    "beta",
    "theta",
    "gamma",
    "rho",
    "ingredients_per_product",
    "retail_products_per_firm",
];
const OPTIONAL: &[&str] = &["horizon", "step_days", "mc_repetitions", "seed", "economy"];

impl ScenarioSpec {
    /// The full published ranges.
    pub fn published() -> Self {
        use bounds::*;
        ScenarioSpec {
            locations: LOCATIONS,
            consumers_per_location: CONSUMERS_PER_LOCATION,
            firms_per_location: FIRMS_PER_LOCATION,
            products: PRODUCTS,
            consumer_money: CONSUMER_MONEY,
            salary: SALARY,
            firm_money: FIRM_MONEY,
            op_cost_fraction: OP_COST_FRACTION,
            workers: WORKERS,
            product_price: PRODUCT_PRICE,
            beta: BETA,
            theta: THETA,
            gamma: GAMMA,
            rho: RHO,
            ingredients_per_product: INGREDIENTS_PER_PRODUCT,
            retail_products_per_firm: RETAIL_PRODUCTS_PER_FIRM,
            horizon: HORIZON,
            step_days: STEP_DAYS,
            mc_repetitions: MC_REPETITIONS,
            seed: 0,
            economy: EconomyKnobs::default(),
        }
    }

    /// Small worlds for tests and desk experiments. Every range sits inside
    /// the published bounds.
    pub fn desk() -> Self {
        ScenarioSpec {
            locations: IntSpan::new(2, 3),
            consumers_per_location: IntSpan::point(500),
            firms_per_location: IntSpan::point(5),
            products: IntSpan::point(10),
            consumer_money: Span::new(1e2, 2e3),
            salary: Span::new(55.0, 400.0),
            firm_money: Span::new(1e4, 5e7),
            op_cost_fraction: Span::new(0.0025, 0.025),
            workers: IntSpan::new(1, 12),
            product_price: Span::new(1.0, 40.0),
            beta: bounds::BETA,
            theta: bounds::THETA,
            gamma: bounds::GAMMA,
            rho: bounds::RHO,
            ingredients_per_product: IntSpan::new(1, 2),
            retail_products_per_firm: IntSpan::new(1, 2),
            horizon: bounds::HORIZON,
            step_days: bounds::STEP_DAYS,
            mc_repetitions: bounds::MC_REPETITIONS,
            seed: 0,
            economy: EconomyKnobs { batch_cap: 2000, ..EconomyKnobs::default() },
        }
    }

    /// Strict parse of a JSON document followed by full validation.
    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_value(&parse_document(text)?)
    }

    /// Strict conversion of an already parsed document.
    pub fn from_value(value: &Value) -> Result<Self> {
        let map = match value {
            Value::Object(m) => m,
            _ => return Err(Error::field("<root>", "expected a JSON object")),
        };
        let mut errors = Vec::new();
        for key in map.keys() {
            if !REQUIRED.contains(&key.as_str()) && !OPTIONAL.contains(&key.as_str()) {
                errors.push(FieldError::new(key, "unknown field"));
            }
        }
        for key in REQUIRED {
            if !map.contains_key(*key) {
                errors.push(FieldError::new(*key, "missing required field"));
            }
        }
        let spec = ScenarioSpec {
            locations: take(map, "locations", &mut errors),
            consumers_per_location: take(map, "consumers_per_location", &mut errors),
            firms_per_location: take(map, "firms_per_location", &mut errors),
            products: take(map, "products", &mut errors),
            consumer_money: take(map, "consumer_money", &mut errors),
            salary: take(map, "salary", &mut errors),
            firm_money: take(map, "firm_money", &mut errors),
            op_cost_fraction: take(map, "op_cost_fraction", &mut errors),
            workers: take(map, "workers", &mut errors),
            product_price: take(map, "product_price", &mut errors),
            beta: take(map, "beta", &mut errors),
            theta: take(map, "theta", &mut errors),
            gamma: take(map, "gamma", &mut errors),
            rho: take(map, "rho", &mut errors),
            ingredients_per_product: take(map, "ingredients_per_product", &mut errors),
            retail_products_per_firm: take(map, "retail_products_per_firm", &mut errors),
            horizon: take_or(map, "horizon", default_horizon(), &mut errors),
            step_days: take_or(map, "step_days", default_step_days(), &mut errors),
            mc_repetitions: take_or(map, "mc_repetitions", default_mc(), &mut errors),
            seed: take_or(map, "seed", 0, &mut errors),
            economy: take_or(map, "economy", EconomyKnobs::default(), &mut errors),
        };
        if errors.is_empty() {
            errors.extend(spec.validation_errors());
        }
        if errors.is_empty() {
            Ok(spec)
        } else {
            Err(Error::Validation(errors))
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let errors = self.validation_errors();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }

    /// Every violated constraint, not only the first.
    pub fn validation_errors(&self) -> Vec<FieldError> {
        use bounds::*;
        let mut errs = Vec::new();
        check_int(&mut errs, "locations", self.locations, LOCATIONS);
        check_int(&mut errs, "consumers_per_location", self.consumers_per_location, CONSUMERS_PER_LOCATION);
        check_int(&mut errs, "firms_per_location", self.firms_per_location, FIRMS_PER_LOCATION);
        check_int(&mut errs, "products", self.products, PRODUCTS);
        check_real(&mut errs, "consumer_money", self.consumer_money, CONSUMER_MONEY);
        check_real(&mut errs, "salary", self.salary, SALARY);
        check_real(&mut errs, "firm_money", self.firm_money, FIRM_MONEY);
        check_real(&mut errs, "op_cost_fraction", self.op_cost_fraction, OP_COST_FRACTION);
        check_int(&mut errs, "workers", self.workers, WORKERS);
        check_real(&mut errs, "product_price", self.product_price, PRODUCT_PRICE);
        check_real(&mut errs, "beta", self.beta, BETA);
        check_int(&mut errs, "theta", self.theta, THETA);
        check_int(&mut errs, "gamma", self.gamma, GAMMA);
        check_real(&mut errs, "rho", self.rho, RHO);
        check_int(&mut errs, "ingredients_per_product", self.ingredients_per_product, INGREDIENTS_PER_PRODUCT);
        check_int(&mut errs, "retail_products_per_firm", self.retail_products_per_firm, RETAIL_PRODUCTS_PER_FIRM);
        if self.horizon != HORIZON {
            errs.push(FieldError::new("horizon", format!("must be {HORIZON}, got {}", self.horizon)));
        }
        if self.step_days != STEP_DAYS {
            errs.push(FieldError::new("step_days", format!("must be {STEP_DAYS}, got {}", self.step_days)));
        }
        if self.mc_repetitions == 0 {
            errs.push(FieldError::new("mc_repetitions", "must be at least 1"));
        }
        errs.extend(self.economy.validation_errors());
        errs
    }
}

impl EconomyKnobs {
    pub fn validation_errors(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut push = |f: &str, m: String| errs.push(FieldError::new(format!("economy.{f}"), m));
        if self.batch_cap == 0 {
            push("batch_cap", "must be at least 1".into());
        }
        if !(self.replenish_multiplier >= 1.0) {
            push("replenish_multiplier", format!("must be >= 1, got {}", self.replenish_multiplier));
        }
        if self.forecast_window == 0 {
            push("forecast_window", "must be at least 1".into());
        }
        if self.prep_time.lo == 0 || self.prep_time.lo > self.prep_time.hi {
            push("prep_time", "must be an ordered range starting at 1 or more".into());
        }
        for (name, v) in [("factory_share", self.factory_share), ("raw_product_share", self.raw_product_share)] {
            if !(v > 0.0 && v < 1.0) {
                push(name, format!("must lie strictly between 0 and 1, got {v}"));
            }
        }
        if self.demanded_products.lo == 0 || self.demanded_products.lo > self.demanded_products.hi {
            push("demanded_products", "must be an ordered range starting at 1 or more".into());
        }
        if self.base_demand.lo > self.base_demand.hi {
            push("base_demand", "must be an ordered range".into());
        }
        if self.demand_shift.lo > self.demand_shift.hi {
            push("demand_shift", "must be an ordered range".into());
        }
        let sc = self.setup_cost_fraction;
        if sc.lo < 0.0 || sc.lo > sc.hi {
            push("setup_cost_fraction", "must be an ordered non-negative range".into());
        }
        if self.local_lead_time.lo > self.local_lead_time.hi {
            push("local_lead_time", "must be an ordered range".into());
        }
        if self.remote_lead_time.lo > self.remote_lead_time.hi {
            push("remote_lead_time", "must be an ordered range".into());
        }
        let oc = self.op_cost_share;
        if !(oc.lo > 0.0 && oc.hi < 1.0 && oc.lo <= oc.hi) {
            push("op_cost_share", "must be an ordered range inside (0, 1)".into());
        }
        if !(self.basket_budget_share > 0.0) {
            push("basket_budget_share", "must be positive".into());
        }
        if self.bootstrap_limit == 0 {
            push("bootstrap_limit", "must be at least 1".into());
        }
        errs
    }
}

fn check_int(errs: &mut Vec<FieldError>, name: &str, v: IntSpan, legal: IntSpan) {
    if v.lo > v.hi {
        errs.push(FieldError::new(name, format!("range [{}, {}] is reversed", v.lo, v.hi)));
    } else if !legal.contains(v.lo) || !legal.contains(v.hi) {
        errs.push(FieldError::new(
            name,
            format!("range [{}, {}] outside the legal range [{}, {}]", v.lo, v.hi, legal.lo, legal.hi),
        ));
    }
}

fn check_real(errs: &mut Vec<FieldError>, name: &str, v: Span, legal: Span) {
    if !(v.lo.is_finite() && v.hi.is_finite()) || v.lo > v.hi {
        errs.push(FieldError::new(name, format!("range [{}, {}] is reversed or not finite", v.lo, v.hi)));
    } else if !legal.contains(v.lo) || !legal.contains(v.hi) {
        errs.push(FieldError::new(
            name,
            format!("range [{}, {}] outside the legal range [{}, {}]", v.lo, v.hi, legal.lo, legal.hi),
        ));
    }
}

/// Parses JSON text; a blank document is read as an empty object.
pub(crate) fn parse_document(text: &str) -> Result<Value> {
    if text.trim().is_empty() {
        return Ok(Value::Object(Map::new()));
    }
    serde_json::from_str(text).map_err(|e| Error::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub(crate) fn take<T: DeserializeOwned + Default>(map: &Map<String, Value>, key: &str, errors: &mut Vec<FieldError>) -> T {
    match map.get(key) {
        None => T::default(),
        Some(v) => serde_json::from_value(v.clone()).unwrap_or_else(|e| {
            errors.push(FieldError::new(key, e.to_string()));
            T::default()
        }),
    }
}

pub(crate) fn take_or<T: DeserializeOwned>(
    map: &Map<String, Value>,
    key: &str,
    default: T,
    errors: &mut Vec<FieldError>,
) -> T {
    match map.get(key) {
        None => default,
        Some(v) => match serde_json::from_value(v.clone()) {
            Ok(x) => x,
            Err(e) => {
                errors.push(FieldError::new(key, e.to_string()));
                default
            }
        },
    }
}

impl Default for Span {
    fn default() -> Self {
        Span::point(0.0)
    }
}

impl Default for IntSpan {
    fn default() -> Self {
        IntSpan::point(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_lists_all_required_fields() {
        let err = ScenarioSpec::from_json_str("").unwrap_err();
        let Error::Validation(list) = err else { panic!("expected validation error") };
        let fields: Vec<_> = list.iter().map(|e| e.field.as_str()).collect();
        for req in REQUIRED {
            assert!(fields.contains(req), "{req} not reported");
        }
    }

    #[test]
    fn out_of_range_beta_is_named_with_legal_range() {
        let mut v = serde_json::to_value(ScenarioSpec::desk()).unwrap();
        v["beta"] = serde_json::json!([0.5, 0.6]);
        v["salary"] = serde_json::json!([1.0, 2.0]);
        let err = ScenarioSpec::from_json_str(&v.to_string()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("beta"), "{msg}");
        assert!(msg.contains("0.00005") && msg.contains("0.01"), "{msg}");
        // both violations are reported together
        assert!(msg.contains("salary"), "{msg}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v = serde_json::to_value(ScenarioSpec::desk()).unwrap();
        v["betta"] = serde_json::json!(1);
        let msg = ScenarioSpec::from_json_str(&v.to_string()).unwrap_err().to_string();
        assert!(msg.contains("betta: unknown field"), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = ScenarioSpec::from_json_str("{\n  \"locations\": [1, 2,\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 3, .. }), "{err}");
    }

    #[test]
    fn minimal_spec_round_trips_to_normal_form() {
        let minimal = r#"{
            "locations": [1, 2], "consumers_per_location": [500, 500], "firms_per_location": [5, 5],
            "products": [10, 10], "consumer_money": [100, 1000], "salary": [55, 100],
            "firm_money": [10000, 20000], "op_cost_fraction": [0.0025, 0.025], "workers": [1, 5],
            "product_price": [1, 10], "beta": [0.001, 0.002], "theta": [5, 9], "gamma": [10, 18],
            "rho": [0.975, 0.995], "ingredients_per_product": [1, 2], "retail_products_per_firm": [1, 2]
        }"#;
        let parsed = ScenarioSpec::from_json_str(minimal).unwrap();
        let again = ScenarioSpec::from_json_str(&parsed.to_json_string()).unwrap();
        assert_eq!(parsed, again);
        assert_eq!(parsed.to_json_string(), again.to_json_string());
        assert_eq!(parsed.economy, EconomyKnobs::default());
        assert_eq!(parsed.horizon, 365);
    }

    #[test]
    fn presets_are_valid() {
        ScenarioSpec::published().validate().unwrap();
        ScenarioSpec::desk().validate().unwrap();
    }
}
