//! Firm objectives and the Monte Carlo search over supply-chain configurations.
//!
//! A firm scores a configuration (extra suppliers opened at t = 0) by
//! `w1 * Op_norm + w2 * Ob_norm`, each averaged over a small panel of epidemic
//! draws. Scores for a sampled configuration do not depend on the weights, so
//! one batch of evaluations serves every weight setting.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::Cents;
use crate::parallel;
use crate::rng::{SeedStream, SimRng};
use crate::simulate::{profit_ratio, run_economy, running_means, EpidemicTrace, Trajectories};
use crate::world::{FirmId, LinkId, World};

/// Profit weight `w1` and resilience weight `w2 = 1 - w1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyWeights {
    pub w1: f64,
    pub w2: f64,
}

impl StrategyWeights {
    pub fn new(w1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w1) {
            return Err(Error::field("w1", format!("must lie in [0, 1], got {w1}")));
        }
        Ok(StrategyWeights { w1, w2: 1.0 - w1 })
    }
}

pub fn objective_score(weights: StrategyWeights, op_norm: f64, ob_norm: f64) -> f64 {
    weights.w1 * op_norm + weights.w2 * ob_norm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyMode {
    ProfitOnly,
    ResilienceOnly,
    Balanced,
    Heterogeneous,
}

impl StrategyMode {
    pub const ALL: [StrategyMode; 4] =
        [StrategyMode::ProfitOnly, StrategyMode::ResilienceOnly, StrategyMode::Balanced, StrategyMode::Heterogeneous];

    pub fn name(self) -> &'static str {
        match self {
            StrategyMode::ProfitOnly => "profit_only",
            StrategyMode::ResilienceOnly => "resilience_only",
            StrategyMode::Balanced => "balanced",
            StrategyMode::Heterogeneous => "heterogeneous",
        }
    }
}

impl fmt::Display for StrategyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::field("mode", format!("unknown strategy mode `{s}`")))
    }
}

/// Weights for `n_firms` firms under a mode. Heterogeneous firms draw `w1`
/// uniformly from [0, 1].
pub fn assign_strategy_mode(n_firms: usize, mode: StrategyMode, rng: &mut SimRng) -> Vec<StrategyWeights> {
    (0..n_firms)
        .map(|_| {
            let w1 = match mode {
                StrategyMode::ProfitOnly => 1.0,
                StrategyMode::ResilienceOnly => 0.0,
                StrategyMode::Balanced => 0.5,
                StrategyMode::Heterogeneous => rng.random_range(0.0..=1.0),
            };
            StrategyWeights { w1, w2: 1.0 - w1 }
        })
        .collect()
}

/// Extra in-links a firm opens at t = 0, sorted by id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkConfiguration {
    pub firm: FirmId,
    pub links: Vec<LinkId>,
}

impl LinkConfiguration {
    pub fn setup_cost(&self, world: &World) -> Cents {
        self.links.iter().map(|&l| world.links[l].setup_cost).sum()
    }
}

/// Normalized outcome of one configuration for its firm, averaged over the panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEval {
    pub config: LinkConfiguration,
    pub setup_cost: Cents,
    pub op_norm: f64,
    pub ob_norm: f64,
}

impl ConfigEval {
    pub fn score(&self, weights: StrategyWeights) -> f64 {
        objective_score(weights, self.op_norm, self.ob_norm)
    }

    /// Realized `Op_norm + Ob_norm`.
    pub fn target(&self) -> f64 {
        self.op_norm + self.ob_norm
    }
}

/// One epidemic draw with its paired no-pandemic run of the incumbent network.
struct PanelMember {
    trace: EpidemicTrace,
    economy: SeedStream,
    baseline: Trajectories,
}

/// Evaluates configurations of single firms against a fixed panel of
/// epidemic draws; everyone else keeps the incumbent network.
pub struct Evaluator<'w> {
    pub world: &'w World,
    pub horizon: u32,
    panel: Vec<PanelMember>,
}

impl<'w> Evaluator<'w> {
    /// Builds `panel` epidemic draws descending from `stream`.
    pub fn new(world: &'w World, horizon: u32, stream: SeedStream, panel: usize) -> Self {
        let quiet = EpidemicTrace::build(world, horizon, stream.child("baseline"), false);
        let members: Vec<u64> = (0..panel as u64).collect();
        let panel = parallel::map(&members, |&k| {
            let s = stream.indexed("panel", k);
            let economy = s.child("economy");
            PanelMember {
                trace: EpidemicTrace::build(world, horizon, s.child("epidemic"), true),
                economy,
                baseline: run_economy(world, &quiet, &[], economy),
            }
        });
        Evaluator { world, horizon, panel }
    }

    pub fn panel_size(&self) -> usize {
        self.panel.len()
    }

    /// Op_norm and Ob_norm of `firm` when `links` are opened, averaged over the panel.
    pub fn evaluate(&self, config: &LinkConfiguration) -> ConfigEval {
        let firm = config.firm;
        let (mut op, mut ob) = (0.0, 0.0);
        for m in &self.panel {
            let run = run_economy(self.world, &m.trace, &config.links, m.economy);
            let (p, b) = firm_outcome(&run, &m.baseline, firm);
            op += p;
            ob += b;
        }
        let n = self.panel.len() as f64;
        ConfigEval { setup_cost: config.setup_cost(self.world), config: config.clone(), op_norm: op / n, ob_norm: ob / n }
    }

    /// Evaluates many configurations as independent jobs, in input order.
    pub fn evaluate_all(&self, configs: &[LinkConfiguration]) -> Vec<ConfigEval> {
        parallel::map(configs, |c| self.evaluate(c))
    }
}

/// Normalized profit and survival of one firm against its baseline run.
pub fn firm_outcome(run: &Trajectories, baseline: &Trajectories, firm: FirmId) -> (f64, f64) {
    let a = *running_means(&run.money[firm]).last().expect("non-empty path");
    let b = *running_means(&baseline.money[firm]).last().expect("non-empty path");
    let ob = crate::simulate::compute_ob(&run.money[firm]);
    let ob_base = crate::simulate::compute_ob(&baseline.money[firm]);
    let ob_norm = if ob >= ob_base || ob_base == 0 { 1.0 } else { f64::from(ob) / f64::from(ob_base) };
    (profit_ratio(a, b), ob_norm)
}

/// Draws `zeta` subsets of `candidates`, each link included with probability 1/2.
pub fn sample_configurations(firm: FirmId, candidates: &[LinkId], zeta: u32, stream: SeedStream) -> Vec<LinkConfiguration> {
    let mut rng = stream.child("configurations").rng();
    (0..zeta)
        .map(|_| {
            let links = candidates.iter().copied().filter(|_| rng.random_bool(0.5)).collect::<Vec<_>>();
            let mut links = links;
            links.sort_unstable();
            LinkConfiguration { firm, links }
        })
        .collect()
}

/// All `2^k` subsets of `candidates` (k at most 20).
pub fn enumerate_configurations(firm: FirmId, candidates: &[LinkId]) -> Vec<LinkConfiguration> {
    assert!(candidates.len() <= 20, "too many candidates to enumerate");
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    (0u32..(1 << sorted.len()))
        .map(|mask| LinkConfiguration {
            firm,
            links: sorted.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &l)| l).collect(),
        })
        .collect()
}

/// Distinct configurations in first-seen order.
pub fn distinct(configs: &[LinkConfiguration]) -> Vec<LinkConfiguration> {
    let mut seen = BTreeSet::new();
    configs.iter().filter(|c| seen.insert((*c).clone())).cloned().collect()
}

/// Best evaluation under `weights`: highest score, then lower setup cost,
/// then the lexicographically smaller link set.
pub fn choose(evals: &[ConfigEval], weights: StrategyWeights) -> Option<&ConfigEval> {
    evals.iter().min_by(|a, b| {
        let (sa, sb) = (a.score(weights), b.score(weights));
        sb.partial_cmp(&sa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.setup_cost.cmp(&b.setup_cost))
            .then_with(|| a.config.links.cmp(&b.config.links))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOutcome {
    pub best: ConfigEval,
    pub score: f64,
    /// Distinct configurations simulated.
    pub evaluated: usize,
}

/// Samples `zeta` configurations of the firm's candidate links, simulates
/// each distinct one on the evaluator's panel and returns the best.
pub fn monte_carlo_optimize(
    eval: &Evaluator<'_>,
    firm: FirmId,
    weights: StrategyWeights,
    zeta: u32,
    stream: SeedStream,
) -> Result<McOutcome> {
    let evals = sample_and_evaluate(eval, firm, zeta, stream)?;
    let best = choose(&evals, weights).expect("at least one sample").clone();
    Ok(McOutcome { score: best.score(weights), evaluated: evals.len(), best })
}

/// The weight-independent half of [`monte_carlo_optimize`].
pub fn sample_and_evaluate(eval: &Evaluator<'_>, firm: FirmId, zeta: u32, stream: SeedStream) -> Result<Vec<ConfigEval>> {
    if zeta == 0 {
        return Err(Error::field("zeta", "at least one Monte Carlo sample is required"));
    }
    let candidates = eval.world.candidate_links(firm);
    let samples = distinct(&sample_configurations(firm, &candidates, zeta, stream));
    Ok(eval.evaluate_all(&samples))
}
