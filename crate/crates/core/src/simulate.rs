//! The synchronous round loop and the per-firm objective measurements.
//!
//! The epidemic never looks at the economy, so a run is split in two: an
//! [`EpidemicTrace`] computed once per (world, epidemic seed), and the economy
//! replayed on top of it. Strategy search reuses one trace across many
//! economy runs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::economy::{
    consumer_step, deliver_shipments, establish_due_links, firm_step, FirmState, Market, ScheduledLink,
    ShoppingScratch,
};
use crate::epidemic::{demand_shift_fraction, step_epidemic, Compartment, HealthState, LocationEpiCounts};
use crate::money::{to_dollars, Cents};
use crate::rng::SeedStream;
use crate::world::{FirmId, LinkId, World};

/// Everything the economy needs from the epidemic, step by step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicTrace {
    pub horizon: u32,
    /// Counts per step (0..=horizon) and location.
    pub counts: Vec<Vec<LocationEpiCounts>>,
    /// Infectious share of the living population per step and location.
    pub fraction: Vec<Vec<f64>>,
    /// Infectious or dead workers per step and firm.
    pub unavailable: Vec<Vec<u32>>,
    /// Step at which each consumer died, `u32::MAX` if never.
    pub death_step: Vec<u32>,
}

impl EpidemicTrace {
    /// Runs every location's epidemic for `horizon` steps. Without a pandemic
    /// everyone stays susceptible and nothing is drawn.
    pub fn build(world: &World, horizon: u32, stream: SeedStream, pandemic: bool) -> Self {
        let n_loc = world.locations.len();
        let mut health: Vec<HealthState> = if pandemic {
            world.initial_health.clone()
        } else {
            vec![HealthState::SUSCEPTIBLE; world.consumers.len()]
        };
        let mut counts = Vec::with_capacity(horizon as usize + 1);
        let first: Vec<LocationEpiCounts> = world
            .locations
            .iter()
            .map(|l| LocationEpiCounts::tally(&health[l.consumers.clone()]))
            .collect();
        counts.push(first);
        let mut rngs: Vec<_> = (0..n_loc).map(|l| stream.indexed("location", l as u64).rng()).collect();
        let mut death_step = vec![u32::MAX; world.consumers.len()];
        let mut unavailable = Vec::with_capacity(horizon as usize + 1);
        unavailable.push(unavailable_workers(world, &health));
        for t in 1..=horizon {
            let prev = &counts[t as usize - 1];
            let mut row = Vec::with_capacity(n_loc);
            let mut changed = false;
            for (l, loc) in world.locations.iter().enumerate() {
                let c = prev[l];
                if c.e == 0 && c.i == 0 {
                    // Quiescent: clocks would advance but no state can change.
                    row.push(c);
                    continue;
                }
                changed = true;
                let pop = &mut health[loc.consumers.clone()];
                let before_dead = c.d;
                let next = step_epidemic(pop, &c, &loc.epi, &mut rngs[l]);
                if next.d > before_dead {
                    for (k, h) in pop.iter().enumerate() {
                        let id = loc.consumers.start + k;
                        if h.state == Compartment::D && death_step[id] == u32::MAX {
                            death_step[id] = t;
                        }
                    }
                }
                row.push(next);
            }
            counts.push(row);
            if changed {
                unavailable.push(unavailable_workers(world, &health));
            } else {
                let last = unavailable.last().cloned().unwrap_or_default();
                unavailable.push(last);
            }
        }
        let fraction = counts.iter().map(|row| row.iter().map(demand_shift_fraction).collect()).collect();
        EpidemicTrace { horizon, counts, fraction, unavailable, death_step }
    }

    pub fn is_alive(&self, consumer: usize, t: u32) -> bool {
        self.death_step[consumer] > t
    }
}

fn unavailable_workers(world: &World, health: &[HealthState]) -> Vec<u32> {
    world
        .firms
        .iter()
        .map(|f| {
            f.workers
                .iter()
                .filter(|&&w| matches!(health[w].state, Compartment::I | Compartment::D))
                .count() as u32
        })
        .collect()
}

/// Money paths and bankruptcy records of one economy run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectories {
    /// Money per firm and step (0..=horizon), in cents.
    pub money: Vec<Vec<Cents>>,
    pub bankrupt_since: Vec<Option<u32>>,
    /// Per step: change of total money minus (salaries paid - operating costs).
    /// Zero on every step when money is conserved.
    pub ledger_residual: Vec<Cents>,
}

impl Trajectories {
    pub fn horizon(&self) -> u32 {
        self.money.first().map_or(0, |m| m.len() as u32 - 1)
    }
}

/// Replays the economy over a precomputed epidemic.
///
/// `extra_links` are opened at t = 0 on top of the incumbent network, each
/// paid for by its buyer if affordable; unaffordable ones are retried every
/// step until they can be paid.
pub fn run_economy(world: &World, trace: &EpidemicTrace, extra_links: &[LinkId], stream: SeedStream) -> Trajectories {
    let horizon = trace.horizon;
    let n_firms = world.firms.len();
    let mut rng = stream.child("economy").rng();
    let mut established: Vec<bool> = world.links.iter().map(|l| l.established).collect();
    let mut firms: Vec<FirmState> = (0..n_firms).map(|f| FirmState::new(world, f)).collect();
    let mut consumer_money: Vec<Cents> = world.consumers.iter().map(|c| c.money).collect();
    let mut schedules: Vec<Vec<ScheduledLink>> = vec![Vec::new(); n_firms];
    for &l in extra_links {
        if !established[l] {
            schedules[world.links[l].buyer].push(ScheduledLink { link: l, step: 0 });
        }
    }
    for f in 0..n_firms {
        if !schedules[f].is_empty() {
            establish_due_links(world, f, 0, &mut schedules[f], &mut established, &mut firms);
        }
    }

    let mut money: Vec<Vec<Cents>> = (0..n_firms)
        .map(|f| {
            let mut v = Vec::with_capacity(horizon as usize + 1);
            v.push(firms[f].money);
            v
        })
        .collect();
    let mut bankrupt_since: Vec<Option<u32>> = firms.iter().map(|s| (s.money < 0).then_some(0)).collect();
    let total_op_cost: Cents = world.firms.iter().map(|f| f.op_cost).sum();
    let mut total = consumer_money.iter().sum::<Cents>() + firms.iter().map(|s| s.money).sum::<Cents>();
    let mut ledger_residual = Vec::with_capacity(horizon as usize);

    let mut market = Market::new(world);
    let mut scratch = ShoppingScratch::default();
    for t in 1..=horizon {
        market.reset();
        let mut salaries: Cents = 0;
        for (loc, location) in world.locations.iter().enumerate() {
            let fraction = trace.fraction[t as usize][loc];
            for c in location.consumers.clone() {
                if !trace.is_alive(c, t) {
                    continue;
                }
                let consumer = &world.consumers[c];
                salaries += consumer.salary;
                consumer_step(consumer, &mut consumer_money[c], fraction, &mut market, &mut firms, &mut rng, &mut scratch);
            }
        }
        let unavailable = &trace.unavailable[t as usize];
        for f in 0..n_firms {
            firm_step(world, f, t, unavailable[f] as usize, &mut firms, &mut established, &mut schedules[f]);
        }
        for (f, state) in firms.iter_mut().enumerate() {
            deliver_shipments(state, t);
            state.close_round();
            money[f].push(state.money);
            if state.money < 0 && bankrupt_since[f].is_none() {
                bankrupt_since[f] = Some(t);
            }
        }
        let next_total = consumer_money.iter().sum::<Cents>() + firms.iter().map(|s| s.money).sum::<Cents>();
        ledger_residual.push(next_total - total - (salaries - total_op_cost));
        total = next_total;
    }
    for (f, state) in firms.iter_mut().enumerate() {
        state.bankrupt_since = bankrupt_since[f];
    }
    Trajectories { money, bankrupt_since, ledger_residual }
}

/// Full record of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub horizon: u32,
    pub trajectories: Trajectories,
    pub epi: Vec<Vec<LocationEpiCounts>>,
    /// Mean money per firm over the run, in currency units.
    pub op: Vec<f64>,
    /// First step with negative money per firm, or the horizon.
    pub ob: Vec<u32>,
}

impl SimulationResult {
    fn assemble(horizon: u32, trajectories: Trajectories, epi: Vec<Vec<LocationEpiCounts>>) -> Self {
        let op = trajectories.money.iter().map(|m| compute_op(m)).collect();
        let ob = trajectories.money.iter().map(|m| compute_ob(m)).collect();
        SimulationResult { horizon, trajectories, epi, op, ob }
    }
}

/// Seed streams of a run: the epidemic and the economy draw independently.
pub fn run_streams(seed: u64) -> (SeedStream, SeedStream) {
    let root = SeedStream::new(seed).child("run");
    (root.child("epidemic"), root.child("economy"))
}

/// Simulates the world under its pandemic for `horizon` steps.
pub fn run_simulation(world: &World, horizon: u32, seed: u64) -> SimulationResult {
    run_with(world, horizon, seed, true, &[])
}

/// The no-pandemic twin of [`run_simulation`] with the same seed.
pub fn run_baseline(world: &World, horizon: u32, seed: u64) -> SimulationResult {
    run_with(world, horizon, seed, false, &[])
}

pub fn run_with(world: &World, horizon: u32, seed: u64, pandemic: bool, extra_links: &[LinkId]) -> SimulationResult {
    let (epi, econ) = run_streams(seed);
    let trace = EpidemicTrace::build(world, horizon, epi, pandemic);
    let traj = run_economy(world, &trace, extra_links, econ);
    SimulationResult::assemble(horizon, traj, trace.counts)
}

/// Mean money over every recorded step, in currency units.
pub fn compute_op(money: &[Cents]) -> f64 {
    if money.is_empty() {
        return 0.0;
    }
    to_dollars(money.iter().sum::<Cents>()) / money.len() as f64
}

/// First step with negative money, or the horizon if there is none.
pub fn compute_ob(money: &[Cents]) -> u32 {
    let horizon = money.len().saturating_sub(1) as u32;
    money.iter().position(|&m| m < 0).map_or(horizon, |t| t as u32)
}

/// Running means of a money path: entry `t` is the mean over steps `0..=t`.
pub fn running_means(money: &[Cents]) -> Vec<f64> {
    let mut acc: i128 = 0;
    money
        .iter()
        .enumerate()
        .map(|(t, &m)| {
            acc += i128::from(m);
            acc as f64 / (t + 1) as f64
        })
        .collect()
}

/// A firm's share of baseline profit to date, in [0, 1].
pub fn profit_ratio(mean: f64, baseline_mean: f64) -> f64 {
    if baseline_mean <= 0.0 {
        return if mean >= baseline_mean { 1.0 } else { 0.0 };
    }
    (mean / baseline_mean).clamp(0.0, 1.0)
}

/// 1 if the firm is solvent at `t`, or if it had also failed by then without
/// the pandemic; 0 otherwise.
pub fn solvency(bankrupt_since: Option<u32>, baseline_since: Option<u32>, t: u32) -> f64 {
    let failed = bankrupt_since.is_some_and(|b| b <= t);
    let failed_anyway = baseline_since.is_some_and(|b| b <= t);
    if !failed || failed_anyway {
        1.0
    } else {
        0.0
    }
}

/// Economy performance relative to the no-pandemic baseline at every step,
/// averaged over `firms` (all firms when `None`).
pub fn normalized_series(run: &Trajectories, baseline: &Trajectories, firms: Option<&[FirmId]>) -> Vec<f64> {
    let all: Vec<FirmId>;
    let firms = match firms {
        Some(f) => f,
        None => {
            all = (0..run.money.len()).collect();
            &all
        }
    };
    let len = run.money.first().map_or(0, Vec::len);
    let mut out = vec![0.0; len];
    if firms.is_empty() {
        out.fill(1.0);
        return out;
    }
    for &f in firms {
        let a = running_means(&run.money[f]);
        let b = running_means(&baseline.money[f]);
        for t in 0..len {
            let p = profit_ratio(a[t], b[t]);
            let s = solvency(run.bankrupt_since[f], baseline.bankrupt_since[f], t as u32);
            out[t] += 0.5 * p + 0.5 * s;
        }
    }
    let n = firms.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// Normalized economy performance at step `t`.
pub fn normalized_performance(result: &SimulationResult, baseline: &SimulationResult, t: u32) -> f64 {
    normalized_series(&result.trajectories, &baseline.trajectories, None)[t as usize]
}

/// Row-oriented CSV: one line per step and firm with the firm's location counts.
pub fn result_csv(world: &World, result: &SimulationResult) -> String {
    let mut out = String::from("step,firm_id,money,location,s,e,i,r,d\n");
    for t in 0..=result.horizon as usize {
        for (f, firm) in world.firms.iter().enumerate() {
            let c = &result.epi[t][firm.location];
            let _ = writeln!(
                out,
                "{t},{f},{:.2},{},{},{},{},{},{}",
                to_dollars(result.trajectories.money[f][t]),
                firm.location,
                c.s,
                c.e,
                c.i,
                c.r,
                c.d
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmSummary {
    pub firm_id: FirmId,
    pub op: f64,
    pub ob: u32,
    pub bankrupt_since: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub horizon: u32,
    pub firms: Vec<FirmSummary>,
}

pub fn summarize(result: &SimulationResult) -> RunSummary {
    RunSummary {
        horizon: result.horizon,
        firms: (0..result.op.len())
            .map(|f| FirmSummary {
                firm_id: f,
                op: result.op[f],
                ob: result.ob[f],
                bankrupt_since: result.trajectories.bankrupt_since[f],
            })
            .collect(),
    }
}
