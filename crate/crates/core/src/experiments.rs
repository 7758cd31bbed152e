//! Experiment pipelines: strategy comparison over time, sensitivity sweeps of
//! the best profit weight, and the surrogate training dataset.
//!
//! Every run derives its world and epidemic draws from the master seed and its
//! run index only, so different strategy modes (and different sweep values)
//! see the same worlds, and results do not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, FieldError, Result};
use crate::money::to_dollars;
use crate::parallel;
use crate::rng::SeedStream;
use crate::scenario::{bounds, parse_document, take_or, IntSpan, ScenarioSpec, Span};
use crate::simulate::{normalized_series, run_economy, EpidemicTrace};
use crate::stats::{mean, std_dev};
use crate::strategy::{
    assign_strategy_mode, choose, sample_and_evaluate, ConfigEval, Evaluator, LinkConfiguration, StrategyMode,
    StrategyWeights,
};
use crate::world::{FirmId, World};
use crate::worldgen::build_world;

/// Parameters swept in sensitivity analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Beta,
    Gamma,
    ConsumersPerLocation,
    Locations,
}

impl SweepParam {
    pub const ALL: [SweepParam; 4] =
        [SweepParam::Beta, SweepParam::Gamma, SweepParam::ConsumersPerLocation, SweepParam::Locations];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::Gamma => "gamma",
            SweepParam::ConsumersPerLocation => "consumers_per_location",
            SweepParam::Locations => "locations",
        }
    }

    /// Pins the parameter to `value` in a copy of `spec`.
    pub fn pin(self, spec: &ScenarioSpec, value: f64) -> Result<ScenarioSpec> {
        let mut s = spec.clone();
        let int = || {
            if value.fract() != 0.0 || value < 0.0 {
                Err(Error::field(self.name(), format!("sweep value {value} is not a whole number")))
            } else {
                Ok(IntSpan::point(value as u32))
            }
        };
        match self {
            SweepParam::Beta => s.beta = Span::point(value),
            SweepParam::Gamma => s.gamma = int()?,
            SweepParam::ConsumersPerLocation => s.consumers_per_location = int()?,
            SweepParam::Locations => s.locations = int()?,
        }
        s.validate()?;
        Ok(s)
    }

    /// `n` evenly spaced values across the published range.
    pub fn default_grid(self, n: usize) -> Vec<f64> {
        let (lo, hi, integer) = match self {
            SweepParam::Beta => (bounds::BETA.lo, bounds::BETA.hi, false),
            SweepParam::Gamma => (f64::from(bounds::GAMMA.lo), f64::from(bounds::GAMMA.hi), true),
            SweepParam::ConsumersPerLocation => {
                (f64::from(bounds::CONSUMERS_PER_LOCATION.lo), f64::from(bounds::CONSUMERS_PER_LOCATION.hi), true)
            }
            SweepParam::Locations => (f64::from(bounds::LOCATIONS.lo), f64::from(bounds::LOCATIONS.hi), true),
        };
        let n = n.max(1);
        let mut out: Vec<f64> = (0..n)
            .map(|i| {
                let v = if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
                if integer {
                    v.round()
                } else {
                    v
                }
            })
            .collect();
        out.dedup();
        out
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let alias = match s {
            "consumers" | "n" => "consumers_per_location",
            "v" | "V" => "locations",
            other => other,
        };
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == alias)
            .ok_or_else(|| Error::field("param", format!("unknown sweep parameter `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub repetitions: u32,
}

/// Everything an experiment needs besides output locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    pub modes: Vec<StrategyMode>,
    /// Paired runs in a strategy comparison.
    pub repetitions: u32,
    /// Monte Carlo configurations sampled per firm.
    pub mc_samples: u32,
    /// Epidemic draws each configuration is scored on during the search.
    pub panel: u32,
    /// Fresh epidemic draws used to measure realized outcomes.
    pub holdout: u32,
    /// Profit weights tried per firm when looking for the best one.
    pub w1_grid: u32,
    pub sweeps: Vec<SweepConfig>,
    pub dataset_sims: u32,
    pub seed: u64,
}

const KEYS: &[&str] =
    &["scenario", "modes", "repetitions", "mc_samples", "panel", "holdout", "w1_grid", "sweeps", "dataset_sims", "seed"];

impl Default for ExperimentConfig {
    fn default() -> Self {
        let scenario = ScenarioSpec::desk();
        ExperimentConfig {
            mc_samples: scenario.mc_repetitions,
            scenario,
            modes: StrategyMode::ALL.to_vec(),
            repetitions: 100,
            panel: 3,
            holdout: 1,
            w1_grid: 20,
            sweeps: Vec::new(),
            dataset_sims: 500,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Strict parse: unknown keys are rejected and all problems reported together.
    /// `scenario` is either a full scenario object or a preset name
    /// (`"desk"` or `"published"`).
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value = parse_document(text)?;
        let Value::Object(map) = value else {
            return Err(Error::field("<root>", "expected a JSON object"));
        };
        let mut errors = Vec::new();
        for key in map.keys() {
            if !KEYS.contains(&key.as_str()) {
                errors.push(FieldError::new(key, "unknown field"));
            }
        }
        let d = ExperimentConfig::default();
        let scenario = match map.get("scenario") {
            None => d.scenario.clone(),
            Some(Value::String(name)) => match name.as_str() {
                "desk" => ScenarioSpec::desk(),
                "published" => ScenarioSpec::published(),
                other => {
                    errors.push(FieldError::new("scenario", format!("unknown preset `{other}`")));
                    d.scenario.clone()
                }
            },
            Some(v) => match ScenarioSpec::from_value(v) {
                Ok(s) => s,
                Err(Error::Validation(es)) => {
                    errors.extend(es.into_iter().map(|e| FieldError::new(format!("scenario.{}", e.field), e.message)));
                    d.scenario.clone()
                }
                Err(e) => return Err(e),
            },
        };
        let cfg = ExperimentConfig {
            mc_samples: take_or(&map, "mc_samples", scenario.mc_repetitions, &mut errors),
            modes: take_or(&map, "modes", d.modes.clone(), &mut errors),
            repetitions: take_or(&map, "repetitions", d.repetitions, &mut errors),
            panel: take_or(&map, "panel", d.panel, &mut errors),
            holdout: take_or(&map, "holdout", d.holdout, &mut errors),
            w1_grid: take_or(&map, "w1_grid", d.w1_grid, &mut errors),
            sweeps: take_or(&map, "sweeps", Vec::new(), &mut errors),
            dataset_sims: take_or(&map, "dataset_sims", d.dataset_sims, &mut errors),
            seed: take_or(&map, "seed", d.seed, &mut errors),
            scenario,
        };
        errors.extend(cfg.validation_errors());
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Validation(errors))
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validation_errors(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("repetitions", self.repetitions),
            ("mc_samples", self.mc_samples),
            ("panel", self.panel),
            ("holdout", self.holdout),
            ("dataset_sims", self.dataset_sims),
        ] {
            if v == 0 {
                errs.push(FieldError::new(name, "must be at least 1"));
            }
        }
        if self.w1_grid < 2 {
            errs.push(FieldError::new("w1_grid", "needs at least 2 points"));
        }
        if self.modes.is_empty() {
            errs.push(FieldError::new("modes", "list at least one strategy mode"));
        }
        for (i, sweep) in self.sweeps.iter().enumerate() {
            if sweep.repetitions < 2 {
                errs.push(FieldError::new(format!("sweeps[{i}].repetitions"), "must be at least 2"));
            }
            if sweep.values.is_empty() {
                errs.push(FieldError::new(format!("sweeps[{i}].values"), "must not be empty"));
            }
            for &v in &sweep.values {
                if let Err(Error::Validation(es)) = sweep.param.pin(&self.scenario, v) {
                    errs.extend(es.into_iter().map(|e| FieldError::new(format!("sweeps[{i}].{}", e.field), e.message)));
                }
            }
        }
        errs.extend(self.scenario.validation_errors().into_iter().map(|e| FieldError::new(format!("scenario.{}", e.field), e.message)));
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Evenly spaced profit weights on [0, 1], both ends included.
    pub fn w1_values(&self) -> Vec<f64> {
        w1_values(self.w1_grid)
    }
}

pub fn w1_values(points: u32) -> Vec<f64> {
    let n = points.max(2);
    (0..n).map(|i| f64::from(i) / f64::from(n - 1)).collect()
}

/// Builds a world with at least one firm facing a sourcing choice.
pub fn build_strategic_world(spec: &ScenarioSpec, stream: SeedStream) -> Result<World> {
    let mut last = None;
    for attempt in 0..20 {
        match build_world(spec, stream.indexed("world", attempt).seed()) {
            Ok(w) if !w.strategic_firms().is_empty() => return Ok(w),
            Ok(_) => {}
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Generation("no world with a sourcing choice".into())))
}

/// Sampled and scored configurations of every strategic firm of a world.
pub struct FirmSearch {
    pub firm: FirmId,
    pub evals: Vec<ConfigEval>,
}

fn search_all(world: &World, cfg: &ExperimentConfig, stream: SeedStream) -> Result<Vec<FirmSearch>> {
    let evaluator = Evaluator::new(world, cfg.scenario.horizon, stream.child("panel"), cfg.panel as usize);
    world
        .strategic_firms()
        .into_iter()
        .map(|firm| {
            let mut evals = sample_and_evaluate(&evaluator, firm, cfg.mc_samples, stream.indexed("firm", firm as u64))?;
            // Keeping the incumbent network is always an option.
            if !evals.iter().any(|e| e.config.links.is_empty()) {
                evals.push(evaluator.evaluate(&LinkConfiguration { firm, links: Vec::new() }));
            }
            Ok(FirmSearch { firm, evals })
        })
        .collect()
}

/// One paired run of the strategy comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRun {
    pub run: u32,
    /// Normalized performance per mode (config order) and step.
    pub series: Vec<Vec<f64>>,
    /// Links opened under each mode.
    pub links_opened: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub modes: Vec<StrategyMode>,
    pub horizon: u32,
    pub runs: Vec<CompareRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub t: u32,
    pub strategy: StrategyMode,
    pub mean_perf: f64,
    pub std_perf: f64,
    pub n: usize,
}

impl CompareReport {
    /// Per-run values of one mode at step `t`.
    pub fn values(&self, mode: StrategyMode, t: u32) -> Vec<f64> {
        let m = self.modes.iter().position(|&x| x == mode).expect("mode in report");
        self.runs.iter().map(|r| r.series[m][t as usize]).collect()
    }

    pub fn rows(&self) -> Vec<TimeseriesRow> {
        let mut rows = Vec::new();
        for t in 0..=self.horizon {
            for &mode in &self.modes {
                let v = self.values(mode, t);
                rows.push(TimeseriesRow { t, strategy: mode, mean_perf: mean(&v), std_perf: std_dev(&v), n: v.len() });
            }
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,strategy,mean_perf,std_perf,n\n");
        for r in self.rows() {
            let _ = writeln!(out, "{},{},{:.6},{:.6},{}", r.t, r.strategy, r.mean_perf, r.std_perf, r.n);
        }
        out
    }
}

/// Runs every mode on `repetitions` paired worlds and records normalized
/// economy performance over time.
pub fn compare_strategies(cfg: &ExperimentConfig) -> Result<CompareReport> {
    cfg.validate()?;
    let runs: Vec<u32> = (0..cfg.repetitions).collect();
    let results = parallel::map(&runs, |&r| compare_run(cfg, r));
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CompareReport { modes: cfg.modes.clone(), horizon: cfg.scenario.horizon, runs })
}

fn compare_run(cfg: &ExperimentConfig, run: u32) -> Result<CompareRun> {
    let stream = SeedStream::new(cfg.seed).indexed("compare", u64::from(run));
    let world = build_strategic_world(&cfg.scenario, stream)?;
    compare_world(&world, cfg, run, stream)
}

/// One comparison run on a given world: every mode picks configurations from
/// the same searches and is scored on the same epidemic draw.
pub fn compare_world(world: &World, cfg: &ExperimentConfig, run: u32, stream: SeedStream) -> Result<CompareRun> {
    let searches = search_all(&world, cfg, stream.child("search"))?;
    let horizon = cfg.scenario.horizon;
    let eval = stream.child("evaluation");
    let economy = eval.child("economy");
    let trace = EpidemicTrace::build(&world, horizon, eval.child("epidemic"), true);
    let quiet = EpidemicTrace::build(&world, horizon, eval.child("baseline"), false);
    let baseline = run_economy(&world, &quiet, &[], economy);

    let mut series = Vec::with_capacity(cfg.modes.len());
    let mut links_opened = Vec::with_capacity(cfg.modes.len());
    for &mode in &cfg.modes {
        let mut rng = stream.child("weights").child(mode.name()).rng();
        let weights = assign_strategy_mode(world.firms.len(), mode, &mut rng);
        let mut extra = Vec::new();
        for s in &searches {
            let best = choose(&s.evals, weights[s.firm]).expect("non-empty search");
            extra.extend_from_slice(&best.config.links);
        }
        extra.sort_unstable();
        let traj = run_economy(&world, &trace, &extra, economy);
        series.push(normalized_series(&traj, &baseline, None));
        links_opened.push(extra.len());
    }
    Ok(CompareRun { run, series, links_opened })
}

/// Outcome of one profit weight for one firm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTrial {
    pub w1: f64,
    pub config: LinkConfiguration,
    pub op_norm: f64,
    pub ob_norm: f64,
}

impl WeightTrial {
    pub fn target(&self) -> f64 {
        self.op_norm + self.ob_norm
    }
}

/// For each weight on the grid, the configuration the firm's search picks and
/// its realized outcome on held-out epidemic draws.
pub fn weight_trials(search: &FirmSearch, holdout: &Evaluator<'_>, grid: &[f64]) -> Vec<WeightTrial> {
    let mut cache: BTreeMap<Vec<usize>, ConfigEval> = BTreeMap::new();
    grid.iter()
        .map(|&w1| {
            let weights = StrategyWeights { w1, w2: 1.0 - w1 };
            let chosen = choose(&search.evals, weights).expect("non-empty search").config.clone();
            let realized =
                cache.entry(chosen.links.clone()).or_insert_with(|| holdout.evaluate(&chosen)).clone();
            WeightTrial { w1, config: chosen, op_norm: realized.op_norm, ob_norm: realized.ob_norm }
        })
        .collect()
}

/// The weight with the best realized target. Ties go to the larger weight:
/// when resilience buys nothing, the firm is best served by pure profit.
pub fn best_weight(trials: &[WeightTrial]) -> f64 {
    let mut best = &trials[0];
    for t in &trials[1..] {
        if t.target() > best.target() || (t.target() == best.target() && t.w1 > best.w1) {
            best = t;
        }
    }
    best.w1
}

/// Best weights of every strategic firm of one world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldTrials {
    pub firms: Vec<FirmId>,
    pub trials: Vec<Vec<WeightTrial>>,
    pub best: Vec<f64>,
}

pub fn world_trials(world: &World, cfg: &ExperimentConfig, stream: SeedStream) -> Result<WorldTrials> {
    let searches = search_all(world, cfg, stream.child("search"))?;
    let holdout = Evaluator::new(world, cfg.scenario.horizon, stream.child("holdout"), cfg.holdout as usize);
    let grid = cfg.w1_values();
    let trials: Vec<Vec<WeightTrial>> = parallel::map(&searches, |s| weight_trials(s, &holdout, &grid));
    let best = trials.iter().map(|t| best_weight(t)).collect();
    Ok(WorldTrials { firms: searches.iter().map(|s| s.firm).collect(), trials, best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub mean_w1: f64,
    pub std_w1: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Average best weight across firms, per grid value and run.
    pub samples: Vec<Vec<f64>>,
}

impl SweepResult {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.values
            .iter()
            .zip(&self.samples)
            .map(|(&value, s)| SweepRow { param: self.param, value, mean_w1: mean(s), std_w1: std_dev(s), n: s.len() })
            .collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.samples.iter().map(|s| mean(s)).collect()
    }
}

pub fn sweep_csv(results: &[SweepResult]) -> String {
    let mut out = String::from("param,value,mean_w1,std_w1,n\n");
    for r in results {
        for row in r.rows() {
            let _ = writeln!(out, "{},{},{:.6},{:.6},{}", row.param, row.value, row.mean_w1, row.std_w1, row.n);
        }
    }
    out
}

/// For each grid value, `repetitions` worlds with the parameter pinned; each
/// records the average best profit weight of its strategic firms. Run `r`
/// uses the same seeds at every grid value. Draws for which no feasible world
/// exists are skipped, so a value may end up with fewer samples.
pub fn sensitivity_sweep(cfg: &ExperimentConfig, sweep: &SweepConfig) -> Result<SweepResult> {
    if sweep.repetitions < 2 {
        return Err(Error::field("repetitions", "a sweep needs at least 2 runs per value"));
    }
    let specs = sweep.values.iter().map(|&v| sweep.param.pin(&cfg.scenario, v)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u32)> =
        (0..specs.len()).flat_map(|i| (0..sweep.repetitions).map(move |r| (i, r))).collect();
    let root = SeedStream::new(cfg.seed).child("sweep").child(sweep.param.name());
    let out = parallel::map(&jobs, |&(i, r)| -> Result<f64> {
        let stream = root.indexed("run", u64::from(r));
        let world = build_strategic_world(&specs[i], stream)?;
        let trials = world_trials(&world, cfg, stream)?;
        Ok(mean(&trials.best))
    });
    let mut samples = vec![Vec::new(); specs.len()];
    let mut last_failure = None;
    for (&(i, _), v) in jobs.iter().zip(out) {
        match v {
            Ok(x) => samples[i].push(x),
            // A draw that cannot be made feasible is dropped; `n` records it.
            Err(e @ Error::Generation(_)) => last_failure = Some(e),
            Err(e) => return Err(e),
        }
    }
    if let Some(e) = last_failure.filter(|_| samples.iter().any(Vec::is_empty)) {
        return Err(e);
    }
    Ok(SweepResult { param: sweep.param, values: sweep.values.clone(), samples })
}

pub const FEATURE_NAMES: [&str; 10] = [
    "consumers",
    "firms",
    "mean_consumer_money",
    "initial_money",
    "op_cost",
    "mean_salary",
    "workers",
    "links_per_product",
    "beta",
    "gamma",
];

/// Economy features of a firm, all read from the world at t = 0.
pub fn firm_features(world: &World, firm: FirmId) -> [f64; 10] {
    let f = &world.firms[firm];
    let loc = &world.locations[f.location];
    let residents = &world.consumers[loc.consumers.clone()];
    let n = residents.len().max(1) as f64;
    let money = residents.iter().map(|c| to_dollars(c.money)).sum::<f64>() / n;
    let salary = residents.iter().map(|c| to_dollars(c.salary)).sum::<f64>() / n;
    let links = f.in_links().filter(|&l| world.links[l].established).count() as f64;
    [
        residents.len() as f64,
        loc.firms.len() as f64,
        money,
        to_dollars(f.initial_money),
        to_dollars(f.op_cost),
        salary,
        f.workers.len() as f64,
        links / f.catalog.len().max(1) as f64,
        loc.epi.beta,
        f64::from(loc.epi.gamma),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub sim_id: u32,
    pub firm_id: FirmId,
    pub features: [f64; 10],
    pub w1: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub sim_id: u32,
    pub firm_id: FirmId,
    pub w1_star: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<DatasetRow>,
    pub labels: Vec<LabelRow>,
}

impl Dataset {
    pub fn header() -> String {
        format!("sim_id,firm_id,{},w1,target", FEATURE_NAMES.join(","))
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::header();
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{}", r.sim_id, r.firm_id);
            for v in r.features {
                let _ = write!(out, ",{v:?}");
            }
            let _ = writeln!(out, ",{:?},{:?}", r.w1, r.target);
        }
        out
    }

    pub fn labels_csv(&self) -> String {
        let mut out = String::from("sim_id,firm_id,w1_star\n");
        for l in &self.labels {
            let _ = writeln!(out, "{},{},{:?}", l.sim_id, l.firm_id, l.w1_star);
        }
        out
    }

    /// Parses the output of [`Dataset::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default().trim();
        if header != Self::header() {
            return Err(Error::invalid(format!("unexpected dataset header `{header}`")));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 14 {
                return Err(Error::invalid(format!("dataset line {} has {} cells, expected 14", i + 2, cells.len())));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| Error::invalid(format!("dataset line {}: bad number `{s}`", i + 2)))
            };
            let mut features = [0.0; 10];
            for (k, f) in features.iter_mut().enumerate() {
                *f = num(cells[2 + k])?;
            }
            rows.push(DatasetRow {
                sim_id: num(cells[0])? as u32,
                firm_id: num(cells[1])? as usize,
                features,
                w1: num(cells[12])?,
                target: num(cells[13])?,
            });
        }
        Ok(Dataset { labels: labels_from_rows(&rows), rows })
    }
}

/// Labels re-derived from rows: per firm, the weight with the best target
/// (ties to the larger weight).
pub fn labels_from_rows(rows: &[DatasetRow]) -> Vec<LabelRow> {
    let mut best: BTreeMap<(u32, FirmId), (f64, f64)> = BTreeMap::new();
    for r in rows {
        let e = best.entry((r.sim_id, r.firm_id)).or_insert((r.target, r.w1));
        if r.target > e.0 || (r.target == e.0 && r.w1 > e.1) {
            *e = (r.target, r.w1);
        }
    }
    best.into_iter().map(|((sim_id, firm_id), (_, w1_star))| LabelRow { sim_id, firm_id, w1_star }).collect()
}

/// Simulates `n_sims` worlds; every strategic firm contributes one row per
/// weight on the grid and one label.
pub fn generate_training_dataset(cfg: &ExperimentConfig, n_sims: u32) -> Result<Dataset> {
    cfg.validate()?;
    let sims: Vec<u32> = (0..n_sims).collect();
    let root = SeedStream::new(cfg.seed).child("dataset");
    let per_sim = parallel::map(&sims, |&sim| -> Result<(u32, World, WorldTrials)> {
        let stream = root.indexed("sim", u64::from(sim));
        let world = build_strategic_world(&cfg.scenario, stream)?;
        let trials = world_trials(&world, cfg, stream)?;
        Ok((sim, world, trials))
    });
    let mut data = Dataset::default();
    for item in per_sim {
        let (sim_id, world, trials) = item?;
        for (k, &firm) in trials.firms.iter().enumerate() {
            let features = firm_features(&world, firm);
            for t in &trials.trials[k] {
                data.rows.push(DatasetRow { sim_id, firm_id: firm, features, w1: t.w1, target: t.target() });
            }
            data.labels.push(LabelRow { sim_id, firm_id: firm, w1_star: trials.best[k] });
        }
    }
    Ok(data)
}

/// Config fields as a JSON map, for manifests.
pub fn config_value(cfg: &ExperimentConfig) -> Map<String, Value> {
    match serde_json::to_value(cfg).expect("config serializes") {
        Value::Object(m) => m,
        _ => unreachable!("config is an object"),
    }
}
