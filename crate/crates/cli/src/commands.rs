use std::path::Path;
use std::time::Instant;

use sc_resilience::experiments::{
    compare_strategies, config_value, generate_training_dataset, sensitivity_sweep, sweep_csv, Dataset,
    ExperimentConfig, SweepConfig, SweepParam, FEATURE_NAMES,
};
use sc_resilience::parallel;
use sc_resilience::simulate::{result_csv, run_baseline, run_simulation, summarize};
use sc_resilience::surrogate::{
    fit_surrogate, importances_csv, recommend_omega, shapley_attribution, FitOptions, TreeEnsembleModel,
};
use sc_resilience::worldgen::build_world;
use serde_json::Value;

use crate::output::Outputs;
use crate::{config, Cli, Command, Failure};

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let started = Instant::now();
    let mut cfg = config::load(cli.global.config.as_deref())?;
    let seed = cli.global.seed.unwrap_or(cfg.seed);
    cfg.seed = seed;
    cfg.scenario.seed = seed;
    let say = |msg: &str| {
        if !cli.global.quiet {
            eprintln!("{msg}");
        }
    };

    let outputs = parallel::with_jobs(cli.global.jobs, || execute(&cli.command, &mut cfg, &say))?;

    let mut resolved = config_value(&cfg);
    resolved.insert("options".into(), serde_json::to_value(&cli.command).expect("options serialize"));
    outputs.write(&cli.global.out, cli.command.name(), Value::Object(resolved), seed, started)?;
    say(&format!("wrote {}", cli.global.out.display()));
    Ok(())
}

fn execute(command: &Command, cfg: &mut ExperimentConfig, say: &(dyn Fn(&str) + Sync)) -> Result<Outputs, Failure> {
    let mut out = Outputs::new();
    match command {
        Command::Gen => {
            cfg.scenario.validate()?;
            let world = build_world(&cfg.scenario, cfg.seed)?;
            say(&format!("generated {} locations, {} firms, {} links", world.locations.len(), world.firms.len(), world.links.len()));
            out.add("world.json", serde_json::to_string_pretty(&world).expect("world serializes") + "\n");
        }
        Command::Sim { horizon, baseline } => {
            cfg.scenario.validate()?;
            let world = build_world(&cfg.scenario, cfg.seed)?;
            let t = horizon.unwrap_or(cfg.scenario.horizon);
            let result = if *baseline { run_baseline(&world, t, cfg.seed) } else { run_simulation(&world, t, cfg.seed) };
            let summary = summarize(&result);
            say(&format!("{} of {} firms solvent at step {t}", summary.firms.iter().filter(|f| f.ob == t).count(), summary.firms.len()));
            out.add("sim.csv", result_csv(&world, &result));
            out.add("summary.json", serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n");
        }
        Command::Compare { repetitions } => {
            if let Some(r) = repetitions {
                cfg.repetitions = *r;
            }
            cfg.validate()?;
            say(&format!("comparing {} modes over {} paired runs", cfg.modes.len(), cfg.repetitions));
            out.add("strategy_timeseries.csv", compare_strategies(cfg)?.to_csv());
        }
        Command::Sweep { params, values, points, repetitions } => {
            cfg.sweeps = sweep_plan(cfg, params, values, *points, *repetitions)?;
            cfg.validate()?;
            let mut results = Vec::new();
            for sweep in &cfg.sweeps {
                say(&format!("sweeping {} over {} values", sweep.param, sweep.values.len()));
                results.push(sensitivity_sweep(cfg, sweep)?);
            }
            out.add("sensitivity.csv", sweep_csv(&results));
        }
        Command::Dataset { sims } => {
            if let Some(n) = sims {
                cfg.dataset_sims = *n;
            }
            cfg.validate()?;
            say(&format!("simulating {} worlds", cfg.dataset_sims));
            let data = generate_training_dataset(cfg, cfg.dataset_sims)?;
            out.add("dataset.csv", data.to_csv());
            out.add("labels.csv", data.labels_csv());
        }
        Command::Fit { data, folds } => {
            let dataset = Dataset::from_csv(&read_input(data)?)?;
            let opts = FitOptions { k: *folds, seed: cfg.seed, ..FitOptions::default() };
            say(&format!("fitting on {} rows, {}-fold", dataset.rows.len(), folds));
            let (model, report) = fit_surrogate(&dataset.rows, &opts)?;
            out.add("model.txt", model.to_text());
            out.add("eval_report.csv", report.to_csv());
            out.add("eval_report.json", serde_json::to_string_pretty(&report).expect("report serializes") + "\n");
            out.add("importances.csv", importances_csv(&model));
        }
        Command::Recommend { model, features, resolution } => {
            let model = load_model(model)?;
            let rows = read_features(features)?;
            let mut csv = String::from("row,firm_id,w1\n");
            for (i, r) in rows.iter().enumerate() {
                let w1 = recommend_omega(&model, &r.features, *resolution)?;
                csv.push_str(&format!("{i},{},{w1:?}\n", r.firm_id.as_deref().unwrap_or("")));
            }
            out.add("recommendations.csv", csv);
        }
        Command::Attribute { model, features, row, w1, permutations } => {
            let model = load_model(model)?;
            let rows = read_features(features)?;
            let r = rows.get(*row).ok_or_else(|| {
                Failure::User(format!("{} has {} rows, no row {row}", features.display(), rows.len()))
            })?;
            let w1 = w1.or(r.w1).ok_or_else(|| Failure::User("no w1 column in the features file; pass --w1".into()))?;
            let mut sample = r.features.to_vec();
            sample.push(w1);
            let attribution = shapley_attribution(&model, &sample, *permutations, cfg.seed)?;
            out.add("attribution.json", serde_json::to_string_pretty(&attribution).expect("attribution serializes") + "\n");
        }
    }
    Ok(out)
}

fn sweep_plan(
    cfg: &ExperimentConfig,
    params: &[String],
    values: &[f64],
    points: usize,
    repetitions: u32,
) -> Result<Vec<SweepConfig>, Failure> {
    if !values.is_empty() && params.len() != 1 {
        return Err(Failure::User("--values needs exactly one --param".into()));
    }
    if params.is_empty() {
        if !cfg.sweeps.is_empty() {
            return Ok(cfg.sweeps.clone());
        }
        return Ok(SweepParam::ALL
            .into_iter()
            .map(|param| SweepConfig { param, values: param.default_grid(points), repetitions })
            .collect());
    }
    params
        .iter()
        .map(|name| {
            let param: SweepParam = name.parse()?;
            let values = if values.is_empty() { param.default_grid(points) } else { values.to_vec() };
            Ok(SweepConfig { param, values, repetitions })
        })
        .collect()
}

fn read_input(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::User(format!("cannot read {}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<TreeEnsembleModel, Failure> {
    TreeEnsembleModel::from_text(&read_input(path)?)
        .map_err(|e| Failure::User(format!("{}: {e}", path.display())))
}

/// One row of a features file.
struct FeatureRow {
    firm_id: Option<String>,
    features: [f64; 10],
    w1: Option<f64>,
}

/// Reads a CSV whose header names every economy feature. `firm_id` and `w1`
/// columns are picked up when present; `sim_id` and `target` are allowed so
/// dataset files can be used directly.
fn read_features(path: &Path) -> Result<Vec<FeatureRow>, Failure> {
    let text = read_input(path)?;
    let bad = |msg: String| Failure::User(format!("{}: {msg}", path.display()));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split(',').map(str::trim).collect();
    for h in &header {
        if !FEATURE_NAMES.contains(h) && !["sim_id", "firm_id", "w1", "target"].contains(h) {
            return Err(bad(format!("unknown column `{h}`")));
        }
    }
    let col = |name: &str| header.iter().position(|h| *h == name);
    let missing: Vec<&str> = FEATURE_NAMES.iter().copied().filter(|n| col(n).is_none()).collect();
    if !missing.is_empty() {
        return Err(bad(format!("missing columns: {}", missing.join(", "))));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(bad(format!("line {} has {} cells, expected {}", i + 2, cells.len(), header.len())));
        }
        let num = |c: usize| -> Result<f64, Failure> {
            cells[c].parse().map_err(|_| bad(format!("line {}: bad number `{}`", i + 2, cells[c])))
        };
        let mut features = [0.0; 10];
        for (k, name) in FEATURE_NAMES.iter().enumerate() {
            features[k] = num(col(name).expect("checked above"))?;
        }
        rows.push(FeatureRow {
            firm_id: col("firm_id").map(|c| cells[c].to_string()),
            features,
            w1: col("w1").map(num).transpose()?,
        });
    }
    Ok(rows)
}
