//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Failures are reported, not hidden: the process exits 0 so the rest of the
//! workspace tests still run, unless `SCRES_ACCEPTANCE_STRICT=1` is set.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use sc_resilience::experiments::*;
use sc_resilience::rng::SeedStream;
use sc_resilience::scenario::{IntSpan, ScenarioSpec};
use sc_resilience::simulate::{normalized_series, result_csv, run_baseline, run_simulation};
use sc_resilience::stats::{mean, sign_test, spearman};
use sc_resilience::strategy::*;
use sc_resilience::surrogate::*;
use sc_resilience::worldgen::{build_world, silence_pandemic, tiny_world, TINY_FOCAL_FIRM};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("conservation", conservation),
        ("null pandemic", null_pandemic),
        ("strategy ordering", strategy_ordering),
        ("beta sensitivity", beta_sensitivity),
        ("optimizer oracle", optimizer_oracle),
        ("surrogate", surrogate_suite),
        ("attribution", attribution),
        ("determinism", determinism),
    ];
    let only: Option<usize> = std::env::var("SCRES_CRITERION").ok().and_then(|v| v.parse().ok());
    let mut passed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        passed += usize::from(v.pass);
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} {status} {name}: {} [{:.1}s]", v.detail, started.elapsed().as_secs_f64());
    }
    println!("acceptance: {passed}/{ran} criteria passed");
    if passed < ran && std::env::var("SCRES_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn desk_small() -> ScenarioSpec {
    let mut s = ScenarioSpec::desk();
    s.locations = IntSpan::new(1, 2);
    s
}

fn conservation() -> Verdict {
    let spec = desk_small();
    let mut worst_ledger = 0i64;
    let mut bad_counts = 0;
    let mut steps = 0;
    for seed in 0..200 {
        let w = build_world(&spec, seed).expect("world");
        assert!(w.consumers.len() <= 1000 && w.locations.len() <= 5);
        let r = run_simulation(&w, 120, seed);
        for row in &r.epi {
            steps += 1;
            bad_counts += row.iter().filter(|c| c.s + c.e + c.i + c.r + c.d != c.n0).count();
        }
        worst_ledger = worst_ledger.max(r.trajectories.ledger_residual.iter().map(|x| x.abs()).max().unwrap_or(0));
    }
    // The ledger is kept in whole cents; 1e-6 currency units is below one cent.
    verdict(
        bad_counts == 0 && worst_ledger == 0,
        format!("200 worlds, {steps} steps: {bad_counts} SEIRD mismatches, max ledger residual {worst_ledger} cents"),
    )
}

fn null_pandemic() -> Verdict {
    let mut cfg = ExperimentConfig { mc_samples: 8, panel: 1, ..ExperimentConfig::default() };
    cfg.scenario = desk_small();
    let mut identical = 0;
    let mut flat = 0;
    for seed in 0..5u64 {
        let mut w = build_strategic_world(&cfg.scenario, SeedStream::new(seed)).expect("world");
        silence_pandemic(&mut w);
        let run = run_simulation(&w, 365, seed);
        let base = run_baseline(&w, 365, seed);
        if result_csv(&w, &run) == result_csv(&w, &base)
            && normalized_series(&run.trajectories, &base.trajectories, None).iter().all(|&v| v == 1.0)
        {
            identical += 1;
        }
        let c = compare_world(&w, &cfg, 0, SeedStream::new(seed)).expect("comparison");
        if c.series.iter().all(|s| s.iter().all(|&v| v == s[0])) {
            flat += 1;
        }
    }
    verdict(identical == 5 && flat == 5, format!("{identical}/5 byte-identical runs, {flat}/5 comparisons flat for all 4 modes"))
}

fn strategy_ordering() -> Verdict {
    let mut cfg = ExperimentConfig { repetitions: 50, mc_samples: 8, panel: 1, seed: 2024, ..ExperimentConfig::default() };
    cfg.scenario.locations = IntSpan::point(5);
    let report = compare_strategies(&cfg).expect("comparison");
    let at = |m: StrategyMode, t: u32| report.values(m, t);
    use StrategyMode::*;
    let order = [ProfitOnly, Heterogeneous, Balanced, ResilienceOnly];
    let m0: Vec<f64> = order.iter().map(|&m| mean(&at(m, 0))).collect();
    // t = 0: each adjacent pair in order, with no significant reversal.
    let mut start_ok = true;
    for k in 0..3 {
        let reversed = sign_test(&at(order[k + 1], 0), &at(order[k], 0), 1e-12).p_value < 0.05;
        start_ok &= m0[k] + 1e-12 >= m0[k + 1] && !reversed;
    }
    let m365: Vec<f64> = order.iter().map(|&m| mean(&at(m, 365))).collect();
    let het = at(Heterogeneous, 365);
    let mut end_ok = true;
    let mut worst_p: f64 = 0.0;
    for &m in &[ProfitOnly, Balanced, ResilienceOnly] {
        let p = sign_test(&het, &at(m, 365), 1e-12).p_value;
        worst_p = worst_p.max(p);
        end_ok &= mean(&het) > mean(&at(m, 365)) && p < 0.05;
    }
    let p0 = at(ProfitOnly, 0);
    let p120 = at(ProfitOnly, 120);
    let fifth: Vec<f64> = p0.iter().map(|v| 0.2 * v).collect();
    let drop_p = sign_test(&fifth, &p120, 1e-12).p_value;
    let drop = 1.0 - mean(&p120) / mean(&p0);
    let drop_ok = drop >= 0.8 && drop_p < 0.05;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    verdict(
        start_ok && end_ok && drop_ok,
        format!(
            "t=0 profit/het/bal/res {} ({}), t=365 {} (heterogeneous first: {}, worst p {:.3}), profit_only drop by t=120 {:.0}% (p {:.3}, {})",
            fmt(&m0),
            if start_ok { "ordered" } else { "not ordered" },
            fmt(&m365),
            end_ok,
            worst_p,
            drop * 100.0,
            drop_p,
            if drop_ok { "ok" } else { "short of 80%" },
        ),
    )
}

fn sweep_means(cfg: &ExperimentConfig, param: SweepParam, values: Vec<f64>, reps: u32) -> SweepResult {
    sensitivity_sweep(cfg, &SweepConfig { param, values, repetitions: reps }).expect("sweep")
}

fn beta_sensitivity() -> Verdict {
    let cfg = ExperimentConfig { mc_samples: 6, panel: 1, holdout: 1, w1_grid: 11, seed: 7, ..ExperimentConfig::default() };
    let beta = sweep_means(&cfg, SweepParam::Beta, SweepParam::Beta.default_grid(6), 20);
    let rho = spearman(&beta.values, &beta.means());
    let beta_ok = rho.rho < 0.0 && rho.p_negative() < 0.05;

    let loc = sweep_means(&cfg, SweepParam::Locations, vec![1.0, 2.0, 3.0, 4.0, 5.0], 20);
    let lm = loc.means();
    let gaps: Vec<f64> = lm.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let largest = (0..gaps.len()).max_by(|&a, &b| gaps[a].total_cmp(&gaps[b])).unwrap_or(0);
    let loc_ok = loc.values[largest] == 1.0 && loc.values[largest + 1] == 2.0;

    let gamma = sweep_means(&cfg, SweepParam::Gamma, SweepParam::Gamma.default_grid(5), 5);
    let consumers = sweep_means(&cfg, SweepParam::ConsumersPerLocation, vec![500.0, 1000.0, 1500.0], 3);
    let dir = |r: &SweepResult| {
        let c = spearman(&r.values, &r.means());
        format!("rho {:+.2}", c.rho)
    };
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/");
    verdict(
        beta_ok && loc_ok,
        format!(
            "beta means {} rho {:+.3} p {:.4}; |V| means {} largest gap after |V|={}; gamma {} and |N| {} (reported only)",
            fmt(&beta.means()),
            rho.rho,
            rho.p_negative(),
            fmt(&lm),
            loc.values[largest],
            dir(&gamma),
            dir(&consumers),
        ),
    )
}

fn optimizer_oracle() -> Verdict {
    let weights = [0.0, 0.5, 1.0];
    let mut agree = [0; 3];
    for seed in 0..30u64 {
        let world = tiny_world(seed);
        let eval = Evaluator::new(&world, 365, SeedStream::new(seed).child("panel"), 1);
        let configs = enumerate_configurations(TINY_FOCAL_FIRM, &world.candidate_links(TINY_FOCAL_FIRM));
        let all = eval.evaluate_all(&configs);
        for (k, &x) in weights.iter().enumerate() {
            let w = StrategyWeights::new(x).unwrap();
            let exact = choose(&all, w).unwrap();
            let mc = monte_carlo_optimize(&eval, TINY_FOCAL_FIRM, w, 200, SeedStream::new(seed).child("mc")).unwrap();
            agree[k] += usize::from(mc.best.config == exact.config);
        }
    }
    verdict(agree.iter().all(|&a| a >= 29), format!("argmax matches on {}/{}/{} of 30 seeds at w1 = 0/0.5/1", agree[0], agree[1], agree[2]))
}

fn synthetic(seed: u64, firms: usize, target: impl Fn(&[f64; 10], f64, f64) -> f64) -> Vec<DatasetRow> {
    let mut rng = SeedStream::new(seed).rng();
    let mut rows = Vec::new();
    for firm in 0..firms {
        let mut features = [0.0; 10];
        for v in features.iter_mut() {
            *v = rng.random_range(0.0..10.0);
        }
        for i in 0..=10 {
            let w1 = f64::from(i) / 10.0;
            let noise = rng.random_range(0.0..1.0);
            rows.push(DatasetRow { sim_id: firm as u32, firm_id: 0, features, w1, target: target(&features, w1, noise) });
        }
    }
    rows
}

fn surrogate_suite() -> Verdict {
    let cfg = ExperimentConfig { mc_samples: 8, panel: 1, holdout: 1, w1_grid: 11, seed: 99, ..ExperimentConfig::default() };
    let data = generate_training_dataset(&cfg, 50).expect("dataset");
    let (_, report) = fit_surrogate(&data.rows, &FitOptions { seed: 99, ..FitOptions::default() }).expect("fit");
    let real_ok = report.aggregate.score_r2 >= 0.5 && report.aggregate.omega_mae <= 0.15;

    // A deterministic function of inputs whose values recur in every fold: the
    // weight grid and a feature taking five levels.
    let mut learnable = synthetic(1, 60, |_, _, _| 0.0);
    for r in &mut learnable {
        r.features[6] = (r.features[6] / 2.0).floor();
        r.target = r.w1 * r.w1 + 0.5 * r.features[6];
    }
    let (_, lr) = fit_surrogate(&learnable, &FitOptions { seed: 1, ..FitOptions::default() }).expect("fit");
    let noise = synthetic(2, 60, |_, _, n| n);
    let (_, nr) = fit_surrogate(&noise, &FitOptions { seed: 2, ..FitOptions::default() }).expect("fit");
    let synth_ok = lr.aggregate.score_r2 >= 0.99 && nr.aggregate.score_r2 <= 0.1;
    verdict(
        real_ok && synth_ok,
        format!(
            "{} rows from 50 worlds: score R2 {:.3}, weight MAE {:.3} (selected {} trees, depth {}); learnable R2 {:.4}, noise R2 {:.3}",
            data.rows.len(),
            report.aggregate.score_r2,
            report.aggregate.omega_mae,
            report.selected.trees,
            report.selected.max_depth,
            lr.aggregate.score_r2,
            nr.aggregate.score_r2,
        ),
    )
}

fn attribution() -> Verdict {
    let additive = |x: &[f64]| 3.0 * x[0] - 2.0 * x[1];
    let mut rng = SeedStream::new(11).rng();
    let bg: Vec<Vec<f64>> =
        (0..100).map(|_| vec![rng.random_range(0.0..4.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let col = |j: usize| bg.iter().map(|r| r[j]).sum::<f64>() / bg.len() as f64;
    let x = [3.5, 0.8, 0.3];
    let (phi, ..) = shapley_values(additive, &x, &bg, 500, SeedStream::new(2)).expect("shapley");
    let exact = [3.0 * (x[0] - col(0)), -2.0 * (x[1] - col(1))];
    let rel = (0..2).map(|j| ((phi[j] - exact[j]) / exact[j]).abs()).fold(0.0, f64::max);
    let closed_ok = rel <= 0.05 && phi[2].abs() < 1e-9;

    let rows = synthetic(12, 40, |f, w1, _| f[0] * w1 + 2.0 * f[1]);
    let (model, _) = fit_surrogate(&rows, &FitOptions { seed: 12, ..FitOptions::default() }).expect("fit");
    let mut worst_gap: f64 = 0.0;
    for r in rows.iter().step_by(37) {
        let sample: Vec<f64> = [&r.features[..], &[r.w1]].concat();
        let a = shapley_attribution(&model, &sample, 100, 3).expect("attribution");
        worst_gap = worst_gap.max((a.contributions.iter().sum::<f64>() - (a.prediction - a.baseline)).abs());
    }
    let efficient = worst_gap < 1e-12;

    let one = synthetic(13, 40, |f, _, _| (f[3] * 0.8).sin());
    let (m1, _) = fit_surrogate(&one, &FitOptions { seed: 13, ..FitOptions::default() }).expect("fit");
    let imp = feature_importance(&m1);
    let sum = imp.iter().sum::<f64>();
    // A constant column can never be split on, so it must get exactly 0.
    let mut constant = synthetic(14, 40, |f, w1, _| f[0] + w1);
    constant.iter_mut().for_each(|r| r.features[5] = 4.0);
    let (m2, _) = fit_surrogate(&constant, &FitOptions { seed: 14, ..FitOptions::default() }).expect("fit");
    let imp2 = feature_importance(&m2);
    let imp_ok = (sum - 1.0).abs() <= 1e-9 && imp2[5] == 0.0 && (imp2.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
    verdict(
        closed_ok && efficient && imp_ok,
        format!(
            "closed form max rel error {:.2}%, efficiency gap {worst_gap:.1e}, importance sum {sum:.12}, unused feature {}",
            rel * 100.0,
            imp2[5]
        ),
    )
}

fn scres(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_scres")).args(args).arg("--quiet").output().expect("runs scres");
    assert!(out.status.success(), "scres {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Every output file of a run except the manifest, with its bytes.
fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("output dir")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.file_name().is_some_and(|n| n != "manifest.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).expect("read")))
        .collect();
    files.sort();
    files
}

fn digests_match(dir: &Path) -> bool {
    use sha2::{Digest, Sha256};
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).expect("manifest")).expect("json");
    let listed = manifest["outputs"].as_object().expect("outputs");
    let files = outputs(dir);
    listed.len() == files.len()
        && files.iter().all(|(name, bytes)| listed[name].as_str() == Some(&hex::encode(Sha256::digest(bytes))))
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().expect("tempdir");
    let root = tmp.path();
    let mut cfg = ExperimentConfig { mc_samples: 4, panel: 1, holdout: 1, w1_grid: 11, repetitions: 2, dataset_sims: 6, ..ExperimentConfig::default() };
    cfg.scenario.locations = IntSpan::new(1, 2);
    let config = root.join("config.json");
    std::fs::write(&config, cfg.to_json_string()).unwrap();
    let config = config.to_str().unwrap().to_string();

    // Inputs for the model commands come from a first run.
    let seed_dir = root.join("inputs");
    let sd = seed_dir.to_str().unwrap();
    scres(&["dataset", "--config", &config, "--seed", "5", "--out", &format!("{sd}/data")]);
    scres(&["fit", "--data", &format!("{sd}/data/dataset.csv"), "--folds", "3", "--out", &format!("{sd}/model")]);
    let data = format!("{sd}/data/dataset.csv");
    let model = format!("{sd}/model/model.txt");

    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("gen", vec!["gen"]),
        ("sim", vec!["sim", "--horizon", "120"]),
        ("compare", vec!["compare"]),
        ("sweep", vec!["sweep", "--param", "beta", "--points", "2", "--repetitions", "2"]),
        ("dataset", vec!["dataset"]),
        ("fit", vec!["fit", "--data", &data, "--folds", "3"]),
        ("recommend", vec!["recommend", "--model", &model, "--features", &data]),
        ("attribute", vec!["attribute", "--model", &model, "--features", &data, "--row", "4"]),
    ];
    let mut bad = Vec::new();
    for (name, args) in &commands {
        let mut runs = Vec::new();
        for (k, jobs) in ["1", "1", "8", "8"].iter().enumerate() {
            let dir = root.join(format!("{name}-{k}"));
            let mut full = args.clone();
            full.extend(["--config", &config, "--seed", "3", "--jobs", jobs, "--out", dir.to_str().unwrap()]);
            scres(&full);
            if !digests_match(&dir) {
                bad.push(format!("{name}: manifest digests"));
            }
            runs.push(outputs(&dir));
        }
        if runs.iter().any(|r| *r != runs[0]) || runs[0].is_empty() {
            bad.push(name.to_string());
        }
    }
    verdict(
        bad.is_empty(),
        if bad.is_empty() {
            "all 8 commands byte-identical over 2 runs each at --jobs 1 and --jobs 8; manifest digests match".to_string()
        } else {
            format!("differences in {}", bad.join(", "))
        },
    )
}
