//! Tree-ensemble surrogate of firm performance over economy features and the
//! profit weight, with cross-validated fitting, weight recommendation, impurity
//! importance and sampled Shapley attribution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{labels_from_rows, DatasetRow, FEATURE_NAMES};
use crate::parallel;
use crate::rng::SeedStream;
use crate::stats::{mean, mean_abs_error, r_squared};

const FORMAT_TAG: &str = "scres-forest v1";
const LEAF: u32 = u32::MAX;
/// Training rows kept in the model as the Shapley background.
pub const BACKGROUND_ROWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

/// The fixed hyperparameter grid searched by [`fit_surrogate`].
pub fn default_grid() -> Vec<ForestParams> {
    let mut grid = Vec::new();
    for trees in [20, 40] {
        for max_depth in [4, 8, 12] {
            for min_leaf in [2, 8] {
                grid.push(ForestParams { trees, max_depth, min_leaf });
            }
        }
    }
    grid
}

/// A regression tree in flat arrays. Node 0 is the root; a node is a leaf when
/// its feature is `LEAF`. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<u32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    /// Mean target of the training samples reaching the node.
    pub value: Vec<f64>,
    /// Reduction in summed squared error achieved by the node's split.
    pub gain: Vec<f64>,
}

impl Tree {
    /// A single split on `feature` at `threshold`.
    pub fn stump(feature: usize, threshold: f64, below: f64, above: f64) -> Self {
        Tree {
            feature: vec![feature as u32, LEAF, LEAF],
            threshold: vec![threshold, 0.0, 0.0],
            left: vec![1, 0, 0],
            right: vec![2, 0, 0],
            value: vec![(below + above) / 2.0, below, above],
            gain: vec![1.0, 0.0, 0.0],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = 0usize;
        while self.feature[node] != LEAF {
            node = if x[self.feature[node] as usize] <= self.threshold[node] {
                self.left[node] as usize
            } else {
                self.right[node] as usize
            };
        }
        self.value[node]
    }

    fn push(&mut self, value: f64) -> usize {
        self.feature.push(LEAF);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.value.push(value);
        self.gain.push(0.0);
        self.feature.len() - 1
    }
}

/// Column-major training matrix with per-feature row orderings.
struct Table {
    n_rows: usize,
    columns: Vec<Vec<f64>>,
    y: Vec<f64>,
    sorted: Vec<Vec<u32>>,
}

impl Table {
    fn new(x: &[Vec<f64>], y: &[f64]) -> Self {
        let p = x.first().map_or(0, Vec::len);
        let columns: Vec<Vec<f64>> = (0..p).map(|f| x.iter().map(|r| r[f]).collect()).collect();
        let sorted = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..x.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                idx
            })
            .collect();
        Table { n_rows: x.len(), columns, y: y.to_vec(), sorted }
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Grows one tree on a bootstrap sample of `rows` (indices into the table).
fn grow_tree(table: &Table, rows: &[u32], params: ForestParams, stream: SeedStream) -> Tree {
    let mut rng = stream.rng();
    let n = rows.len();
    let boot: Vec<u32> = (0..n).map(|_| rows[rng.random_range(0..n)]).collect();
    // Slot s holds data row boot[s]; each feature keeps its slots in value order.
    let mut slots_of_row: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (s, &r) in boot.iter().enumerate() {
        slots_of_row.entry(r).or_default().push(s as u32);
    }
    let mut per_row: Vec<&[u32]> = vec![&[]; table.n_rows];
    for (r, s) in &slots_of_row {
        per_row[*r as usize] = s;
    }
    let p = table.columns.len();
    let mut order: Vec<Vec<u32>> = (0..p)
        .map(|f| table.sorted[f].iter().flat_map(|&r| per_row[r as usize].iter().copied()).collect())
        .collect();
    let y: Vec<f64> = boot.iter().map(|&r| table.y[r as usize]).collect();
    let x = |s: u32, f: usize| table.columns[f][boot[s as usize] as usize];

    let mut tree = Tree {
        feature: Vec::new(),
        threshold: Vec::new(),
        left: Vec::new(),
        right: Vec::new(),
        value: Vec::new(),
        gain: Vec::new(),
    };
    let mut goes_left = vec![false; n];
    let mut buffer: Vec<u32> = Vec::with_capacity(n);
    // (node, start, end, depth) over positions in every `order[f]`.
    let root_mean = mean(&y);
    tree.push(root_mean);
    let mut stack = vec![(0usize, 0usize, n, 0usize)];
    while let Some((node, lo, hi, depth)) = stack.pop() {
        let count = hi - lo;
        if depth >= params.max_depth || count < 2 * params.min_leaf.max(1) {
            continue;
        }
        let slots = &order[0][lo..hi];
        let total: f64 = slots.iter().map(|&s| y[s as usize]).sum();
        let node_mean = total / count as f64;
        let sse: f64 = slots.iter().map(|&s| (y[s as usize] - node_mean).powi(2)).sum();
        if sse <= 1e-14 * count as f64 {
            continue;
        }
        let Some(split) = best_split(&order, lo, hi, &y, &x, total, params.min_leaf.max(1)) else { continue };
        if split.gain <= 1e-12 * sse {
            continue;
        }
        for &s in &order[split.feature][lo..hi] {
            goes_left[s as usize] = x(s, split.feature) <= split.threshold;
        }
        let mut n_left = 0;
        for ord in order.iter_mut() {
            buffer.clear();
            let seg = &mut ord[lo..hi];
            let mut w = 0;
            for i in 0..seg.len() {
                let s = seg[i];
                if goes_left[s as usize] {
                    seg[w] = s;
                    w += 1;
                } else {
                    buffer.push(s);
                }
            }
            seg[w..].copy_from_slice(&buffer);
            n_left = w;
        }
        let mid = lo + n_left;
        let mean_of = |a: usize, b: usize| order[0][a..b].iter().map(|&s| y[s as usize]).sum::<f64>() / (b - a) as f64;
        let (lm, rm) = (mean_of(lo, mid), mean_of(mid, hi));
        let l = tree.push(lm);
        let r = tree.push(rm);
        tree.feature[node] = split.feature as u32;
        tree.threshold[node] = split.threshold;
        tree.left[node] = l as u32;
        tree.right[node] = r as u32;
        tree.gain[node] = split.gain;
        stack.push((r, mid, hi, depth + 1));
        stack.push((l, lo, mid, depth + 1));
    }
    tree
}

/// Largest reduction in squared error over all features and cut points.
/// Earlier features and lower thresholds win ties.
fn best_split(
    order: &[Vec<u32>],
    lo: usize,
    hi: usize,
    y: &[f64],
    x: &impl Fn(u32, usize) -> f64,
    total: f64,
    min_leaf: usize,
) -> Option<Split> {
    let count = (hi - lo) as f64;
    let base = total * total / count;
    let mut best: Option<Split> = None;
    for (f, ord) in order.iter().enumerate() {
        let seg = &ord[lo..hi];
        let mut left_sum = 0.0;
        for i in 0..seg.len() - 1 {
            left_sum += y[seg[i] as usize];
            let n_left = i + 1;
            if n_left < min_leaf {
                continue;
            }
            if seg.len() - n_left < min_leaf {
                break;
            }
            let (a, b) = (x(seg[i], f), x(seg[i + 1], f));
            if a == b {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / (count - n_left as f64) - base;
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Split { feature: f, threshold: a, gain });
            }
        }
    }
    best
}

/// Averaged bootstrap regression trees over economy features plus `w1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleModel {
    /// Input order; the profit weight is last.
    pub feature_names: Vec<String>,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
    /// Training inputs used as the reference distribution for attribution.
    pub background: Vec<Vec<f64>>,
}

/// Names of the model inputs: the dataset features followed by `w1`.
pub fn input_names() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).chain(std::iter::once("w1".to_string())).collect()
}

impl TreeEnsembleModel {
    pub fn n_inputs(&self) -> usize {
        self.feature_names.len()
    }

    /// Ensemble mean over a full input row (features then `w1`).
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean prediction over the background rows.
    pub fn baseline(&self) -> f64 {
        mean(&self.background.iter().map(|r| self.predict_row(r)).collect::<Vec<_>>())
    }

    /// Writes the model as a line-oriented text file.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_TAG}");
        let _ = writeln!(out, "features {}", self.feature_names.join(" "));
        let p = self.params;
        let _ = writeln!(out, "params {} {} {}", p.trees, p.max_depth, p.min_leaf);
        let _ = writeln!(out, "background {}", self.background.len());
        for row in &self.background {
            let _ = writeln!(out, "{}", join_floats(row));
        }
        let _ = writeln!(out, "trees {}", self.trees.len());
        for t in &self.trees {
            let _ = writeln!(out, "tree {}", t.n_nodes());
            for i in 0..t.n_nodes() {
                let feature = if t.feature[i] == LEAF { -1 } else { i64::from(t.feature[i]) };
                let _ = writeln!(
                    out,
                    "{} {:?} {} {} {:?} {:?}",
                    feature, t.threshold[i], t.left[i], t.right[i], t.value[i], t.gain[i]
                );
            }
        }
        out
    }

    /// Parses [`TreeEnsembleModel::to_text`] output, checking structure.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines.next().ok_or_else(|| Error::invalid(format!("model file ends before {what}")))
        };
        let (_, tag) = next("the version tag")?;
        if tag != FORMAT_TAG {
            return Err(Error::invalid(format!("unsupported model format `{tag}`, expected `{FORMAT_TAG}`")));
        }
        let bad = |line: usize, msg: &str| Error::invalid(format!("model file line {line}: {msg}"));
        let (ln, l) = next("the feature list")?;
        let feature_names: Vec<String> = l
            .strip_prefix("features ")
            .ok_or_else(|| bad(ln, "expected `features`"))?
            .split_whitespace()
            .map(String::from)
            .collect();
        let p = feature_names.len();
        if p == 0 {
            return Err(bad(ln, "no features"));
        }
        let (ln, l) = next("the parameters")?;
        let nums = parse_ints(l.strip_prefix("params ").ok_or_else(|| bad(ln, "expected `params`"))?, ln, 3)?;
        let params = ForestParams { trees: nums[0], max_depth: nums[1], min_leaf: nums[2] };
        let (ln, l) = next("the background header")?;
        let n_bg = parse_ints(l.strip_prefix("background ").ok_or_else(|| bad(ln, "expected `background`"))?, ln, 1)?[0];
        let mut background = Vec::with_capacity(n_bg);
        for _ in 0..n_bg {
            let (ln, l) = next("a background row")?;
            let row = parse_floats(l, ln)?;
            if row.len() != p {
                return Err(bad(ln, &format!("background row has {} values, expected {p}", row.len())));
            }
            background.push(row);
        }
        let (ln, l) = next("the tree count")?;
        let n_trees = parse_ints(l.strip_prefix("trees ").ok_or_else(|| bad(ln, "expected `trees`"))?, ln, 1)?[0];
        if n_trees == 0 {
            return Err(bad(ln, "a model needs at least one tree"));
        }
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let (ln, l) = next("a tree header")?;
            let n_nodes = parse_ints(l.strip_prefix("tree ").ok_or_else(|| bad(ln, "expected `tree`"))?, ln, 1)?[0];
            let mut t = Tree {
                feature: Vec::new(),
                threshold: Vec::new(),
                left: Vec::new(),
                right: Vec::new(),
                value: Vec::new(),
                gain: Vec::new(),
            };
            for _ in 0..n_nodes {
                let (ln, l) = next("a tree node")?;
                let cells: Vec<&str> = l.split_whitespace().collect();
                if cells.len() != 6 {
                    return Err(bad(ln, "a node has six fields"));
                }
                let feature: i64 = cells[0].parse().map_err(|_| bad(ln, "bad feature index"))?;
                let float = |s: &str| s.parse::<f64>().map_err(|_| bad(ln, &format!("bad number `{s}`")));
                let child = |s: &str| s.parse::<u32>().map_err(|_| bad(ln, &format!("bad child `{s}`")));
                let node = t.n_nodes() as u32;
                let (left, right) = (child(cells[2])?, child(cells[3])?);
                if feature >= 0 {
                    if feature as usize >= p {
                        return Err(bad(ln, "split feature out of range"));
                    }
                    if left <= node || right <= node || left as usize >= n_nodes || right as usize >= n_nodes {
                        return Err(bad(ln, "children must point forward inside the tree"));
                    }
                }
                let value = float(cells[4])?;
                if !value.is_finite() {
                    return Err(bad(ln, "leaf value is not finite"));
                }
                t.feature.push(if feature < 0 { LEAF } else { feature as u32 });
                t.threshold.push(float(cells[1])?);
                t.left.push(left);
                t.right.push(right);
                t.value.push(value);
                t.gain.push(float(cells[5])?);
            }
            if n_nodes == 0 {
                return Err(bad(ln, "empty tree"));
            }
            trees.push(t);
        }
        Ok(TreeEnsembleModel { feature_names, params, trees, background })
    }
}

fn join_floats(xs: &[f64]) -> String {
    xs.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

fn parse_ints(s: &str, line: usize, n: usize) -> Result<Vec<usize>> {
    let v: Vec<usize> = s
        .split_whitespace()
        .map(|c| c.parse().map_err(|_| Error::invalid(format!("model file line {line}: bad integer `{c}`"))))
        .collect::<Result<_>>()?;
    if v.len() != n {
        return Err(Error::invalid(format!("model file line {line}: expected {n} integers")));
    }
    Ok(v)
}

fn parse_floats(s: &str, line: usize) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|c| c.parse().map_err(|_| Error::invalid(format!("model file line {line}: bad number `{c}`"))))
        .collect()
}

/// Fits a forest on explicit inputs. The background keeps an evenly spaced
/// subset of the training rows.
pub fn fit_forest(x: &[Vec<f64>], y: &[f64], names: Vec<String>, params: ForestParams, stream: SeedStream) -> TreeEnsembleModel {
    assert_eq!(x.len(), y.len());
    assert!(!x.is_empty(), "cannot fit on no rows");
    let table = Table::new(x, y);
    let rows: Vec<u32> = (0..x.len() as u32).collect();
    let ids: Vec<usize> = (0..params.trees.max(1)).collect();
    let trees = parallel::map(&ids, |&i| grow_tree(&table, &rows, params, stream.indexed("tree", i as u64)));
    let step = x.len().div_ceil(BACKGROUND_ROWS).max(1);
    let background = x.iter().step_by(step).cloned().collect();
    TreeEnsembleModel { feature_names: names, params, trees, background }
}

/// Score prediction for one firm: `features` in dataset order, then `w1`.
pub fn predict_score(model: &TreeEnsembleModel, features: &[f64], w1: f64) -> Result<f64> {
    if features.len() + 1 != model.n_inputs() {
        return Err(Error::field(
            "features",
            format!("expected {} values, got {}", model.n_inputs() - 1, features.len()),
        ));
    }
    let mut row = features.to_vec();
    row.push(w1);
    Ok(model.predict_row(&row))
}

/// Which weight wins when several grid points score the same.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieBreak {
    Lower,
    Higher,
}

/// The grid weight with the highest predicted score, ties to the lower weight.
pub fn recommend_omega(model: &TreeEnsembleModel, features: &[f64], resolution: usize) -> Result<f64> {
    recommend_omega_with(model, features, resolution, TieBreak::Lower)
}

pub fn recommend_omega_with(model: &TreeEnsembleModel, features: &[f64], resolution: usize, ties: TieBreak) -> Result<f64> {
    if resolution < 11 {
        return Err(Error::field("resolution", "the weight grid needs at least 11 points"));
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..resolution {
        let w1 = i as f64 / (resolution - 1) as f64;
        let s = predict_score(model, features, w1)?;
        if s > best.0 || (s == best.0 && ties == TieBreak::Higher) {
            best = (s, w1);
        }
    }
    Ok(best.1)
}

/// Share of the total split gain credited to each input. All zeros when the
/// model never splits.
pub fn feature_importance(model: &TreeEnsembleModel) -> Vec<f64> {
    let mut totals = vec![0.0; model.n_inputs()];
    for t in &model.trees {
        for (i, &f) in t.feature.iter().enumerate() {
            if f != LEAF {
                totals[f as usize] += t.gain[i];
            }
        }
    }
    let sum: f64 = totals.iter().sum();
    if sum > 0.0 {
        totals.iter_mut().for_each(|v| *v /= sum);
    }
    totals
}

/// Per-input contributions to one prediction relative to the background mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub features: Vec<String>,
    pub sample: Vec<f64>,
    pub contributions: Vec<f64>,
    pub prediction: f64,
    pub baseline: f64,
    /// Gap between the raw sampled contributions and `prediction - baseline`,
    /// spread back over the features.
    pub residual: f64,
    pub permutations: usize,
}

/// Permutation-sampling Shapley values of `f` at `sample`.
///
/// Each permutation starts from a background row (taken round-robin after a
/// seeded shuffle) and switches features to the sample's values in random
/// order, crediting each switch with the change in `f`. The leftover against
/// `f(sample) - mean f(background)` is spread in proportion to the absolute
/// raw values, or evenly if they are all zero.
pub fn shapley_values(
    f: impl Fn(&[f64]) -> f64,
    sample: &[f64],
    background: &[Vec<f64>],
    n_permutations: usize,
    stream: SeedStream,
) -> Result<(Vec<f64>, f64, f64, f64)> {
    if n_permutations < 10 {
        return Err(Error::field("permutations", "need at least 10"));
    }
    if background.is_empty() {
        return Err(Error::invalid("attribution needs background rows"));
    }
    let p = sample.len();
    if background.iter().any(|r| r.len() != p) {
        return Err(Error::field("sample", format!("expected {} values", background[0].len())));
    }
    let mut rng = stream.rng();
    let mut rows: Vec<usize> = (0..background.len()).collect();
    rows.shuffle(&mut rng);
    let mut order: Vec<usize> = (0..p).collect();
    let mut phi = vec![0.0; p];
    let mut x = vec![0.0; p];
    for m in 0..n_permutations {
        order.shuffle(&mut rng);
        x.copy_from_slice(&background[rows[m % rows.len()]]);
        let mut prev = f(&x);
        for &j in &order {
            x[j] = sample[j];
            let cur = f(&x);
            phi[j] += cur - prev;
            prev = cur;
        }
    }
    phi.iter_mut().for_each(|v| *v /= n_permutations as f64);
    let prediction = f(sample);
    let baseline = background.iter().map(|r| f(r)).sum::<f64>() / background.len() as f64;
    let residual = (prediction - baseline) - phi.iter().sum::<f64>();
    let scale: f64 = phi.iter().map(|v| v.abs()).sum();
    for v in phi.iter_mut() {
        *v += if scale > 0.0 { residual * v.abs() / scale } else { residual / p as f64 };
    }
    // Rounding leftovers go to the largest contribution.
    let largest = (0..p).max_by(|&a, &b| phi[a].abs().total_cmp(&phi[b].abs())).unwrap_or(0);
    phi[largest] += (prediction - baseline) - phi.iter().sum::<f64>();
    Ok((phi, prediction, baseline, residual))
}

/// Shapley attribution of one model input row against the model's background.
pub fn shapley_attribution(model: &TreeEnsembleModel, sample: &[f64], n_permutations: usize, seed: u64) -> Result<Attribution> {
    if sample.len() != model.n_inputs() {
        return Err(Error::field("sample", format!("expected {} values, got {}", model.n_inputs(), sample.len())));
    }
    let stream = SeedStream::new(seed).child("shapley");
    let (contributions, prediction, baseline, residual) =
        shapley_values(|x| model.predict_row(x), sample, &model.background, n_permutations, stream)?;
    Ok(Attribution {
        features: model.feature_names.clone(),
        sample: sample.to_vec(),
        contributions,
        prediction,
        baseline,
        residual,
        permutations: n_permutations,
    })
}

/// Cross-validation metrics of one held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub score_mae: f64,
    pub score_r2: f64,
    pub omega_mae: f64,
    pub omega_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub params: ForestParams,
    pub mean_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub selected: ForestParams,
    pub folds: Vec<FoldMetrics>,
    pub aggregate: FoldMetrics,
    pub grid: Vec<GridScore>,
    /// Number of weights tried by recommendations.
    pub resolution: usize,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,score_mae,score_r2,omega_mae,omega_r2\n");
        for m in self.folds.iter().chain(std::iter::once(&self.aggregate)) {
            let name = if m.fold == usize::MAX { "mean".to_string() } else { m.fold.to_string() };
            let _ = writeln!(out, "{name},{:.6},{:.6},{:.6},{:.6}", m.score_mae, m.score_r2, m.omega_mae, m.omega_r2);
        }
        out
    }
}

pub fn importances_csv(model: &TreeEnsembleModel) -> String {
    let mut out = String::from("feature,importance\n");
    for (name, v) in model.feature_names.iter().zip(feature_importance(model)) {
        let _ = writeln!(out, "{name},{v:.6}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub k: usize,
    pub grid: Vec<ForestParams>,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { k: 5, grid: default_grid(), seed: 0 }
    }
}

/// Assigns each (sim, firm) group to one of `k` folds, seed-deterministically.
/// All rows of a firm share a fold so its weights are never split between
/// training and evaluation.
pub fn fold_assignment(rows: &[DatasetRow], k: usize, seed: u64) -> Vec<usize> {
    let groups: BTreeSet<(u32, usize)> = rows.iter().map(|r| (r.sim_id, r.firm_id)).collect();
    let mut groups: Vec<(u32, usize)> = groups.into_iter().collect();
    groups.shuffle(&mut SeedStream::new(seed).child("folds").rng());
    let fold_of: BTreeMap<(u32, usize), usize> = groups.into_iter().enumerate().map(|(i, g)| (g, i % k)).collect();
    rows.iter().map(|r| fold_of[&(r.sim_id, r.firm_id)]).collect()
}

fn input_row(r: &DatasetRow) -> Vec<f64> {
    let mut x = r.features.to_vec();
    x.push(r.w1);
    x
}

/// Fits a score surrogate by grouped k-fold cross-validation over the grid,
/// keeps the grid point with the best mean R² (earlier points win ties), and
/// refits it on all rows. Exact duplicate rows are dropped and the rest sorted
/// first, so neither repetition nor row order changes the result.
pub fn fit_surrogate(rows: &[DatasetRow], opts: &FitOptions) -> Result<(TreeEnsembleModel, EvalReport)> {
    let k = opts.k;
    if k < 2 {
        return Err(Error::field("k", "cross-validation needs at least 2 folds"));
    }
    if opts.grid.is_empty() {
        return Err(Error::field("grid", "must not be empty"));
    }
    if opts.grid.iter().any(|p| p.trees == 0 || p.min_leaf == 0) {
        return Err(Error::field("grid", "trees and min_leaf must be at least 1"));
    }
    let mut seen = BTreeSet::new();
    let key = |r: &DatasetRow| -> (u32, usize, Vec<u64>) {
        let bits = [r.w1, r.target].iter().chain(&r.features).map(|v| v.to_bits()).collect();
        (r.sim_id, r.firm_id, bits)
    };
    // Canonical order makes the fit independent of how rows were listed.
    let mut rows: Vec<DatasetRow> = rows.iter().filter(|r| seen.insert(key(r))).cloned().collect();
    rows.sort_by_cached_key(key);
    if rows.len() < 10 * k {
        return Err(Error::field("dataset", format!("{} rows is too few for {k}-fold cross-validation (need {})", rows.len(), 10 * k)));
    }
    let fold = fold_assignment(&rows, k, opts.seed);
    if (0..k).any(|f| !fold.contains(&f)) {
        return Err(Error::field("dataset", format!("fewer than {k} distinct firms to spread over folds")));
    }
    let x: Vec<Vec<f64>> = rows.iter().map(input_row).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.target).collect();
    let names = input_names();
    let distinct_w1: BTreeSet<u64> = rows.iter().map(|r| r.w1.to_bits()).collect();
    let resolution = distinct_w1.len().max(11);
    let root = SeedStream::new(opts.seed).child("surrogate");

    let jobs: Vec<(usize, usize)> = (0..opts.grid.len()).flat_map(|g| (0..k).map(move |f| (g, f))).collect();
    let metrics = parallel::map(&jobs, |&(g, f)| -> Result<FoldMetrics> {
        let train: Vec<usize> = (0..rows.len()).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..rows.len()).filter(|&i| fold[i] == f).collect();
        let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let stream = root.indexed("grid", g as u64).indexed("fold", f as u64);
        let model = fit_forest(&tx, &ty, names.clone(), opts.grid[g], stream);
        let truth: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let pred: Vec<f64> = test.iter().map(|&i| model.predict_row(&x[i])).collect();
        let held: Vec<DatasetRow> = test.iter().map(|&i| rows[i].clone()).collect();
        let mut labels = Vec::new();
        let mut recs = Vec::new();
        for l in labels_from_rows(&held) {
            let r = held.iter().find(|r| r.sim_id == l.sim_id && r.firm_id == l.firm_id).expect("label has rows");
            labels.push(l.w1_star);
            recs.push(recommend_omega_with(&model, &r.features, resolution, TieBreak::Higher)?);
        }
        Ok(FoldMetrics {
            fold: f,
            score_mae: mean_abs_error(&truth, &pred),
            score_r2: r_squared(&truth, &pred),
            omega_mae: mean_abs_error(&labels, &recs),
            omega_r2: r_squared(&labels, &recs),
        })
    });
    let metrics = metrics.into_iter().collect::<Result<Vec<_>>>()?;
    let grid: Vec<GridScore> = opts
        .grid
        .iter()
        .enumerate()
        .map(|(g, &params)| GridScore {
            params,
            mean_r2: mean(&metrics[g * k..(g + 1) * k].iter().map(|m| m.score_r2).collect::<Vec<_>>()),
        })
        .collect();
    let mut best = 0;
    for g in 1..grid.len() {
        if grid[g].mean_r2 > grid[best].mean_r2 {
            best = g;
        }
    }
    let folds = metrics[best * k..(best + 1) * k].to_vec();
    let avg = |get: fn(&FoldMetrics) -> f64| mean(&folds.iter().map(get).collect::<Vec<_>>());
    let aggregate = FoldMetrics {
        fold: usize::MAX,
        score_mae: avg(|m| m.score_mae),
        score_r2: avg(|m| m.score_r2),
        omega_mae: avg(|m| m.omega_mae),
        omega_r2: avg(|m| m.omega_r2),
    };
    let selected = opts.grid[best];
    let model = fit_forest(&x, &y, names, selected, root.child("final"));
    Ok((model, EvalReport { k, selected, folds, aggregate, grid, resolution }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump_model() -> TreeEnsembleModel {
        TreeEnsembleModel {
            feature_names: vec!["a".into(), "w1".into()],
            params: ForestParams { trees: 1, max_depth: 1, min_leaf: 1 },
            trees: vec![Tree::stump(0, 0.5, 2.0, 7.0)],
            background: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
        }
    }

    #[test]
    fn stump_returns_leaf_means() {
        let m = stump_model();
        assert_eq!(predict_score(&m, &[0.2], 0.0).unwrap(), 2.0);
        assert_eq!(predict_score(&m, &[0.5], 0.0).unwrap(), 2.0);
        assert_eq!(predict_score(&m, &[0.9], 0.0).unwrap(), 7.0);
        assert!(predict_score(&m, &[0.9, 1.0], 0.0).is_err());
    }

    #[test]
    fn recommendation_tie_rules() {
        let m = stump_model();
        assert_eq!(recommend_omega(&m, &[0.1], 11).unwrap(), 0.0);
        assert_eq!(recommend_omega_with(&m, &[0.1], 11, TieBreak::Higher).unwrap(), 1.0);
        let mut rising = stump_model();
        rising.trees = vec![Tree::stump(1, 0.95, 0.0, 1.0)];
        assert_eq!(recommend_omega(&rising, &[0.1], 11).unwrap(), 1.0);
        assert!(recommend_omega(&m, &[0.1], 10).is_err());
    }

    #[test]
    fn text_round_trip() {
        let m = stump_model();
        let back = TreeEnsembleModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(TreeEnsembleModel::from_text("scres-forest v0\n").is_err());
    }

    #[test]
    fn importance_of_stump() {
        assert_eq!(feature_importance(&stump_model()), vec![1.0, 0.0]);
    }
}
