//! Model-agnostic Shapley attribution.
//!
//! Coalition values use the interventional expectation: features in the
//! coalition take the explained row's values, the rest are filled in from each
//! background row in turn and the model outputs are averaged. Attributions are
//! computed either by full enumeration of the `2^d` coalitions or by the kernel
//! weighted least-squares estimator with the efficiency constraint imposed
//! exactly, so `base_value + sum(phi)` always reproduces the prediction.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rul_net::RegressorState;

/// Largest feature count accepted by [`shapley_exact`].
pub const MAX_EXACT_FEATURES: usize = 20;

/// Largest feature count the bitmask coalition encoding supports.
pub const MAX_KERNEL_FEATURES: usize = 62;

/// Rows evaluated per model call when scoring coalitions.
const EVAL_CHUNK_ROWS: usize = 1 << 15;

/// Anything that maps rows of `n_features` reals to one real each.
pub trait Model: Sync {
    fn n_features(&self) -> usize;

    /// One output per row; `rows.ncols() == self.n_features()` is guaranteed by callers.
    fn predict(&self, rows: &Matrix) -> Vec<f64>;
}

impl Model for RegressorState {
    fn n_features(&self) -> usize {
        self.n_inputs()
    }

    fn predict(&self, rows: &Matrix) -> Vec<f64> {
        self.forward_unchecked(rows)
    }
}

/// Adapts a per-row closure into a [`Model`].
pub struct FnModel<F> {
    n_features: usize,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(n_features: usize, f: F) -> Self {
        Self { n_features, f }
    }
}

impl<F> Model for FnModel<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, rows: &Matrix) -> Vec<f64> {
        rows.rows_iter().map(|r| (self.f)(r)).collect()
    }
}

/// Attribution of a single row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowAttribution {
    pub phi: Vec<f64>,
    pub base_value: f64,
    pub prediction: f64,
}

/// Coalition as a bitmask over feature indices.
type Mask = u64;

fn check_inputs(model: &dyn Model, row: &[f64], background: &Matrix) -> Result<()> {
    let d = model.n_features();
    if background.nrows() == 0 {
        return Err(Error::InvalidInput("background set is empty".into()));
    }
    if row.len() != d || background.ncols() != d {
        return Err(Error::Shape(format!(
            "model takes {d} features; row has {}, background has {}",
            row.len(),
            background.ncols()
        )));
    }
    Ok(())
}

/// Expected model output with the features in `subset` fixed to `row`.
pub fn coalition_value(
    model: &dyn Model,
    row: &[f64],
    subset: &[usize],
    background: &Matrix,
) -> Result<f64> {
    check_inputs(model, row, background)?;
    let mut in_subset = vec![false; row.len()];
    for &j in subset {
        *in_subset
            .get_mut(j)
            .ok_or_else(|| Error::InvalidInput(format!("feature index {j} out of range")))? = true;
    }
    let mut batch = background.clone();
    for r in 0..batch.nrows() {
        for (j, v) in batch.row_mut(r).iter_mut().enumerate() {
            if in_subset[j] {
                *v = row[j];
            }
        }
    }
    Ok(mean(&model.predict(&batch)))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Interventional values for many coalitions at once, in mask order.
fn coalition_values(
    model: &dyn Model,
    row: &[f64],
    masks: &[Mask],
    background: &Matrix,
) -> Vec<f64> {
    let d = row.len();
    let m = background.nrows();
    let per_chunk = (EVAL_CHUNK_ROWS / m).max(1);
    let mut out = Vec::with_capacity(masks.len());
    let mut buf = Vec::new();
    for chunk in masks.chunks(per_chunk) {
        buf.clear();
        buf.reserve(chunk.len() * m * d);
        for &mask in chunk {
            for b in background.rows_iter() {
                buf.extend((0..d).map(|j| if mask >> j & 1 == 1 { row[j] } else { b[j] }));
            }
        }
        let batch = Matrix::from_vec(chunk.len() * m, d, std::mem::take(&mut buf))
            .expect("batch dimensions are consistent");
        let preds = model.predict(&batch);
        out.extend(preds.chunks_exact(m).map(mean));
        buf = batch.into_vec();
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley values by enumerating every coalition.
pub fn shapley_exact(
    model: &dyn Model,
    row: &[f64],
    background: &Matrix,
) -> Result<RowAttribution> {
    check_inputs(model, row, background)?;
    let d = row.len();
    if d > MAX_EXACT_FEATURES {
        return Err(Error::InvalidInput(format!(
            "exact enumeration supports at most {MAX_EXACT_FEATURES} features (got {d}); use the kernel estimator"
        )));
    }
    let masks: Vec<Mask> = (0..1u64 << d).collect();
    let values = coalition_values(model, row, &masks, background);
    // |S|! (d - |S| - 1)! / d! = 1 / (d * C(d - 1, |S|))
    let weights: Vec<f64> = (0..d)
        .map(|s| 1.0 / (d as f64 * binomial(d - 1, s)))
        .collect();
    let mut phi = vec![0.0; d];
    for (mask, &v) in values.iter().enumerate() {
        let mask = mask as Mask;
        let size = mask.count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if mask >> i & 1 == 0 {
                *p += weights[size] * (values[(mask | 1 << i) as usize] - v);
            }
        }
    }
    Ok(RowAttribution {
        phi,
        base_value: values[0],
        prediction: values[(1usize << d) - 1],
    })
}

/// Kernel weight of one coalition of size `s` among `d` features.
pub fn kernel_weight(d: usize, s: usize) -> f64 {
    (d - 1) as f64 / (binomial(d, s) * s as f64 * (d - s) as f64)
}

fn subsets_of_size(d: usize, s: usize, out: &mut Vec<Mask>) {
    fn rec(start: usize, d: usize, left: usize, acc: Mask, out: &mut Vec<Mask>) {
        if left == 0 {
            out.push(acc);
            return;
        }
        for j in start..=d - left {
            rec(j + 1, d, left - 1, acc | 1 << j, out);
        }
    }
    rec(0, d, s, 0, out);
}

/// Weighted coalitions for the kernel estimator. Size pairs `(s, d - s)` are
/// enumerated completely, smallest first, while the budget covers them at
/// their kernel share; the remaining budget samples the other sizes (paired
/// with complements) and splits their kernel mass evenly across draws.
fn kernel_coalitions(d: usize, budget: usize, rng: &mut ChaCha8Rng) -> Vec<(Mask, f64)> {
    let full: Mask = (1 << d) - 1;
    let interior = (1u64 << d) - 2;
    if budget as u64 >= interior {
        return (1..full)
            .map(|m| (m, kernel_weight(d, m.count_ones() as usize)))
            .collect();
    }
    let half = d / 2;
    let sizes: Vec<usize> = (1..=half).collect();
    let paired = |s: usize| s != d - s;
    let mass = |s: usize| {
        let w = (d - 1) as f64 / (s * (d - s)) as f64;
        if paired(s) {
            2.0 * w
        } else {
            w
        }
    };
    let count = |s: usize| binomial(d, s) * if paired(s) { 2.0 } else { 1.0 };

    let mut out = Vec::new();
    let mut left_budget = budget as f64;
    let mut left_mass: f64 = sizes.iter().map(|&s| mass(s)).sum();
    let mut next = 0;
    let mut masks = Vec::new();
    while next < sizes.len() {
        let s = sizes[next];
        let share = left_budget * mass(s) / left_mass;
        if share + 1e-9 < count(s) {
            break;
        }
        masks.clear();
        subsets_of_size(d, s, &mut masks);
        let w = kernel_weight(d, s);
        for &m in &masks {
            out.push((m, w));
            if paired(s) {
                out.push((full ^ m, w));
            }
        }
        left_budget -= count(s);
        left_mass -= mass(s);
        next += 1;
    }

    let remaining = &sizes[next..];
    let n_draws = left_budget.round() as usize;
    if remaining.is_empty() || n_draws == 0 {
        return out;
    }
    let cumulative: Vec<f64> = remaining
        .iter()
        .scan(0.0, |acc, &s| {
            *acc += mass(s);
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().unwrap();
    let mut sampled: HashMap<Mask, f64> = HashMap::new();
    let mut drawn = 0usize;
    while drawn < n_draws {
        let u = rng.random::<f64>() * total;
        let s = remaining[cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(remaining.len() - 1)];
        let mask = index::sample(rng, d, s)
            .into_iter()
            .fold(0 as Mask, |acc, j| acc | 1 << j);
        *sampled.entry(mask).or_default() += 1.0;
        drawn += 1;
        if paired(s) && drawn < n_draws {
            *sampled.entry(full ^ mask).or_default() += 1.0;
            drawn += 1;
        }
    }
    let scale = left_mass / drawn as f64;
    let mut sampled: Vec<(Mask, f64)> = sampled.into_iter().map(|(m, c)| (m, c * scale)).collect();
    sampled.sort_unstable_by_key(|&(m, _)| m);
    out.extend(sampled);
    out
}

/// Kernel-weighted least-squares Shapley estimate with exact efficiency.
pub fn shapley_kernel(
    model: &dyn Model,
    row: &[f64],
    background: &Matrix,
    n_coalitions: usize,
    seed: u64,
) -> Result<RowAttribution> {
    check_inputs(model, row, background)?;
    let d = row.len();
    if d > MAX_KERNEL_FEATURES {
        return Err(Error::InvalidInput(format!(
            "kernel estimator supports at most {MAX_KERNEL_FEATURES} features (got {d})"
        )));
    }
    if n_coalitions < d + 2 {
        return Err(Error::InvalidInput(format!(
            "coalition budget {n_coalitions} is below d + 2 = {}",
            d + 2
        )));
    }
    let full: Mask = (1 << d) - 1;
    let ends = coalition_values(model, row, &[0, full], background);
    let (base_value, prediction) = (ends[0], ends[1]);
    let delta = prediction - base_value;
    if d == 1 {
        return Ok(RowAttribution {
            phi: vec![delta],
            base_value,
            prediction,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coalitions = kernel_coalitions(d, n_coalitions, &mut rng);
    let masks: Vec<Mask> = coalitions.iter().map(|&(m, _)| m).collect();
    let values = coalition_values(model, row, &masks, background);

    // Substitute phi[d-1] = delta - sum(others) and solve the reduced normal equations.
    let k = d - 1;
    let mut xtwx = DMatrix::<f64>::zeros(k, k);
    let mut xtwy = DVector::<f64>::zeros(k);
    let mut x = vec![0.0; k];
    for (&(mask, w), &v) in coalitions.iter().zip(&values) {
        let last = (mask >> k & 1) as f64;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = (mask >> j & 1) as f64 - last;
        }
        let y = v - base_value - last * delta;
        for a in 0..k {
            if x[a] == 0.0 {
                continue;
            }
            xtwy[a] += w * x[a] * y;
            for b in 0..k {
                xtwx[(a, b)] += w * x[a] * x[b];
            }
        }
    }
    let solution = xtwx
        .clone()
        .cholesky()
        .map(|c| c.solve(&xtwy))
        .or_else(|| xtwx.lu().solve(&xtwy))
        .ok_or_else(|| Error::Singular(format!("{} coalitions for {d} features", masks.len())))?;
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!(
            "{} coalitions for {d} features",
            masks.len()
        )));
    }
    let mut phi: Vec<f64> = solution.iter().copied().collect();
    phi.push(delta - phi.iter().sum::<f64>());
    Ok(RowAttribution {
        phi,
        base_value,
        prediction,
    })
}

/// How rows are attributed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    Exact,
    Kernel { n_coalitions: usize, seed: u64 },
}

impl Method {
    /// Kernel estimator with a `2d + 2048` coalition budget.
    pub fn default_kernel(n_features: usize, seed: u64) -> Self {
        Method::Kernel {
            n_coalitions: 2 * n_features + 2048,
            seed,
        }
    }
}

/// Shapley values for many rows against one background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMatrix {
    pub phi: Matrix,
    pub base_value: f64,
    pub predictions: Vec<f64>,
    pub background: Matrix,
    pub feature_names: Vec<String>,
}

fn row_seed(seed: u64, row: usize) -> u64 {
    seed ^ (row as u64)
        .wrapping_add(1)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Attributes every row of `rows`. Rows are processed in parallel and merged in order.
pub fn explain(
    model: &dyn Model,
    rows: &Matrix,
    background: &Matrix,
    method: Method,
    feature_names: Vec<String>,
) -> Result<AttributionMatrix> {
    let d = model.n_features();
    if rows.ncols() != d || feature_names.len() != d {
        return Err(Error::Shape(format!(
            "model takes {d} features; rows have {}, {} names given",
            rows.ncols(),
            feature_names.len()
        )));
    }
    let per_row: Vec<RowAttribution> = (0..rows.nrows())
        .into_par_iter()
        .map(|r| match method {
            Method::Exact => shapley_exact(model, rows.row(r), background),
            Method::Kernel { n_coalitions, seed } => shapley_kernel(
                model,
                rows.row(r),
                background,
                n_coalitions,
                row_seed(seed, r),
            ),
        })
        .collect::<Result<_>>()?;
    let base_value = match per_row.first() {
        Some(a) => a.base_value,
        None => mean(&model.predict(background)),
    };
    let mut phi = Matrix::zeros(rows.nrows(), d);
    let mut predictions = Vec::with_capacity(rows.nrows());
    for (r, a) in per_row.into_iter().enumerate() {
        phi.row_mut(r).copy_from_slice(&a.phi);
        predictions.push(a.prediction);
    }
    Ok(AttributionMatrix {
        phi,
        base_value,
        predictions,
        background: background.clone(),
        feature_names,
    })
}

/// Largest `|base + sum(phi) - model(row)|` over the attributed rows.
pub fn local_accuracy_check(
    attr: &AttributionMatrix,
    model: &dyn Model,
    rows: &Matrix,
) -> Result<f64> {
    if rows.nrows() != attr.phi.nrows() || rows.ncols() != model.n_features() {
        return Err(Error::Shape(
            "rows do not match the attribution matrix".into(),
        ));
    }
    let preds = model.predict(rows);
    Ok(attr
        .phi
        .rows_iter()
        .zip(&preds)
        .map(|(phi, f)| (attr.base_value + phi.iter().sum::<f64>() - f).abs())
        .fold(0.0, f64::max))
}

/// Features ordered by mean absolute attribution, largest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub entries: Vec<RankedFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub name: String,
    pub index: usize,
    pub importance: f64,
}

pub fn rank_features(attr: &AttributionMatrix) -> Result<FeatureRanking> {
    let n = attr.phi.nrows();
    if n == 0 {
        return Err(Error::InvalidInput(
            "cannot rank features over zero rows".into(),
        ));
    }
    let mut entries: Vec<RankedFeature> = attr
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| RankedFeature {
            name: name.clone(),
            index: j,
            importance: attr.phi.column(j).iter().map(|v| v.abs()).sum::<f64>() / n as f64,
        })
        .collect();
    // Stable sort: equal scores keep ascending feature index.
    entries.sort_by(|a, b| b.importance.total_cmp(&a.importance));
    Ok(FeatureRanking { entries })
}

pub fn select_top_k(ranking: &FeatureRanking, k: usize) -> Result<Vec<String>> {
    if k == 0 || k > ranking.entries.len() {
        return Err(Error::InvalidInput(format!(
            "k must lie in [1, {}], got {k}",
            ranking.entries.len()
        )));
    }
    Ok(ranking.entries[..k]
        .iter()
        .map(|e| e.name.clone())
        .collect())
}

/// Seeded sample of up to `size` distinct rows, kept in ascending row order.
pub fn sample_background(data: &Matrix, size: usize, seed: u64) -> Matrix {
    if data.nrows() <= size {
        return data.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = index::sample(&mut rng, data.nrows(), size).into_vec();
    idx.sort_unstable();
    data.select_rows(&idx)
}

impl AttributionMatrix {
    /// CSV with a `row` column, one column per feature and the base value.
    pub fn write_csv(&self, path: impl AsRef<Path>, row_ids: &[usize]) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["row".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.push("base_value".into());
        w.write_record(&header)?;
        for (r, phi) in self.phi.rows_iter().enumerate() {
            let mut rec = vec![row_ids.get(r).copied().unwrap_or(r).to_string()];
            rec.extend(phi.iter().map(|v| v.to_string()));
            rec.push(self.base_value.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
