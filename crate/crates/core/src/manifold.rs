//! Two-dimensional UMAP embedding.
//!
//! Pipeline: exact Euclidean k-nearest neighbours, per-row smoothed distance
//! calibration (`rho`, `sigma`), probabilistic t-conorm symmetrisation into a
//! fuzzy graph, spectral initialisation, then edge-sampled SGD with negative
//! sampling. Layout runs single-threaded so a seed fixes the output bytes.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const SMOOTH_TOLERANCE: f64 = 1e-5;
const SMOOTH_MAX_ITERS: usize = 64;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const GRADIENT_CLIP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UmapConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub epochs: usize,
    pub negative_sample_rate: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for UmapConfig {
    fn default() -> Self {
        Self {
            n_neighbors: 15,
            min_dist: 0.1,
            spread: 1.0,
            epochs: 200,
            negative_sample_rate: 5,
            learning_rate: 1.0,
            seed: 0,
        }
    }
}

/// k nearest neighbours of every row, plus the smoothing calibration once
/// [`smooth_knn`] has run.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    k: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
    rho: Vec<f64>,
    sigma: Vec<f64>,
}

impl NeighborGraph {
    pub fn n(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    /// Empty until [`smooth_knn`] runs.
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// Empty until [`smooth_knn`] runs.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn is_smoothed(&self) -> bool {
        !self.sigma.is_empty()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact Euclidean k-NN by full scan. A row is never its own neighbour; ties
/// are ordered by row index.
pub fn knn_graph(data: &Matrix, k: usize) -> Result<NeighborGraph> {
    let n = data.nrows();
    if k < 2 {
        return Err(Error::InvalidInput(format!(
            "k must be at least 2, got {k}"
        )));
    }
    if k >= n {
        return Err(Error::InvalidInput(format!(
            "k = {k} requires more than {k} rows, got {n}"
        )));
    }
    if !data.is_finite() {
        return Err(Error::InvalidInput(
            "data contains non-finite values".into(),
        ));
    }
    let per_row: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = data.row(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(xi, data.row(j)), j))
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            cand.select_nth_unstable_by(k - 1, cmp);
            cand.truncate(k);
            cand.sort_unstable_by(cmp);
            cand
        })
        .collect();
    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for row in per_row {
        for (d2, j) in row {
            indices.push(j);
            distances.push(d2.sqrt());
        }
    }
    Ok(NeighborGraph {
        k,
        indices,
        distances,
        rho: Vec::new(),
        sigma: Vec::new(),
    })
}

/// Calibrates `rho` (nearest non-zero neighbour distance) and `sigma` so that
/// `sum_j exp(-max(0, d_ij - rho_i) / sigma_i) = log2(k)` for every row.
pub fn smooth_knn(graph: &mut NeighborGraph) {
    let n = graph.n();
    let k = graph.k;
    let target = (k as f64).log2();
    let global_mean = graph.distances.iter().sum::<f64>() / graph.distances.len() as f64;
    let mut rho = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for i in 0..n {
        let d = graph.distances(i);
        let r = d.iter().copied().find(|&v| v > 0.0).unwrap_or(0.0);
        let (mut lo, mut hi, mut mid) = (0.0, f64::INFINITY, 1.0);
        for _ in 0..SMOOTH_MAX_ITERS {
            let psum: f64 = d
                .iter()
                .map(|&v| {
                    let gap = v - r;
                    if gap > 0.0 {
                        (-gap / mid).exp()
                    } else {
                        1.0
                    }
                })
                .sum();
            if (psum - target).abs() < SMOOTH_TOLERANCE {
                break;
            }
            if psum > target {
                hi = mid;
                mid = (lo + hi) / 2.0;
            } else {
                lo = mid;
                mid = if hi.is_infinite() {
                    mid * 2.0
                } else {
                    (lo + hi) / 2.0
                };
            }
        }
        let row_mean = d.iter().sum::<f64>() / k as f64;
        let floor = if r > 0.0 { row_mean } else { global_mean } * MIN_K_DIST_SCALE;
        rho.push(r);
        sigma.push(mid.max(floor).max(f64::MIN_POSITIVE));
    }
    graph.rho = rho;
    graph.sigma = sigma;
}

/// Sparse symmetric membership matrix with entries in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    /// Per row, `(column, weight)` sorted by column.
    rows: Vec<Vec<(usize, f64)>>,
}

impl FuzzyGraph {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map_or(0.0, |p| self.rows[i][p].1)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `(row, column, weight)` for every stored entry.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(j, w)| (i, j, w)))
    }

    pub fn from_triples(n: usize, triples: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows = vec![Vec::new(); n];
        for (i, j, w) in triples {
            rows[i].push((j, w));
        }
        for r in &mut rows {
            r.sort_unstable_by_key(|&(c, _)| c);
        }
        Self { rows }
    }

    /// Writes the entries as `row,col,weight` lines.
    pub fn write_triples(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("row,col,weight\n");
        for (i, j, w) in self.triples() {
            out.push_str(&format!("{i},{j},{w}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Directed memberships symmetrised with `a + b - a*b`.
pub fn fuzzy_union(graph: &NeighborGraph) -> Result<FuzzyGraph> {
    if !graph.is_smoothed() {
        return Err(Error::InvalidInput(
            "run smooth_knn before fuzzy_union".into(),
        ));
    }
    let n = graph.n();
    let mut directed: HashMap<(usize, usize), f64> = HashMap::with_capacity(n * graph.k);
    for i in 0..n {
        for (&j, &d) in graph.neighbors(i).iter().zip(graph.distances(i)) {
            let w = (-(d - graph.rho[i]).max(0.0) / graph.sigma[i]).exp();
            directed.insert((i, j), w);
        }
    }
    let mut triples = Vec::with_capacity(directed.len() * 2);
    for (&(i, j), &a) in &directed {
        let b = directed.get(&(j, i)).copied().unwrap_or(0.0);
        let u = a + b - a * b;
        if u > 0.0 {
            triples.push((i, j, u));
            if b == 0.0 {
                // (j, i) is not a directed edge, so it will not be visited.
                triples.push((j, i, u));
            }
        }
    }
    Ok(FuzzyGraph::from_triples(n, triples))
}

/// Fits `1 / (1 + a x^(2b))` to the min-dist target curve by Levenberg-Marquardt.
pub fn fit_ab(spread: f64, min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / spread).exp()
            }
        })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };
    let (mut a, mut b) = (1.0, 1.0);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        // Jacobian-based normal equations for the two parameters.
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            let p = if x > 0.0 { x.powf(2.0 * b) } else { 0.0 };
            let denom = 1.0 + a * p;
            let f = 1.0 / denom;
            let r = f - y;
            let da = -p / (denom * denom);
            let db = if x > 0.0 {
                -a * p * 2.0 * x.ln() / (denom * denom)
            } else {
                0.0
            };
            let g = [da, db];
            for u in 0..2 {
                jtr[u] += g[u] * r;
                for v in 0..2 {
                    jtj[u][v] += g[u] * g[v];
                }
            }
        }
        let m = [
            [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
            [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let step_a = -(m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det;
        let step_b = -(m[0][0] * jtr[1] - m[1][0] * jtr[0]) / det;
        let (na, nb) = (a + step_a, b + step_b);
        let new_cost = if na > 0.0 && nb > 0.0 {
            sse(na, nb)
        } else {
            f64::INFINITY
        };
        if new_cost < cost {
            let done = (cost - new_cost) < 1e-15 * cost.max(1e-300);
            a = na;
            b = nb;
            cost = new_cost;
            lambda = (lambda / 10.0).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (a, b)
}

/// `n x 2` layout coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    pub coords: Matrix,
}

impl Embedding2D {
    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        [self.coords.get(i, 0), self.coords.get(i, 1)]
    }

    /// CSV with columns `row,u1,u2`; `row_ids` label the rows (defaults to position).
    pub fn write_csv(&self, path: impl AsRef<Path>, row_ids: Option<&[usize]>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        writeln!(out, "row,u1,u2").unwrap();
        for i in 0..self.n() {
            let id = row_ids.map_or(i, |r| r[i]);
            let [u, v] = self.point(i);
            writeln!(out, "{id},{u},{v}").unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads a file written by [`Embedding2D::write_csv`], returning the row ids too.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<(Self, Vec<usize>)> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = || Error::Parse {
                path: path.to_path_buf(),
                line: line + 2,
                message: "expected row,u1,u2".into(),
            };
            if rec.len() != 3 {
                return Err(bad());
            }
            ids.push(rec[0].parse().map_err(|_| bad())?);
            data.push(rec[1].parse().map_err(|_| bad())?);
            data.push(rec[2].parse().map_err(|_| bad())?);
        }
        let n = ids.len();
        Ok((
            Self {
                coords: Matrix::from_vec(n, 2, data)?,
            },
            ids,
        ))
    }
}

/// Connected components (label per node, count).
fn components(graph: &FuzzyGraph) -> (Vec<usize>, usize) {
    let n = graph.n();
    let mut label = vec![usize::MAX; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = count;
        stack.push(s);
        while let Some(i) = stack.pop() {
            for &(j, _) in graph.row(i) {
                if label[j] == usize::MAX {
                    label[j] = count;
                    stack.push(j);
                }
            }
        }
        count += 1;
    }
    (label, count)
}

/// Two leading non-trivial eigenvectors of `D^-1/2 W D^-1/2` on one component,
/// by block subspace iteration with Rayleigh-Ritz. `None` if it fails to produce
/// finite vectors.
fn spectral_component(
    graph: &FuzzyGraph,
    nodes: &[usize],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<[f64; 2]>> {
    let m = nodes.len();
    let local: HashMap<usize, usize> = nodes.iter().enumerate().map(|(a, &g)| (g, a)).collect();
    let adj: Vec<Vec<(usize, f64)>> = nodes
        .iter()
        .map(|&g| graph.row(g).iter().map(|&(j, w)| (local[&j], w)).collect())
        .collect();
    let deg: Vec<f64> = adj.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let trivial_norm = deg.iter().sum::<f64>().sqrt();
    let trivial: Vec<f64> = deg.iter().map(|d| d.sqrt() / trivial_norm).collect();

    // (I + N) / 2 keeps the eigen-order and makes the spectrum non-negative.
    let apply = |x: &[f64], y: &mut [f64]| {
        for a in 0..m {
            let s: f64 = adj[a].iter().map(|&(b, w)| w * inv_sqrt[b] * x[b]).sum();
            y[a] = 0.5 * (x[a] + inv_sqrt[a] * s);
        }
    };
    let block = 6.min(m - 1).max(2);
    let mut basis: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..m).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    let orthonormalize = |vs: &mut Vec<Vec<f64>>| {
        for i in 0..vs.len() {
            let (head, tail) = vs.split_at_mut(i);
            let v = &mut tail[0];
            let t = trivial
                .iter()
                .zip(v.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>();
            v.iter_mut().zip(&trivial).for_each(|(x, q)| *x -= t * q);
            for u in head.iter() {
                let p = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>();
                v.iter_mut().zip(u).for_each(|(x, q)| *x -= p * q);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-300 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
        }
    };
    orthonormalize(&mut basis);
    let max_iters = 3000;
    let mut image = vec![vec![0.0; m]; block];
    for it in 0..max_iters {
        for (x, y) in basis.iter().zip(image.iter_mut()) {
            apply(x, y);
        }
        if it % 25 == 24 || it == max_iters - 1 {
            // Rayleigh-Ritz on the current subspace.
            let h = DMatrix::from_fn(block, block, |a, b| {
                basis[a]
                    .iter()
                    .zip(&image[b])
                    .map(|(p, q)| p * q)
                    .sum::<f64>()
            });
            let h = (&h + h.transpose()) * 0.5;
            let eig = SymmetricEigen::new(h);
            let mut order: Vec<usize> = (0..block).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let rotate = |vs: &[Vec<f64>]| -> Vec<Vec<f64>> {
                order
                    .iter()
                    .map(|&c| {
                        (0..m)
                            .map(|r| {
                                (0..block)
                                    .map(|k| vs[k][r] * eig.eigenvectors[(k, c)])
                                    .sum()
                            })
                            .collect()
                    })
                    .collect()
            };
            let ritz = rotate(&basis);
            let ritz_image = rotate(&image);
            let residual = (0..2)
                .map(|i| {
                    let lam = eig.eigenvalues[order[i]];
                    ritz_image[i]
                        .iter()
                        .zip(&ritz[i])
                        .map(|(y, x)| (y - lam * x).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max);
            basis = ritz;
            if residual < 1e-7 {
                break;
            }
            for (x, y) in basis.iter().zip(image.iter_mut()) {
                apply(x, y);
            }
        }
        std::mem::swap(&mut basis, &mut image);
        orthonormalize(&mut basis);
    }
    let out: Vec<[f64; 2]> = (0..m).map(|a| [basis[0][a], basis[1][a]]).collect();
    out.iter()
        .all(|p| p[0].is_finite() && p[1].is_finite())
        .then_some(out)
}

/// Initial coordinates: spectral per component, components placed on a circle.
fn initial_layout(graph: &FuzzyGraph, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = graph.n();
    let (label, count) = components(graph);
    let mut members = vec![Vec::new(); count];
    for (i, &c) in label.iter().enumerate() {
        members[c].push(i);
    }
    let meta: Vec<[f64; 2]> = (0..count)
        .map(|c| {
            if count == 1 {
                [0.0, 0.0]
            } else {
                let t = 2.0 * PI * c as f64 / count as f64;
                [t.cos(), t.sin()]
            }
        })
        .collect();
    let radius = if count == 1 {
        1.0
    } else {
        (PI / count as f64).sin() * 0.5
    };
    let mut coords = vec![[0.0; 2]; n];
    for (c, nodes) in members.iter().enumerate() {
        let local = if nodes.len() > 3 {
            spectral_component(graph, nodes, rng)
        } else {
            None
        };
        let local = local.unwrap_or_else(|| {
            nodes
                .iter()
                .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                .collect()
        });
        let scale = local
            .iter()
            .flat_map(|p| p.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
            .max(1e-300);
        for (&i, p) in nodes.iter().zip(&local) {
            coords[i] = [
                meta[c][0] + radius * p[0] / scale,
                meta[c][1] + radius * p[1] / scale,
            ];
        }
    }
    coords
}

/// SGD layout of a fuzzy graph.
pub fn embed(fuzzy: &FuzzyGraph, config: &UmapConfig) -> Result<Embedding2D> {
    let n = fuzzy.n();
    if n == 0 {
        return Err(Error::InvalidInput("cannot embed an empty graph".into()));
    }
    if config.epochs == 0 || !(config.min_dist >= 0.0) || !(config.spread > 0.0) {
        return Err(Error::InvalidInput(format!(
            "invalid layout config {config:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (a, b) = fit_ab(config.spread, config.min_dist);

    let max_w = fuzzy.triples().map(|t| t.2).fold(0.0, f64::max);
    let threshold = max_w / config.epochs as f64;
    let edges: Vec<(usize, usize, f64)> = fuzzy
        .triples()
        .filter(|&(i, j, w)| i != j && w >= threshold)
        .collect();
    let mut connected = vec![false; n];
    for &(i, j, _) in &edges {
        connected[i] = true;
        connected[j] = true;
    }

    let mut init = initial_layout(fuzzy, &mut rng);
    if init.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        init = (0..n)
            .map(|_| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)])
            .collect();
    }
    let expansion = 10.0
        / init
            .iter()
            .flat_map(|p| p.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
            .max(1e-300);
    let noise = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut pos: Vec<f64> = init
        .iter()
        .flat_map(|p| [p[0] * expansion, p[1] * expansion])
        .map(|v| v + noise.sample(&mut rng))
        .collect();
    for dim in 0..2 {
        let (lo, hi) = (0..n)
            .map(|i| pos[2 * i + dim])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
                (l.min(v), h.max(v))
            });
        let span = (hi - lo).max(1e-300);
        for i in 0..n {
            pos[2 * i + dim] = 10.0 * (pos[2 * i + dim] - lo) / span;
        }
    }
    for (i, &c) in connected.iter().enumerate() {
        if !c {
            pos[2 * i] = rng.random_range(-1e-3..1e-3);
            pos[2 * i + 1] = rng.random_range(-1e-3..1e-3);
        }
    }

    let epochs_per_sample: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
    let neg_rate = config.negative_sample_rate as f64;
    let epochs_per_negative: Vec<f64> = epochs_per_sample.iter().map(|e| e / neg_rate).collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();

    let clip = |v: f64| v.clamp(-GRADIENT_CLIP, GRADIENT_CLIP);
    for epoch in 0..config.epochs {
        let alpha = config.learning_rate * (1.0 - epoch as f64 / config.epochs as f64);
        let e = epoch as f64;
        for (idx, &(i, j, _)) in edges.iter().enumerate() {
            if next_sample[idx] > e {
                continue;
            }
            let (dx, dy) = (pos[2 * i] - pos[2 * j], pos[2 * i + 1] - pos[2 * j + 1]);
            let d2 = dx * dx + dy * dy;
            if d2 > 0.0 {
                let coef = -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0);
                let (gx, gy) = (clip(coef * dx), clip(coef * dy));
                pos[2 * i] += gx * alpha;
                pos[2 * i + 1] += gy * alpha;
                pos[2 * j] -= gx * alpha;
                pos[2 * j + 1] -= gy * alpha;
            }
            next_sample[idx] += epochs_per_sample[idx];

            let n_neg = ((e - next_negative[idx]) / epochs_per_negative[idx])
                .floor()
                .max(0.0) as usize;
            for _ in 0..n_neg {
                let kk = rng.random_range(0..n);
                if kk == i {
                    continue;
                }
                let (dx, dy) = (pos[2 * i] - pos[2 * kk], pos[2 * i + 1] - pos[2 * kk + 1]);
                let d2 = dx * dx + dy * dy;
                let (gx, gy) = if d2 > 0.0 {
                    let coef = 2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0));
                    (clip(coef * dx), clip(coef * dy))
                } else {
                    (GRADIENT_CLIP, GRADIENT_CLIP)
                };
                pos[2 * i] += gx * alpha;
                pos[2 * i + 1] += gy * alpha;
            }
            next_negative[idx] += n_neg as f64 * epochs_per_negative[idx];
        }
        if pos.iter().any(|v| !v.is_finite()) {
            return Err(Error::LayoutDiverged { epoch });
        }
    }
    Ok(Embedding2D {
        coords: Matrix::from_vec(n, 2, pos)?,
    })
}

/// kNN graph, smoothing, fuzzy union and layout in one call.
pub fn umap(data: &Matrix, config: &UmapConfig) -> Result<Embedding2D> {
    let mut graph = knn_graph(data, config.n_neighbors)?;
    smooth_knn(&mut graph);
    let fuzzy = fuzzy_union(&graph)?;
    embed(&fuzzy, config)
}

/// Mean fraction of each row's `k` nearest neighbours in `high` that are also
/// among its `k` nearest neighbours in `low`.
pub fn knn_overlap(high: &Matrix, low: &Matrix, k: usize) -> Result<f64> {
    if high.nrows() != low.nrows() {
        return Err(Error::Shape(format!(
            "row counts differ: {} vs {}",
            high.nrows(),
            low.nrows()
        )));
    }
    let gh = knn_graph(high, k)?;
    let gl = knn_graph(low, k)?;
    let n = high.nrows();
    let total: usize = (0..n)
        .map(|i| {
            let mut a = gh.neighbors(i).to_vec();
            a.sort_unstable();
            gl.neighbors(i)
                .iter()
                .filter(|j| a.binary_search(j).is_ok())
                .count()
        })
        .sum();
    Ok(total as f64 / (n * k) as f64)
}
