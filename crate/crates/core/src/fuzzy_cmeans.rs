//! Fuzzy c-means soft clustering.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcmConfig {
    pub clusters: usize,
    /// Fuzziness exponent `m`, must exceed 1.
    pub fuzziness: f64,
    /// Stop once no membership moves by more than this.
    pub tolerance: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for FcmConfig {
    fn default() -> Self {
        Self {
            clusters: 6,
            fuzziness: 3.0,
            tolerance: 1e-5,
            max_iters: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmResult {
    /// `n x c`, each row sums to one.
    pub memberships: Matrix,
    /// `c x d`.
    pub centroids: Matrix,
    /// Objective after every membership update, non-increasing.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FcmResult {
    pub fn n_clusters(&self) -> usize {
        self.centroids.nrows()
    }

    /// Hard labels: the cluster of highest membership, lowest index on ties.
    pub fn hard_labels(&self) -> Vec<usize> {
        hard_assign(&self.memberships)
    }

    /// CSV: `point`, one `u<k>` column per cluster, then `label`.
    pub fn write_partition_csv(
        &self,
        path: impl AsRef<Path>,
        point_ids: Option<&[usize]>,
    ) -> Result<()> {
        let path = path.as_ref();
        let c = self.n_clusters();
        let mut out = Vec::new();
        write!(out, "point").unwrap();
        for k in 0..c {
            write!(out, ",u{k}").unwrap();
        }
        writeln!(out, ",label").unwrap();
        for (i, label) in self.hard_labels().into_iter().enumerate() {
            write!(out, "{}", point_ids.map_or(i, |p| p[i])).unwrap();
            for u in self.memberships.row(i) {
                write!(out, ",{u}").unwrap();
            }
            writeln!(out, ",{label}").unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn write_centroids_json(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Out<'a> {
            centroids: Vec<&'a [f64]>,
            objective: &'a [f64],
            iterations: usize,
            converged: bool,
        }
        let path = path.as_ref();
        let body = serde_json::to_string_pretty(&Out {
            centroids: self.centroids.rows_iter().collect(),
            objective: &self.objective,
            iterations: self.iterations,
            converged: self.converged,
        })?;
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

/// Index of the largest entry per row; ties go to the lowest index.
pub fn hard_assign(memberships: &Matrix) -> Vec<usize> {
    memberships
        .rows_iter()
        .map(|r| {
            let mut best = 0;
            for (k, &u) in r.iter().enumerate() {
                if u > r[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `J_m = sum_i sum_k u_ik^m ||x_i - v_k||^2`.
pub fn fcm_objective(data: &Matrix, memberships: &Matrix, centroids: &Matrix, m: f64) -> f64 {
    let mut j = 0.0;
    for (i, x) in data.rows_iter().enumerate() {
        for (k, v) in centroids.rows_iter().enumerate() {
            j += memberships.get(i, k).powf(m) * sq_dist(x, v);
        }
    }
    j
}

fn update_centroids(data: &Matrix, u: &Matrix, m: f64, out: &mut Matrix) {
    let (c, d) = (u.ncols(), data.ncols());
    for k in 0..c {
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        for (i, x) in data.rows_iter().enumerate() {
            let w = u.get(i, k).powf(m);
            den += w;
            for (a, &b) in num.iter_mut().zip(x) {
                *a += w * b;
            }
        }
        let row = out.row_mut(k);
        if den > 0.0 {
            for (r, a) in row.iter_mut().zip(num) {
                *r = a / den;
            }
        }
    }
}

fn update_memberships(data: &Matrix, centroids: &Matrix, m: f64, out: &mut Matrix) {
    let c = centroids.nrows();
    let power = -1.0 / (m - 1.0);
    let mut d2 = vec![0.0; c];
    for (i, x) in data.rows_iter().enumerate() {
        for (k, v) in centroids.rows_iter().enumerate() {
            d2[k] = sq_dist(x, v);
        }
        let row = out.row_mut(i);
        if let Some(hit) = d2.iter().position(|&d| d == 0.0) {
            row.iter_mut().for_each(|u| *u = 0.0);
            row[hit] = 1.0;
            continue;
        }
        // Scale by the smallest distance before the power for stability.
        let dmin = d2.iter().copied().fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for (u, &d) in row.iter_mut().zip(&d2) {
            *u = (d / dmin).powf(power);
            total += *u;
        }
        row.iter_mut().for_each(|u| *u /= total);
    }
}

/// Alternating centroid and membership updates from seeded random memberships.
pub fn fcm_fit(data: &Matrix, config: &FcmConfig) -> Result<FcmResult> {
    let (n, d, c) = (data.nrows(), data.ncols(), config.clusters);
    if c == 0 || c > n {
        return Err(Error::InvalidInput(format!("{c} clusters for {n} points")));
    }
    if !(config.fuzziness > 1.0) || !config.fuzziness.is_finite() {
        return Err(Error::InvalidInput(format!(
            "fuzziness must exceed 1, got {}",
            config.fuzziness
        )));
    }
    if !(config.tolerance > 0.0) || config.max_iters == 0 {
        return Err(Error::InvalidInput(
            "tolerance must be positive and max_iters nonzero".into(),
        ));
    }
    if !data.is_finite() {
        return Err(Error::InvalidInput(
            "data contains non-finite values".into(),
        ));
    }
    let m = config.fuzziness;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // Normalized exponentials are uniform on the simplex.
    let mut u = Matrix::zeros(n, c);
    for i in 0..n {
        let row = u.row_mut(i);
        row.iter_mut()
            .for_each(|v| *v = Distribution::<f64>::sample(&Exp1, &mut rng) + f64::MIN_POSITIVE);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let mut v = Matrix::zeros(c, d);
    let mut next_u = u.clone();
    let mut next_v = v.clone();
    let mut objective = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    update_centroids(data, &u, m, &mut v);
    for _ in 0..config.max_iters {
        update_memberships(data, &v, m, &mut next_u);
        update_centroids(data, &next_u, m, &mut next_v);
        let j = fcm_objective(data, &next_u, &next_v, m);
        if objective.last().is_some_and(|&prev| j > prev) {
            // Rounding noise near the fixed point; keep the previous state.
            converged = true;
            break;
        }
        let change = u
            .as_slice()
            .iter()
            .zip(next_u.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut u, &mut next_u);
        std::mem::swap(&mut v, &mut next_v);
        objective.push(j);
        iterations += 1;
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(FcmResult {
        memberships: u,
        centroids: v,
        objective,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(c: usize, seed: u64) -> FcmConfig {
        FcmConfig {
            clusters: c,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn far_pairs_get_confident_memberships() {
        let data = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![10.0, 10.0],
            vec![10.1, 10.0],
        ])
        .unwrap();
        let r = fcm_fit(&data, &cfg(2, 1)).unwrap();
        let l = r.hard_labels();
        assert_eq!(l[0], l[1]);
        assert_eq!(l[2], l[3]);
        assert_ne!(l[0], l[2]);
        for (i, &k) in l.iter().enumerate() {
            assert!(r.memberships.get(i, k) > 0.95);
        }
    }

    #[test]
    fn midpoint_splits_evenly() {
        let data =
            Matrix::from_rows(&[vec![-1.0], vec![-1.2], vec![1.0], vec![1.2], vec![0.0]]).unwrap();
        let tight = FcmConfig {
            tolerance: 1e-12,
            max_iters: 2000,
            ..cfg(2, 4)
        };
        let r = fcm_fit(&data, &tight).unwrap();
        assert!(
            (r.memberships.get(4, 0) - 0.5).abs() < 1e-6,
            "{:?}",
            r.memberships.row(4)
        );
    }

    #[test]
    fn one_cluster_per_distinct_point() {
        let data = Matrix::from_rows(&[vec![0.0], vec![5.0], vec![9.0]]).unwrap();
        let r = fcm_fit(&data, &cfg(3, 2)).unwrap();
        let mut l = r.hard_labels();
        l.sort_unstable();
        assert_eq!(l, vec![0, 1, 2]);
        for i in 0..3 {
            assert!(r.memberships.row(i).iter().copied().fold(0.0, f64::max) > 0.99);
        }
    }

    #[test]
    fn single_cluster_centroid_is_mean() {
        let data = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -2.0], vec![8.0, 3.0]]).unwrap();
        let r = fcm_fit(&data, &cfg(1, 0)).unwrap();
        assert!((r.centroids.get(0, 0) - 4.0).abs() < 1e-12);
        assert!((r.centroids.get(0, 1) - 1.0).abs() < 1e-12);
        assert!(r.memberships.as_slice().iter().all(|&u| u == 1.0));
    }

    #[test]
    fn coincident_point_takes_full_membership() {
        let centroids = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![1.0]]).unwrap();
        let data = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let mut u = Matrix::zeros(1, 3);
        update_memberships(&data, &centroids, 3.0, &mut u);
        assert_eq!(u.row(0), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn hard_assign_ties_go_low() {
        let u = Matrix::from_rows(&[vec![0.25, 0.5, 0.25], vec![0.4, 0.2, 0.4]]).unwrap();
        assert_eq!(hard_assign(&u), vec![1, 0]);
    }

    #[test]
    fn rejects_bad_config() {
        let data = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(fcm_fit(&data, &cfg(3, 0)).is_err());
        assert!(fcm_fit(
            &data,
            &FcmConfig {
                fuzziness: 1.0,
                ..cfg(2, 0)
            }
        )
        .is_err());
        assert!(fcm_fit(&data, &cfg(0, 0)).is_err());
    }
}
