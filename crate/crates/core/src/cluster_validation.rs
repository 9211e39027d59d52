//! External cluster validity indices.
//!
//! Conventions on degenerate inputs (single class, single cluster, all
//! singletons) follow scikit-learn so values can be compared directly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class-by-cluster count table. Labels are remapped to dense indices in
/// ascending order of their original values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contingency {
    counts: Vec<Vec<u64>>,
    class_sizes: Vec<u64>,
    cluster_sizes: Vec<u64>,
    n: u64,
}

impl Contingency {
    pub fn new(truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Shape(format!(
                "{} true labels but {} predicted labels",
                truth.len(),
                pred.len()
            )));
        }
        if truth.is_empty() {
            return Err(Error::InvalidInput("no labels to compare".into()));
        }
        let dense = |labels: &[usize]| -> (Vec<usize>, usize) {
            let mut map = BTreeMap::new();
            for &l in labels {
                map.insert(l, 0);
            }
            for (k, v) in map.values_mut().enumerate() {
                *v = k;
            }
            (labels.iter().map(|l| map[l]).collect(), map.len())
        };
        let (t, r) = dense(truth);
        let (p, c) = dense(pred);
        let mut counts = vec![vec![0u64; c]; r];
        for (&i, &j) in t.iter().zip(&p) {
            counts[i][j] += 1;
        }
        let class_sizes = counts.iter().map(|row| row.iter().sum()).collect();
        let cluster_sizes = (0..c)
            .map(|j| counts.iter().map(|row| row[j]).sum())
            .collect();
        Ok(Self {
            counts,
            class_sizes,
            cluster_sizes,
            n: truth.len() as u64,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn n_classes(&self) -> usize {
        self.class_sizes.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn class_sizes(&self) -> &[u64] {
        &self.class_sizes
    }

    pub fn cluster_sizes(&self) -> &[u64] {
        &self.cluster_sizes
    }

    fn cells(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &v)| (i, j, v)))
    }
}

fn pairs(x: u64) -> u128 {
    let x = u128::from(x);
    x * x.saturating_sub(1) / 2
}

/// Pair counts `(tn, fp, fn, tp)`: same class and same cluster is `tp`.
pub fn pair_confusion(c: &Contingency) -> (u128, u128, u128, u128) {
    let tp: u128 = c.cells().map(|(_, _, v)| pairs(v)).sum();
    let same_cluster: u128 = c.cluster_sizes.iter().map(|&v| pairs(v)).sum();
    let same_class: u128 = c.class_sizes.iter().map(|&v| pairs(v)).sum();
    let total = pairs(c.n);
    let fp = same_cluster - tp;
    let fn_ = same_class - tp;
    let tn = total - tp - fp - fn_;
    (tn, fp, fn_, tp)
}

pub fn rand_index(c: &Contingency) -> f64 {
    let (tn, fp, fn_, tp) = pair_confusion(c);
    let total = tn + fp + fn_ + tp;
    if total == 0 || tn + tp == total {
        return 1.0;
    }
    (tn + tp) as f64 / total as f64
}

pub fn adjusted_rand_index(c: &Contingency) -> f64 {
    let (tn, fp, fn_, tp) = pair_confusion(c);
    if fn_ == 0 && fp == 0 {
        return 1.0;
    }
    let (tn, fp, fn_, tp) = (tn as f64, fp as f64, fn_ as f64, tp as f64);
    2.0 * (tp * tn - fn_ * fp) / ((tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn))
}

fn entropy(sizes: &[u64], n: u64) -> f64 {
    if sizes.len() <= 1 {
        return 0.0;
    }
    let ln_n = (n as f64).ln();
    -sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| s as f64 / n as f64 * ((s as f64).ln() - ln_n))
        .sum::<f64>()
}

/// Natural-log mutual information.
pub fn mutual_information(c: &Contingency) -> f64 {
    if c.n_classes() == 1 || c.n_clusters() == 1 {
        return 0.0;
    }
    let n = c.n as f64;
    let mi: f64 = c
        .cells()
        .filter(|&(_, _, v)| v > 0)
        .map(|(i, j, v)| {
            let v = v as f64;
            let outer = c.class_sizes[i] as f64 * c.cluster_sizes[j] as f64;
            let term = v / n * (v.ln() - n.ln()) + v / n * (-(outer.ln()) + 2.0 * n.ln());
            if term.abs() < f64::EPSILON {
                0.0
            } else {
                term
            }
        })
        .sum();
    mi.max(0.0)
}

/// NMI with the arithmetic mean of the two entropies as normaliser.
pub fn normalized_mutual_information(c: &Contingency) -> f64 {
    if c.n_classes() == 1 && c.n_clusters() == 1 {
        return 1.0;
    }
    let mi = mutual_information(c);
    if mi == 0.0 {
        return 0.0;
    }
    mi / ((entropy(&c.class_sizes, c.n) + entropy(&c.cluster_sizes, c.n)) / 2.0)
}

/// Expected MI under the hypergeometric permutation model.
pub fn expected_mutual_information(c: &Contingency) -> f64 {
    let n = c.n as usize;
    let mut ln_fact = vec![0.0f64; n + 1];
    for k in 1..=n {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in &c.class_sizes {
        let a = a as usize;
        for &b in &c.cluster_sizes {
            let b = b as usize;
            let start = (a + b).saturating_sub(n).max(1);
            let end = a.min(b);
            let fixed = ln_fact[a] + ln_fact[b] + ln_fact[n - a] + ln_fact[n - b] - ln_fact[n];
            for nij in start..=end {
                let x = nij as f64;
                let term1 = x / nf;
                let term2 = (nf * x).ln() - ((a * b) as f64).ln();
                let gln = fixed
                    - ln_fact[nij]
                    - ln_fact[a - nij]
                    - ln_fact[b - nij]
                    - ln_fact[n + nij - a - b];
                emi += term1 * term2 * gln.exp();
            }
        }
    }
    emi
}

pub fn adjusted_mutual_information(c: &Contingency) -> f64 {
    let (r, k) = (c.n_classes(), c.n_clusters());
    if r == 1 && k == 1 {
        return 1.0;
    }
    if r == 1 || k == 1 {
        return 0.0;
    }
    let mi = mutual_information(c);
    let emi = expected_mutual_information(c);
    let normalizer = (entropy(&c.class_sizes, c.n) + entropy(&c.cluster_sizes, c.n)) / 2.0;
    let clamp = |v: f64| {
        if v < 0.0 {
            v.min(-f64::EPSILON)
        } else {
            v.max(f64::EPSILON)
        }
    };
    clamp(mi - emi) / clamp(normalizer - emi)
}

/// `(homogeneity, completeness, v_measure)`.
pub fn homogeneity_completeness_v(c: &Contingency) -> (f64, f64, f64) {
    let h_c = entropy(&c.class_sizes, c.n);
    let h_k = entropy(&c.cluster_sizes, c.n);
    let mi = mutual_information(c);
    let h = if h_c != 0.0 { mi / h_c } else { 1.0 };
    let comp = if h_k != 0.0 { mi / h_k } else { 1.0 };
    let v = if h + comp == 0.0 {
        0.0
    } else {
        2.0 * h * comp / (h + comp)
    };
    (h, comp, v)
}

pub fn fowlkes_mallows(c: &Contingency) -> f64 {
    let n = u128::from(c.n);
    let sq = |v: u64| u128::from(v) * u128::from(v);
    let tk = c.cells().map(|(_, _, v)| sq(v)).sum::<u128>() - n;
    if tk == 0 {
        return 0.0;
    }
    let pk = c.cluster_sizes.iter().map(|&v| sq(v)).sum::<u128>() - n;
    let qk = c.class_sizes.iter().map(|&v| sq(v)).sum::<u128>() - n;
    (tk as f64 / pk as f64).sqrt() * (tk as f64 / qk as f64).sqrt()
}

/// All indices for one comparison, serialised under their conventional names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    #[serde(rename = "ARI")]
    pub ari: f64,
    #[serde(rename = "RI")]
    pub ri: f64,
    #[serde(rename = "AMI")]
    pub ami: f64,
    #[serde(rename = "NMI")]
    pub nmi: f64,
    #[serde(rename = "MI")]
    pub mi: f64,
    #[serde(rename = "Homogeneity")]
    pub homogeneity: f64,
    #[serde(rename = "Completeness")]
    pub completeness: f64,
    #[serde(rename = "V-measure")]
    pub v_measure: f64,
    #[serde(rename = "FMS")]
    pub fms: f64,
}

impl ValidationReport {
    pub const METRIC_NAMES: [&'static str; 9] = [
        "ARI",
        "RI",
        "AMI",
        "NMI",
        "MI",
        "Homogeneity",
        "Completeness",
        "V-measure",
        "FMS",
    ];

    /// Values in the order of [`ValidationReport::METRIC_NAMES`].
    pub fn values(&self) -> [f64; 9] {
        [
            self.ari,
            self.ri,
            self.ami,
            self.nmi,
            self.mi,
            self.homogeneity,
            self.completeness,
            self.v_measure,
            self.fms,
        ]
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Scores predicted cluster labels against ground-truth classes.
pub fn validate(truth: &[usize], pred: &[usize]) -> Result<ValidationReport> {
    let c = Contingency::new(truth, pred)?;
    let (homogeneity, completeness, v_measure) = homogeneity_completeness_v(&c);
    Ok(ValidationReport {
        ari: adjusted_rand_index(&c),
        ri: rand_index(&c),
        ami: adjusted_mutual_information(&c),
        nmi: normalized_mutual_information(&c),
        mi: mutual_information(&c),
        homogeneity,
        completeness,
        v_measure,
        fms: fowlkes_mallows(&c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_partitions_score_one() {
        let t = [0, 0, 1, 1, 2, 2, 2];
        let p = [5, 5, 3, 3, 9, 9, 9];
        let r = validate(&t, &p).unwrap();
        for (name, v) in ValidationReport::METRIC_NAMES.iter().zip(r.values()) {
            if *name != "MI" {
                assert!((v - 1.0).abs() < 1e-12, "{name} = {v}");
            }
        }
    }

    #[test]
    fn contingency_counts() {
        let c = Contingency::new(&[0, 0, 1, 1], &[1, 0, 1, 1]).unwrap();
        assert_eq!(c.counts(), &[vec![1, 1], vec![0, 2]]);
        assert_eq!(c.class_sizes(), &[2, 2]);
        assert_eq!(c.cluster_sizes(), &[1, 3]);
        assert_eq!(pair_confusion(&c), (2, 2, 1, 1));
    }

    #[test]
    fn degenerate_conventions() {
        let all_one = validate(&[0, 0, 0, 0], &[0, 1, 2, 3]).unwrap();
        assert_eq!(all_one.ari, 0.0);
        assert_eq!(all_one.fms, 0.0);
        assert_eq!(all_one.ami, 0.0);
        assert_eq!(all_one.homogeneity, 1.0);
        let same = validate(&[1, 1, 1], &[4, 4, 4]).unwrap();
        assert_eq!(same.ari, 1.0);
        assert_eq!(same.ri, 1.0);
        assert_eq!(same.nmi, 1.0);
        assert_eq!(same.ami, 1.0);
        assert!(validate(&[0, 1], &[0]).is_err());
        assert!(validate(&[], &[]).is_err());
    }

    #[test]
    fn json_keys() {
        let r = validate(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap();
        let v: serde_json::Value = serde_json::to_value(r).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let mut want = ValidationReport::METRIC_NAMES.to_vec();
        want.sort_unstable();
        let mut keys = keys;
        keys.sort_unstable();
        assert_eq!(keys, want);
    }
}
