//! Brute-force references for the cluster validity indices.

use std::collections::HashMap;

fn counts(labels: &[usize]) -> HashMap<usize, u64> {
    let mut m = HashMap::new();
    for &l in labels {
        *m.entry(l).or_insert(0) += 1;
    }
    m
}

fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * u128::from(n - i) / u128::from(i + 1);
    }
    r
}

pub struct Oracle {
    pub ari: f64,
    pub ri: f64,
    pub mi: f64,
    pub nmi: f64,
    pub ami: f64,
    pub h: f64,
    pub c: f64,
    pub v: f64,
    pub fms: f64,
}

pub fn oracle(t: &[usize], p: &[usize]) -> Oracle {
    let n = t.len();
    let nf = n as f64;
    // Pair enumeration.
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            match (t[i] == t[j], p[i] == p[j]) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    let total = (tp + fp + fn_ + tn) as f64;
    let ri = if tp + tn == tp + fp + fn_ + tn {
        1.0
    } else {
        (tp + tn) as f64 / total
    };

    let ct = counts(t);
    let cp = counts(p);
    let mut joint: HashMap<(usize, usize), u64> = HashMap::new();
    for (&a, &b) in t.iter().zip(p) {
        *joint.entry((a, b)).or_insert(0) += 1;
    }
    // Hubert-Arabie form from the contingency table.
    let ari = if fp == 0 && fn_ == 0 {
        1.0
    } else {
        let sum_ij: f64 = joint.values().map(|&v| binom(v, 2) as f64).sum();
        let sum_a: f64 = ct.values().map(|&v| binom(v, 2) as f64).sum();
        let sum_b: f64 = cp.values().map(|&v| binom(v, 2) as f64).sum();
        let expected = sum_a * sum_b / binom(n as u64, 2) as f64;
        (sum_ij - expected) / (0.5 * (sum_a + sum_b) - expected)
    };

    // Per-point sums.
    let single = ct.len() == 1 || cp.len() == 1;
    let mi = if single {
        0.0
    } else {
        t.iter()
            .zip(p)
            .map(|(a, b)| (nf * joint[&(*a, *b)] as f64 / (ct[a] as f64 * cp[b] as f64)).ln())
            .sum::<f64>()
            / nf
    };
    let entropy = |labels: &[usize], c: &HashMap<usize, u64>| -> f64 {
        if c.len() == 1 {
            0.0
        } else {
            -labels.iter().map(|l| (c[l] as f64 / nf).ln()).sum::<f64>() / nf
        }
    };
    let (ht, hp) = (entropy(t, &ct), entropy(p, &cp));
    let nmi = if ct.len() == 1 && cp.len() == 1 {
        1.0
    } else if mi.abs() < 1e-15 {
        0.0
    } else {
        mi / ((ht + hp) / 2.0)
    };

    // Hypergeometric expectation with exact integer binomials.
    let mut emi = 0.0;
    let total_ways = |b: u64| binom(n as u64, b);
    for &a in ct.values() {
        for &b in cp.values() {
            for k in 1..=a.min(b) {
                let ways = binom(a, k) * binom(n as u64 - a, b - k);
                if ways == 0 {
                    continue;
                }
                let prob = ways as f64 / total_ways(b) as f64;
                let kf = k as f64;
                emi += prob * kf / nf * (nf * kf / (a as f64 * b as f64)).ln();
            }
        }
    }
    let ami = if ct.len() == 1 && cp.len() == 1 {
        1.0
    } else if single {
        0.0
    } else {
        let den = (ht + hp) / 2.0 - emi;
        let num = mi - emi;
        let clamp = |v: f64| {
            if v < 0.0 {
                v.min(-f64::EPSILON)
            } else {
                v.max(f64::EPSILON)
            }
        };
        clamp(num) / clamp(den)
    };
    let h = if ht == 0.0 { 1.0 } else { mi / ht };
    let c = if hp == 0.0 { 1.0 } else { mi / hp };
    let v = if h + c == 0.0 {
        0.0
    } else {
        2.0 * h * c / (h + c)
    };
    let fms = if tp == 0 {
        0.0
    } else {
        tp as f64 / (((tp + fp) as f64) * ((tp + fn_) as f64)).sqrt()
    };
    Oracle {
        ari,
        ri,
        mi,
        nmi,
        ami,
        h,
        c,
        v,
        fms,
    }
}
