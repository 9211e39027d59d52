mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rulxai::cluster_validation::{validate, ValidationReport};

use common::oracle;

#[test]
fn matches_brute_force_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let n = rng.random_range(2..=50);
        let classes = rng.random_range(1..=4);
        let clusters = rng.random_range(1..=6);
        let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..clusters) * 7).collect();
        let got = validate(&t, &p).unwrap();
        let o = oracle(&t, &p);
        let pairs = [
            ("ARI", got.ari, o.ari),
            ("RI", got.ri, o.ri),
            ("MI", got.mi, o.mi),
            ("NMI", got.nmi, o.nmi),
            ("AMI", got.ami, o.ami),
            ("Homogeneity", got.homogeneity, o.h),
            ("Completeness", got.completeness, o.c),
            ("V-measure", got.v_measure, o.v),
            ("FMS", got.fms, o.fms),
        ];
        for (name, a, b) in pairs {
            assert!(
                (a - b).abs() <= 1e-9,
                "case {case} {name}: {a} vs {b} ({t:?} / {p:?})"
            );
        }
    }
}

#[test]
fn matches_frozen_reference_values() {
    let cases: [(Vec<usize>, Vec<usize>, [f64; 9]); 3] = [
        (
            vec![0, 0, 1, 1, 2, 2, 3, 3, 0, 1, 2, 3],
            vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3],
            [
                0.08333333333333333,
                0.7272727272727273,
                0.11710718503873255,
                0.4575187496394218,
                0.6342556627317534,
                0.4575187496394218,
                0.4575187496394218,
                0.4575187496394218,
                0.25,
            ],
        ),
        (
            vec![
                3, 2, 2, 3, 2, 3, 3, 0, 0, 1, 1, 3, 3, 0, 1, 3, 0, 3, 0, 1, 3, 1, 1, 1, 2, 1, 3, 1,
                1, 2, 2, 2, 2, 3, 3, 3, 2, 2, 1, 3,
            ],
            vec![
                2, 1, 5, 0, 5, 3, 0, 0, 2, 0, 0, 3, 5, 2, 4, 5, 4, 3, 2, 3, 1, 2, 2, 1, 5, 0, 0, 1,
                5, 4, 5, 1, 4, 2, 2, 0, 3, 4, 3, 0,
            ],
            [
                0.039180765805877114,
                0.6807692307692308,
                0.07635625857786885,
                0.21455091187103664,
                0.33211624216901914,
                0.2499064669109827,
                0.18795933644277327,
                0.21455091187103667,
                0.23180022278587673,
            ],
        ),
        (
            vec![0, 0, 0, 1, 1, 1, 1, 2, 2, 3],
            vec![1, 1, 0, 0, 0, 2, 2, 2, 2, 2],
            [
                0.1,
                0.6444444444444445,
                0.2136103961680182,
                0.4861988580532782,
                0.5614398913521517,
                0.4386748740751648,
                0.5452709637937714,
                0.4861988580532782,
                0.33806170189140666,
            ],
        ),
    ];
    for (t, p, want) in cases {
        let got = validate(&t, &p).unwrap().values();
        for ((name, g), w) in ValidationReport::METRIC_NAMES.iter().zip(got).zip(want) {
            assert!((g - w).abs() <= 1e-9, "{name}: {g} vs {w}");
        }
    }
}

#[test]
fn invariant_under_label_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t: Vec<usize> = (0..60).map(|_| rng.random_range(0..4)).collect();
    let p: Vec<usize> = (0..60).map(|_| rng.random_range(0..6)).collect();
    let perm = [3, 5, 0, 4, 1, 2];
    let q: Vec<usize> = p.iter().map(|&l| perm[l]).collect();
    let u: Vec<usize> = t.iter().map(|&l| 3 - l).collect();
    let a = validate(&t, &p).unwrap().values();
    let b = validate(&u, &q).unwrap().values();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12);
    }
}
