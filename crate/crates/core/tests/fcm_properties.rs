use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rulxai::fuzzy_cmeans::{fcm_fit, fcm_objective, FcmConfig};
use rulxai::Matrix;

fn random_points(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(
        n,
        d,
        (0..n * d).map(|_| rng.random_range(-5.0..5.0)).collect(),
    )
    .unwrap()
}

// Written out with explicit loops over a transposed layout.
fn objective_oracle(data: &Matrix, u: &Matrix, v: &Matrix, m: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..v.nrows() {
        for i in 0..data.nrows() {
            let mut d2 = 0.0;
            for j in 0..data.ncols() {
                let diff = data.get(i, j) - v.get(k, j);
                d2 += diff * diff;
            }
            total += u.get(i, k).powf(m) * d2;
        }
    }
    total
}

#[test]
fn objective_matches_oracle() {
    let data = random_points(50, 3, 1);
    let r = fcm_fit(
        &data,
        &FcmConfig {
            clusters: 4,
            seed: 2,
            ..Default::default()
        },
    )
    .unwrap();
    let got = fcm_objective(&data, &r.memberships, &r.centroids, 3.0);
    let want = objective_oracle(&data, &r.memberships, &r.centroids, 3.0);
    assert!((got - want).abs() <= 1e-12 * want.max(1.0));
    assert_eq!(got.to_bits(), r.objective.last().unwrap().to_bits());
}

#[test]
fn fit_is_seeded() {
    let data = random_points(80, 2, 3);
    let cfg = FcmConfig {
        seed: 9,
        ..Default::default()
    };
    let a = fcm_fit(&data, &cfg).unwrap();
    let b = fcm_fit(&data, &cfg).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn memberships_are_distributions_and_objective_never_rises(
        seed in 0u64..5000,
        n in 8usize..60,
        c in 1usize..7,
        m in 1.2f64..4.0,
    ) {
        let data = random_points(n, 2, seed);
        let r = fcm_fit(&data, &FcmConfig { clusters: c, fuzziness: m, seed, ..Default::default() }).unwrap();
        for row in r.memberships.rows_iter() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(row.iter().all(|&u| (0.0..=1.0).contains(&u)));
        }
        for w in r.objective.windows(2) {
            prop_assert!(w[1] <= w[0], "{} then {}", w[0], w[1]);
        }
        prop_assert_eq!(r.hard_labels().len(), n);
    }
}
