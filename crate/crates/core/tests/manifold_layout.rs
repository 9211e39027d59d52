use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rulxai::manifold::{fuzzy_union, knn_graph, knn_overlap, smooth_knn, umap, UmapConfig};
use rulxai::Matrix;

fn blobs(per_blob: usize, d: usize, gap: f64, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut data = Vec::new();
    let mut label = Vec::new();
    for b in 0..2 {
        for _ in 0..per_blob {
            for j in 0..d {
                let centre = if j == 0 { b as f64 * gap } else { 0.0 };
                data.push(centre + noise.sample(&mut rng));
            }
            label.push(b);
        }
    }
    (Matrix::from_vec(2 * per_blob, d, data).unwrap(), label)
}

fn centroid(m: &Matrix, rows: &[usize]) -> [f64; 2] {
    let mut c = [0.0; 2];
    for &i in rows {
        c[0] += m.get(i, 0);
        c[1] += m.get(i, 1);
    }
    [c[0] / rows.len() as f64, c[1] / rows.len() as f64]
}

#[test]
fn knn_matches_quadratic_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // Coarse grid values so that ties actually occur.
    let data: Vec<f64> = (0..70 * 3).map(|_| rng.random_range(0..4) as f64).collect();
    let m = Matrix::from_vec(70, 3, data).unwrap();
    let k = 9;
    let g = knn_graph(&m, k).unwrap();
    for i in 0..70 {
        let mut all: Vec<(f64, usize)> = Vec::new();
        for j in 0..70 {
            if j != i {
                let d: f64 = m
                    .row(i)
                    .iter()
                    .zip(m.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                all.push((d.sqrt(), j));
            }
        }
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let want: Vec<usize> = all[..k].iter().map(|p| p.1).collect();
        assert_eq!(g.neighbors(i), &want[..], "row {i}");
        for (got, exp) in g.distances(i).iter().zip(&all[..k]) {
            assert!((got - exp.0).abs() < 1e-12);
        }
    }
}

#[test]
fn two_blobs_separate_and_keep_neighbourhoods() {
    let (data, label) = blobs(100, 10, 10.0, 17);
    let cfg = UmapConfig {
        seed: 3,
        ..Default::default()
    };
    let e = umap(&data, &cfg).unwrap();
    let a: Vec<usize> = (0..200).filter(|&i| label[i] == 0).collect();
    let b: Vec<usize> = (0..200).filter(|&i| label[i] == 1).collect();
    let (ca, cb) = (centroid(&e.coords, &a), centroid(&e.coords, &b));
    let spread = |rows: &[usize], c: [f64; 2]| {
        rows.iter()
            .map(|&i| {
                ((e.coords.get(i, 0) - c[0]).powi(2) + (e.coords.get(i, 1) - c[1]).powi(2)).sqrt()
            })
            .sum::<f64>()
            / rows.len() as f64
    };
    let within = (spread(&a, ca) + spread(&b, cb)) / 2.0;
    let sep = ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2)).sqrt();
    assert!(sep >= 3.0 * within, "separation {sep}, spread {within}");

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let random = Matrix::from_vec(200, 2, (0..400).map(|_| rng.random::<f64>()).collect()).unwrap();
    let ours = knn_overlap(&data, &e.coords, 15).unwrap();
    let base = knn_overlap(&data, &random, 15).unwrap();
    assert!(ours >= 3.0 * base, "overlap {ours} vs random {base}");
}

#[test]
fn same_seed_same_bytes() {
    let (data, _) = blobs(40, 6, 6.0, 1);
    let cfg = UmapConfig {
        seed: 11,
        epochs: 120,
        ..Default::default()
    };
    let x = umap(&data, &cfg).unwrap();
    let y = umap(&data, &cfg).unwrap();
    let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&x.coords), bits(&y.coords));
    let z = umap(&data, &UmapConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(bits(&x.coords), bits(&z.coords));
}

#[test]
fn disconnected_components_still_embed() {
    // Two tight groups of four far apart; with k = 3 the graph splits.
    let mut rows = Vec::new();
    for g in 0..2 {
        for p in 0..4 {
            rows.push(vec![
                g as f64 * 1000.0 + p as f64 * 0.1,
                (p % 2) as f64 * 0.1,
            ]);
        }
    }
    let data = Matrix::from_rows(&rows).unwrap();
    let mut graph = knn_graph(&data, 3).unwrap();
    smooth_knn(&mut graph);
    let f = fuzzy_union(&graph).unwrap();
    assert!(f.triples().all(|(i, j, _)| (i < 4) == (j < 4)));
    let e = umap(
        &data,
        &UmapConfig {
            n_neighbors: 3,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(e.coords.is_finite());
}
