use cropcast::clustering::*;
use cropcast::copula::{simulate_pair, CopulaFamily};
use cropcast::data::OptimizerSettings;
use cropcast::matrix::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all_pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect()
}

/// Enumerates every (pair containing i, different pair containing j) combination.
fn brute_force(pairs: &[(usize, usize)], table: &[Vec<f64>], d: usize) -> Matrix {
    Matrix::from_fn(d, d, |i, j| {
        if i == j {
            return 0.0;
        }
        let mut best = 0.0f64;
        for (p, a) in pairs.iter().enumerate() {
            for (q, b) in pairs.iter().enumerate() {
                let has_i = a.0 == i || a.1 == i;
                let has_j = b.0 == j || b.1 == j;
                if has_i && has_j && p != q {
                    best = best.max(table[p][q]);
                }
            }
        }
        best
    })
}

proptest! {
    #[test]
    fn aggregation_matches_enumeration(d in 2usize..=5, seed in 0u64..1000) {
        let pairs = all_pairs(d);
        let n = pairs.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = vec![vec![0.0; n]; n];
        for p in 0..n {
            for q in p + 1..n {
                let v: f64 = rng.random_range(0.0..1.0);
                table[p][q] = v;
                table[q][p] = v;
            }
        }
        let got = aggregate_to_divisions(&pairs, |p, q| table[p][q], d);
        let expect = brute_force(&pairs, &table, d);
        if d > 2 {
            prop_assert_eq!(got.values, expect);
            prop_assert!(!got.degenerate);
        }
    }

    #[test]
    fn dunn_matches_enumeration(n in 3usize..8, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v: f64 = rng.random_range(0.01..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let mut assignment: Vec<usize> = (0..n).map(|i| i % 2).collect();
        assignment[n - 1] = rng.random_range(0..2);
        let d = DissimilarityMatrix::new(DissimilarityKind::Combined, m.clone()).unwrap();
        let mut min_between = f64::INFINITY;
        let mut max_diam = 0.0f64;
        for a in 0..2 {
            for b in 0..2 {
                let (ia, ib): (Vec<usize>, Vec<usize>) = (
                    (0..n).filter(|&i| assignment[i] == a).collect(),
                    (0..n).filter(|&i| assignment[i] == b).collect(),
                );
                for &i in &ia {
                    for &j in &ib {
                        if a == b && i != j {
                            max_diam = max_diam.max(m[(i, j)]);
                        } else if a != b {
                            min_between = min_between.min(m[(i, j)]);
                        }
                    }
                }
            }
        }
        let expect = if max_diam == 0.0 { f64::INFINITY } else { min_between / max_diam };
        prop_assert_eq!(dunn_index(&d, &assignment).unwrap(), expect);
    }

    #[test]
    fn pam_outputs_are_consistent(n in 2usize..9, k in 1usize..4, seed in 0u64..1000) {
        prop_assume!(k <= n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0))).collect();
        let m = Matrix::from_fn(n, n, |i, j| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt());
        let d = DissimilarityMatrix::new(DissimilarityKind::Spatial, m.clone()).unwrap();
        let r = pam(&d, k).unwrap();
        prop_assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0]));
        for (c, &med) in r.medoids.iter().enumerate() {
            prop_assert_eq!(r.assignment[med], c);
        }
        for i in 0..n {
            let own = m[(i, r.medoids[r.assignment[i]])];
            for &med in &r.medoids {
                prop_assert!(own <= m[(i, med)]);
            }
        }
        let combined = combine(&d, &d, 0.5).unwrap();
        combined.check().unwrap();
    }
}

#[test]
fn pair_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (d, expect) in [(2usize, 1usize), (4, 6)] {
        let u = Matrix::from_fn(d, 30, |_, _| rng.random_range(0.01..0.99));
        let fits = fit_all_pairs(&u, &Matrix::zeros(0, 30), CopulaFamily::Frank, &OptimizerSettings::default(), 0).unwrap();
        assert_eq!(fits.fits.len() + fits.failed.len(), expect);
    }
}

#[test]
fn comonotone_pair_reaches_the_top_of_the_tau_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let col: Vec<f64> = (0..40).map(|_| rng.random_range(0.01..0.99)).collect();
    let other: Vec<f64> = (0..40).map(|_| rng.random_range(0.01..0.99)).collect();
    let u = Matrix::from_rows(&[col.clone(), col, other]);
    let fits = fit_all_pairs(&u, &Matrix::zeros(0, 40), CopulaFamily::Clayton, &OptimizerSettings::default(), 0).unwrap();
    let pair = fits.fits.iter().find(|f| f.pair == (0, 1)).unwrap();
    let mean_tau = pair.tau_path.iter().sum::<f64>() / 40.0;
    // the link caps Clayton at theta = 200, i.e. tau = 200 / 202
    assert!(mean_tau > 0.95, "{mean_tau}");
}

#[test]
fn structure_only_in_copula_prefers_small_beta() {
    let n = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(40.0..50.0), rng.random_range(-80.0..-70.0))).collect();
    let spatial = DissimilarityMatrix::new(
        DissimilarityKind::Spatial,
        Matrix::from_fn(n, n, |i, j| haversine(pts[i].0, pts[i].1, pts[j].0, pts[j].1)),
    )
    .unwrap();
    let copula = DissimilarityMatrix::new(
        DissimilarityKind::Copula,
        Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else if (i % 2) == (j % 2) { 0.05 } else { 0.6 }),
    )
    .unwrap();
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let sel = select_beta_and_k(&spatial, &copula, &grid, &[2]).unwrap();
    assert!(sel.beta < 0.5, "beta {}", sel.beta);
    let a = &sel.result.assignment;
    assert!((0..n).all(|i| (a[i] == a[0]) == (i % 2 == 0)));
}

#[test]
fn large_beta_approaches_spatial_partition() {
    let n = 9;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(40.0..50.0), rng.random_range(-80.0..-70.0))).collect();
    let spatial = DissimilarityMatrix::new(
        DissimilarityKind::Spatial,
        Matrix::from_fn(n, n, |i, j| haversine(pts[i].0, pts[i].1, pts[j].0, pts[j].1)),
    )
    .unwrap();
    let cop = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { ((i * 7 + j * 7) % 5) as f64 / 5.0 + 0.1 });
    let copula = DissimilarityMatrix::new(DissimilarityKind::Copula, cop).unwrap();
    let spatial_only = pam(&combine(&spatial, &copula, 1.0).unwrap(), 3).unwrap();
    let near_one = pam(&combine(&spatial, &copula, 1.0 - 1e-9).unwrap(), 3).unwrap();
    assert_eq!(near_one.assignment, spatial_only.assignment);
}

#[test]
fn simulated_clusters_show_in_copula_dissimilarity() {
    // regions 0,1 strongly dependent; region 2 independent of both
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let t = 60;
    let pairs = simulate_pair(CopulaFamily::Clayton, 6.0, t, &mut rng).unwrap();
    let u = Matrix::from_fn(3, t, |d, i| match d {
        0 => pairs[i].0,
        1 => pairs[i].1,
        _ => rng.random_range(0.01..0.99),
    });
    let fits = fit_all_pairs(&u, &Matrix::zeros(0, t), CopulaFamily::Clayton, &OptimizerSettings::default(), 0).unwrap();
    let taus: Vec<f64> = fits.fits.iter().map(|f| f.tau_path[0]).collect();
    assert!(taus[0] > taus[1] && taus[0] > taus[2], "{taus:?}");
    copula_dissimilarity(&fits, 3).unwrap().check().unwrap();
}
