use cropcast::data::{CovariatePanel, RegionMeta, YieldPanel};
use cropcast::eval::{amse_pooled, per_region_metrics, screen_covariates, MetricReport};
use cropcast::forecast::{summarize, ForecastDistribution};
use cropcast::matrix::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `draws[d][h]` holds the path values for region `d` at step `h`.
fn distribution(draws: &[Vec<Vec<f64>>], first_year: i32) -> ForecastDistribution {
    let d_len = draws.len();
    let h_len = draws[0].len();
    let n = draws[0][0].len();
    ForecastDistribution {
        region_ids: (0..d_len).map(|d| format!("R{d}")).collect(),
        years: (0..h_len as i32).map(|h| first_year + h).collect(),
        path_ids: (0..n).collect(),
        values: draws.iter().flat_map(|r| r.iter().flatten().copied()).collect(),
        summaries: draws.iter().map(|r| r.iter().map(|v| summarize(v)).collect()).collect(),
        discarded: 0,
    }
}

fn actuals(values: &[Vec<f64>], first_year: i32) -> YieldPanel {
    let regions = (0..values.len())
        .map(|d| RegionMeta::new(format!("R{d}"), format!("R{d}"), 40.0 + d as f64, -80.0))
        .collect();
    let years = (0..values[0].len() as i32).map(|h| first_year + h).collect();
    YieldPanel::new(regions, years, Matrix::from_rows(values)).unwrap()
}

#[test]
fn single_pair_hand_case() {
    // errors 1 and 3 over one path and one year: (1 + 9) / 2
    let fc = distribution(&[vec![vec![11.0]], vec![vec![23.0]]], 2001);
    let y = actuals(&[vec![10.0], vec![20.0]], 2001);
    assert_eq!(amse_pooled(&fc, &y).unwrap(), 5.0);
    let per = per_region_metrics(&fc, &y).unwrap();
    assert_eq!((per[0].amse, per[0].amae), (1.0, 1.0));
    assert_eq!((per[1].amse, per[1].amae), (9.0, 3.0));
}

#[test]
fn constant_error_gives_its_square() {
    let fc = distribution(&[vec![vec![2.5; 7]; 4], vec![vec![-0.5; 7]; 4]], 1990);
    let y = actuals(&[vec![1.0; 4], vec![-2.0; 4]], 1990);
    assert!((amse_pooled(&fc, &y).unwrap() - 2.25).abs() < 1e-15);
}

#[test]
fn matches_naive_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (h_len, n) = (6, 300);
    let draws: Vec<Vec<Vec<f64>>> = (0..2)
        .map(|_| (0..h_len).map(|_| (0..n).map(|_| rng.random_range(-50.0..50.0)).collect()).collect())
        .collect();
    let truth: Vec<Vec<f64>> = (0..2).map(|_| (0..h_len).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
    let fc = distribution(&draws, 2000);
    let y = actuals(&truth, 2000);
    let mut naive = 0.0;
    for p in 0..n {
        for h in 0..h_len {
            for d in 0..2 {
                naive += (draws[d][h][p] - truth[d][h]).powi(2);
            }
        }
    }
    naive /= 2.0 * (n * h_len) as f64;
    let got = amse_pooled(&fc, &y).unwrap();
    assert!((got - naive).abs() < 1e-12 * naive, "{got} vs {naive}");
}

#[test]
fn misaligned_years_are_rejected() {
    let fc = distribution(&[vec![vec![1.0]], vec![vec![1.0]]], 2001);
    let y = actuals(&[vec![1.0], vec![1.0]], 2002);
    assert!(amse_pooled(&fc, &y).is_err());
}

#[test]
fn report_rows_include_pooled_line() {
    let fc = distribution(&[vec![vec![1.0, 3.0]], vec![vec![0.0, 0.0]]], 2001);
    let y = actuals(&[vec![2.0], vec![0.0]], 2001);
    let rows = MetricReport::new("gumbel", &fc, &y).unwrap().rows();
    assert!(rows.iter().any(|r| r.1 == "all" && r.2 == "amse_pooled" && r.3 == 0.5));
}

proptest! {
    #[test]
    fn pooled_is_mean_of_region_averages(seed in 0u64..500, h_len in 1usize..5, n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|_| (0..h_len).map(|_| (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()).collect())
            .collect();
        let truth: Vec<Vec<f64>> = (0..2).map(|_| (0..h_len).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let fc = distribution(&draws, 1);
        let y = actuals(&truth, 1);
        let per = per_region_metrics(&fc, &y).unwrap();
        let pooled = amse_pooled(&fc, &y).unwrap();
        prop_assert!((pooled - 0.5 * (per[0].amse + per[1].amse)).abs() < 1e-10);
        for r in &per {
            prop_assert!(r.amae <= r.amse.sqrt() + 1e-12);
        }
    }
}

fn panel(columns: Vec<Vec<f64>>, regions: usize) -> CovariatePanel {
    let t_len = columns[0].len() / regions;
    let names = (0..columns.len()).map(|k| format!("I{k}")).collect();
    let values = (0..regions)
        .map(|d| Matrix::from_rows(&columns.iter().map(|c| c[d * t_len..(d + 1) * t_len].to_vec()).collect::<Vec<_>>()))
        .collect();
    CovariatePanel::new(names, values).unwrap()
}

#[test]
fn screening_diagonal_and_comonotone_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a: Vec<f64> = (0..400).map(|_| rng.random::<f64>()).collect();
    let b: Vec<f64> = a.iter().map(|v| v.powi(3) + 2.0).collect();
    let s = screen_covariates(&panel(vec![a, b], 2), 0.9).unwrap();
    assert_eq!(s.correlation[0][0], Some(1.0));
    for (i, j) in [(0, 0), (0, 1), (1, 0)] {
        assert!((s.upper_tail[i][j].unwrap() - 1.0).abs() < 0.03);
        assert!((s.lower_tail[i][j].unwrap() - 1.0).abs() < 0.03);
    }
}

#[test]
fn screening_independent_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..20_000).map(|_| rng.random::<f64>()).collect()).collect();
    let s = screen_covariates(&panel(cols, 4), 0.9).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(s.correlation[i][j], s.correlation[j][i]);
            if i != j {
                // lambda_U at 0.9 is 0.1 under independence
                assert!((s.upper_tail[i][j].unwrap() - 0.1).abs() < 0.05);
                assert!(s.correlation[i][j].unwrap().abs() < 0.05);
            }
        }
    }
    // correlation matrix is positive semi-definite
    let m = nalgebra::DMatrix::from_fn(3, 3, |i, j| s.correlation[i][j].unwrap());
    assert!(m.symmetric_eigenvalues().iter().all(|v| *v > -1e-12));
}

#[test]
fn constant_column_has_no_entries() {
    let s = screen_covariates(&panel(vec![vec![1.0; 40], (0..40).map(f64::from).collect()], 1), 0.9).unwrap();
    assert_eq!(s.correlation[0][1], None);
    assert_eq!(s.correlation[1][1], Some(1.0));
    assert!(screen_covariates(&panel(vec![vec![0.0; 40]], 1), 0.4).is_err());
}
