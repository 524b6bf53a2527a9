//! Copula- and distance-based clustering of regions.

mod pam;

pub use pam::*;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{fit_copula_evolution, theta_to_tau, CopulaEvolution, CopulaFamily};
use crate::data::{OptimizerSettings, RegionMeta};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Copula fit for one pair of regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFit {
    pub pair: (usize, usize),
    pub evolution: CopulaEvolution,
    pub theta_path: Vec<f64>,
    pub tau_path: Vec<f64>,
}

/// Pair fits plus the pairs whose fit failed.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PairFits {
    pub fits: Vec<PairFit>,
    pub failed: Vec<((usize, usize), String)>,
}

/// Fits the time-varying copula to every pair of regions.
pub fn fit_all_pairs(
    u_panel: &Matrix,
    x_panel: &Matrix,
    family: CopulaFamily,
    settings: &OptimizerSettings,
    seed: u64,
) -> Result<PairFits> {
    let d = u_panel.rows();
    if d < 2 {
        return Err(Error::precondition(format!("pairwise fits need at least 2 regions, got {d}")));
    }
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let results: Vec<((usize, usize), Result<PairFit>)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let fit = (|| {
                let u = Matrix::from_rows(&[u_panel.row(i).to_vec(), u_panel.row(j).to_vec()]);
                let f = fit_copula_evolution(&u, x_panel, family, settings, seed)?;
                let theta_path = f.evolution.theta_path(x_panel);
                let tau_path = theta_path
                    .iter()
                    .map(|&th| theta_to_tau(family, th))
                    .collect::<Result<Vec<f64>>>()?;
                Ok(PairFit {
                    pair: (i, j),
                    evolution: f.evolution,
                    theta_path,
                    tau_path,
                })
            })();
            ((i, j), fit)
        })
        .collect();
    let mut out = PairFits::default();
    for (pair, r) in results {
        match r {
            Ok(f) => out.fits.push(f),
            Err(e) => {
                warn!("copula fit for regions {pair:?} failed and is excluded: {e}");
                out.failed.push((pair, e.to_string()));
            }
        }
    }
    Ok(out)
}

/// Mean absolute difference of two Kendall-tau paths.
pub fn copula_pair_dissimilarity<F: Scalar>(a: &[F], b: &[F]) -> Result<F> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            axis: "year",
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(F::zero());
    }
    let s = a.iter().zip(b).fold(F::zero(), |acc, (x, y)| acc + (*x - *y).abs());
    Ok(s / F::c(a.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DissimilarityKind {
    Copula,
    Spatial,
    Combined,
}

/// Symmetric, zero-diagonal, nonnegative dissimilarity matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimilarityMatrix<F = f64> {
    pub kind: DissimilarityKind,
    pub values: Matrix<F>,
    /// Set when an entry could not be informed by the data (for example the copula
    /// matrix of only two regions, or a constant input to normalisation).
    pub degenerate: bool,
}

impl<F: Scalar> DissimilarityMatrix<F> {
    pub fn new(kind: DissimilarityKind, values: Matrix<F>) -> Result<Self> {
        let m = Self {
            kind,
            values,
            degenerate: false,
        };
        m.check()?;
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.values.rows()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.values.rows();
        if self.values.cols() != n {
            return Err(Error::Shape {
                axis: "region",
                expected: n,
                found: self.values.cols(),
            });
        }
        for i in 0..n {
            if self.values[(i, i)] != F::zero() {
                return Err(Error::precondition("dissimilarity diagonal must be zero"));
            }
            for j in 0..i {
                let v = self.values[(i, j)];
                if !(v >= F::zero()) || v != self.values[(j, i)] {
                    return Err(Error::precondition(format!(
                        "dissimilarity entry ({i}, {j}) must be symmetric and nonnegative"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Division-level copula dissimilarity: for regions `i != j`, the largest dissimilarity
/// between any pair containing `i` and any other pair containing `j`.
///
/// `pair_dissim(p, q)` is evaluated on indices into `pairs`.
pub fn aggregate_to_divisions<F: Scalar>(
    pairs: &[(usize, usize)],
    pair_dissim: impl Fn(usize, usize) -> F,
    n_regions: usize,
) -> DissimilarityMatrix<F> {
    let mut values = Matrix::<F>::zeros(n_regions, n_regions);
    let mut informed = true;
    let containing: Vec<Vec<usize>> = (0..n_regions)
        .map(|r| (0..pairs.len()).filter(|&p| pairs[p].0 == r || pairs[p].1 == r).collect())
        .collect();
    for i in 0..n_regions {
        for j in i + 1..n_regions {
            let mut best: Option<F> = None;
            for &p in &containing[i] {
                for &q in &containing[j] {
                    if p != q {
                        let v = pair_dissim(p, q);
                        best = Some(best.map_or(v, |b| b.max(v)));
                    }
                }
            }
            if best.is_none() {
                informed = false;
            }
            let v = best.unwrap_or(F::zero());
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    DissimilarityMatrix {
        kind: DissimilarityKind::Copula,
        values,
        degenerate: !informed,
    }
}

/// Copula dissimilarity matrix from a set of pair fits.
pub fn copula_dissimilarity(fits: &PairFits, n_regions: usize) -> Result<DissimilarityMatrix> {
    let pairs: Vec<(usize, usize)> = fits.fits.iter().map(|f| f.pair).collect();
    let n = pairs.len();
    let mut table = vec![0.0; n * n];
    for p in 0..n {
        for q in p + 1..n {
            let v = copula_pair_dissimilarity(&fits.fits[p].tau_path, &fits.fits[q].tau_path)?;
            table[p * n + q] = v;
            table[q * n + p] = v;
        }
    }
    let out = aggregate_to_divisions(&pairs, |p, q| table[p * n + q], n_regions);
    if out.degenerate {
        warn!("copula dissimilarity is uninformative for at least one pair of regions (set to 0)");
    }
    Ok(out)
}

/// Great-circle distance in kilometres between two points given in degrees.
pub fn haversine<F: Scalar>(lat1: F, lon1: F, lat2: F, lon2: F) -> F {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dlat = p2 - p1;
    let dlon = (lon2 - lon1).to_radians();
    let half = F::c(0.5);
    let h = (dlat * half).sin().powi(2) + p1.cos() * p2.cos() * (dlon * half).sin().powi(2);
    F::c(2.0 * EARTH_RADIUS_KM) * h.min(F::one()).sqrt().asin()
}

pub fn region_distance(a: &RegionMeta, b: &RegionMeta) -> f64 {
    haversine(a.latitude, a.longitude, b.latitude, b.longitude)
}

/// Pairwise great-circle distances.
pub fn spatial_dissimilarity(regions: &[RegionMeta]) -> DissimilarityMatrix {
    let n = regions.len();
    let mut values = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = region_distance(&regions[i], &regions[j]);
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    DissimilarityMatrix {
        kind: DissimilarityKind::Spatial,
        values,
        degenerate: false,
    }
}

/// Min-max normalisation of the off-diagonal entries to [0, 1]. A constant matrix maps
/// to zeros and is flagged.
pub fn normalize<F: Scalar>(m: &Matrix<F>) -> (Matrix<F>, bool) {
    let n = m.rows();
    let mut lo = F::infinity();
    let mut hi = F::neg_infinity();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                lo = lo.min(m[(i, j)]);
                hi = hi.max(m[(i, j)]);
            }
        }
    }
    let range = hi - lo;
    if !(range > F::zero()) {
        return (Matrix::zeros(n, n), n > 1);
    }
    let out = Matrix::from_fn(n, n, |i, j| if i == j { F::zero() } else { (m[(i, j)] - lo) / range });
    (out, false)
}

/// `beta * spatial + (1 - beta) * copula` after normalising both.
pub fn combine<F: Scalar>(
    spatial: &DissimilarityMatrix<F>,
    copula: &DissimilarityMatrix<F>,
    beta: F,
) -> Result<DissimilarityMatrix<F>> {
    if !(beta >= F::zero() && beta <= F::one()) {
        return Err(Error::precondition(format!("beta must lie in [0, 1], got {beta}")));
    }
    if spatial.size() != copula.size() {
        return Err(Error::Shape {
            axis: "region",
            expected: spatial.size(),
            found: copula.size(),
        });
    }
    let (s, s_flat) = normalize(&spatial.values);
    let (c, c_flat) = normalize(&copula.values);
    if s_flat {
        warn!("spatial dissimilarities are all equal; the spatial term contributes 0");
    }
    if c_flat {
        warn!("copula dissimilarities are all equal; the copula term contributes 0");
    }
    let n = spatial.size();
    let values = Matrix::from_fn(n, n, |i, j| beta * s[(i, j)] + (F::one() - beta) * c[(i, j)]);
    Ok(DissimilarityMatrix {
        kind: DissimilarityKind::Combined,
        values,
        degenerate: s_flat || c_flat || copula.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haversine_examples() {
        assert_eq!(haversine(45.0f64, 10.0, 45.0, 10.0), 0.0);
        let anti: f64 = haversine(0.0, 0.0, 0.0, 180.0);
        assert!((anti - std::f64::consts::PI * EARTH_RADIUS_KM).abs() < 1e-9);
        assert!((anti - 20015.1).abs() < 0.1);
        let d: f64 = haversine(43.65, -79.38, 45.42, -75.70);
        assert!((d - 352.0).abs() < 2.0, "{d}");
        let d32: f32 = haversine(43.65f32, -79.38, 45.42, -75.70);
        assert!((d32 - 352.0).abs() < 2.0);
    }

    #[test]
    fn pair_dissimilarity_examples() {
        let a = vec![0.2f64; 10];
        let b = vec![0.5; 10];
        assert!((copula_pair_dissimilarity(&a, &b).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(copula_pair_dissimilarity(&a, &a).unwrap(), 0.0);
        assert!(copula_pair_dissimilarity(&a, &b[..5]).is_err());
    }

    #[test]
    fn two_regions_aggregate_to_zero_and_flag() {
        let m = aggregate_to_divisions(&[(0, 1)], |_, _| 7.0, 2);
        assert_eq!(m.values[(0, 1)], 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn constant_pair_dissimilarities() {
        let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let m = aggregate_to_divisions(&pairs, |_, _| 0.25, 4);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.values[(i, j)], if i == j { 0.0 } else { 0.25 });
            }
        }
        assert!(!m.degenerate);
    }

    #[test]
    fn combine_endpoints_and_midpoint() {
        let s = DissimilarityMatrix::new(
            DissimilarityKind::Spatial,
            Matrix::from_rows(&[vec![0.0, 100.0, 300.0], vec![100.0, 0.0, 200.0], vec![300.0, 200.0, 0.0]]),
        )
        .unwrap();
        let c = DissimilarityMatrix::new(
            DissimilarityKind::Copula,
            Matrix::from_rows(&[vec![0.0, 0.4, 0.1], vec![0.4, 0.0, 0.2], vec![0.1, 0.2, 0.0]]),
        )
        .unwrap();
        let (ns, _) = normalize(&s.values);
        let (nc, _) = normalize(&c.values);
        assert_eq!(combine(&s, &c, 1.0).unwrap().values, ns);
        assert_eq!(combine(&s, &c, 0.0).unwrap().values, nc);
        let mid: DissimilarityMatrix<f64> = combine(&s, &c, 0.5).unwrap();
        // hand values: spatial -> (0, 0.5, 1), copula -> (1, 0, 1/3) for (01, 02, 12)
        assert!((mid.values[(0, 1)] - 0.5).abs() < 1e-15);
        assert!((mid.values[(0, 2)] - 0.5).abs() < 1e-15);
        assert!((mid.values[(1, 2)] - (0.5 + 1.0 / 3.0) / 2.0).abs() < 1e-15);
        mid.check().unwrap();
        assert!(combine(&s, &c, 1.5).is_err());
    }

    #[test]
    fn constant_matrix_normalises_to_zero_with_flag() {
        let c = Matrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 0.7 });
        let (n, flat) = normalize(&c);
        assert!(flat);
        assert!(n.as_slice().iter().all(|&v| v == 0.0));
    }
}
