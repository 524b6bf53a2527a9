use serde::{Deserialize, Serialize};

use super::{combine, DissimilarityMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// A partition of the regions around medoids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult<F = f64> {
    pub k: usize,
    /// Medoid indices in increasing order.
    pub medoids: Vec<usize>,
    /// Cluster index (position in `medoids`) of every point.
    pub assignment: Vec<usize>,
    pub total_cost: F,
    /// `None` when fewer than two clusters exist; infinite when every cluster is a singleton.
    pub dunn: Option<F>,
    pub mean_silhouette: Option<F>,
    pub beta: Option<F>,
    /// Total cost after BUILD and after every accepted swap.
    pub cost_history: Vec<F>,
}

fn assign<F: Scalar>(m: &Matrix<F>, medoids: &[usize]) -> (Vec<usize>, F) {
    let n = m.rows();
    let mut cost = F::zero();
    let assignment = (0..n)
        .map(|i| {
            if let Some(pos) = medoids.iter().position(|&c| c == i) {
                return pos;
            }
            let mut best = 0;
            for (c, &med) in medoids.iter().enumerate().skip(1) {
                if m[(i, med)] < m[(i, medoids[best])] {
                    best = c;
                }
            }
            cost = cost + m[(i, medoids[best])];
            best
        })
        .collect();
    (assignment, cost)
}

fn total_cost<F: Scalar>(m: &Matrix<F>, medoids: &[usize]) -> F {
    (0..m.rows()).fold(F::zero(), |acc, i| {
        acc + medoids.iter().map(|&c| m[(i, c)]).fold(F::infinity(), F::min)
    })
}

/// Partitioning around medoids: greedy BUILD followed by best-improvement SWAP.
pub fn pam<F: Scalar>(d: &DissimilarityMatrix<F>, k: usize) -> Result<ClusterResult<F>> {
    let m = &d.values;
    let n = m.rows();
    if k == 0 || k > n {
        return Err(Error::precondition(format!("number of clusters must lie in 1..={n}, got {k}")));
    }
    // BUILD
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut nearest = vec![F::infinity(); n];
    for _ in 0..k {
        let mut best: Option<(usize, F)> = None;
        for cand in (0..n).filter(|c| !medoids.contains(c)) {
            let cost = (0..n).fold(F::zero(), |acc, i| acc + nearest[i].min(m[(i, cand)]));
            if best.is_none_or(|(_, b)| cost < b) {
                best = Some((cand, cost));
            }
        }
        let (c, _) = best.expect("a candidate remains while k <= n");
        medoids.push(c);
        for i in 0..n {
            nearest[i] = nearest[i].min(m[(i, c)]);
        }
    }
    // SWAP
    let mut cost = total_cost(m, &medoids);
    let mut history = vec![cost];
    let tol = F::c(1e-12) * cost.abs().max(F::one());
    loop {
        let mut best: Option<(usize, usize, F)> = None;
        for slot in 0..k {
            for cand in (0..n).filter(|c| !medoids.contains(c)) {
                let mut trial = medoids.clone();
                trial[slot] = cand;
                let c = total_cost(m, &trial);
                if c < cost - tol && best.is_none_or(|(_, _, b)| c < b) {
                    best = Some((slot, cand, c));
                }
            }
        }
        match best {
            Some((slot, cand, c)) => {
                assert!(c <= cost, "SWAP increased the total cost");
                medoids[slot] = cand;
                cost = c;
                history.push(c);
            }
            None => break,
        }
    }
    medoids.sort_unstable();
    let (assignment, total) = assign(m, &medoids);
    let mut out = ClusterResult {
        k,
        medoids,
        assignment,
        total_cost: total,
        dunn: None,
        mean_silhouette: None,
        beta: None,
        cost_history: history,
    };
    if k >= 2 {
        out.dunn = Some(dunn_index(d, &out.assignment)?);
        out.mean_silhouette = Some(silhouette(d, &out.assignment)?.1);
    }
    Ok(out)
}

fn n_clusters(assignment: &[usize]) -> Result<usize> {
    let k = assignment.iter().copied().max().map_or(0, |c| c + 1);
    for c in 0..k {
        if !assignment.contains(&c) {
            return Err(Error::precondition(format!("cluster {c} is empty")));
        }
    }
    if k < 2 {
        return Err(Error::precondition("validity indices need at least two clusters"));
    }
    Ok(k)
}

/// Smallest between-cluster dissimilarity over the largest cluster diameter.
/// All-singleton partitions give `+inf`.
pub fn dunn_index<F: Scalar>(d: &DissimilarityMatrix<F>, assignment: &[usize]) -> Result<F> {
    let m = &d.values;
    if assignment.len() != m.rows() {
        return Err(Error::Shape {
            axis: "region",
            expected: m.rows(),
            found: assignment.len(),
        });
    }
    n_clusters(assignment)?;
    let mut between = F::infinity();
    let mut diameter = F::zero();
    for i in 0..m.rows() {
        for j in i + 1..m.rows() {
            if assignment[i] == assignment[j] {
                diameter = diameter.max(m[(i, j)]);
            } else {
                between = between.min(m[(i, j)]);
            }
        }
    }
    Ok(if diameter == F::zero() { F::infinity() } else { between / diameter })
}

/// Per-point silhouettes and their mean. Points in singleton clusters score 0.
pub fn silhouette<F: Scalar>(d: &DissimilarityMatrix<F>, assignment: &[usize]) -> Result<(Vec<F>, F)> {
    let m = &d.values;
    let n = m.rows();
    if assignment.len() != n {
        return Err(Error::Shape {
            axis: "region",
            expected: n,
            found: assignment.len(),
        });
    }
    let k = n_clusters(assignment)?;
    let sizes: Vec<usize> = (0..k).map(|c| assignment.iter().filter(|&&a| a == c).count()).collect();
    let s: Vec<F> = (0..n)
        .map(|i| {
            let own = assignment[i];
            if sizes[own] == 1 {
                return F::zero();
            }
            let mut sums = vec![F::zero(); k];
            for j in 0..n {
                if j != i {
                    sums[assignment[j]] = sums[assignment[j]] + m[(i, j)];
                }
            }
            let a = sums[own] / F::c((sizes[own] - 1) as f64);
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / F::c(sizes[c] as f64))
                .fold(F::infinity(), F::min);
            let denom = a.max(b);
            if denom == F::zero() {
                F::zero()
            } else {
                (b - a) / denom
            }
        })
        .collect();
    let mean = s.iter().fold(F::zero(), |acc, &v| acc + v) / F::c(n as f64);
    Ok((s, mean))
}

/// Outcome of the beta and K search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection<F = f64> {
    pub beta: F,
    pub k: usize,
    pub result: ClusterResult<F>,
    /// Mean silhouette of each candidate K at the reference beta.
    pub k_scores: Vec<(usize, F)>,
    /// Dunn index at the chosen K for each beta on the grid.
    pub beta_scores: Vec<(F, F)>,
    pub combined: DissimilarityMatrix<F>,
    pub k_rule: String,
}

/// Reference mixing weight at which the number of clusters is chosen.
pub const K_REFERENCE_BETA: f64 = 0.5;

/// Chooses K by mean silhouette at `beta = 0.5`, then beta by the Dunn index at that K
/// (ties go to the smaller beta), and reruns PAM at the chosen pair.
pub fn select_beta_and_k<F: Scalar>(
    spatial: &DissimilarityMatrix<F>,
    copula: &DissimilarityMatrix<F>,
    beta_grid: &[F],
    k_candidates: &[usize],
) -> Result<Selection<F>> {
    if beta_grid.is_empty() || k_candidates.is_empty() {
        return Err(Error::precondition("beta grid and K candidates must be non-empty"));
    }
    let n = spatial.size();
    let mut grid = beta_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite beta"));
    let reference = combine(spatial, copula, F::c(K_REFERENCE_BETA))?;
    let mut ks: Vec<usize> = k_candidates.iter().copied().filter(|&k| k >= 1 && k <= n).collect();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(Error::precondition(format!("no K candidate lies in 1..={n}")));
    }
    let mut k_scores = Vec::new();
    let mut k_opt = ks[0];
    let mut best_sil = F::neg_infinity();
    for &k in &ks {
        let r = pam(&reference, k)?;
        let sil = r.mean_silhouette.unwrap_or(F::neg_infinity());
        k_scores.push((k, sil));
        if sil > best_sil {
            best_sil = sil;
            k_opt = k;
        }
    }
    let mut beta_scores = Vec::new();
    let mut beta_opt = grid[0];
    let mut best_dunn = F::neg_infinity();
    for &beta in &grid {
        let r = pam(&combine(spatial, copula, beta)?, k_opt)?;
        let dunn = r.dunn.unwrap_or(F::neg_infinity());
        beta_scores.push((beta, dunn));
        if dunn > best_dunn {
            best_dunn = dunn;
            beta_opt = beta;
        }
    }
    let combined = combine(spatial, copula, beta_opt)?;
    let mut result = pam(&combined, k_opt)?;
    result.beta = Some(beta_opt);
    Ok(Selection {
        beta: beta_opt,
        k: k_opt,
        result,
        k_scores,
        beta_scores,
        combined,
        k_rule: format!("largest mean silhouette at beta = {K_REFERENCE_BETA}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::DissimilarityKind;

    fn dm(values: Matrix) -> DissimilarityMatrix {
        DissimilarityMatrix::new(DissimilarityKind::Combined, values).unwrap()
    }

    fn blocks(n: usize, within: f64, between: f64) -> DissimilarityMatrix {
        dm(Matrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else if (i < n / 2) == (j < n / 2) {
                within
            } else {
                between
            }
        }))
    }

    #[test]
    fn k_equal_n_gives_zero_cost() {
        let d = blocks(5, 0.3, 0.9);
        let r = pam(&d, 5).unwrap();
        assert_eq!(r.total_cost, 0.0);
        assert_eq!(r.medoids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn one_medoid_minimises_row_sum() {
        let m = Matrix::from_rows(&[
            vec![0.0, 1.0, 4.0, 5.0],
            vec![1.0, 0.0, 2.0, 3.0],
            vec![4.0, 2.0, 0.0, 1.5],
            vec![5.0, 3.0, 1.5, 0.0],
        ]);
        let r = pam(&dm(m), 1).unwrap();
        assert_eq!(r.medoids, vec![1]);
        assert_eq!(r.total_cost, 6.0);
    }

    #[test]
    fn planted_blocks_are_recovered() {
        let r = pam(&blocks(8, 0.1, 1.0), 2).unwrap();
        let a = &r.assignment;
        assert!(a[..4].iter().all(|&c| c == a[0]));
        assert!(a[4..].iter().all(|&c| c == a[4]));
        assert_ne!(a[0], a[4]);
        assert!(r.mean_silhouette.unwrap() > 0.9);
        assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn k_above_n_is_rejected() {
        assert!(pam(&blocks(3, 0.1, 1.0), 4).is_err());
    }

    #[test]
    fn dunn_hand_case() {
        let d = blocks(4, 0.1, 1.0);
        assert!((dunn_index(&d, &[0, 0, 1, 1]).unwrap() - 10.0).abs() < 1e-12);
        assert!(dunn_index(&d, &[0, 0, 0, 0]).is_err());
        assert_eq!(dunn_index(&d, &[0, 1, 2, 3]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn silhouette_conventions() {
        let d = blocks(4, 0.1, 1.0);
        let (s, _) = silhouette(&d, &[0, 0, 0, 1]).unwrap();
        assert_eq!(s[3], 0.0);
        // two identical points split across clusters
        let m = Matrix::from_rows(&[vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]);
        let (s, _) = silhouette(&dm(m), &[0, 1, 1]).unwrap();
        assert!(s.iter().any(|&v| v < 0.0));
    }

    #[test]
    fn single_beta_grid_is_returned() {
        let d = blocks(6, 0.2, 0.8);
        let sel = select_beta_and_k(&d, &d, &[0.3], &[2, 3]).unwrap();
        assert_eq!(sel.beta, 0.3);
    }

    #[test]
    fn identical_inputs_make_beta_irrelevant() {
        let d = blocks(6, 0.2, 0.8);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let sel = select_beta_and_k(&d, &d, &grid, &[2]).unwrap();
        for &b in &grid {
            assert_eq!(pam(&combine(&d, &d, b).unwrap(), 2).unwrap().assignment, sel.result.assignment);
        }
        // all Dunn values tie, so the smallest beta wins
        assert_eq!(sel.beta, 0.0);
    }
}
