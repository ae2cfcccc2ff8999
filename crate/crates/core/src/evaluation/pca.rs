use super::EvalError;

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order with matching unit eigenvectors
/// (as rows).
pub fn symmetric_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m[b][b].total_cmp(&m[a][a]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// One row per input vector, `k` columns.
    pub projections: Vec<Vec<f64>>,
    /// `k` unit loading vectors.
    pub components: Vec<Vec<f64>>,
    /// All covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub mean: Vec<f64>,
    /// Fewer than `k` non-zero eigenvalues; trailing components are zero.
    pub rank_deficient: bool,
}

/// Projects mean-centred data onto the top `k` covariance eigenvectors
/// (sample covariance, n - 1 denominator). Each component's largest-magnitude
/// loading is made positive.
pub fn pca_project(data: &[Vec<f64>], k: usize) -> Result<PcaResult, EvalError> {
    let n = data.len();
    if k == 0 || n < k + 1 {
        return Err(EvalError::TooShort);
    }
    let d = data[0].len();
    if data.iter().any(|r| r.len() != d) {
        return Err(EvalError::Mismatch("rows differ in length".into()));
    }
    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centred: Vec<Vec<f64>> = data.iter().map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in &centred {
        for i in 0..d {
            for j in i..d {
                cov[i][j] += r[i] * r[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i][i]).sum();
    let (eigenvalues, vectors) = symmetric_eigen(&cov);
    let tol = 1e-10 * trace.max(f64::MIN_POSITIVE);
    let rank = eigenvalues.iter().filter(|&&e| e > tol).count();
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    for c in 0..k.min(d) {
        if c >= rank {
            components.push(vec![0.0; d]);
            continue;
        }
        let mut v = vectors[c].clone();
        let lead = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
    }
    while components.len() < k {
        components.push(vec![0.0; d]);
    }
    let projections = centred.iter().map(|r| components.iter().map(|c| r.iter().zip(c).map(|(a, b)| a * b).sum()).collect()).collect();
    Ok(PcaResult { projections, components, eigenvalues, mean, rank_deficient: rank < k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
        let n = xs.clone().count() as f64;
        let m = xs.clone().sum::<f64>() / n;
        xs.map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn variances_match_independent_eigensolve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<Vec<f64>> = (0..20).map(|_| (0..8).map(|j| rng.random_range(-1.0..1.0) * (j + 1) as f64).collect()).collect();
        let r = pca_project(&data, 4).unwrap();
        let m = nalgebra::DMatrix::from_fn(20, 8, |i, j| data[i][j]);
        let centred = m.clone() - nalgebra::DMatrix::from_fn(20, 8, |_, j| r.mean[j]);
        let cov = centred.transpose() * &centred / 19.0;
        let mut oracle: Vec<f64> = nalgebra::SymmetricEigen::new(cov.clone()).eigenvalues.iter().copied().collect();
        oracle.sort_by(|a, b| b.total_cmp(a));
        for c in 0..4 {
            let v = variance(r.projections.iter().map(|p| p[c]));
            assert!((v - oracle[c]).abs() < 1e-8, "component {c}");
        }
        let total: f64 = r.eigenvalues.iter().sum();
        assert!((total - cov.trace()).abs() < 1e-9);
        assert!(r.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(!r.rank_deficient);
        for c in &r.components {
            let lead = c.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn subspace_data_reconstructs_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let basis: Vec<Vec<f64>> = (0..2).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let data: Vec<Vec<f64>> = (0..12)
            .map(|_| {
                let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                (0..5).map(|j| 3.0 + a * basis[0][j] + b * basis[1][j]).collect()
            })
            .collect();
        let r = pca_project(&data, 2).unwrap();
        for (row, p) in data.iter().zip(&r.projections) {
            for j in 0..5 {
                let rec = r.mean[j] + p[0] * r.components[0][j] + p[1] * r.components[1][j];
                assert!((rec - row[j]).abs() < 1e-9);
            }
        }
        let r4 = pca_project(&data, 4).unwrap();
        assert!(r4.rank_deficient);
        assert!(r4.projections.iter().all(|p| p[2] == 0.0 && p[3] == 0.0));
        assert!(pca_project(&data[..3], 4).is_err());
    }
}
