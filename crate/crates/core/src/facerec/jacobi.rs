//! Cyclic Jacobi eigensolver for small dense symmetric matrices.

use super::FaceError;

const MAX_SWEEPS: usize = 100;
const OFF_TOLERANCE: f64 = 1e-12;

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for p in 0..n {
        for q in 0..n {
            if p != q {
                sum += a[p * n + q] * a[p * n + q];
            }
        }
    }
    sum.sqrt()
}

/// Diagonalizes the row-major symmetric `n x n` matrix by cyclic plane
/// rotations, sweeping until the off-diagonal Frobenius norm falls below
/// `1e-12` times the matrix's Frobenius norm.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> Result<SymmetricEigen, FaceError> {
    assert_eq!(matrix.len(), n * n, "matrix must be n x n");
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = OFF_TOLERANCE * scale.max(f64::MIN_POSITIVE);

    let mut sweeps = 0;
    while off_diagonal_norm(&a, n) >= threshold {
        if sweeps == MAX_SWEEPS {
            return Err(FaceError::EigenNoConvergence(MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- Jᵀ A J, touching rows/cols p and q only
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    Ok(SymmetricEigen {
        values: order.iter().map(|&i| a[i * n + i]).collect(),
        vectors: order
            .iter()
            .map(|&i| (0..n).map(|k| v[k * n + i]).collect())
            .collect(),
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    #[test]
    fn two_by_two() {
        let e = symmetric_eigen(&[1.0, -1.0, -1.0, 1.0], 2).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-15);
        assert!(e.values[1].abs() < 1e-15);
        let v = &e.vectors[0];
        assert!((v[0].abs() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((v[0] + v[1]).abs() < 1e-15);
    }

    #[test]
    fn diagonal_needs_no_sweeps() {
        let e = symmetric_eigen(&[1.0, 0.0, 0.0, 3.0], 2).unwrap();
        assert_eq!(e.sweeps, 0);
        assert_eq!(e.values, vec![3.0, 1.0]);
    }

    #[test]
    fn random_matrices_satisfy_eigen_equation() {
        let mut rng = Pcg64::seed_from_u64(5);
        for n in [3, 8, 20, 40] {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let x: f64 = rng.random_range(-1.0..1.0);
                    m[i * n + j] = x;
                    m[j * n + i] = x;
                }
            }
            let e = symmetric_eigen(&m, n).unwrap();
            assert!(e.sweeps <= 15, "sweeps {}", e.sweeps);
            for (lambda, v) in e.values.iter().zip(&e.vectors) {
                for i in 0..n {
                    let mv: f64 = (0..n).map(|j| m[i * n + j] * v[j]).sum();
                    assert!((mv - lambda * v[i]).abs() < 1e-10);
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = e.vectors[i].iter().zip(&e.vectors[j]).map(|(a, b)| a * b).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-12);
                }
            }
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
