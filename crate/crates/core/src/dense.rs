//! Thin wrappers around the dense eigensolvers.

use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Symmetric eigen-decomposition of a row-major `n x n` matrix.
///
/// Eigenvalues come back in non-decreasing order; `vectors[k]` is the unit
/// eigenvector paired with `values[k]`.
pub fn symmetric_eigen(n: usize, data: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    debug_assert_eq!(data.len(), n * n);
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let m = Mat::<f64>::from_fn(n, n, |i, j| data[i * n + j]);
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let values = (0..n).map(|k| s[k]).collect();
    let vectors = (0..n).map(|k| (0..n).map(|i| u[(i, k)]).collect()).collect();
    Ok((values, vectors))
}

/// Eigenvalues of a general real row-major matrix as `(re, im)` pairs.
pub fn eigenvalues(n: usize, data: &[f64]) -> Result<Vec<(f64, f64)>> {
    debug_assert_eq!(data.len(), n * n);
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = Mat::<f64>::from_fn(n, n, |i, j| data[i * n + j]);
    let ev = m.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    Ok(ev.into_iter().map(|z| (z.re, z.im)).collect())
}

/// Solves the row-major system `a x = b` by Gaussian elimination with partial
/// pivoting. Returns `None` when a pivot magnitude is not above `pivot_tol`.
pub fn solve(n: usize, a: &[f64], b: &[f64], pivot_tol: f64) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        if !(m[piv * n + col].abs() > pivot_tol) {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
            }
            x.swap(piv, col);
        }
        let d = m[col * n + col];
        for row in col + 1..n {
            let f = m[row * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    m[row * n + k] -= f * m[col * n + k];
                }
                x[row] -= f * x[col];
            }
        }
    }
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row * n + k] * x[k]).sum();
        x[row] = (x[row] - s) / m[row * n + row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_small_system() {
        let x = solve(2, &[0.0, 2.0, 1.0, 1.0], &[4.0, 3.0], 1e-14).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        assert!(solve(2, &[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0], 1e-14).is_none());
        assert!(solve(1, &[0.0], &[1.0], 1e-14).is_none());
    }

    #[test]
    fn symmetric_eigen_diag() {
        let (vals, vecs) = symmetric_eigen(2, &[2.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(vals, vec![1.0, 2.0]);
        assert!((vecs[0][1].abs() - 1.0).abs() < 1e-14);
    }
}
