//! Symmetric eigendecomposition by the cyclic Jacobi method.
//!
//! All spectral machinery in this crate (Fourier transforms, Chebyshev
//! rescaling, pseudo-inverse least squares) is built on real symmetric
//! shifts, so one robust symmetric solver is enough. Jacobi rotations keep
//! the eigenvector matrix orthonormal by construction, which the transform
//! inverses rely on.

use crate::{Error, Matrix, Result};

/// Result of a symmetric eigendecomposition: `values` ascending and the
/// matching orthonormal eigenvectors as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;

/// Decompose a symmetric matrix as `M = V diag(values) V^T`.
///
/// Rejects matrices whose asymmetry exceeds `1e-10` (relative to the largest
/// entry) and fails if the off-diagonal mass has not vanished after 100
/// sweeps, which does not happen for the sizes this crate works at.
pub fn symmetric_eig(m: &Matrix) -> Result<SymEig> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let scale = m.max_abs().max(1.0);
    let asym = m.asymmetry();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let n = m.rows();
    let mut a = m.clone();
    // Force exact symmetry so rotation arithmetic cannot drift.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    let mut v = Matrix::eye(n);

    let off = |a: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a.get(i, j) * a.get(i, j);
            }
        }
        s.sqrt()
    };

    let tol = 1e-14 * scale * n as f64;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off(&a) <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= tol / (n * n) as f64 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                // Classic stable rotation: t = sign(theta)/(|theta| + sqrt(theta^2+1))
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged && off(&a) > tol {
        return Err(Error::NoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v.get(i, order[j]));
    Ok(SymEig { values, vectors })
}

impl SymEig {
    /// Apply `V f(diag) V^T` to a vector, with `f` mapping each eigenvalue.
    pub fn apply_function(&self, f: impl Fn(f64) -> f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.vectors.transpose().matvec(x)?;
        for (yi, &l) in y.iter_mut().zip(&self.values) {
            *yi *= f(l);
        }
        self.vectors.matvec(&y)
    }
}

/// Least-squares solve of a symmetric system through the eigendecomposition,
/// inverting only eigenvalues above a relative cutoff (Moore-Penrose
/// pseudo-inverse on the rest).
pub fn pinv_solve_symmetric(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let eig = symmetric_eig(a)?;
    let cutoff = 1e-10 * eig.values.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-300);
    eig.apply_function(|l| if l.abs() > cutoff { 1.0 / l } else { 0.0 }, b)
}

/// Rank of a symmetric matrix judged from its spectrum.
pub fn symmetric_rank(a: &Matrix) -> Result<usize> {
    let eig = symmetric_eig(a)?;
    let cutoff = 1e-10 * eig.values.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-300);
    Ok(eig.values.iter().filter(|l| l.abs() > cutoff).count())
}
