use super::{Mat, Vector};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix, eigenvalues nonincreasing.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: Mat,
}

impl SymmetricEigen {
    /// `V · diag(f(λ)) · Vᵀ`
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Mat {
        let scaled: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        self.vectors
            .scale_columns(&scaled)
            .matmul_t(&self.vectors)
            .expect("square eigenvector matrix")
    }
}

/// Cyclic Jacobi eigenvalue iteration. Only the symmetric part of `a` is used.
pub fn symmetric_eigen(a: &Mat) -> Result<SymmetricEigen> {
    let (n, cols) = a.shape();
    if n != cols {
        return Err(Error::dim(
            "symmetric_eigen",
            format!("{n}x{cols} is not square"),
        ));
    }
    if !a.is_finite() {
        return Err(Error::Num("symmetric_eigen input"));
    }
    let mut m = Mat::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let mut v = Mat::identity(n);

    let total: f64 = m.as_slice().iter().map(|x| x * x).sum();
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m.get(i, j) * m.get(i, j);
                }
            }
        }
        if off == 0.0 || off <= 1e-30 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m.get(k, p), m.get(k, q));
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (m.get(p, k), m.get(q, k));
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m.get(y, y).total_cmp(&m.get(x, x)).then(x.cmp(&y)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = Mat::from_fn(n, n, |i, j| v.get(i, order[j]));
    Ok(SymmetricEigen { values, vectors })
}

/// Solves `a x = b` for symmetric positive definite `a` by Cholesky.
pub fn cholesky_solve(a: &Mat, b: &Vector) -> Result<Vector> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::dim(
            "cholesky_solve",
            format!("{:?} system with rhs of length {}", a.shape(), b.len()),
        ));
    }
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut diag = a.get(j, j);
        for k in 0..j {
            diag -= l.get(j, k) * l.get(j, k);
        }
        if !(diag > 0.0) {
            return Err(Error::Spd(format!("non-positive pivot {diag} at {j}")));
        }
        let ljj = diag.sqrt();
        l.set(j, j, ljj);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    Ok(Vector::from_raw(x))
}
