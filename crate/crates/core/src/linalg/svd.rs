//! Randomized truncated SVD.
//!
//! Gaussian sketch with fixed oversampling, `iters` rounds of subspace
//! iteration with Householder re-orthonormalization, then an exact SVD of the
//! small projected matrix by one-sided Jacobi rotations.

use super::{dot, Mat, Vector};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Extra sketch columns beyond the requested rank.
pub const OVERSAMPLE: usize = 5;

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;
/// Singular values below this fraction of the largest get a completed basis vector.
const NULL_DIRECTION_TOL: f64 = 1e-12;

/// Leading-`k` singular triplets: `a ≈ u · diag(s) · vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `m × k`, orthonormal columns.
    pub u: Mat,
    /// Nonincreasing, nonnegative.
    pub s: Vector,
    /// `d × k`, orthonormal columns.
    pub v: Mat,
}

/// Deterministic given `(a, k, iters, seed)`. Each `(uⱼ, vⱼ)` pair is signed so
/// the largest-magnitude entry of `uⱼ` is positive.
pub fn truncated_svd(a: &Mat, k: usize, iters: usize, seed: u64) -> Result<SvdResult> {
    let (m, d) = a.shape();
    let max_rank = m.min(d);
    if k == 0 || k > max_rank {
        return Err(Error::Rank { k, max: max_rank });
    }
    if iters == 0 {
        return Err(Error::Config(
            "truncated_svd needs at least one power iteration".into(),
        ));
    }
    if !a.is_finite() {
        return Err(Error::Num("truncated_svd input"));
    }

    let width = (k + OVERSAMPLE).min(max_rank);
    let mut rng = SplitMix64::new(seed);
    let sketch = Mat::from_fn(d, width, |_, _| rng.standard_normal());

    let mut q = orthonormalize(&a.matmul(&sketch)?);
    for _ in 0..iters {
        let z = orthonormalize(&a.t_matmul(&q)?);
        q = orthonormalize(&a.matmul(&z)?);
    }

    let projected = q.t_matmul(a)?;
    let small = jacobi_svd(&projected);
    let u_full = q.matmul(&small.u)?;

    let mut u_cols = u_full.to_columns();
    let mut v_cols = small.v.to_columns();
    u_cols.truncate(k);
    v_cols.truncate(k);
    for (u, v) in u_cols.iter_mut().zip(v_cols.iter_mut()) {
        let mut lead = 0;
        for (i, x) in u.iter().enumerate() {
            if x.abs() > u[lead].abs() {
                lead = i;
            }
        }
        if u[lead] < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }

    let result = SvdResult {
        u: Mat::from_columns(&u_cols),
        s: Vector::from_raw(small.s[..k].to_vec()),
        v: Mat::from_columns(&v_cols),
    };
    if !(result.u.is_finite() && result.v.is_finite() && result.s.is_finite()) {
        return Err(Error::Num("truncated_svd output"));
    }
    Ok(result)
}

/// Thin `Q` of a Householder QR of `y` (`m × l`, `m ≥ l`). Orthonormal even
/// when `y` is rank deficient.
pub(crate) fn orthonormalize(y: &Mat) -> Mat {
    let (m, l) = y.shape();
    debug_assert!(m >= l);
    let mut cols = y.to_columns();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(l);

    for j in 0..l {
        let x = &cols[j][j..];
        let norm = dot(x, x).sqrt();
        let mut v = x.to_vec();
        if norm > 0.0 {
            let alpha = if x[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vn = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|e| *e /= vn);
            for c in cols[j..].iter_mut() {
                reflect(&v, &mut c[j..]);
            }
        } else {
            v.iter_mut().for_each(|e| *e = 0.0);
        }
        reflectors.push(v);
    }

    let mut q: Vec<Vec<f64>> = (0..l)
        .map(|j| {
            let mut c = vec![0.0; m];
            c[j] = 1.0;
            c
        })
        .collect();
    for j in (0..l).rev() {
        let v = &reflectors[j];
        for c in q.iter_mut() {
            reflect(v, &mut c[j..]);
        }
    }
    Mat::from_columns(&q)
}

/// `x ← (I − 2vvᵀ) x` for unit (or zero) `v`.
fn reflect(v: &[f64], x: &mut [f64]) {
    let p = 2.0 * dot(v, x);
    if p != 0.0 {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi -= p * vi;
        }
    }
}

struct SmallSvd {
    /// `l × l` orthogonal.
    u: Mat,
    /// Length `l`, sorted nonincreasing.
    s: Vec<f64>,
    /// `d × l`, orthonormal columns.
    v: Mat,
}

/// Exact SVD of a short, wide `b` (`l × d`, `l ≤ d`) by one-sided Jacobi on `bᵀ`.
fn jacobi_svd(b: &Mat) -> SmallSvd {
    let (l, d) = b.shape();
    debug_assert!(l <= d);
    // Columns of bᵀ are the rows of b.
    let mut w: Vec<Vec<f64>> = (0..l).map(|i| b.row(i).to_vec()).collect();
    let mut rot: Vec<Vec<f64>> = (0..l)
        .map(|j| {
            let mut c = vec![0.0; l];
            c[j] = 1.0;
            c
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..l {
            for q in p + 1..l {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut rot, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    let top = norms[order[0]];
    let mut s = Vec::with_capacity(l);
    let mut u_cols = Vec::with_capacity(l);
    let mut v_cols: Vec<Option<Vec<f64>>> = Vec::with_capacity(l);
    for &idx in &order {
        let sigma = norms[idx];
        s.push(sigma);
        u_cols.push(rot[idx].clone());
        if top > 0.0 && sigma > NULL_DIRECTION_TOL * top {
            v_cols.push(Some(w[idx].iter().map(|x| x / sigma).collect()));
        } else {
            v_cols.push(None);
        }
    }
    let v_cols = complete_basis(v_cols, d);

    SmallSvd {
        u: Mat::from_columns(&u_cols),
        s,
        v: Mat::from_columns(&v_cols),
    }
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills `None` slots with unit vectors orthogonal to every other column,
/// drawn from the standard basis by modified Gram–Schmidt.
fn complete_basis(cols: Vec<Option<Vec<f64>>>, dim: usize) -> Vec<Vec<f64>> {
    let mut accepted: Vec<Vec<f64>> = cols.iter().flatten().cloned().collect();
    let mut next_candidate = 0;
    cols.into_iter()
        .map(|c| match c {
            Some(c) => c,
            None => loop {
                assert!(
                    next_candidate < dim,
                    "basis completion ran out of candidates"
                );
                let mut e = vec![0.0; dim];
                e[next_candidate] = 1.0;
                next_candidate += 1;
                for _ in 0..2 {
                    for a in &accepted {
                        let p = dot(a, &e);
                        for (ei, ai) in e.iter_mut().zip(a) {
                            *ei -= p * ai;
                        }
                    }
                }
                let n = dot(&e, &e).sqrt();
                if n > 0.5 {
                    e.iter_mut().for_each(|x| *x /= n);
                    accepted.push(e.clone());
                    break e;
                }
            },
        })
        .collect()
}
