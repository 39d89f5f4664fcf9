use std::borrow::Cow;

use super::{check_theta, Batch, Dims, Problem};
use crate::error::{Error, Result};
use crate::linalg::svd::orthonormalize;
use crate::linalg::{matvec, symmetric_eigen, Mat, Vector};
use crate::rng::SplitMix64;

/// `½ (θ − θ*)ᵀ A (θ − θ*)` with `J = A^{1/2}` and `δ = J (θ − θ*) + σ ξ`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    a: Mat,
    root: Mat,
    theta_star: Vector,
    sigma: f64,
    lambda_max: f64,
    dims: Dims,
}

pub fn quadratic_problem(a: Mat, theta_star: Vector, noise_sigma: f64) -> Result<Quadratic> {
    let (n, cols) = a.shape();
    if n != cols {
        return Err(Error::Spd(format!("{n}x{cols} matrix is not square")));
    }
    if theta_star.len() != n {
        return Err(Error::dim(
            "quadratic_problem",
            format!("θ* has length {}, A is {n}x{n}", theta_star.len()),
        ));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Config(format!(
            "noise sigma must be ≥ 0, got {noise_sigma}"
        )));
    }
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in i + 1..n {
            if (a.get(i, j) - a.get(j, i)).abs() > 1e-12 * scale {
                return Err(Error::Spd(format!("asymmetric at ({i}, {j})")));
            }
        }
    }
    let eig = symmetric_eigen(&a)?;
    let lambda_min = eig.values[n - 1];
    if !(lambda_min > 0.0) {
        return Err(Error::Spd(format!("smallest eigenvalue {lambda_min}")));
    }
    let root = eig.map_values(f64::sqrt);
    Ok(Quadratic {
        lambda_max: eig.values[0],
        a,
        root,
        theta_star,
        sigma: noise_sigma,
        dims: Dims::single(n, n),
    })
}

/// Random instance: `A = Q diag(λ) Qᵀ` with eigenvalues spaced geometrically
/// from 1 down to `1/cond`, and `θ* ~ N(0, I)`.
pub fn conditioned_quadratic(
    dim: usize,
    cond: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<Quadratic> {
    if dim == 0 {
        return Err(Error::Config(
            "quadratic dimension must be at least 1".into(),
        ));
    }
    if !(cond >= 1.0 && cond.is_finite()) {
        return Err(Error::Config(format!(
            "condition number must be ≥ 1, got {cond}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let q = orthonormalize(&Mat::from_fn(dim, dim, |_, _| rng.standard_normal()));
    let lambdas: Vec<f64> = (0..dim)
        .map(|i| {
            if dim == 1 {
                1.0
            } else {
                cond.powf(-(i as f64) / (dim - 1) as f64)
            }
        })
        .collect();
    let raw = q.scale_columns(&lambdas).matmul_t(&q)?;
    let a = Mat::from_fn(dim, dim, |i, j| 0.5 * (raw.get(i, j) + raw.get(j, i)));
    let theta_star = Vector::from_fn(dim, |_| rng.standard_normal());
    quadratic_problem(a, theta_star, noise_sigma)
}

impl Quadratic {
    pub fn hessian(&self) -> &Mat {
        &self.a
    }

    pub fn root(&self) -> &Mat {
        &self.root
    }

    fn offset(&self, op: &'static str, theta: &Vector) -> Result<Vector> {
        check_theta(op, theta, self.dims.d)?;
        theta.sub(&self.theta_star)
    }
}

impl Problem for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dims(&self) -> &Dims {
        &self.dims
    }

    fn loss(&self, theta: &Vector) -> Result<f64> {
        let x = self.offset("Quadratic::loss", theta)?;
        Ok(0.5 * x.dot(&matvec(&self.a, &x)?)?)
    }

    fn error_signal(&self, theta: &Vector, batch: &Batch) -> Result<Vector> {
        batch.check(self.dims.m)?;
        let x = self.offset("Quadratic::error_signal", theta)?;
        let delta = matvec(&self.root, &x)?;
        match batch.noise() {
            Some(n) => delta.add(n),
            None => Ok(delta),
        }
    }

    fn jacobian_block(&self, theta: &Vector, block: usize) -> Result<Cow<'_, Mat>> {
        check_theta("Quadratic::jacobian_block", theta, self.dims.d)?;
        if block != 0 {
            return Err(Error::dim(
                "Quadratic::jacobian_block",
                format!("block {block} of 1"),
            ));
        }
        Ok(Cow::Borrowed(&self.root))
    }

    fn exact_gradient(&self, theta: &Vector, batch: &Batch) -> Result<Vector> {
        batch.check(self.dims.m)?;
        let x = self.offset("Quadratic::exact_gradient", theta)?;
        let g = matvec(&self.a, &x)?;
        match batch.noise() {
            // the root is symmetric, so Jᵀξ = A^{1/2} ξ
            Some(n) => g.add(&matvec(&self.root, n)?),
            None => Ok(g),
        }
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.lambda_max)
    }

    fn noise_sigma(&self) -> f64 {
        self.sigma
    }

    fn optimal_loss(&self) -> Option<f64> {
        Some(0.0)
    }

    fn optimum(&self) -> Option<&Vector> {
        Some(&self.theta_star)
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn jacobian_is_constant(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matvec_t;

    fn v(x: &[f64]) -> Vector {
        Vector::from_slice(x).unwrap()
    }

    #[test]
    fn identity_loss_and_gradient() {
        let p = quadratic_problem(Mat::identity(2), Vector::zeros(2), 0.0).unwrap();
        let theta = v(&[3.0, 4.0]);
        assert_eq!(p.loss(&theta).unwrap(), 12.5);
        let g = p.exact_gradient(&theta, &Batch::noiseless()).unwrap();
        assert_eq!(g.as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn optimum_has_zero_signal() {
        let star = v(&[1.0, -2.0]);
        let p = quadratic_problem(Mat::diag(&[2.0, 5.0]), star.clone(), 0.0).unwrap();
        assert_eq!(
            p.error_signal(&star, &Batch::noiseless()).unwrap(),
            Vector::zeros(2)
        );
        assert_eq!(
            p.exact_gradient(&star, &Batch::noiseless()).unwrap(),
            Vector::zeros(2)
        );
        assert_eq!(p.loss(&star).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_root_and_chain_rule() {
        let p = quadratic_problem(Mat::diag(&[1.0, 4.0]), Vector::zeros(2), 0.0).unwrap();
        let theta = v(&[1.0, 1.0]);
        let j = p.jacobian(&theta).unwrap();
        assert!(j.sub(&Mat::diag(&[1.0, 2.0])).unwrap().max_abs() < 1e-14);
        let delta = p.error_signal(&theta, &Batch::noiseless()).unwrap();
        assert!(delta.sub(&v(&[1.0, 2.0])).unwrap().max_abs() < 1e-14);
        let g = p.exact_gradient(&theta, &Batch::noiseless()).unwrap();
        assert_eq!(g.as_slice(), &[1.0, 4.0]);
        let chained = matvec_t(&j, &delta).unwrap();
        assert!(chained.sub(&g).unwrap().max_abs() < 1e-12);
        assert_eq!(p.smoothness(), Some(4.0));
    }

    #[test]
    fn rejects_non_spd() {
        let asym = Mat::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap();
        assert!(matches!(
            quadratic_problem(asym, Vector::zeros(2), 0.0),
            Err(Error::Spd(_))
        ));
        assert!(matches!(
            quadratic_problem(Mat::diag(&[1.0, 0.0]), Vector::zeros(2), 0.0),
            Err(Error::Spd(_))
        ));
        assert!(matches!(
            quadratic_problem(Mat::diag(&[1.0, -3.0]), Vector::zeros(2), 0.0),
            Err(Error::Spd(_))
        ));
    }

    #[test]
    fn conditioned_instance_spectrum() {
        let p = conditioned_quadratic(12, 100.0, 0.0, 9).unwrap();
        let eig = symmetric_eigen(p.hessian()).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-10);
        assert!((eig.values[11] - 0.01).abs() < 1e-10);
        assert!((p.smoothness().unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn noise_mean_matches_noiseless_signal() {
        let sigma = 0.5;
        let p = conditioned_quadratic(4, 10.0, sigma, 3).unwrap();
        let theta = v(&[0.3, -0.1, 0.7, 1.2]);
        let clean = p.error_signal(&theta, &Batch::noiseless()).unwrap();
        let mut rng = SplitMix64::new(77);
        let draws = 10_000;
        let mut sum = vec![0.0; 4];
        for _ in 0..draws {
            let d = p.error_signal(&theta, &p.sample_batch(&mut rng)).unwrap();
            for (s, x) in sum.iter_mut().zip(d.iter()) {
                *s += x;
            }
        }
        let bound = 3.0 * sigma / (draws as f64).sqrt();
        for (s, c) in sum.iter().zip(clean.iter()) {
            assert!((s / draws as f64 - c).abs() <= bound);
        }
    }
}
