use std::borrow::Cow;

use super::{check_theta, Batch, Dataset, Dims, Problem};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, matvec, matvec_t, symmetric_eigen, Mat, Vector};

const NEWTON_MAX_ITERS: usize = 100;

/// Summed logistic loss with an optional ridge term.
///
/// The ridge term is carried by the factorization too: with `l2 > 0` the
/// Jacobian is `[X; √l2·I]` and the signal is `[σ(Xθ) − y; √l2·θ]`, so that
/// `Jᵀδ = Xᵀ(σ(Xθ) − y) + l2·θ` is the full gradient.
#[derive(Debug, Clone)]
pub struct Logistic {
    x: Mat,
    y: Vector,
    l2: f64,
    jac: Mat,
    smoothness: f64,
    optimum: Option<(Vector, f64)>,
    dims: Dims,
}

pub fn logistic_problem(data: &Dataset, l2: f64) -> Result<Logistic> {
    if let Some(i) = data.y.iter().position(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Data(format!(
            "label {} at row {i} is not 0 or 1",
            data.y[i]
        )));
    }
    if data.y.len() != data.x.rows() {
        return Err(Error::dim(
            "logistic_problem",
            format!("{} labels for {} rows", data.y.len(), data.x.rows()),
        ));
    }
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::Config(format!("l2 must be ≥ 0, got {l2}")));
    }
    let (n, d) = data.x.shape();
    let jac = if l2 > 0.0 {
        data.x.vstack(&Mat::diag(&vec![l2.sqrt(); d]))?
    } else {
        data.x.clone()
    };
    let gram = data.x.t_matmul(&data.x)?;
    let smoothness = 0.25 * symmetric_eigen(&gram)?.values[0] + l2;
    let mut problem = Logistic {
        x: data.x.clone(),
        y: data.y.clone(),
        l2,
        jac,
        smoothness,
        optimum: None,
        dims: Dims::single(if l2 > 0.0 { n + d } else { n }, d),
    };
    if l2 > 0.0 {
        problem.optimum = Some(problem.newton_optimum()?);
    }
    Ok(problem)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Logistic {
    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    /// `σ(Xθ) − y`
    fn residual(&self, theta: &Vector) -> Result<Vector> {
        let z = matvec(&self.x, theta)?;
        Ok(Vector::from_fn(self.n(), |i| sigmoid(z[i]) - self.y[i]))
    }

    /// Damped Newton on the strictly convex ridge objective.
    fn newton_optimum(&self) -> Result<(Vector, f64)> {
        let d = self.dims.d;
        let mut theta = Vector::zeros(d);
        let mut loss = self.loss(&theta)?;
        for _ in 0..NEWTON_MAX_ITERS {
            let g = self.exact_gradient(&theta, &Batch::noiseless())?;
            let z = matvec(&self.x, &theta)?;
            let weights: Vec<f64> = z
                .iter()
                .map(|&zi| {
                    let p = sigmoid(zi);
                    p * (1.0 - p)
                })
                .collect();
            let weighted = Mat::from_fn(self.n(), d, |i, j| weights[i] * self.x.get(i, j));
            let mut hess = self.x.t_matmul(&weighted)?;
            for j in 0..d {
                hess.set(j, j, hess.get(j, j) + self.l2);
            }
            let step = cholesky_solve(&hess, &g)?;
            let decrement = g.dot(&step)?;
            if decrement <= 1e-28 * (1.0 + loss.abs()) {
                break;
            }
            let mut t = 1.0;
            loop {
                let candidate = theta.axpy(-t, &step)?;
                let cand_loss = self.loss(&candidate)?;
                if cand_loss <= loss - 0.25 * t * decrement || t < 1e-12 {
                    if cand_loss <= loss {
                        theta = candidate;
                        loss = cand_loss;
                    }
                    break;
                }
                t *= 0.5;
            }
            if decrement <= 1e-24 * (1.0 + loss.abs()) {
                break;
            }
        }
        Ok((theta, loss))
    }
}

impl Problem for Logistic {
    fn name(&self) -> &str {
        "logistic"
    }

    fn dims(&self) -> &Dims {
        &self.dims
    }

    fn loss(&self, theta: &Vector) -> Result<f64> {
        check_theta("Logistic::loss", theta, self.dims.d)?;
        let z = matvec(&self.x, theta)?;
        let mut total = 0.0;
        for (zi, yi) in z.iter().zip(self.y.iter()) {
            total += softplus(*zi) - yi * zi;
        }
        Ok(total + 0.5 * self.l2 * theta.dot(theta)?)
    }

    fn error_signal(&self, theta: &Vector, batch: &Batch) -> Result<Vector> {
        check_theta("Logistic::error_signal", theta, self.dims.d)?;
        batch.check(self.dims.m)?;
        let mut delta = self.residual(theta)?;
        if self.l2 > 0.0 {
            delta = Vector::concat(&[delta, theta.scaled(self.l2.sqrt())]);
        }
        match batch.noise() {
            Some(n) => delta.add(n),
            None => Ok(delta),
        }
    }

    fn jacobian_block(&self, theta: &Vector, block: usize) -> Result<Cow<'_, Mat>> {
        check_theta("Logistic::jacobian_block", theta, self.dims.d)?;
        if block != 0 {
            return Err(Error::dim(
                "Logistic::jacobian_block",
                format!("block {block} of 1"),
            ));
        }
        Ok(Cow::Borrowed(&self.jac))
    }

    fn exact_gradient(&self, theta: &Vector, batch: &Batch) -> Result<Vector> {
        check_theta("Logistic::exact_gradient", theta, self.dims.d)?;
        batch.check(self.dims.m)?;
        let mut r = self.residual(theta)?;
        let n = self.n();
        if let Some(noise) = batch.noise() {
            r = r.add(&noise.slice(0..n))?;
        }
        let mut g = matvec_t(&self.x, &r)?;
        if self.l2 > 0.0 {
            g = g.axpy(self.l2, theta)?;
            if let Some(noise) = batch.noise() {
                g = g.axpy(self.l2.sqrt(), &noise.slice(n..self.dims.m))?;
            }
        }
        Ok(g)
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.smoothness)
    }

    fn noise_sigma(&self) -> f64 {
        0.0
    }

    fn optimal_loss(&self) -> Option<f64> {
        self.optimum.as_ref().map(|(_, l)| *l)
    }

    fn optimum(&self) -> Option<&Vector> {
        self.optimum.as_ref().map(|(t, _)| t)
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn jacobian_is_constant(&self) -> bool {
        true
    }
}
