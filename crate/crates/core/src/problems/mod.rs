//! Objectives with an explicit `(J, δ)` factorization of their gradient.
//!
//! Every [`Problem`] exposes the error signal `δ` (derivative of the loss
//! with respect to the model output) and the output-to-parameter Jacobian
//! `J`, so that `g = Jᵀδ`. Parameters are split into contiguous blocks, each
//! with its own local Jacobian.

mod dataset;
mod logistic;
mod mlp;
mod quadratic;

use std::borrow::Cow;
use std::ops::Range;

pub use dataset::{synth_dataset, Dataset, DatasetKind};
pub use logistic::{logistic_problem, Logistic};
pub use mlp::{mlp_problem, Activation, Mlp, MAX_MLP_PARAMS};
pub use quadratic::{conditioned_quadratic, quadratic_problem, Quadratic};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::rng::SplitMix64;

/// Signal and parameter dimensions plus the parameter block layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims {
    /// Length of the error signal `δ`.
    pub m: usize,
    /// Total parameter count.
    pub d: usize,
    /// Contiguous, ordered parameter ranges covering `0..d`.
    pub blocks: Vec<Range<usize>>,
}

impl Dims {
    pub fn single(m: usize, d: usize) -> Self {
        Dims {
            m,
            d,
            blocks: vec![0..d],
        }
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }
}

/// One stochastic draw. The only randomness in the suite is additive noise
/// on the error signal, so a batch is that noise realization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    noise: Option<Vector>,
}

impl Batch {
    pub fn noiseless() -> Self {
        Batch { noise: None }
    }

    pub fn with_noise(noise: Vector) -> Self {
        Batch { noise: Some(noise) }
    }

    pub fn noise(&self) -> Option<&Vector> {
        self.noise.as_ref()
    }

    pub(crate) fn check(&self, m: usize) -> Result<()> {
        match &self.noise {
            Some(n) if n.len() != m => Err(Error::dim(
                "Batch",
                format!("noise has length {}, signal has {m}", n.len()),
            )),
            _ => Ok(()),
        }
    }
}

pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    fn dims(&self) -> &Dims;

    /// Noiseless loss.
    fn loss(&self, theta: &Vector) -> Result<f64>;

    /// `δ`, including the batch noise.
    fn error_signal(&self, theta: &Vector, batch: &Batch) -> Result<Vector>;

    /// Local Jacobian of block `block`: `m × |block|`.
    fn jacobian_block(&self, theta: &Vector, block: usize) -> Result<Cow<'_, Mat>>;

    /// Full `m × d` Jacobian.
    fn jacobian(&self, theta: &Vector) -> Result<Mat> {
        let blocks = (0..self.dims().block_count())
            .map(|b| self.jacobian_block(theta, b).map(Cow::into_owned))
            .collect::<Result<Vec<_>>>()?;
        Mat::hstack(&blocks)
    }

    /// Gradient of the loss on `batch`, computed without forming `J`.
    fn exact_gradient(&self, theta: &Vector, batch: &Batch) -> Result<Vector>;

    /// Declared Lipschitz constant of the gradient, if the problem has one.
    fn smoothness(&self) -> Option<f64>;

    fn noise_sigma(&self) -> f64;

    fn optimal_loss(&self) -> Option<f64>;

    fn optimum(&self) -> Option<&Vector> {
        None
    }

    /// Convex problems are held to the tighter finite-difference tolerance.
    fn is_convex(&self) -> bool {
        false
    }

    /// True when `J` does not depend on `θ`.
    fn jacobian_is_constant(&self) -> bool {
        false
    }

    fn initial_theta(&self) -> Vector {
        Vector::zeros(self.dims().d)
    }

    fn sample_batch(&self, rng: &mut SplitMix64) -> Batch {
        let sigma = self.noise_sigma();
        if sigma > 0.0 {
            Batch::with_noise(Vector::from_fn(self.dims().m, |_| {
                sigma * rng.standard_normal()
            }))
        } else {
            Batch::noiseless()
        }
    }
}

pub(crate) fn check_theta(op: &'static str, theta: &Vector, d: usize) -> Result<()> {
    if theta.len() != d {
        return Err(Error::dim(
            op,
            format!("θ has length {}, problem has {d} parameters", theta.len()),
        ));
    }
    Ok(())
}

/// Central differences of the noiseless loss with step `h`.
pub fn finite_difference_gradient(problem: &dyn Problem, theta: &Vector, h: f64) -> Result<Vector> {
    finite_difference_range(problem, theta, h, 0..theta.len())
}

/// Central differences restricted to the coordinates in `range`.
pub fn finite_difference_range(
    problem: &dyn Problem,
    theta: &Vector,
    h: f64,
    range: Range<usize>,
) -> Result<Vector> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    check_theta("finite_difference_gradient", theta, problem.dims().d)?;
    if range.is_empty() || range.end > theta.len() {
        return Err(Error::dim(
            "finite_difference_range",
            format!("range {range:?} for {} parameters", theta.len()),
        ));
    }
    let mut probe = theta.clone();
    let mut out = Vec::with_capacity(range.len());
    for i in range {
        let base = theta[i];
        probe.as_mut_slice()[i] = base + h;
        let up = problem.loss(&probe)?;
        probe.as_mut_slice()[i] = base - h;
        let down = problem.loss(&probe)?;
        probe.as_mut_slice()[i] = base;
        out.push((up - down) / (2.0 * h));
    }
    Ok(Vector::from_raw(out))
}
