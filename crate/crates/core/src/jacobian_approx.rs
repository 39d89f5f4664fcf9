//! Low-rank Jacobian factors and the approximate gradient `v · (uᵀ δ)`.
//!
//! A [`LowRankFactor`] stands in for an `m × d` Jacobian `J ≈ u vᵀ`, with the
//! singular values folded into `v`. The approximate gradient only ever forms
//! the `k`-dimensional projected signal `uᵀ δ`, never the product `u vᵀ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::svd::orthonormalize;
use crate::linalg::{matvec, matvec_t, truncated_svd, Mat, Vector};
use crate::rng::SplitMix64;

pub const DEFAULT_REFRESH_PERIOD: usize = 10;
pub const DEFAULT_POWER_ITERS: usize = 6;

/// How the left basis `u` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisMode {
    /// Leading singular vectors of the current Jacobian.
    Svd,
    /// A fixed seeded Gaussian basis, independent of the Jacobian.
    RandomProjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefreshPolicy {
    /// Refresh every `period` steps.
    pub period: usize,
    pub mode: BasisMode,
    /// Subspace iterations for the randomized SVD.
    pub power_iters: usize,
}

impl Default for RefreshPolicy {
    fn default() -> Self {
        RefreshPolicy {
            period: DEFAULT_REFRESH_PERIOD,
            mode: BasisMode::Svd,
            power_iters: DEFAULT_POWER_ITERS,
        }
    }
}

impl RefreshPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.period == 0 {
            return Err(Error::Config("refresh period must be at least 1".into()));
        }
        if self.power_iters == 0 {
            return Err(Error::Config("power iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor {
    u: Mat,
    v: Mat,
    birth_step: usize,
}

impl LowRankFactor {
    /// `m × k`, orthonormal columns.
    pub fn u(&self) -> &Mat {
        &self.u
    }

    /// `d × k`, singular values folded in.
    pub fn v(&self) -> &Mat {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    pub fn birth_step(&self) -> usize {
        self.birth_step
    }

    pub fn signal_dim(&self) -> usize {
        self.u.rows()
    }

    pub fn param_dim(&self) -> usize {
        self.v.rows()
    }

    /// Scalars held by `u` and `v`.
    pub fn stored_scalars(&self) -> usize {
        self.u.len() + self.v.len()
    }

    pub fn is_due(&self, step: usize, policy: &RefreshPolicy) -> bool {
        step.saturating_sub(self.birth_step) >= policy.period
    }

    /// Marks the factor as current at `step` without recomputing it. Only
    /// valid when the Jacobian it came from has not changed.
    pub(crate) fn renewed(mut self, step: usize) -> Self {
        self.birth_step = step;
        self
    }

    /// Builds a factor from explicit parts; `u` must have orthonormal columns.
    pub fn from_parts(u: Mat, v: Mat, birth_step: usize) -> Result<Self> {
        if u.cols() != v.cols() {
            return Err(Error::dim(
                "LowRankFactor::from_parts",
                format!("u has {} columns, v has {}", u.cols(), v.cols()),
            ));
        }
        if u.orthonormality_defect() > 1e-8 {
            return Err(Error::Config("u must have orthonormal columns".into()));
        }
        Ok(LowRankFactor { u, v, birth_step })
    }
}

pub fn factorize(
    j: &Mat,
    k: usize,
    policy: &RefreshPolicy,
    step: usize,
    seed: u64,
) -> Result<LowRankFactor> {
    let (m, d) = j.shape();
    let max = m.min(d);
    if k == 0 || k > max {
        return Err(Error::Rank { k, max });
    }
    if !j.is_finite() {
        return Err(Error::Num("factorize input"));
    }
    let (u, v) = match policy.mode {
        BasisMode::Svd => {
            let svd = truncated_svd(j, k, policy.power_iters, seed)?;
            let v = svd.v.scale_columns(svd.s.as_slice());
            (svd.u, v)
        }
        BasisMode::RandomProjection => {
            let u = random_basis(m, k, seed);
            let v = j.t_matmul(&u)?;
            (u, v)
        }
    };
    Ok(LowRankFactor {
        u,
        v,
        birth_step: step,
    })
}

/// Seeded Gaussian `m × k` matrix with orthonormalized columns.
fn random_basis(m: usize, k: usize, seed: u64) -> Mat {
    let mut rng = SplitMix64::new(seed);
    orthonormalize(&Mat::from_fn(m, k, |_, _| rng.standard_normal()))
}

/// `δ′ = uᵀ δ`
pub fn projected_signal(factor: &LowRankFactor, delta: &Vector) -> Result<Vector> {
    matvec_t(&factor.u, delta)
}

/// Lifts a projected signal back to parameter space: `v · δ′`.
pub fn lift(factor: &LowRankFactor, delta_proj: &Vector) -> Result<Vector> {
    matvec(&factor.v, delta_proj)
}

/// `g̃ = v · (uᵀ δ)`, through the `k`-dimensional intermediate.
pub fn approx_gradient(factor: &LowRankFactor, delta: &Vector) -> Result<Vector> {
    lift(factor, &projected_signal(factor, delta)?)
}

/// Re-factorizes `j_current` once `step − birth_step ≥ τ`, otherwise hands
/// the factor back untouched.
pub fn maybe_refresh(
    factor: LowRankFactor,
    j_current: &Mat,
    step: usize,
    policy: &RefreshPolicy,
    seed: u64,
) -> Result<LowRankFactor> {
    if j_current.shape() != (factor.signal_dim(), factor.param_dim()) {
        return Err(Error::dim(
            "maybe_refresh",
            format!(
                "factor is {}x{}, jacobian is {:?}",
                factor.signal_dim(),
                factor.param_dim(),
                j_current.shape()
            ),
        ));
    }
    if factor.is_due(step, policy) {
        factorize(j_current, factor.rank(), policy, step, seed)
    } else {
        Ok(factor)
    }
}
