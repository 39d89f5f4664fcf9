//! Convergence-rate fits on a noisy quadratic.
//!
//! For each horizon `T` the step size is `c/√T`; the averaged-iterate gap is
//! averaged over seeds, then fitted two ways. The slope comes from a
//! least-squares line through `(ln T, ln gap)`. The error floor comes from
//! fitting `gap ≈ C + a/√T` and removing the decaying part at the largest
//! `T`, leaving the plateau that does not shrink with more steps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::run_on_problem;
use super::spec::OptimizerSpec;
use crate::error::{Error, Result};
use crate::error_feedback::Probe;
use crate::jacobian_approx::{BasisMode, DEFAULT_POWER_ITERS};
use crate::optimizer::{EfMode, GradLiteConfig};
use crate::problems::{conditioned_quadratic, Problem};
use crate::rng::{derive_seed, Stream};

pub const DEFAULT_T_GRID: [usize; 4] = [400, 1600, 6400, 25600];
pub const DEFAULT_RATE_C: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub dim: usize,
    pub cond: f64,
    pub noise: f64,
    pub k: usize,
    pub tau: usize,
    pub ef_mode: EfMode,
    pub basis: BasisMode,
    pub power_iters: usize,
    /// `η = c / √T`.
    pub c: f64,
    pub t_grid: Vec<usize>,
    pub seeds: usize,
    /// Fixes the instance; run `i` uses noise seed `seed + i`.
    pub seed: u64,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig {
            dim: 50,
            cond: 100.0,
            noise: 0.5,
            k: 50,
            tau: 10,
            ef_mode: EfMode::EfStandard,
            basis: BasisMode::Svd,
            power_iters: DEFAULT_POWER_ITERS,
            c: DEFAULT_RATE_C,
            t_grid: DEFAULT_T_GRID.to_vec(),
            seeds: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub steps: usize,
    pub eta: f64,
    pub mean_gap: f64,
    pub seed_gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub error_floor: f64,
    pub r_squared: f64,
    pub points: Vec<RatePoint>,
}

impl RateConfig {
    pub fn validate(&self) -> Result<()> {
        let mut grid = self.t_grid.clone();
        grid.sort_unstable();
        grid.dedup();
        if grid.len() < 4 || grid[0] == 0 {
            return Err(Error::Config(
                "rate check needs at least 4 distinct positive T values".into(),
            ));
        }
        if self.seeds < 5 {
            return Err(Error::Config(format!(
                "rate check needs at least 5 seeds, got {}",
                self.seeds
            )));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("c must be > 0, got {}", self.c)));
        }
        if self.k == 0 || self.k > self.dim {
            return Err(Error::Rank {
                k: self.k,
                max: self.dim,
            });
        }
        Ok(())
    }

    fn optimizer(&self, eta: f64) -> OptimizerSpec {
        OptimizerSpec::GradLite(GradLiteConfig {
            eta,
            k: self.k,
            tau: self.tau,
            ef_mode: self.ef_mode,
            probe: Probe::Exact,
            basis: self.basis,
            seed: 0,
            power_iters: self.power_iters,
        })
    }
}

/// Least squares `y ≈ a + b x`; returns `(a, b, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy > 0.0 { b * sxy / syy } else { 1.0 };
    (a, b, r2)
}

pub fn rate_check(cfg: &RateConfig) -> Result<RateFit> {
    cfg.validate()?;
    let problem = conditioned_quadratic(
        cfg.dim,
        cfg.cond,
        cfg.noise,
        derive_seed(cfg.seed, Stream::Instance as u64),
    )?;
    rate_check_on(&problem, cfg)
}

/// Rate check on a caller-supplied problem with known optimal loss.
pub fn rate_check_on(problem: &dyn Problem, cfg: &RateConfig) -> Result<RateFit> {
    cfg.validate()?;
    if problem.optimal_loss().is_none() {
        return Err(Error::UnknownOptimum);
    }
    let jobs: Vec<(usize, u64)> = cfg
        .t_grid
        .iter()
        .flat_map(|&t| (0..cfg.seeds as u64).map(move |s| (t, s)))
        .collect();
    let gaps: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(t, s)| {
            let eta = cfg.c / (t as f64).sqrt();
            let metrics = run_on_problem(
                problem,
                &cfg.optimizer(eta),
                t,
                cfg.seed.wrapping_add(s),
                false,
            )?;
            match metrics.diverged {
                Some(d) => Err(Error::Diverged {
                    step: d.step,
                    reason: d.reason,
                }),
                None => Ok(metrics.final_gap),
            }
        })
        .collect();

    let mut points = Vec::with_capacity(cfg.t_grid.len());
    let mut gaps = gaps.into_iter();
    for &t in &cfg.t_grid {
        let seed_gaps = gaps
            .by_ref()
            .take(cfg.seeds)
            .collect::<Result<Vec<f64>>>()?;
        let mean_gap = seed_gaps.iter().sum::<f64>() / seed_gaps.len() as f64;
        if !(mean_gap > 0.0) {
            return Err(Error::NonPositiveGap {
                steps: t,
                gap: mean_gap,
            });
        }
        points.push(RatePoint {
            steps: t,
            eta: cfg.c / (t as f64).sqrt(),
            mean_gap,
            seed_gaps,
        });
    }

    let log_t: Vec<f64> = points.iter().map(|p| (p.steps as f64).ln()).collect();
    let log_gap: Vec<f64> = points.iter().map(|p| p.mean_gap.ln()).collect();
    let (intercept, slope, r_squared) = linear_fit(&log_t, &log_gap);

    let inv_sqrt: Vec<f64> = points
        .iter()
        .map(|p| 1.0 / (p.steps as f64).sqrt())
        .collect();
    let gap: Vec<f64> = points.iter().map(|p| p.mean_gap).collect();
    let (_, decay, _) = linear_fit(&inv_sqrt, &gap);
    let last = points
        .iter()
        .zip(&inv_sqrt)
        .max_by_key(|(p, _)| p.steps)
        .expect("non-empty grid");
    let error_floor = last.0.mean_gap - decay * last.1;

    Ok(RateFit {
        slope,
        intercept,
        error_floor,
        r_squared,
        points,
    })
}
