//! The GradLite step and the baseline optimizers it is compared against.
//!
//! One GradLite step: evaluate `δ`, refresh the per-block factor when due,
//! project `δ′ = uᵀδ`, lift `g̃ = v δ′`, correct `ĝ = g̃ + r`, estimate the
//! residual `Δ`, update `r`, and move `θ ← θ − η ĝ`. Baselines (exact SGD,
//! Adam, a GaLore-style projected SGD) share the same state type.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_feedback::{
    correct, estimate_delta, update_accumulator, AccumulatorMode, DeltaEstimate, ErrorAccumulator,
    Probe,
};
use crate::jacobian_approx::{
    factorize, lift, maybe_refresh, projected_signal, BasisMode, LowRankFactor, RefreshPolicy,
    DEFAULT_POWER_ITERS, DEFAULT_REFRESH_PERIOD,
};
use crate::linalg::{matvec, matvec_t, truncated_svd, Mat, Vector};
use crate::problems::{Batch, Problem};
use crate::rng::derive_seed;

/// Any `|θᵢ|` above this counts as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EfMode {
    Paper,
    EfStandard,
    Off,
}

impl EfMode {
    pub fn accumulator_mode(self) -> Option<AccumulatorMode> {
        match self {
            EfMode::Paper => Some(AccumulatorMode::Paper),
            EfMode::EfStandard => Some(AccumulatorMode::EfStandard),
            EfMode::Off => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradLiteConfig {
    pub eta: f64,
    pub k: usize,
    pub tau: usize,
    pub ef_mode: EfMode,
    pub probe: Probe,
    pub basis: BasisMode,
    pub seed: u64,
    pub power_iters: usize,
}

impl Default for GradLiteConfig {
    fn default() -> Self {
        GradLiteConfig {
            eta: 0.05,
            k: 8,
            tau: DEFAULT_REFRESH_PERIOD,
            ef_mode: EfMode::EfStandard,
            probe: Probe::Exact,
            basis: BasisMode::Svd,
            seed: 0,
            power_iters: DEFAULT_POWER_ITERS,
        }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate must be > 0, got {eta}"
        )));
    }
    Ok(())
}

impl GradLiteConfig {
    pub fn validate(&self) -> Result<()> {
        check_eta(self.eta)?;
        if self.k == 0 {
            return Err(Error::Config("rank k must be at least 1".into()));
        }
        self.policy().validate()
    }

    pub fn policy(&self) -> RefreshPolicy {
        RefreshPolicy {
            period: self.tau,
            mode: self.basis,
            power_iters: self.power_iters,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            eta: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        check_eta(self.eta)?;
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaloreConfig {
    pub eta: f64,
    pub k: usize,
    pub tau: usize,
    pub seed: u64,
    pub power_iters: usize,
}

impl GaloreConfig {
    pub fn validate(&self) -> Result<()> {
        check_eta(self.eta)?;
        if self.k == 0 || self.tau == 0 || self.power_iters == 0 {
            return Err(Error::Config(
                "galore k, tau and power iterations must be ≥ 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of recent gradients kept for the basis.
    pub fn window(&self) -> usize {
        self.k.max(self.tau)
    }
}

#[derive(Debug, Clone, Default)]
struct BlockState {
    factor: Option<LowRankFactor>,
    acc: Option<ErrorAccumulator>,
}

#[derive(Debug, Clone)]
struct AdamMoments {
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Debug, Clone)]
struct GaloreState {
    window: VecDeque<Vector>,
    /// `d × k` orthonormal, or `None` for the identity projection.
    basis: Option<Mat>,
    birth_step: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    theta: Vector,
    step: usize,
    theta_sum: Vector,
    blocks: Vec<BlockState>,
    adam: Option<AdamMoments>,
    galore: Option<GaloreState>,
}

impl OptimizerState {
    pub fn new(theta0: Vector) -> Self {
        let d = theta0.len();
        OptimizerState {
            theta: theta0,
            step: 0,
            theta_sum: Vector::zeros(d),
            blocks: Vec::new(),
            adam: None,
            galore: None,
        }
    }

    pub fn for_problem(problem: &dyn Problem) -> Self {
        OptimizerState::new(problem.initial_theta())
    }

    pub fn theta(&self) -> &Vector {
        &self.theta
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Sum of the iterates `θ₁ … θ_t` produced so far.
    pub fn theta_sum(&self) -> &Vector {
        &self.theta_sum
    }

    /// Current GradLite factors, one per parameter block.
    pub fn factors(&self) -> Vec<&LowRankFactor> {
        self.blocks
            .iter()
            .filter_map(|b| b.factor.as_ref())
            .collect()
    }

    /// Concatenated residual accumulator, when error feedback is on.
    pub fn residual(&self) -> Option<Vector> {
        let parts: Option<Vec<Vector>> = self
            .blocks
            .iter()
            .map(|b| b.acc.as_ref().map(|a| a.residual().clone()))
            .collect();
        parts.filter(|p| !p.is_empty()).map(|p| Vector::concat(&p))
    }

    /// Scalars of persistent optimizer state beyond `θ` and the running sum.
    pub fn stored_scalars(&self) -> usize {
        let gradlite: usize = self
            .blocks
            .iter()
            .map(|b| {
                b.factor.as_ref().map_or(0, LowRankFactor::stored_scalars)
                    + b.acc.as_ref().map_or(0, ErrorAccumulator::len)
            })
            .sum();
        let adam = self.adam.as_ref().map_or(0, |a| a.m.len() + a.v.len());
        let galore = self.galore.as_ref().map_or(0, |g| {
            g.window.iter().map(Vector::len).sum::<usize>() + g.basis.as_ref().map_or(0, Mat::len)
        });
        gradlite + adam + galore
    }

    fn commit(&mut self, theta: Vector) {
        self.theta_sum.add_assign(&theta);
        self.theta = theta;
        self.step += 1;
    }
}

/// Every intermediate of one GradLite step. Block-wise
/// quantities are concatenated in block order.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub delta: Vector,
    pub delta_proj: Vector,
    pub g_tilde: Vector,
    pub g_hat: Vector,
    pub big_delta: Vector,
    /// Present iff the probe is exact.
    pub g_exact: Option<Vector>,
    /// Loss at the pre-update iterate.
    pub loss: f64,
}

/// What a baseline step computed, for metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineTrace {
    pub loss: f64,
    pub gradient: Vector,
    /// The vector actually scaled by `η` and subtracted.
    pub direction: Vector,
}

fn diverged(step: usize, reason: impl Into<String>) -> Error {
    Error::Diverged {
        step,
        reason: reason.into(),
    }
}

fn ensure_finite(step: usize, what: &str, v: &Vector) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(diverged(step, format!("non-finite {what}")))
    }
}

fn descend(step: usize, theta: &Vector, eta: f64, direction: &Vector) -> Result<Vector> {
    let next = theta.axpy(-eta, direction)?;
    ensure_finite(step, "parameters", &next)?;
    if next.max_abs() > DIVERGENCE_LIMIT {
        return Err(diverged(step, format!("|θ| exceeded {DIVERGENCE_LIMIT:e}")));
    }
    Ok(next)
}

fn check_state(state: &OptimizerState, problem: &dyn Problem) -> Result<()> {
    let d = problem.dims().d;
    if state.theta.len() != d {
        return Err(Error::dim(
            "optimizer state",
            format!(
                "θ has length {}, problem has {d} parameters",
                state.theta.len()
            ),
        ));
    }
    Ok(())
}

/// Rank used for one block: the configured `k`, limited by the block shape.
fn block_rank(k: usize, m: usize, width: usize) -> usize {
    k.min(m).min(width)
}

pub fn gradlite_step(
    mut state: OptimizerState,
    problem: &dyn Problem,
    batch: &Batch,
    cfg: &GradLiteConfig,
) -> Result<(OptimizerState, StepTrace)> {
    cfg.validate()?;
    check_state(&state, problem)?;
    let dims = problem.dims();
    let max_rank = dims.m.min(dims.d);
    if cfg.k > max_rank {
        return Err(Error::Rank {
            k: cfg.k,
            max: max_rank,
        });
    }
    if state.blocks.is_empty() {
        state.blocks = dims
            .blocks
            .iter()
            .map(|r| BlockState {
                factor: None,
                acc: cfg
                    .ef_mode
                    .accumulator_mode()
                    .map(|mode| ErrorAccumulator::zeros(r.len(), mode)),
            })
            .collect();
    } else if state.blocks.len() != dims.block_count() {
        return Err(Error::dim(
            "gradlite_step",
            format!(
                "state has {} blocks, problem has {}",
                state.blocks.len(),
                dims.block_count()
            ),
        ));
    }

    let t = state.step;
    let policy = cfg.policy();
    let theta = state.theta.clone();
    let loss = problem.loss(&theta)?;
    let delta = problem.error_signal(&theta, batch)?;
    ensure_finite(t, "error signal", &delta)?;

    let mut proj_parts = Vec::with_capacity(dims.block_count());
    let mut tilde_parts = Vec::with_capacity(dims.block_count());
    let mut hat_parts = Vec::with_capacity(dims.block_count());
    let mut big_parts = Vec::with_capacity(dims.block_count());
    let mut exact_parts = Vec::with_capacity(dims.block_count());

    for (b, range) in dims.blocks.iter().enumerate() {
        let seed = derive_seed(cfg.seed, b as u64);
        let block = &mut state.blocks[b];
        let due = block.factor.as_ref().is_none_or(|f| f.is_due(t, &policy));
        let reuse = due && block.factor.is_some() && problem.jacobian_is_constant();
        let jac = if (due && !reuse) || cfg.probe == Probe::Exact {
            Some(problem.jacobian_block(&theta, b)?)
        } else {
            None
        };

        let factor = match (block.factor.take(), &jac) {
            // the Jacobian and the seed are unchanged, so refactorizing would
            // reproduce the same factor
            (Some(f), _) if reuse => f.renewed(t),
            (Some(f), Some(j)) => maybe_refresh(f, j, t, &policy, seed)?,
            (Some(f), None) => f,
            (None, Some(j)) => {
                factorize(j, block_rank(cfg.k, dims.m, range.len()), &policy, t, seed)?
            }
            (None, None) => unreachable!("a missing factor is always due"),
        };

        let delta_proj = projected_signal(&factor, &delta)?;
        let g_tilde = lift(&factor, &delta_proj)?;
        ensure_finite(t, "approximate gradient", &g_tilde)?;
        let g_hat = match &block.acc {
            Some(acc) => correct(&g_tilde, acc)?,
            None => g_tilde.clone(),
        };
        let estimate = match &jac {
            Some(j) if cfg.probe == Probe::Exact => {
                exact_parts.push(matvec_t(j, &delta)?);
                estimate_delta(j, &delta, &g_tilde, Probe::Exact)?
            }
            _ => DeltaEstimate {
                delta: Vector::zeros(range.len()),
                exact: false,
            },
        };
        ensure_finite(t, "residual estimate", &estimate.delta)?;
        if let Some(acc) = block.acc.take() {
            let acc = update_accumulator(acc, &estimate)?;
            ensure_finite(t, "accumulator", acc.residual())?;
            block.acc = Some(acc);
        }
        block.factor = Some(factor);

        proj_parts.push(delta_proj);
        tilde_parts.push(g_tilde);
        hat_parts.push(g_hat);
        big_parts.push(estimate.delta);
    }

    let g_hat = Vector::concat(&hat_parts);
    ensure_finite(t, "corrected gradient", &g_hat)?;
    let next = descend(t, &theta, cfg.eta, &g_hat)?;
    state.commit(next);

    let trace = StepTrace {
        delta,
        delta_proj: Vector::concat(&proj_parts),
        g_tilde: Vector::concat(&tilde_parts),
        g_hat,
        big_delta: Vector::concat(&big_parts),
        g_exact: (cfg.probe == Probe::Exact).then(|| Vector::concat(&exact_parts)),
        loss,
    };
    Ok((state, trace))
}

/// `θ ← θ − η g` with the exact gradient.
pub fn sgd_step(
    state: OptimizerState,
    problem: &dyn Problem,
    batch: &Batch,
    eta: f64,
) -> Result<OptimizerState> {
    sgd_step_traced(state, problem, batch, eta).map(|(s, _)| s)
}

pub fn sgd_step_traced(
    mut state: OptimizerState,
    problem: &dyn Problem,
    batch: &Batch,
    eta: f64,
) -> Result<(OptimizerState, BaselineTrace)> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate must be ≥ 0, got {eta}"
        )));
    }
    check_state(&state, problem)?;
    let t = state.step;
    let loss = problem.loss(&state.theta)?;
    let g = problem.exact_gradient(&state.theta, batch)?;
    ensure_finite(t, "gradient", &g)?;
    let next = descend(t, &state.theta, eta, &g)?;
    state.commit(next);
    Ok((
        state,
        BaselineTrace {
            loss,
            gradient: g.clone(),
            direction: g,
        },
    ))
}

/// Bias-corrected Adam on the exact gradient.
pub fn adam_step(
    state: OptimizerState,
    problem: &dyn Problem,
    batch: &Batch,
    cfg: &AdamConfig,
) -> Result<OptimizerState> {
    adam_step_traced(state, problem, batch, cfg).map(|(s, _)| s)
}

pub fn adam_step_traced(
    mut state: OptimizerState,
    problem: &dyn Problem,
    batch: &Batch,
    cfg: &AdamConfig,
) -> Result<(OptimizerState, BaselineTrace)> {
    cfg.validate()?;
    check_state(&state, problem)?;
    let t = state.step;
    let d = state.theta.len();
    let loss = problem.loss(&state.theta)?;
    let g = problem.exact_gradient(&state.theta, batch)?;
    ensure_finite(t, "gradient", &g)?;

    let moments = state.adam.get_or_insert_with(|| AdamMoments {
        m: vec![0.0; d],
        v: vec![0.0; d],
    });
    let power = (t + 1) as i32;
    let c1 = 1.0 - cfg.beta1.powi(power);
    let c2 = 1.0 - cfg.beta2.powi(power);
    let mut direction = Vec::with_capacity(d);
    for (i, &gi) in g.iter().enumerate() {
        moments.m[i] = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * gi;
        moments.v[i] = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * gi * gi;
        let m_hat = moments.m[i] / c1;
        let v_hat = moments.v[i] / c2;
        direction.push(m_hat / (v_hat.sqrt() + cfg.eps));
    }
    let direction = Vector::from_raw(direction);
    let next = descend(t, &state.theta, cfg.eta, &direction)?;
    state.commit(next);
    Ok((
        state,
        BaselineTrace {
            loss,
            gradient: g,
            direction,
        },
    ))
}

/// Projected SGD: `θ ← θ − η P Pᵀ g`, where `P` spans the top-`k` left
/// singular vectors of a window of recent exact gradients, refreshed every
/// `τ` steps. No error feedback.
pub fn galore_like_step(
    state: OptimizerState,
    problem: &dyn Problem,
    batch: &Batch,
    cfg: &GaloreConfig,
) -> Result<OptimizerState> {
    galore_like_step_traced(state, problem, batch, cfg).map(|(s, _)| s)
}

pub fn galore_like_step_traced(
    mut state: OptimizerState,
    problem: &dyn Problem,
    batch: &Batch,
    cfg: &GaloreConfig,
) -> Result<(OptimizerState, BaselineTrace)> {
    cfg.validate()?;
    check_state(&state, problem)?;
    let t = state.step;
    let d = state.theta.len();
    let loss = problem.loss(&state.theta)?;
    let g = problem.exact_gradient(&state.theta, batch)?;
    ensure_finite(t, "gradient", &g)?;

    let gal = state.galore.get_or_insert_with(|| GaloreState {
        window: VecDeque::with_capacity(cfg.window()),
        basis: None,
        birth_step: 0,
    });
    let direction = if cfg.k >= d {
        g.clone()
    } else {
        if gal.window.len() == cfg.window() {
            gal.window.pop_front();
        }
        gal.window.push_back(g.clone());
        if gal.basis.is_none() || t - gal.birth_step >= cfg.tau {
            gal.basis = Some(gradient_basis(&gal.window, cfg)?);
            gal.birth_step = t;
        }
        let p = gal.basis.as_ref().unwrap();
        matvec(p, &matvec_t(p, &g)?)?
    };
    let next = descend(t, &state.theta, cfg.eta, &direction)?;
    state.commit(next);
    Ok((
        state,
        BaselineTrace {
            loss,
            gradient: g,
            direction,
        },
    ))
}

/// Leading left singular vectors of the `d × w` window matrix, dropping
/// directions the window does not actually span.
fn gradient_basis(window: &VecDeque<Vector>, cfg: &GaloreConfig) -> Result<Mat> {
    let cols: Vec<Vec<f64>> = window.iter().map(|g| g.as_slice().to_vec()).collect();
    let w = Mat::from_columns(&cols);
    let rank = cfg.k.min(w.rows()).min(w.cols());
    let svd = truncated_svd(&w, rank, cfg.power_iters, cfg.seed)?;
    let top = svd.s[0];
    let keep = svd
        .s
        .iter()
        .take_while(|&&s| top > 0.0 && s > 1e-12 * top)
        .count()
        .max(1);
    let u = svd.u.to_columns();
    Ok(Mat::from_columns(&u[..keep]))
}

/// `θ̄_T = (θ₁ + … + θ_T) / T`
pub fn averaged_iterate(state: &OptimizerState) -> Result<Vector> {
    if state.step == 0 {
        return Err(Error::EmptyRun);
    }
    Ok(state.theta_sum.scaled(1.0 / state.step as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{quadratic_problem, Quadratic};

    fn v(x: &[f64]) -> Vector {
        Vector::from_slice(x).unwrap()
    }

    fn diag_quadratic(a: &[f64]) -> Quadratic {
        quadratic_problem(Mat::diag(a), Vector::zeros(a.len()), 0.0).unwrap()
    }

    fn cfg(k: usize, ef_mode: EfMode) -> GradLiteConfig {
        GradLiteConfig {
            eta: 0.1,
            k,
            tau: 10,
            ef_mode,
            ..GradLiteConfig::default()
        }
    }

    fn close(a: &Vector, b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn full_rank_step_is_gradient_descent() {
        let p = diag_quadratic(&[1.0, 2.0]);
        let s = OptimizerState::new(v(&[1.0, 1.0]));
        let (s, trace) =
            gradlite_step(s, &p, &Batch::noiseless(), &cfg(2, EfMode::EfStandard)).unwrap();
        assert!(close(trace.g_exact.as_ref().unwrap(), &[1.0, 2.0]));
        assert!(close(s.theta(), &[0.9, 0.8]));
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn rank_one_without_feedback_freezes_weak_direction() {
        let p = diag_quadratic(&[1.0, 2.0]);
        let s = OptimizerState::new(v(&[1.0, 1.0]));
        let (s, trace) = gradlite_step(s, &p, &Batch::noiseless(), &cfg(1, EfMode::Off)).unwrap();
        assert!(close(&trace.g_tilde, &[0.0, 2.0]));
        assert!(close(s.theta(), &[1.0, 0.8]));
        assert!(s.residual().is_none());
    }

    #[test]
    fn feedback_applies_residual_one_step_later() {
        let p = diag_quadratic(&[1.0, 2.0]);
        let c = cfg(1, EfMode::EfStandard);
        let s = OptimizerState::new(v(&[1.0, 1.0]));
        let (s, t1) = gradlite_step(s, &p, &Batch::noiseless(), &c).unwrap();
        assert!(close(&t1.big_delta, &[1.0, 0.0]));
        assert!(close(s.theta(), &[1.0, 0.8]));
        let (s, _) = gradlite_step(s, &p, &Batch::noiseless(), &c).unwrap();
        assert!((s.theta()[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn paper_mode_keeps_accumulating() {
        let p = diag_quadratic(&[1.0, 2.0]);
        let c = cfg(1, EfMode::Paper);
        let mut s = OptimizerState::new(v(&[1.0, 1.0]));
        let mut sum = Vector::zeros(2);
        for _ in 0..5 {
            let (next, trace) = gradlite_step(s, &p, &Batch::noiseless(), &c).unwrap();
            sum.add_assign(&trace.big_delta);
            s = next;
        }
        assert_eq!(s.residual().unwrap(), sum);
    }

    #[test]
    fn trace_shapes() {
        let p = diag_quadratic(&[1.0, 2.0, 3.0]);
        let mut c = cfg(2, EfMode::EfStandard);
        let (_, t) = gradlite_step(
            OptimizerState::new(v(&[1.0, 1.0, 1.0])),
            &p,
            &Batch::noiseless(),
            &c,
        )
        .unwrap();
        assert_eq!(
            (t.delta.len(), t.delta_proj.len(), t.g_hat.len()),
            (3, 2, 3)
        );
        c.probe = Probe::None;
        let (_, t) = gradlite_step(
            OptimizerState::new(v(&[1.0, 1.0, 1.0])),
            &p,
            &Batch::noiseless(),
            &c,
        )
        .unwrap();
        assert!(t.g_exact.is_none());
        assert_eq!(t.big_delta, Vector::zeros(3));
    }

    #[test]
    fn rank_above_problem_is_rejected() {
        let p = diag_quadratic(&[1.0, 2.0]);
        let r = gradlite_step(
            OptimizerState::new(v(&[1.0, 1.0])),
            &p,
            &Batch::noiseless(),
            &cfg(3, EfMode::Off),
        );
        assert!(matches!(r, Err(Error::Rank { k: 3, max: 2 })));
        let mut bad = cfg(1, EfMode::Off);
        bad.eta = 0.0;
        let r = gradlite_step(
            OptimizerState::new(v(&[1.0, 1.0])),
            &p,
            &Batch::noiseless(),
            &bad,
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn huge_step_reports_divergence_with_index() {
        let p = diag_quadratic(&[1.0, 2.0]);
        let mut c = cfg(2, EfMode::Off);
        c.eta = 1e7;
        let mut s = OptimizerState::new(v(&[1.0, 1.0]));
        let mut failed = None;
        for step in 0..10 {
            match gradlite_step(s, &p, &Batch::noiseless(), &c) {
                Ok((next, _)) => s = next,
                Err(Error::Diverged { step: at, .. }) => {
                    failed = Some((step, at));
                    break;
                }
                Err(e) => panic!("{e}"),
            }
        }
        let (step, at) = failed.expect("should diverge");
        assert_eq!(step, at);
    }

    #[test]
    fn sgd_examples() {
        let p = diag_quadratic(&[1.0, 1.0]);
        let s = sgd_step(
            OptimizerState::new(v(&[3.0, 4.0])),
            &p,
            &Batch::noiseless(),
            1.0,
        )
        .unwrap();
        assert_eq!(s.theta().as_slice(), &[0.0, 0.0]);
        let s = sgd_step(
            OptimizerState::new(v(&[3.0, 4.0])),
            &p,
            &Batch::noiseless(),
            0.0,
        )
        .unwrap();
        assert_eq!(s.theta().as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn adam_first_step_has_magnitude_eta() {
        let p = diag_quadratic(&[1.0, 3.0]);
        let c = AdamConfig {
            eta: 0.01,
            ..AdamConfig::default()
        };
        let s = adam_step(
            OptimizerState::new(v(&[2.0, -5.0])),
            &p,
            &Batch::noiseless(),
            &c,
        )
        .unwrap();
        assert!((s.theta()[0] - 1.99).abs() < 1e-9);
        assert!((s.theta()[1] + 4.99).abs() < 1e-9);
    }

    #[test]
    fn adam_with_zero_gradient_stays_put() {
        let p = diag_quadratic(&[1.0, 3.0]);
        let mut s = OptimizerState::new(Vector::zeros(2));
        for _ in 0..20 {
            s = adam_step(s, &p, &Batch::noiseless(), &AdamConfig::default()).unwrap();
        }
        assert_eq!(s.theta(), &Vector::zeros(2));
    }

    #[test]
    fn adam_matches_reference_loop() {
        let p = diag_quadratic(&[0.5, 4.0]);
        let c = AdamConfig {
            eta: 0.05,
            ..AdamConfig::default()
        };
        let mut s = OptimizerState::new(v(&[1.5, -2.0]));
        for _ in 0..200 {
            s = adam_step(s, &p, &Batch::noiseless(), &c).unwrap();
        }

        let a = [0.5, 4.0];
        let mut x = [1.5f64, -2.0];
        let (mut m, mut w) = ([0.0f64; 2], [0.0f64; 2]);
        for t in 1..=200 {
            for i in 0..2 {
                let g = a[i] * x[i];
                m[i] = 0.9 * m[i] + 0.1 * g;
                w[i] = 0.999 * w[i] + 0.001 * g * g;
                let mh = m[i] / (1.0 - 0.9f64.powi(t));
                let wh = w[i] / (1.0 - 0.999f64.powi(t));
                x[i] -= 0.05 * mh / (wh.sqrt() + 1e-8);
            }
        }
        let reference = 0.5 * (a[0] * x[0] * x[0] + a[1] * x[1] * x[1]);
        assert!((p.loss(s.theta()).unwrap() - reference).abs() < 1e-10);
    }

    fn galore(k: usize, tau: usize) -> GaloreConfig {
        GaloreConfig {
            eta: 0.1,
            k,
            tau,
            seed: 0,
            power_iters: 4,
        }
    }

    #[test]
    fn galore_full_rank_is_sgd() {
        let p = diag_quadratic(&[1.0, 2.0, 3.0]);
        let mut a = OptimizerState::new(v(&[1.0, -1.0, 2.0]));
        let mut b = a.clone();
        for _ in 0..10 {
            a = galore_like_step(a, &p, &Batch::noiseless(), &galore(3, 2)).unwrap();
            b = sgd_step(b, &p, &Batch::noiseless(), 0.1).unwrap();
        }
        assert_eq!(a.theta(), b.theta());
    }

    #[test]
    fn galore_keeps_a_repeated_gradient() {
        // A = I with θ on a ray: every gradient is parallel to θ₀
        let p = diag_quadratic(&[1.0, 1.0, 1.0]);
        let theta0 = v(&[1.0, 2.0, -1.0]);
        let mut s = OptimizerState::new(theta0.clone());
        for _ in 0..4 {
            let (next, trace) =
                galore_like_step_traced(s, &p, &Batch::noiseless(), &galore(2, 1)).unwrap();
            assert!(trace.direction.sub(&trace.gradient).unwrap().max_abs() < 1e-12);
            s = next;
        }
    }

    #[test]
    fn galore_rank_one_ignores_weak_direction() {
        let p = diag_quadratic(&[100.0, 1.0]);
        let mut s = OptimizerState::new(v(&[1.0, 1.0]));
        let c = GaloreConfig {
            eta: 0.005,
            ..galore(1, 1000)
        };
        for _ in 0..200 {
            s = galore_like_step(s, &p, &Batch::noiseless(), &c).unwrap();
        }
        // basis frozen at g₀ ∝ (100, 1): the weak coordinate barely moves
        assert!(s.theta()[1] > 0.9);
        assert!(p.loss(s.theta()).unwrap() > 0.4);
    }

    #[test]
    fn averaged_iterate_examples() {
        assert!(matches!(
            averaged_iterate(&OptimizerState::new(Vector::zeros(2))),
            Err(Error::EmptyRun)
        ));
        let mut s = OptimizerState::new(Vector::zeros(2));
        for _ in 0..3 {
            s.commit(v(&[1.5, -2.0]));
        }
        assert_eq!(averaged_iterate(&s).unwrap().as_slice(), &[1.5, -2.0]);

        let mut s = OptimizerState::new(Vector::zeros(2));
        for t in 0..6 {
            s.commit(if t % 2 == 0 {
                v(&[0.0, 0.0])
            } else {
                v(&[2.0, 2.0])
            });
        }
        assert_eq!(averaged_iterate(&s).unwrap().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn averaged_iterate_matches_trajectory_mean() {
        let p = diag_quadratic(&[0.3, 1.0, 2.0]);
        let mut s = OptimizerState::new(v(&[1.0, 1.0, 1.0]));
        let mut history = Vec::new();
        for _ in 0..100 {
            s = sgd_step(s, &p, &Batch::noiseless(), 0.2).unwrap();
            history.push(s.theta().clone());
        }
        let avg = averaged_iterate(&s).unwrap();
        for i in 0..3 {
            let mean = history.iter().map(|h| h[i]).sum::<f64>() / 100.0;
            assert!((avg[i] - mean).abs() < 1e-12);
        }
    }
}
