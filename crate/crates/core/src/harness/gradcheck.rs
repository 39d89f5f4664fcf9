//! Gradient oracles run against every problem in the suite.

use std::fmt::Write as _;

use serde::Serialize;

use super::run::format_float;
use super::spec::ProblemSpec;
use crate::error::Result;
use crate::linalg::{matvec_t, Vector};
use crate::problems::{finite_difference_range, Batch, DatasetKind, Problem};
use crate::rng::{derive_seed, SplitMix64};

pub const CHAIN_RULE_DRAWS: usize = 100;
pub const FD_DRAWS: usize = 10;
pub const LIPSCHITZ_PAIRS: usize = 1000;
pub const FD_STEP: f64 = 1e-5;
pub const CHAIN_RULE_TOL: f64 = 1e-10;
pub const FD_TOL_CONVEX: f64 = 1e-5;
pub const FD_TOL_NONCONVEX: f64 = 1e-4;
const LIPSCHITZ_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// `‖J_bᵀδ − g_b‖ / (1 + ‖g_b‖)`
    ChainRule,
    /// `‖fd_b − g_b‖ / ‖g_b‖`
    FiniteDifference,
    /// `‖g(θ₁) − g(θ₂)‖ / (L ‖θ₁ − θ₂‖)`
    Lipschitz,
}

impl CheckKind {
    pub fn label(self) -> &'static str {
        match self {
            CheckKind::ChainRule => "chain-rule",
            CheckKind::FiniteDifference => "finite-difference",
            CheckKind::Lipschitz => "lipschitz",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub problem: String,
    /// `None` for whole-problem checks.
    pub block: Option<usize>,
    pub kind: CheckKind,
    pub draws: usize,
    /// Worst value of the check's error measure over all draws.
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub results: Vec<CheckResult>,
}

impl GradCheckReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.results.iter().filter(|r| !r.passed).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("problem,block,check,draws,max_error,tolerance,passed\n");
        for r in &self.results {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.problem,
                r.block.map_or_else(|| "all".to_string(), |b| b.to_string()),
                r.kind.label(),
                r.draws,
                format_float(r.max_error),
                format_float(r.tolerance),
                r.passed
            );
        }
        out
    }
}

/// The problems the suite checks by default, as `(label, spec)` pairs.
pub fn default_check_specs() -> Vec<(&'static str, ProblemSpec)> {
    vec![
        (
            "quadratic",
            ProblemSpec::Quadratic {
                dim: 10,
                cond: 50.0,
                noise: 0.5,
            },
        ),
        (
            "logistic-gaussian",
            ProblemSpec::Logistic {
                n: 60,
                dim: 8,
                dataset: DatasetKind::GaussianLogistic,
                l2: 0.0,
            },
        ),
        (
            "logistic-low-rank",
            ProblemSpec::Logistic {
                n: 60,
                dim: 8,
                dataset: DatasetKind::LowRankRegression,
                l2: 1e-2,
            },
        ),
        (
            "mlp",
            ProblemSpec::Mlp {
                widths: vec![4, 6, 5, 1],
                n: 12,
            },
        ),
    ]
}

pub fn grad_check_suite(seed: u64) -> Result<GradCheckReport> {
    let built = default_check_specs()
        .into_iter()
        .map(|(label, spec)| Ok((label, spec.build(seed)?)))
        .collect::<Result<Vec<_>>>()?;
    let named: Vec<(&str, &dyn Problem)> = built.iter().map(|(l, p)| (*l, p.as_ref())).collect();
    grad_check_problems(&named, seed)
}

fn random_theta(rng: &mut SplitMix64, d: usize) -> Vector {
    Vector::from_fn(d, |_| rng.standard_normal())
}

fn record(
    problem: &str,
    block: Option<usize>,
    kind: CheckKind,
    draws: usize,
    max_error: f64,
    tolerance: f64,
) -> CheckResult {
    CheckResult {
        problem: problem.to_string(),
        block,
        kind,
        draws,
        max_error,
        tolerance,
        // NaN errors fail
        passed: max_error <= tolerance,
    }
}

/// Runs every check on each named problem. Per-block checks are reported
/// per block; the Lipschitz check runs only when a constant is declared.
pub fn grad_check_problems(
    problems: &[(&str, &dyn Problem)],
    seed: u64,
) -> Result<GradCheckReport> {
    let mut results = Vec::new();
    for (p_idx, (label, problem)) in problems.iter().enumerate() {
        let dims = problem.dims().clone();
        let mut rng = SplitMix64::new(derive_seed(seed, p_idx as u64));
        let blocks = dims.block_count();
        let noiseless = Batch::noiseless();

        let mut chain = vec![0.0f64; blocks];
        for _ in 0..CHAIN_RULE_DRAWS {
            let theta = random_theta(&mut rng, dims.d);
            let delta = problem.error_signal(&theta, &noiseless)?;
            let g = problem.exact_gradient(&theta, &noiseless)?;
            for (b, range) in dims.blocks.iter().enumerate() {
                let jb = problem.jacobian_block(&theta, b)?;
                let gb = g.slice(range.clone());
                let err = matvec_t(&jb, &delta)?.sub(&gb)?.norm() / (1.0 + gb.norm());
                chain[b] = chain[b].max(if err.is_nan() { f64::INFINITY } else { err });
            }
        }

        let fd_tol = if problem.is_convex() {
            FD_TOL_CONVEX
        } else {
            FD_TOL_NONCONVEX
        };
        let mut fd = vec![0.0f64; blocks];
        for _ in 0..FD_DRAWS {
            let theta = random_theta(&mut rng, dims.d);
            let g = problem.exact_gradient(&theta, &noiseless)?;
            for (b, range) in dims.blocks.iter().enumerate() {
                let gb = g.slice(range.clone());
                let approx = finite_difference_range(*problem, &theta, FD_STEP, range.clone())?;
                let err = approx.sub(&gb)?.norm() / gb.norm().max(1e-12);
                fd[b] = fd[b].max(if err.is_nan() { f64::INFINITY } else { err });
            }
        }

        for b in 0..blocks {
            results.push(record(
                label,
                Some(b),
                CheckKind::ChainRule,
                CHAIN_RULE_DRAWS,
                chain[b],
                CHAIN_RULE_TOL,
            ));
            results.push(record(
                label,
                Some(b),
                CheckKind::FiniteDifference,
                FD_DRAWS,
                fd[b],
                fd_tol,
            ));
        }

        if let Some(l) = problem.smoothness() {
            let mut worst = 0.0f64;
            for _ in 0..LIPSCHITZ_PAIRS {
                let a = random_theta(&mut rng, dims.d);
                let b = random_theta(&mut rng, dims.d);
                let ga = problem.exact_gradient(&a, &noiseless)?;
                let gb = problem.exact_gradient(&b, &noiseless)?;
                let dist = a.sub(&b)?.norm();
                if dist > 0.0 {
                    worst = worst.max(ga.sub(&gb)?.norm() / (l * dist));
                }
            }
            results.push(record(
                label,
                None,
                CheckKind::Lipschitz,
                LIPSCHITZ_PAIRS,
                worst,
                1.0 + LIPSCHITZ_SLACK,
            ));
        }
    }
    Ok(GradCheckReport { results })
}
