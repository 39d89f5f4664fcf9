//! Three-row ablation: full GradLite against the same method without error
//! feedback and with a fixed random basis.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{format_float, run_on_problem};
use super::spec::{OptimizerSpec, ProblemSpec};
use crate::error::{Error, Result};
use crate::error_feedback::Probe;
use crate::jacobian_approx::{BasisMode, DEFAULT_POWER_ITERS};
use crate::optimizer::{EfMode, GradLiteConfig};
use crate::problems::{DatasetKind, Problem};

/// Half-decade steps from 1e-3 to 1.
pub const DEFAULT_ETA_GRID: [f64; 7] = [1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// SVD basis, standard error feedback.
    Full,
    /// SVD basis, no error feedback.
    NoEf,
    /// Seeded random basis, standard error feedback.
    RandomProjection,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoEf, Variant::RandomProjection];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoEf => "no-ef",
            Variant::RandomProjection => "random-projection",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub n: usize,
    pub dim: usize,
    pub l2: f64,
    pub k: usize,
    pub tau: usize,
    pub steps: usize,
    /// Frozen step size; tuned on the full method when absent.
    pub eta: Option<f64>,
    pub eta_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub power_iters: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            n: 512,
            dim: 128,
            l2: 1e-3,
            k: 8,
            tau: 10,
            steps: 3000,
            eta: None,
            eta_grid: DEFAULT_ETA_GRID.to_vec(),
            seeds: vec![0, 1, 2],
            power_iters: DEFAULT_POWER_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub final_loss: f64,
    pub final_gap: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub eta: f64,
    /// Final loss of the full method for each grid point, when tuned.
    pub tuning: Vec<(f64, f64)>,
    /// Sorted by variant, then seed.
    pub rows: Vec<AblationRow>,
}

impl AblationConfig {
    pub fn problem(&self) -> ProblemSpec {
        ProblemSpec::Logistic {
            n: self.n,
            dim: self.dim,
            dataset: DatasetKind::LowRankRegression,
            l2: self.l2,
        }
    }

    pub fn optimizer(&self, variant: Variant, eta: f64) -> OptimizerSpec {
        let (ef_mode, basis) = match variant {
            Variant::Full => (EfMode::EfStandard, BasisMode::Svd),
            Variant::NoEf => (EfMode::Off, BasisMode::Svd),
            Variant::RandomProjection => (EfMode::EfStandard, BasisMode::RandomProjection),
        };
        OptimizerSpec::GradLite(GradLiteConfig {
            eta,
            k: self.k,
            tau: self.tau,
            ef_mode,
            probe: Probe::Exact,
            basis,
            seed: 0,
            power_iters: self.power_iters,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("ablation needs at least one seed".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("number of steps must be at least 1".into()));
        }
        if self.eta.is_none() && self.eta_grid.is_empty() {
            return Err(Error::Config(
                "either a step size or a tuning grid is required".into(),
            ));
        }
        let (m, d) = self.problem().dims();
        if self.k == 0 || self.k > m.min(d) {
            return Err(Error::Rank {
                k: self.k,
                max: m.min(d),
            });
        }
        for eta in self.eta.iter().chain(&self.eta_grid) {
            self.optimizer(Variant::Full, *eta).validate()?;
        }
        Ok(())
    }
}

fn final_loss(
    problem: &dyn Problem,
    opt: &OptimizerSpec,
    steps: usize,
    seed: u64,
) -> Result<AblationOutcome> {
    let m = run_on_problem(problem, opt, steps, seed, false)?;
    Ok(AblationOutcome {
        final_loss: m.final_loss,
        final_gap: m.final_gap,
        diverged: m.diverged.is_some(),
    })
}

struct AblationOutcome {
    final_loss: f64,
    final_gap: f64,
    diverged: bool,
}

pub fn ablation_suite(cfg: &AblationConfig) -> Result<AblationTable> {
    cfg.validate()?;
    let spec = cfg.problem();
    let problems = cfg
        .seeds
        .par_iter()
        .map(|&s| spec.build(s))
        .collect::<Result<Vec<_>>>()?;

    let (eta, tuning) = match cfg.eta {
        Some(eta) => (eta, Vec::new()),
        None => {
            let tune_problem = problems[0].as_ref();
            let tune_seed = cfg.seeds[0];
            let losses = cfg
                .eta_grid
                .par_iter()
                .map(|&eta| {
                    let out = final_loss(
                        tune_problem,
                        &cfg.optimizer(Variant::Full, eta),
                        cfg.steps,
                        tune_seed,
                    )?;
                    let score = if out.diverged || !out.final_loss.is_finite() {
                        f64::INFINITY
                    } else {
                        out.final_loss
                    };
                    Ok((eta, score))
                })
                .collect::<Result<Vec<_>>>()?;
            let best = losses
                .iter()
                .fold(None, |best: Option<(f64, f64)>, &(eta, loss)| match best {
                    Some((_, b)) if b <= loss => best,
                    _ => Some((eta, loss)),
                })
                .expect("non-empty grid");
            if !best.1.is_finite() {
                return Err(Error::Config(
                    "every step size in the tuning grid diverged".into(),
                ));
            }
            (best.0, losses)
        }
    };

    let jobs: Vec<(Variant, usize)> = Variant::ALL
        .iter()
        .flat_map(|&v| (0..cfg.seeds.len()).map(move |i| (v, i)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(variant, i)| {
            let seed = cfg.seeds[i];
            let out = final_loss(
                problems[i].as_ref(),
                &cfg.optimizer(variant, eta),
                cfg.steps,
                seed,
            )?;
            Ok(AblationRow {
                variant,
                seed,
                final_loss: out.final_loss,
                final_gap: out.final_gap,
                diverged: out.diverged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = rows;
    rows.sort_by(|a, b| a.variant.cmp(&b.variant).then(a.seed.cmp(&b.seed)));
    Ok(AblationTable { eta, tuning, rows })
}

impl AblationTable {
    pub fn row(&self, variant: Variant, seed: u64) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.seed == seed)
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Whether the full method has the strictly lowest final loss on `seed`.
    pub fn full_wins(&self, seed: u64) -> bool {
        let full = match self.row(Variant::Full, seed) {
            Some(r) => r.final_loss,
            None => return false,
        };
        [Variant::NoEf, Variant::RandomProjection]
            .iter()
            .all(|&v| self.row(v, seed).is_some_and(|r| full < r.final_loss))
    }

    /// Columns `variant,seed,final_loss,final_gap`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,seed,final_loss,final_gap\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.variant.label(),
                r.seed,
                format_float(r.final_loss),
                format_float(r.final_gap)
            );
        }
        out
    }
}
