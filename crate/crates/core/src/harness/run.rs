use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use super::spec::{OptimizerSpec, ProblemSpec};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::optimizer::{
    adam_step_traced, averaged_iterate, galore_like_step_traced, gradlite_step, sgd_step_traced,
    OptimizerState,
};
use crate::problems::{Batch, Problem};
use crate::rng::{derive_seed, SplitMix64, Stream};

pub const METRICS_HEADER: &str =
    "step,loss,gap,g_norm,gtilde_norm,r_norm,delta_norm,bwd_scalars,opt_scalars";

/// Metrics after step `step` (so `θ_step` is the newest iterate). Norms a
/// method does not produce are NaN.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    /// `𝓛(θ_step)`, noiseless.
    pub loss: f64,
    /// `𝓛(θ̄_step) − 𝓛*`, NaN when `𝓛*` is unknown.
    pub gap: f64,
    pub g_norm: f64,
    pub gtilde_norm: f64,
    pub r_norm: f64,
    pub delta_norm: f64,
    /// Length of the error signal the backward pass keeps.
    pub bwd_scalars: usize,
    /// Persistent optimizer state.
    pub opt_scalars: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RunMetrics {
    /// One per completed step; empty for summary-only runs.
    pub records: Vec<StepRecord>,
    pub steps_completed: usize,
    pub final_theta: Vector,
    pub final_loss: f64,
    /// Gap of the averaged iterate; NaN when unknown or no step completed.
    pub final_gap: f64,
    pub diverged: Option<Divergence>,
    /// Not written to any output file, which must stay byte-reproducible.
    pub wall_time_secs: f64,
}

/// What one step of any optimizer reports.
struct StepInfo {
    g_exact: Option<Vector>,
    g_tilde: Option<Vector>,
    big_delta: Option<Vector>,
    bwd_scalars: usize,
}

fn step_any(
    state: OptimizerState,
    problem: &dyn Problem,
    batch: &Batch,
    opt: &OptimizerSpec,
) -> Result<(OptimizerState, StepInfo)> {
    let m = problem.dims().m;
    match opt {
        OptimizerSpec::GradLite(cfg) => {
            let (s, trace) = gradlite_step(state, problem, batch, cfg)?;
            Ok((
                s,
                StepInfo {
                    bwd_scalars: trace.delta_proj.len(),
                    g_exact: trace.g_exact,
                    g_tilde: Some(trace.g_tilde),
                    big_delta: Some(trace.big_delta),
                },
            ))
        }
        OptimizerSpec::Sgd { eta } => {
            let (s, trace) = sgd_step_traced(state, problem, batch, *eta)?;
            Ok((s, baseline_info(trace.gradient, None, m)))
        }
        OptimizerSpec::Adam(cfg) => {
            let (s, trace) = adam_step_traced(state, problem, batch, cfg)?;
            Ok((s, baseline_info(trace.gradient, None, m)))
        }
        OptimizerSpec::Galore(cfg) => {
            let (s, trace) = galore_like_step_traced(state, problem, batch, cfg)?;
            Ok((s, baseline_info(trace.gradient, Some(trace.direction), m)))
        }
    }
}

fn baseline_info(g: Vector, projected: Option<Vector>, m: usize) -> StepInfo {
    StepInfo {
        g_exact: Some(g),
        g_tilde: projected,
        big_delta: None,
        bwd_scalars: m,
    }
}

fn norm_or_nan(v: Option<&Vector>) -> f64 {
    v.map_or(f64::NAN, Vector::norm)
}

fn gap_of(problem: &dyn Problem, state: &OptimizerState) -> Result<f64> {
    match (problem.optimal_loss(), averaged_iterate(state)) {
        (Some(best), Ok(avg)) => Ok(problem.loss(&avg)? - best),
        _ => Ok(f64::NAN),
    }
}

/// Builds the problem from `seed` and runs `steps` steps.
pub fn run_experiment(
    problem: &ProblemSpec,
    opt: &OptimizerSpec,
    steps: usize,
    seed: u64,
) -> Result<RunMetrics> {
    if steps == 0 {
        return Err(Error::Config("number of steps must be at least 1".into()));
    }
    opt.validate()?;
    let instance = problem.build(seed)?;
    run_on_problem(instance.as_ref(), opt, steps, seed, true)
}

/// Runs on an already-built problem. Batch noise and any random basis are
/// drawn from `seed`. With `detailed == false` no per-step records are kept.
pub fn run_on_problem(
    problem: &dyn Problem,
    opt: &OptimizerSpec,
    steps: usize,
    seed: u64,
    detailed: bool,
) -> Result<RunMetrics> {
    if steps == 0 {
        return Err(Error::Config("number of steps must be at least 1".into()));
    }
    opt.validate()?;
    if let OptimizerSpec::GradLite(cfg) = opt {
        let dims = problem.dims();
        let max = dims.m.min(dims.d);
        if cfg.k > max {
            return Err(Error::Rank { k: cfg.k, max });
        }
    }
    let opt = opt.seeded(derive_seed(seed, Stream::Basis as u64));
    let mut noise = SplitMix64::for_stream(seed, Stream::Noise);
    let start = Instant::now();

    let mut state = OptimizerState::for_problem(problem);
    let mut records = Vec::with_capacity(if detailed { steps } else { 0 });
    let mut diverged = None;
    for t in 0..steps {
        let batch = problem.sample_batch(&mut noise);
        let previous = state.clone();
        match step_any(state, problem, &batch, &opt) {
            Ok((next, info)) => {
                state = next;
                if detailed {
                    records.push(StepRecord {
                        step: t + 1,
                        loss: problem.loss(state.theta())?,
                        gap: gap_of(problem, &state)?,
                        g_norm: norm_or_nan(info.g_exact.as_ref()),
                        gtilde_norm: norm_or_nan(info.g_tilde.as_ref()),
                        r_norm: norm_or_nan(state.residual().as_ref()),
                        delta_norm: norm_or_nan(info.big_delta.as_ref()),
                        bwd_scalars: info.bwd_scalars,
                        opt_scalars: state.stored_scalars(),
                    });
                }
            }
            Err(Error::Diverged { step, reason }) => {
                diverged = Some(Divergence { step, reason });
                state = previous;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let final_loss = problem.loss(state.theta())?;
    let final_gap = gap_of(problem, &state)?;
    Ok(RunMetrics {
        records,
        steps_completed: state.step(),
        final_theta: state.theta().clone(),
        final_loss,
        final_gap,
        diverged,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// 17 significant digits; non-finite values as `nan`, `inf`, `-inf`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

pub fn write_metrics_csv<W: Write>(metrics: &RunMetrics, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    let mut line = String::new();
    for r in &metrics.records {
        line.clear();
        let _ = writeln!(
            line,
            "{},{},{},{},{},{},{},{},{}",
            r.step,
            format_float(r.loss),
            format_float(r.gap),
            format_float(r.g_norm),
            format_float(r.gtilde_norm),
            format_float(r.r_norm),
            format_float(r.delta_norm),
            r.bwd_scalars,
            r.opt_scalars
        );
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error_feedback::Probe;
    use crate::optimizer::{EfMode, GradLiteConfig};

    fn quad() -> ProblemSpec {
        ProblemSpec::Quadratic {
            dim: 6,
            cond: 4.0,
            noise: 0.0,
        }
    }

    #[test]
    fn zero_steps_rejected() {
        let r = run_experiment(&quad(), &OptimizerSpec::Sgd { eta: 0.1 }, 0, 0);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn invalid_optimizer_rejected_before_running() {
        let r = run_experiment(&quad(), &OptimizerSpec::Sgd { eta: -1.0 }, 5, 0);
        assert!(matches!(r, Err(Error::Config(_))));
        let cfg = GradLiteConfig {
            k: 7,
            ..GradLiteConfig::default()
        };
        let r = run_experiment(&quad(), &OptimizerSpec::GradLite(cfg), 5, 0);
        assert!(matches!(r, Err(Error::Rank { k: 7, max: 6 })));
    }

    #[test]
    fn gradient_descent_contracts_loss() {
        // λ ∈ [0.25, 1], η = 1/L: loss contracts by at least (1 − 0.25)² per step
        let metrics = run_experiment(&quad(), &OptimizerSpec::Sgd { eta: 1.0 }, 100, 3).unwrap();
        let p = quad().build(3).unwrap();
        let initial = p.loss(&p.initial_theta()).unwrap();
        assert_eq!(metrics.records.len(), 100);
        assert!(metrics.final_loss < 1e-6 * initial);
        assert!(metrics.records.iter().all(|r| r.gap >= -1e-12));
    }

    #[test]
    fn divergence_is_recorded_and_truncates() {
        let cfg = GradLiteConfig {
            eta: 1e6,
            k: 6,
            ef_mode: EfMode::Paper,
            ..GradLiteConfig::default()
        };
        let m = run_experiment(&quad(), &OptimizerSpec::GradLite(cfg), 50, 0).unwrap();
        let div = m.diverged.expect("diverges");
        assert_eq!(m.records.len(), div.step);
        assert_eq!(m.steps_completed, div.step);
    }

    #[test]
    fn csv_is_reproducible() {
        let cfg = GradLiteConfig {
            k: 2,
            probe: Probe::Exact,
            ..GradLiteConfig::default()
        };
        let spec = ProblemSpec::Quadratic {
            dim: 6,
            cond: 4.0,
            noise: 0.3,
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        let opt = OptimizerSpec::GradLite(cfg);
        write_metrics_csv(&run_experiment(&spec, &opt, 40, 9).unwrap(), &mut a).unwrap();
        write_metrics_csv(&run_experiment(&spec, &opt, 40, 9).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(METRICS_HEADER));
        assert_eq!(text.lines().count(), 41);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn baseline_columns() {
        let m = run_experiment(&quad(), &OptimizerSpec::Sgd { eta: 0.5 }, 3, 0).unwrap();
        let r = &m.records[0];
        assert!(r.g_norm.is_finite() && r.gtilde_norm.is_nan() && r.r_norm.is_nan());
        assert_eq!((r.bwd_scalars, r.opt_scalars), (6, 0));
    }

    #[test]
    fn float_format() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(f64::NAN), "nan");
        assert_eq!(format_float(f64::NEG_INFINITY), "-inf");
        assert_eq!("1.0000000000000001e-1".parse::<f64>().unwrap(), 0.1);
    }
}
