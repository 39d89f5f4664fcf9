//! Scalar-count memory accounting.
//!
//! Counts are pure functions of the configured shapes. The exact-backprop
//! baseline keeps the error signal (`m` scalars) and the cached activations
//! needed to form `Jᵀδ`, which for a layer with `m` outputs is counted as
//! another `m`. GradLite keeps only the projected signal (`k`), the factor
//! pair (amortized over its refresh period) and the accumulator.

use std::fmt::Write as _;

use serde::Serialize;

use super::run::format_float;
use super::spec::{OptimizerSpec, ProblemSpec};
use crate::error::{Error, Result};
use crate::optimizer::EfMode;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodMemory {
    pub method: String,
    /// Error-signal scalars kept per step for the backward pass.
    pub backward_signal: usize,
    pub activation_cache: usize,
    /// `(m + d)·k` scalars each time the factor is rebuilt.
    pub factor_per_refresh: usize,
    /// `factor_per_refresh / τ`.
    pub factor_amortized: f64,
    pub accumulator: usize,
    pub optimizer_state: usize,
    /// Sum of every per-step component above.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryReport {
    pub m: usize,
    pub d: usize,
    pub methods: Vec<MethodMemory>,
}

fn row(
    method: &str,
    backward_signal: usize,
    activation_cache: usize,
    factor_per_refresh: usize,
    tau: usize,
    accumulator: usize,
    optimizer_state: usize,
) -> MethodMemory {
    let factor_amortized = if factor_per_refresh == 0 {
        0.0
    } else {
        factor_per_refresh as f64 / tau as f64
    };
    MethodMemory {
        method: method.to_string(),
        backward_signal,
        activation_cache,
        factor_per_refresh,
        factor_amortized,
        accumulator,
        optimizer_state,
        total: (backward_signal + activation_cache + accumulator + optimizer_state) as f64
            + factor_amortized,
    }
}

/// Accounting for one optimizer on an `m`-signal, `d`-parameter problem.
pub fn memory_account(m: usize, d: usize, opt: &OptimizerSpec) -> Result<MethodMemory> {
    if m == 0 || d == 0 {
        return Err(Error::Config(format!(
            "memory accounting needs m, d ≥ 1, got m={m}, d={d}"
        )));
    }
    opt.validate()?;
    Ok(match opt {
        OptimizerSpec::Sgd { .. } => row("exact-sgd", m, m, 0, 1, 0, 0),
        OptimizerSpec::Adam(_) => row("exact-adam", m, m, 0, 1, 0, 2 * d),
        OptimizerSpec::Galore(c) => {
            let k = c.k.min(d);
            row("galore", m, m, 0, 1, 0, d * k + c.window() * d)
        }
        OptimizerSpec::GradLite(c) => {
            let max = m.min(d);
            if c.k > max {
                return Err(Error::Rank { k: c.k, max });
            }
            let acc = if c.ef_mode == EfMode::Off { 0 } else { d };
            row("gradlite", c.k, 0, (m + d) * c.k, c.tau, acc, 0)
        }
    })
}

pub fn memory_account_for(problem: &ProblemSpec, opt: &OptimizerSpec) -> Result<MethodMemory> {
    let (m, d) = problem.dims();
    memory_account(m, d, opt)
}

/// One row per method, in a fixed order.
pub fn memory_report(m: usize, d: usize, methods: &[OptimizerSpec]) -> Result<MemoryReport> {
    let methods = methods
        .iter()
        .map(|o| memory_account(m, d, o))
        .collect::<Result<Vec<_>>>()?;
    Ok(MemoryReport { m, d, methods })
}

impl MemoryReport {
    pub fn get(&self, method: &str) -> Option<&MethodMemory> {
        self.methods.iter().find(|r| r.method == method)
    }

    /// `1 − total(method) / total(baseline)`.
    pub fn savings(&self, method: &str, baseline: &str) -> Option<f64> {
        Some(1.0 - self.get(method)?.total / self.get(baseline)?.total)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,backward_signal,activation_cache,factor_per_refresh,factor_amortized,accumulator,optimizer_state,total\n",
        );
        for r in &self.methods {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.method,
                r.backward_signal,
                r.activation_cache,
                r.factor_per_refresh,
                format_float(r.factor_amortized),
                r.accumulator,
                r.optimizer_state,
                format_float(r.total)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{AdamConfig, GaloreConfig, GradLiteConfig};

    fn gradlite(k: usize, tau: usize) -> OptimizerSpec {
        OptimizerSpec::GradLite(GradLiteConfig {
            k,
            tau,
            ..GradLiteConfig::default()
        })
    }

    #[test]
    fn reference_configuration() {
        let g = memory_account(1000, 200, &gradlite(8, 10)).unwrap();
        assert_eq!(g.backward_signal, 8);
        assert_eq!(g.factor_per_refresh, 9600);
        assert_eq!(g.factor_amortized, 960.0);
        assert_eq!(g.accumulator, 200);
        assert_eq!(g.total, 1168.0);

        let e = memory_account(1000, 200, &OptimizerSpec::Sgd { eta: 0.1 }).unwrap();
        assert_eq!(e.backward_signal, 1000);
        assert_eq!(e.total, 2000.0);
        assert_eq!(g.backward_signal as f64 / e.backward_signal as f64, 0.008);
    }

    #[test]
    fn full_rank_signal_matches_exact() {
        let g = memory_account(100, 300, &gradlite(100, 1)).unwrap();
        let e = memory_account(100, 300, &OptimizerSpec::Sgd { eta: 0.1 }).unwrap();
        assert_eq!(g.backward_signal, e.backward_signal);
    }

    #[test]
    fn totals_recount() {
        let methods = [
            OptimizerSpec::Sgd { eta: 0.1 },
            OptimizerSpec::Adam(AdamConfig::default()),
            OptimizerSpec::Galore(GaloreConfig {
                eta: 0.1,
                k: 8,
                tau: 10,
                seed: 0,
                power_iters: 2,
            }),
            gradlite(8, 10),
        ];
        let report = memory_report(1000, 200, &methods).unwrap();
        let recount = [
            2000.0,
            2400.0,
            2000.0 + 1600.0 + 2000.0,
            8.0 + 960.0 + 200.0,
        ];
        for (r, want) in report.methods.iter().zip(recount) {
            assert_eq!(r.total, want, "{}", r.method);
        }
        let saved = report.savings("gradlite", "exact-sgd").unwrap();
        assert!((saved - 0.416).abs() < 1e-12);
    }

    #[test]
    fn rank_above_shape_rejected() {
        assert!(matches!(
            memory_account(10, 5, &gradlite(6, 1)),
            Err(Error::Rank { k: 6, max: 5 })
        ));
    }
}
