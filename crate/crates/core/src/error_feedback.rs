//! Residual accumulation for approximate gradients.
//!
//! Two accumulator rules are supported. [`AccumulatorMode::Paper`] adds every
//! new residual to `r` and never removes what was already applied, so `r`
//! can grow without bound. [`AccumulatorMode::EfStandard`] is classic error
//! feedback: the applied residual is consumed and only the newest one is
//! carried to the next step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matvec_t, Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccumulatorMode {
    /// `r′ = r + Δ`
    Paper,
    /// `r′ = Δ`
    EfStandard,
}

/// Source of the residual estimate `Δ ≈ g − g̃`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Probe {
    /// `Jᵀδ − g̃` from the materialized Jacobian.
    Exact,
    /// No residual information; `Δ = 0`.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorAccumulator {
    r: Vector,
    mode: AccumulatorMode,
}

impl ErrorAccumulator {
    pub fn zeros(dim: usize, mode: AccumulatorMode) -> Self {
        ErrorAccumulator {
            r: Vector::zeros(dim),
            mode,
        }
    }

    pub fn residual(&self) -> &Vector {
        &self.r
    }

    pub fn mode(&self) -> AccumulatorMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaEstimate {
    pub delta: Vector,
    /// Whether `delta` came from a full backward pass.
    pub exact: bool,
}

/// `ĝ = g̃ + r`
pub fn correct(g_tilde: &Vector, acc: &ErrorAccumulator) -> Result<Vector> {
    g_tilde.add(&acc.r)
}

/// Residual of the approximate gradient against `jacobianᵀ · delta`.
pub fn estimate_delta(
    jacobian: &Mat,
    delta: &Vector,
    g_tilde: &Vector,
    probe: Probe,
) -> Result<DeltaEstimate> {
    if g_tilde.len() != jacobian.cols() {
        return Err(Error::dim(
            "estimate_delta",
            format!(
                "g̃ has length {}, jacobian has {} columns",
                g_tilde.len(),
                jacobian.cols()
            ),
        ));
    }
    match probe {
        Probe::Exact => {
            let exact = matvec_t(jacobian, delta)?;
            Ok(DeltaEstimate {
                delta: exact.sub(g_tilde)?,
                exact: true,
            })
        }
        Probe::None => Ok(DeltaEstimate {
            delta: Vector::zeros(g_tilde.len()),
            exact: false,
        }),
    }
}

pub fn update_accumulator(
    acc: ErrorAccumulator,
    delta: &DeltaEstimate,
) -> Result<ErrorAccumulator> {
    if acc.r.len() != delta.delta.len() {
        return Err(Error::dim(
            "update_accumulator",
            format!("r has length {}, Δ has {}", acc.r.len(), delta.delta.len()),
        ));
    }
    let r = match acc.mode {
        AccumulatorMode::Paper => acc.r.add(&delta.delta)?,
        AccumulatorMode::EfStandard => delta.delta.clone(),
    };
    Ok(ErrorAccumulator { r, mode: acc.mode })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_slice(x).unwrap()
    }

    fn acc_with(r: &[f64], mode: AccumulatorMode) -> ErrorAccumulator {
        ErrorAccumulator { r: v(r), mode }
    }

    fn exact(d: &[f64]) -> DeltaEstimate {
        DeltaEstimate {
            delta: v(d),
            exact: true,
        }
    }

    #[test]
    fn correction_adds_residual() {
        let g = correct(
            &v(&[0.0, 2.0]),
            &acc_with(&[1.0, 0.0], AccumulatorMode::EfStandard),
        )
        .unwrap();
        assert_eq!(g.as_slice(), &[1.0, 2.0]);

        let zero = ErrorAccumulator::zeros(2, AccumulatorMode::Paper);
        assert_eq!(
            correct(&v(&[3.0, -1.0]), &zero).unwrap().as_slice(),
            &[3.0, -1.0]
        );

        let g = correct(
            &Vector::zeros(2),
            &acc_with(&[0.5, -7.0], AccumulatorMode::Paper),
        )
        .unwrap();
        assert_eq!(g.as_slice(), &[0.5, -7.0]);
    }

    #[test]
    fn correction_checks_lengths() {
        let acc = ErrorAccumulator::zeros(3, AccumulatorMode::EfStandard);
        assert!(matches!(
            correct(&Vector::zeros(2), &acc),
            Err(Error::Dim { .. })
        ));
    }

    #[test]
    fn exact_probe_on_worked_example() {
        let j = Mat::from_rows(&[[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]]).unwrap();
        let delta = v(&[1.0, 1.0, 1.0]);
        let est = estimate_delta(&j, &delta, &v(&[0.0, 2.0]), Probe::Exact).unwrap();
        assert_eq!(est.delta.as_slice(), &[1.0, 0.0]);
        assert!(est.exact);

        let est = estimate_delta(&j, &delta, &v(&[1.0, 2.0]), Probe::Exact).unwrap();
        assert_eq!(est.delta, Vector::zeros(2));
    }

    #[test]
    fn no_probe_gives_zero() {
        let j = Mat::identity(2);
        let est = estimate_delta(&j, &v(&[4.0, 4.0]), &v(&[1.0, 1.0]), Probe::None).unwrap();
        assert_eq!(est.delta, Vector::zeros(2));
        assert!(!est.exact);
    }

    #[test]
    fn paper_mode_accumulates() {
        let acc = ErrorAccumulator::zeros(2, AccumulatorMode::Paper);
        let acc = update_accumulator(acc, &exact(&[1.0, 0.0])).unwrap();
        assert_eq!(acc.residual().as_slice(), &[1.0, 0.0]);
        let acc = update_accumulator(acc, &exact(&[1.0, 0.0])).unwrap();
        assert_eq!(acc.residual().as_slice(), &[2.0, 0.0]);
    }

    #[test]
    fn standard_mode_replaces() {
        let acc = acc_with(&[5.0, 5.0], AccumulatorMode::EfStandard);
        let acc = update_accumulator(acc, &exact(&[1.0, 0.0])).unwrap();
        assert_eq!(acc.residual().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn update_checks_lengths() {
        let acc = ErrorAccumulator::zeros(3, AccumulatorMode::Paper);
        assert!(matches!(
            update_accumulator(acc, &exact(&[1.0])),
            Err(Error::Dim { .. })
        ));
    }

    #[test]
    fn zero_residuals_are_a_fixed_point() {
        for mode in [AccumulatorMode::Paper, AccumulatorMode::EfStandard] {
            let mut acc = ErrorAccumulator::zeros(4, mode);
            for _ in 0..10 {
                acc = update_accumulator(acc, &exact(&[0.0; 4])).unwrap();
                assert_eq!(acc.residual(), &Vector::zeros(4));
            }
        }
    }
}
