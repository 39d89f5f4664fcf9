use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{AdamConfig, GaloreConfig, GradLiteConfig};
use crate::problems::{
    conditioned_quadratic, logistic_problem, mlp_problem, synth_dataset, Activation, DatasetKind,
    Problem,
};
use crate::rng::{derive_seed, Stream};

/// A problem family plus its size parameters. The instance itself is drawn
/// from a seed by [`ProblemSpec::build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemSpec {
    Quadratic {
        dim: usize,
        cond: f64,
        noise: f64,
    },
    /// Low-rank-regression data is binarized at zero to give labels.
    Logistic {
        n: usize,
        dim: usize,
        dataset: DatasetKind,
        l2: f64,
    },
    /// `widths` runs from the input width to the output width 1.
    Mlp {
        widths: Vec<usize>,
        n: usize,
    },
}

impl ProblemSpec {
    pub fn build(&self, seed: u64) -> Result<Box<dyn Problem>> {
        let instance = derive_seed(seed, Stream::Instance as u64);
        Ok(match self {
            ProblemSpec::Quadratic { dim, cond, noise } => {
                Box::new(conditioned_quadratic(*dim, *cond, *noise, instance)?)
            }
            ProblemSpec::Logistic {
                n,
                dim,
                dataset,
                l2,
            } => {
                let data = synth_dataset(instance, *n, *dim, *dataset)?;
                let data = match dataset {
                    DatasetKind::GaussianLogistic => data,
                    DatasetKind::LowRankRegression => data.binarized(),
                };
                Box::new(logistic_problem(&data, *l2)?)
            }
            ProblemSpec::Mlp { widths, n } => {
                let input = *widths
                    .first()
                    .ok_or_else(|| Error::Config("mlp needs layer widths".into()))?;
                let data = synth_dataset(instance, *n, input, DatasetKind::LowRankRegression)?;
                Box::new(mlp_problem(widths, Activation::Tanh, &data)?)
            }
        })
    }

    /// `(m, d)` without building the instance.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            ProblemSpec::Quadratic { dim, .. } => (*dim, *dim),
            ProblemSpec::Logistic { n, dim, l2, .. } => {
                (if *l2 > 0.0 { n + dim } else { *n }, *dim)
            }
            ProblemSpec::Mlp { widths, n } => {
                let d = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
                (*n, d)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum OptimizerSpec {
    Sgd {
        eta: f64,
    },
    Adam(AdamConfig),
    Galore(GaloreConfig),
    #[serde(rename = "gradlite")]
    GradLite(GradLiteConfig),
}

impl OptimizerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerSpec::Sgd { .. } => "sgd",
            OptimizerSpec::Adam(_) => "adam",
            OptimizerSpec::Galore(_) => "galore",
            OptimizerSpec::GradLite(_) => "gradlite",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OptimizerSpec::Sgd { eta } => {
                if !(*eta > 0.0 && eta.is_finite()) {
                    return Err(Error::Config(format!(
                        "learning rate must be > 0, got {eta}"
                    )));
                }
                Ok(())
            }
            OptimizerSpec::Adam(c) => c.validate(),
            OptimizerSpec::Galore(c) => c.validate(),
            OptimizerSpec::GradLite(c) => c.validate(),
        }
    }

    /// Same optimizer with its random basis drawn from `seed`.
    pub(crate) fn seeded(&self, seed: u64) -> OptimizerSpec {
        let mut out = self.clone();
        match &mut out {
            OptimizerSpec::Galore(c) => c.seed = seed,
            OptimizerSpec::GradLite(c) => c.seed = seed,
            OptimizerSpec::Sgd { .. } | OptimizerSpec::Adam(_) => {}
        }
        out
    }
}
