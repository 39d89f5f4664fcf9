use std::borrow::Cow;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{check_theta, Batch, Dataset, Dims, Problem};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::rng::{derive_seed, SplitMix64};

pub const MAX_MLP_PARAMS: usize = 100_000;
const INIT_TAG: u64 = 0x6d6c70;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
}

/// Scalar-output regression network, loss `½ Σᵢ (f(xᵢ) − yᵢ)² / n`.
///
/// Hidden layers use tanh, the output layer is linear. Layer `l` owns one
/// parameter block laid out as its weight matrix (row-major, `out × in`)
/// followed by its bias. The signal is `δᵢ = (f(xᵢ) − yᵢ)/n`, so `m = n`.
#[derive(Debug, Clone)]
pub struct Mlp {
    widths: Vec<usize>,
    x: Mat,
    y: Vector,
    layers: Vec<Layer>,
    init: Vector,
    dims: Dims,
}

#[derive(Debug, Clone)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    weights: Range<usize>,
    bias: Range<usize>,
}

pub fn mlp_problem(widths: &[usize], activation: Activation, data: &Dataset) -> Result<Mlp> {
    let Activation::Tanh = activation;
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::Config(format!("invalid layer widths {widths:?}")));
    }
    if *widths.last().unwrap() != 1 {
        return Err(Error::Config("the output layer must have width 1".into()));
    }
    if widths[0] != data.x.cols() || data.y.len() != data.x.rows() {
        return Err(Error::dim(
            "mlp_problem",
            format!(
                "input width {} for {}x{} features and {} targets",
                widths[0],
                data.x.rows(),
                data.x.cols(),
                data.y.len()
            ),
        ));
    }
    let mut layers = Vec::with_capacity(widths.len() - 1);
    let mut offset = 0;
    for w in widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = offset..offset + fan_in * fan_out;
        let bias = weights.end..weights.end + fan_out;
        offset = bias.end;
        layers.push(Layer {
            fan_in,
            fan_out,
            weights,
            bias,
        });
    }
    if offset > MAX_MLP_PARAMS {
        return Err(Error::Config(format!(
            "{offset} parameters exceed the limit of {MAX_MLP_PARAMS}"
        )));
    }
    let mut rng = SplitMix64::new(derive_seed(data.seed, INIT_TAG));
    let mut init = vec![0.0; offset];
    for layer in &layers {
        let scale = 1.0 / (layer.fan_in as f64).sqrt();
        for w in &mut init[layer.weights.clone()] {
            *w = scale * rng.standard_normal();
        }
    }
    let blocks = layers.iter().map(|l| l.weights.start..l.bias.end).collect();
    Ok(Mlp {
        widths: widths.to_vec(),
        dims: Dims {
            m: data.x.rows(),
            d: offset,
            blocks,
        },
        x: data.x.clone(),
        y: data.y.clone(),
        layers,
        init: Vector::from_raw(init),
    })
}

/// Activations of one sample: `acts[0]` is the input, `acts[l]` the output of
/// layer `l`; the last entry holds the scalar prediction.
fn forward(layers: &[Layer], theta: &[f64], input: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(input.to_vec());
    for (l, layer) in layers.iter().enumerate() {
        let w = &theta[layer.weights.clone()];
        let b = &theta[layer.bias.clone()];
        let prev = &acts[l];
        let last = l + 1 == layers.len();
        let out: Vec<f64> = (0..layer.fan_out)
            .map(|j| {
                let mut z = b[j];
                for (wk, ak) in w[j * layer.fan_in..(j + 1) * layer.fan_in].iter().zip(prev) {
                    z += wk * ak;
                }
                if last {
                    z
                } else {
                    z.tanh()
                }
            })
            .collect();
        acts.push(out);
    }
    acts
}

impl Mlp {
    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    fn n(&self) -> usize {
        self.x.rows()
    }

    fn predictions(&self, theta: &Vector) -> Vec<Vec<Vec<f64>>> {
        (0..self.n())
            .map(|i| forward(&self.layers, theta.as_slice(), self.x.row(i)))
            .collect()
    }

    /// Pushes a tangent on the pre-activation of layer `from` to the output.
    fn push_tangent(&self, theta: &[f64], acts: &[Vec<f64>], from: usize, mut dz: Vec<f64>) -> f64 {
        for l in from + 1..self.layers.len() {
            let layer = &self.layers[l];
            let w = &theta[layer.weights.clone()];
            let da: Vec<f64> = dz
                .iter()
                .zip(&acts[l])
                .map(|(d, a)| d * (1.0 - a * a))
                .collect();
            dz = (0..layer.fan_out)
                .map(|j| {
                    let mut s = 0.0;
                    for (wk, dk) in w[j * layer.fan_in..(j + 1) * layer.fan_in].iter().zip(&da) {
                        s += wk * dk;
                    }
                    s
                })
                .collect();
        }
        dz[0]
    }
}

impl Problem for Mlp {
    fn name(&self) -> &str {
        "mlp"
    }

    fn dims(&self) -> &Dims {
        &self.dims
    }

    fn loss(&self, theta: &Vector) -> Result<f64> {
        check_theta("Mlp::loss", theta, self.dims.d)?;
        let mut total = 0.0;
        for (i, acts) in self.predictions(theta).iter().enumerate() {
            let r = acts.last().unwrap()[0] - self.y[i];
            total += r * r;
        }
        Ok(0.5 * total / self.n() as f64)
    }

    fn error_signal(&self, theta: &Vector, batch: &Batch) -> Result<Vector> {
        check_theta("Mlp::error_signal", theta, self.dims.d)?;
        batch.check(self.dims.m)?;
        let n = self.n() as f64;
        let preds = self.predictions(theta);
        let delta = Vector::from_fn(self.n(), |i| (preds[i].last().unwrap()[0] - self.y[i]) / n);
        match batch.noise() {
            Some(noise) => delta.add(noise),
            None => Ok(delta),
        }
    }

    /// Forward-mode construction: one tangent per parameter of the block,
    /// pushed from that layer's pre-activation to the output.
    fn jacobian_block(&self, theta: &Vector, block: usize) -> Result<Cow<'_, Mat>> {
        check_theta("Mlp::jacobian_block", theta, self.dims.d)?;
        let layer = self.layers.get(block).ok_or_else(|| {
            Error::dim(
                "Mlp::jacobian_block",
                format!("block {block} of {}", self.layers.len()),
            )
        })?;
        let width = layer.bias.end - layer.weights.start;
        let mut jac = Mat::zeros(self.n(), width);
        for i in 0..self.n() {
            let acts = forward(&self.layers, theta.as_slice(), self.x.row(i));
            let input = &acts[block];
            for j in 0..layer.fan_out {
                for k in 0..=layer.fan_in {
                    let mut dz = vec![0.0; layer.fan_out];
                    // k == fan_in is the bias entry
                    dz[j] = if k < layer.fan_in { input[k] } else { 1.0 };
                    let col = if k < layer.fan_in {
                        j * layer.fan_in + k
                    } else {
                        layer.fan_out * layer.fan_in + j
                    };
                    jac.set(
                        i,
                        col,
                        self.push_tangent(theta.as_slice(), &acts, block, dz),
                    );
                }
            }
        }
        Ok(Cow::Owned(jac))
    }

    fn exact_gradient(&self, theta: &Vector, batch: &Batch) -> Result<Vector> {
        check_theta("Mlp::exact_gradient", theta, self.dims.d)?;
        batch.check(self.dims.m)?;
        let n = self.n() as f64;
        let th = theta.as_slice();
        let mut grad = vec![0.0; self.dims.d];
        for i in 0..self.n() {
            let acts = forward(&self.layers, th, self.x.row(i));
            let mut beta = vec![(acts.last().unwrap()[0] - self.y[i]) / n];
            if let Some(noise) = batch.noise() {
                beta[0] += noise[i];
            }
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let input = &acts[l];
                for j in 0..layer.fan_out {
                    let row = layer.weights.start + j * layer.fan_in;
                    for k in 0..layer.fan_in {
                        grad[row + k] += beta[j] * input[k];
                    }
                    grad[layer.bias.start + j] += beta[j];
                }
                if l > 0 {
                    let w = &th[layer.weights.clone()];
                    beta = (0..layer.fan_in)
                        .map(|k| {
                            let mut s = 0.0;
                            for j in 0..layer.fan_out {
                                s += w[j * layer.fan_in + k] * beta[j];
                            }
                            s * (1.0 - input[k] * input[k])
                        })
                        .collect();
                }
            }
        }
        Ok(Vector::from_raw(grad))
    }

    fn smoothness(&self) -> Option<f64> {
        None
    }

    fn noise_sigma(&self) -> f64 {
        0.0
    }

    fn optimal_loss(&self) -> Option<f64> {
        None
    }

    fn jacobian_is_constant(&self) -> bool {
        self.layers.len() == 1
    }

    fn initial_theta(&self) -> Vector {
        self.init.clone()
    }
}
