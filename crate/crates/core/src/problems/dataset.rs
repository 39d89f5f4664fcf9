use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::svd::orthonormalize;
use crate::linalg::{matvec, Mat, Vector};
use crate::rng::SplitMix64;

/// Top singular value of generated low-rank-regression designs.
pub const LOW_RANK_TOP_SINGULAR: f64 = 8.0;
/// `σ₁ / σ_min` of generated low-rank-regression designs.
pub const LOW_RANK_CONDITION: f64 = 1e3;
const REGRESSION_NOISE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    /// Standard normal features, Bernoulli labels from a random linear logit.
    GaussianLogistic,
    /// Features with geometrically decaying spectrum, real targets.
    LowRankRegression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Mat,
    pub y: Vector,
    pub seed: u64,
}

pub fn synth_dataset(seed: u64, n: usize, d: usize, kind: DatasetKind) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::Config(format!(
            "dataset needs n, d ≥ 1, got n={n}, d={d}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let (x, y) = match kind {
        DatasetKind::GaussianLogistic => {
            let x = Mat::from_fn(n, d, |_, _| rng.standard_normal());
            let scale = 1.0 / (d as f64).sqrt();
            let w = Vector::from_fn(d, |_| scale * rng.standard_normal());
            let logits = matvec(&x, &w)?;
            let y = Vector::from_fn(n, |i| {
                let p = 1.0 / (1.0 + (-logits[i]).exp());
                if rng.next_f64() < p {
                    1.0
                } else {
                    0.0
                }
            });
            (x, y)
        }
        DatasetKind::LowRankRegression => {
            let r = n.min(d);
            let left = orthonormalize(&Mat::from_fn(n, r, |_, _| rng.standard_normal()));
            let right = orthonormalize(&Mat::from_fn(d, r, |_, _| rng.standard_normal()));
            let sigmas: Vec<f64> = (0..r)
                .map(|i| {
                    let frac = if r == 1 {
                        0.0
                    } else {
                        i as f64 / (r - 1) as f64
                    };
                    LOW_RANK_TOP_SINGULAR * LOW_RANK_CONDITION.powf(-frac)
                })
                .collect();
            let x = left.scale_columns(&sigmas).matmul_t(&right)?;
            let w = Vector::from_fn(d, |_| rng.standard_normal());
            let clean = matvec(&x, &w)?;
            let y = Vector::from_fn(n, |i| clean[i] + REGRESSION_NOISE * rng.standard_normal());
            (x, y)
        }
    };
    Ok(Dataset { x, y, seed })
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// Labels `1[y > 0]`.
    pub fn binarized(&self) -> Dataset {
        Dataset {
            x: self.x.clone(),
            y: Vector::from_fn(self.n(), |i| if self.y[i] > 0.0 { 1.0 } else { 0.0 }),
            seed: self.seed,
        }
    }

    /// Header `x0,…,x{d-1},target`, 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = String::new();
        for j in 0..self.d() {
            let _ = write!(line, "x{j},");
        }
        line.push_str("target\n");
        out.write_all(line.as_bytes())?;
        for i in 0..self.n() {
            line.clear();
            for &v in self.x.row(i) {
                let _ = write!(line, "{v:.16e},");
            }
            let _ = writeln!(line, "{:.16e}", self.y[i]);
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, seed: u64) -> Result<Dataset> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Data("empty CSV".into()))?
            .map_err(|e| Error::Data(e.to_string()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 2 || cols.last() != Some(&"target") {
            return Err(Error::Data("header must end with `target`".into()));
        }
        let d = cols.len() - 1;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Data(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let values = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Data(format!("line {}: {e}", lineno + 2)))?;
            if values.len() != d + 1 {
                return Err(Error::Data(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 2,
                    d + 1,
                    values.len()
                )));
            }
            xs.extend_from_slice(&values[..d]);
            ys.push(values[d]);
        }
        if ys.is_empty() {
            return Err(Error::Data("no rows".into()));
        }
        let n = ys.len();
        Ok(Dataset {
            x: Mat::new(n, d, xs)?,
            y: Vector::new(ys)?,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_csv(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, seed: u64) -> Result<Dataset> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Dataset::read_csv(std::io::BufReader::new(file), seed)
    }
}
