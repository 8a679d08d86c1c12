use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Trajectory;
use crate::linalg::{dot, Matrix};
use crate::series::OutputSeries;
use crate::{Error, Result};

/// Range of the random-smooth weights and offsets.
const WEIGHT_BOUND: f64 = 2.0;
const OFFSET_BOUND: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMapKind {
    PassThrough,
    Linear,
    RandomSmooth,
}

/// Measurement map `y = H(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputMap {
    /// `y = x`.
    PassThrough { dim: usize },
    /// `y = W x` with `W` of shape `p×n`.
    Linear { weights: Matrix },
    /// `yᵢ = tanh(wᵢᵀ x̃ + cᵢ)` with `x̃ = (x − center) / scale` componentwise.
    RandomSmooth {
        weights: Matrix,
        offsets: Vec<f64>,
        center: Vec<f64>,
        scale: Vec<f64>,
        seed: Option<u64>,
    },
}

impl OutputMap {
    pub fn pass_through(dim: usize) -> Self {
        OutputMap::PassThrough { dim }
    }

    pub fn linear(weights: Matrix) -> Self {
        OutputMap::Linear { weights }
    }

    /// Draw `p` random tanh outputs, standardizing states by the mean and
    /// sample standard deviation of `reference`.
    ///
    /// Weights are uniform on `[−2, 2]ⁿ` and offsets uniform on `[−1, 1]`.
    pub fn random_smooth(reference: &Trajectory, p: usize, seed: u64) -> Result<Self> {
        if p == 0 {
            return Err(Error::validation("output dimension must be at least 1"));
        }
        let n = reference.dim();
        let states = reference.states();
        let count = states.rows() as f64;
        let center: Vec<f64> = (0..n)
            .map(|j| states.col(j).iter().sum::<f64>() / count)
            .collect();
        let scale: Vec<f64> = (0..n)
            .map(|j| {
                let var = states
                    .col(j)
                    .iter()
                    .map(|v| (v - center[j]).powi(2))
                    .sum::<f64>()
                    / (count - 1.0).max(1.0);
                let s = var.sqrt();
                if s > 0.0 { s } else { 1.0 }
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = Matrix::from_fn(p, n, |_, _| rng.gen_range(-WEIGHT_BOUND..=WEIGHT_BOUND));
        let offsets = (0..p)
            .map(|_| rng.gen_range(-OFFSET_BOUND..=OFFSET_BOUND))
            .collect();
        Ok(OutputMap::RandomSmooth {
            weights,
            offsets,
            center,
            scale,
            seed: Some(seed),
        })
    }

    pub fn kind(&self) -> OutputMapKind {
        match self {
            OutputMap::PassThrough { .. } => OutputMapKind::PassThrough,
            OutputMap::Linear { .. } => OutputMapKind::Linear,
            OutputMap::RandomSmooth { .. } => OutputMapKind::RandomSmooth,
        }
    }

    /// Output dimension `p`.
    pub fn output_dim(&self) -> usize {
        match self {
            OutputMap::PassThrough { dim } => *dim,
            OutputMap::Linear { weights } | OutputMap::RandomSmooth { weights, .. } => {
                weights.rows()
            }
        }
    }

    /// Required state dimension `n`.
    pub fn state_dim(&self) -> usize {
        match self {
            OutputMap::PassThrough { dim } => *dim,
            OutputMap::Linear { weights } | OutputMap::RandomSmooth { weights, .. } => {
                weights.cols()
            }
        }
    }

    /// Evaluate `H(x)` into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            OutputMap::PassThrough { .. } => out.copy_from_slice(x),
            OutputMap::Linear { weights } => {
                for (o, w) in out.iter_mut().zip(weights.row_iter()) {
                    *o = dot(w, x);
                }
            }
            OutputMap::RandomSmooth {
                weights,
                offsets,
                center,
                scale,
                ..
            } => {
                let xs: Vec<f64> = x
                    .iter()
                    .zip(center.iter().zip(scale))
                    .map(|(v, (c, s))| (v - c) / s)
                    .collect();
                for ((o, w), c) in out.iter_mut().zip(weights.row_iter()).zip(offsets) {
                    *o = (dot(w, &xs) + c).tanh();
                }
            }
        }
    }
}

/// Apply `H` to every sample of `traj`.
pub fn apply_output_map(traj: &Trajectory, map: &OutputMap) -> Result<OutputSeries> {
    if map.state_dim() != traj.dim() {
        return Err(Error::validation(format!(
            "output map expects state dimension {}, trajectory has {}",
            map.state_dim(),
            traj.dim()
        )));
    }
    let p = map.output_dim();
    let mut values = Matrix::zeros(traj.len(), p);
    for k in 0..traj.len() {
        map.eval_into(traj.state(k), values.row_mut(k));
    }
    OutputSeries::new(traj.times().to_vec(), values)
}
