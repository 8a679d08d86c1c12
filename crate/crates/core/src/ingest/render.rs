use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Frame, FrameSequence};
use crate::dynamics::Trajectory;
use crate::{Error, Result};

/// Smooth state-to-color map: `rgb = 255·σ(C x̃ + o)` with `x̃` the standardized state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorMap {
    pub coefficients: [[f64; 3]; 3],
    pub offsets: [f64; 3],
}

impl Default for ColorMap {
    fn default() -> Self {
        Self {
            coefficients: [[-1.2, 0.6, -0.4], [0.5, -0.9, 0.7], [0.3, 0.5, -1.1]],
            offsets: [0.2, -0.1, 0.1],
        }
    }
}

impl ColorMap {
    /// Unquantized channel intensities in `[0, 255]` for a standardized state.
    pub fn color(&self, xs: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (c, (row, o)) in out.iter_mut().zip(self.coefficients.iter().zip(&self.offsets)) {
            let a: f64 = row.iter().zip(xs).map(|(w, x)| w * x).sum::<f64>() + o;
            *c = 255.0 / (1.0 + (-a).exp());
        }
        out
    }
}

/// Per-frame base colors for `traj`, standardized by its own mean and sample std.
pub fn base_colors(traj: &Trajectory, map: &ColorMap) -> Result<Vec<[f64; 3]>> {
    if traj.dim() != 3 {
        return Err(Error::validation(format!(
            "color map needs 3-dimensional states, got {}",
            traj.dim()
        )));
    }
    let n = traj.len() as f64;
    let states = traj.states();
    let mut center = [0.0; 3];
    let mut scale = [1.0; 3];
    for j in 0..3 {
        let col = states.col(j);
        center[j] = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - center[j]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        if var > 0.0 {
            scale[j] = var.sqrt();
        }
    }
    Ok(states
        .row_iter()
        .map(|x| {
            let xs: Vec<f64> = (0..3).map(|j| (x[j] - center[j]) / scale[j]).collect();
            map.color(&xs)
        })
        .collect())
}

/// Render one `width × height` frame per sample of a uniformly sampled trajectory.
///
/// Every pixel gets the frame's base color plus independent uniform noise
/// on `±noise·255` per channel, then is rounded and clamped to `[0, 255]`.
pub fn render_synthetic_frames(
    traj: &Trajectory,
    width: usize,
    height: usize,
    map: &ColorMap,
    noise: f64,
    seed: u64,
) -> Result<FrameSequence> {
    let interval = traj.interval()?;
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::validation(format!("noise level must be non-negative, got {noise}")));
    }
    let colors = base_colors(traj, map)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = noise * 255.0;
    let mut frames = Vec::with_capacity(colors.len());
    for base in colors {
        let mut data = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            for c in base {
                let jitter = if amp > 0.0 { rng.gen_range(-amp..=amp) } else { 0.0 };
                data.push((c + jitter).round().clamp(0.0, 255.0) as u8);
            }
        }
        frames.push(Frame::new(width, height, data)?);
    }
    FrameSequence::new(frames, interval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{channel_means, extract_roi, Roi};
    use crate::linalg::Matrix;

    fn traj(n: usize) -> Trajectory {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * 0.075).collect();
        let x = Matrix::from_fn(n, 3, |k, j| (t[k] * (j + 1) as f64).sin() + j as f64);
        Trajectory::new(t, x).unwrap()
    }

    #[test]
    fn constant_state_gives_identical_frames() {
        let t: Vec<f64> = (0..4).map(|k| k as f64).collect();
        let x = Matrix::from_fn(4, 3, |_, j| j as f64);
        let seq = render_synthetic_frames(&Trajectory::new(t, x).unwrap(), 3, 2, &ColorMap::default(), 0.0, 1).unwrap();
        assert!(seq.frames().windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn noiseless_roundtrip_within_quantization() {
        let tr = traj(50);
        let seq = render_synthetic_frames(&tr, 1, 1, &ColorMap::default(), 0.0, 0).unwrap();
        let y = extract_roi(&seq, &Roi::full(1, 1)).unwrap();
        let colors = base_colors(&tr, &ColorMap::default()).unwrap();
        for (k, c) in colors.iter().enumerate() {
            for ch in 0..3 {
                assert!((y.values()[(k, ch)] - c[ch] / 255.0).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn noisy_means_near_noiseless() {
        let tr = traj(40);
        let clean = render_synthetic_frames(&tr, 10, 10, &ColorMap::default(), 0.0, 3).unwrap();
        let noisy = render_synthetic_frames(&tr, 10, 10, &ColorMap::default(), 0.02, 3).unwrap();
        let roi = Roi::full(10, 10);
        let a = channel_means(&extract_roi(&clean, &roi).unwrap()).unwrap();
        let b = channel_means(&extract_roi(&noisy, &roi).unwrap()).unwrap();
        let worst = a.sub(&b).unwrap().max_abs();
        assert!(worst <= 0.005, "max mean deviation {worst}");
    }

    #[test]
    fn deterministic_and_validated() {
        let tr = traj(10);
        let a = render_synthetic_frames(&tr, 2, 2, &ColorMap::default(), 0.1, 9).unwrap();
        let b = render_synthetic_frames(&tr, 2, 2, &ColorMap::default(), 0.1, 9).unwrap();
        assert_eq!(a, b);
        let bad = Trajectory::new(vec![0.0, 0.1, 0.3], Matrix::zeros(3, 3)).unwrap();
        assert!(render_synthetic_frames(&bad, 1, 1, &ColorMap::default(), 0.0, 0).is_err());
        let two = Trajectory::new(vec![0.0, 1.0], Matrix::zeros(2, 2)).unwrap();
        assert!(render_synthetic_frames(&two, 1, 1, &ColorMap::default(), 0.0, 0).is_err());
    }
}
