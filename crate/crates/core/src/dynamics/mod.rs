//! Simulation of autonomous systems `ẋ = F(x)` and synthetic outputs `y = H(x)`.

mod integrator;
mod oregonator;
mod output;

use std::path::Path;

pub use integrator::{integrate, IntegratorConfig};
pub use oregonator::{oregonator_equilibrium, oregonator_rhs, simulate_oregonator, OregonatorParams};
pub use output::{apply_output_map, OutputMap, OutputMapKind};

use crate::linalg::Matrix;
use crate::series::{check_times, format_table, read_table, uniform_interval, write_atomic};
use crate::{Error, Result};

/// Time-stamped state samples; row `k` of `states` is `x(times[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Matrix,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Matrix) -> Result<Self> {
        check_times(&times, states.rows())?;
        if times.is_empty() {
            return Err(Error::validation("trajectory has no samples"));
        }
        if !states.is_finite() {
            return Err(Error::validation("trajectory contains non-finite states"));
        }
        Ok(Self { times, states })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &Matrix {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.states.cols()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        self.states.row(k)
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.row(self.len() - 1)
    }

    pub fn span(&self) -> f64 {
        self.times[self.len() - 1] - self.times[0]
    }

    /// Samples `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Trajectory {
        Trajectory {
            times: self.times[start..end].to_vec(),
            states: self.states.select_rows(start, end),
        }
    }

    /// Subtract `offset` from every timestamp.
    pub fn shifted(&self, offset: f64) -> Trajectory {
        Trajectory {
            times: self.times.iter().map(|t| t - offset).collect(),
            states: self.states.clone(),
        }
    }

    /// Sampling interval if the grid is uniform.
    pub fn interval(&self) -> Result<f64> {
        uniform_interval(&self.times)
    }

    /// Linear interpolation at `t`, clamped to the sampled range.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        interpolate_rows(&self.times, &self.states, t)
    }

    pub fn to_csv(&self) -> String {
        format_table("x", &self.times, &self.states)
    }

    /// Write as `t,x1,...,xn`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let (times, states) = read_table(path, "x")?;
        Trajectory::new(times, states)
    }
}

pub(crate) fn interpolate_rows(times: &[f64], values: &Matrix, t: f64) -> Vec<f64> {
    let n = times.len();
    if t <= times[0] {
        return values.row(0).to_vec();
    }
    if t >= times[n - 1] {
        return values.row(n - 1).to_vec();
    }
    // First index with times[i] > t; the segment starts one before it.
    let i = times.partition_point(|&s| s <= t) - 1;
    let (ta, tb) = (times[i], times[i + 1]);
    let w = (t - ta) / (tb - ta);
    let (a, b) = (values.row(i), values.row(i + 1));
    if w == 0.0 {
        return a.to_vec();
    }
    a.iter().zip(b).map(|(p, q)| p + w * (q - p)).collect()
}

/// Resample onto `t_0 + k·dt` by linear interpolation between stored samples.
pub fn sample_uniform(traj: &Trajectory, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation(format!("sampling interval must be positive, got {dt}")));
    }
    let span = traj.span();
    if dt > span {
        return Err(Error::validation(format!(
            "sampling interval {dt} exceeds trajectory span {span}"
        )));
    }
    let t0 = traj.times[0];
    let count = (span / dt + 1e-9).floor() as usize + 1;
    let mut times = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * traj.dim());
    for k in 0..count {
        let t = t0 + k as f64 * dt;
        times.push(t);
        data.extend(traj.interpolate(t));
    }
    Trajectory::new(times, Matrix::new(count, traj.dim(), data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn identity_on_matching_grid() {
        let times: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        let states = Matrix::from_fn(11, 2, |i, j| (i * 3 + j) as f64 * 0.7 - (i as f64).sin());
        let traj = Trajectory::new(times, states).unwrap();
        let s = sample_uniform(&traj, 0.1).unwrap();
        assert_eq!(s, traj);
    }

    #[test]
    fn midpoint_is_average() {
        let traj = Trajectory::new(vec![0.0, 1.0], Matrix::from_rows(&[[2.0], [4.0]])).unwrap();
        let s = sample_uniform(&traj, 0.5).unwrap();
        assert_eq!(s.times(), &[0.0, 0.5, 1.0]);
        assert_eq!(s.state(1), &[3.0]);
    }

    #[test]
    fn sine_resampling_error_is_second_order() {
        let fine = 1e-3;
        let n = (2.0 * PI / fine) as usize;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * fine).collect();
        let states = Matrix::from_fn(n + 1, 1, |i, _| times[i].sin());
        let traj = Trajectory::new(times, states).unwrap();
        let s = sample_uniform(&traj, 0.0137).unwrap();
        let bound = fine * fine / 8.0;
        for (t, x) in s.times().iter().zip(s.states().row_iter()) {
            assert!((x[0] - t.sin()).abs() <= bound * 1.0001 + 1e-15);
        }
    }

    #[test]
    fn interval_larger_than_span_fails() {
        let traj = Trajectory::new(vec![0.0, 1.0], Matrix::from_rows(&[[2.0], [4.0]])).unwrap();
        assert!(sample_uniform(&traj, 2.0).is_err());
        assert!(sample_uniform(&traj, 0.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let traj = Trajectory::new(
            vec![0.0, 0.1, 0.3],
            Matrix::from_rows(&[[1.0, 2.0, 3.0], [0.1, 0.2, 1.0 / 3.0], [5.0, 6.0, 7.0]]),
        )
        .unwrap();
        let text = traj.to_csv();
        assert!(text.starts_with("t,x1,x2,x3\n"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("traj.csv");
        traj.write_csv(&p).unwrap();
        assert_eq!(Trajectory::read_csv(&p).unwrap(), traj);
    }
}
