//! KKL lifting: the assigned LTI dynamics `ż = Az + By` with `A = −diag(a)`.
//!
//! Outputs are held constant between samples (zero-order hold), which makes
//! the discretization exact channel by channel:
//!
//! ```text
//! z_i[k+1] = e^{−a_i h} z_i[k] + (1 − e^{−a_i h}) / a_i · (B y[k])_i
//! ```
//!
//! For linear plants `ẋ = Fx, y = Hx` the observer converges to `z = Tx`
//! where `T` solves the Sylvester equation `TF − AT = BH`; that case is kept
//! here as an oracle for the lifting.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::Trajectory;
use crate::linalg::{norm2, solve_linear, Matrix};
use crate::series::{format_table, read_table, write_atomic, OutputSeries};
use crate::{Error, Result};

/// Rates closer than this are pushed apart so the pair `(A, B)` stays controllable.
pub const MIN_RATE_GAP: f64 = 1e-9;

/// The assigned observer dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverConfig {
    rates: Vec<f64>,
    input: Matrix,
    seed: Option<u64>,
    rate_range: (f64, f64),
    state_dim: usize,
}

impl ObserverConfig {
    /// Build from explicit rates and input matrix (`n_z × p`).
    pub fn new(rates: Vec<f64>, input: Matrix, state_dim: usize) -> Result<Self> {
        if rates.is_empty() || rates.len() != input.rows() {
            return Err(Error::validation(format!(
                "{} rates for an input matrix with {} rows",
                rates.len(),
                input.rows()
            )));
        }
        if rates.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::validation("observer rates must be positive (A Hurwitz)"));
        }
        if let Some(i) = input.row_iter().position(|r| r.iter().all(|v| *v == 0.0)) {
            return Err(Error::validation(format!(
                "row {i} of B is zero; that mode is not driven by the outputs"
            )));
        }
        let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = rates.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            rates,
            input,
            seed: None,
            rate_range: (lo, hi),
            state_dim,
        })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// `B`, shape `n_z × p`.
    pub fn input(&self) -> &Matrix {
        &self.input
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn rate_range(&self) -> (f64, f64) {
        self.rate_range
    }

    /// Observer order `n_z`.
    pub fn order(&self) -> usize {
        self.rates.len()
    }

    /// Output dimension `p`.
    pub fn output_dim(&self) -> usize {
        self.input.cols()
    }

    /// Plant state dimension `n` the observer was sized for.
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn min_rate(&self) -> f64 {
        self.rates.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `A = −diag(a)`.
    pub fn state_matrix(&self) -> Matrix {
        Matrix::from_diag(&self.rates.iter().map(|a| -a).collect::<Vec<_>>())
    }

    /// SHA-256 of `B` as little-endian `f64` bytes, row-major.
    pub fn input_hash(&self) -> String {
        hash_matrix(&self.input)
    }

    pub fn to_document(&self) -> ObserverDocument {
        ObserverDocument {
            schema_version: 1,
            state_dim: self.state_dim,
            output_dim: self.output_dim(),
            order: self.order(),
            rate_range: [self.rate_range.0, self.rate_range.1],
            seed: self.seed,
            rates: self.rates.clone(),
            input_sha256: self.input_hash(),
        }
    }

    /// Rebuild a seeded observer from its document, checking rates and the `B` hash.
    pub fn from_document(doc: &ObserverDocument) -> Result<Self> {
        let seed = doc
            .seed
            .ok_or_else(|| Error::validation("observer document has no seed to regenerate B"))?;
        let cfg = make_observer_with_order(
            doc.order,
            doc.output_dim,
            doc.state_dim,
            (doc.rate_range[0], doc.rate_range[1]),
            seed,
        )?;
        if cfg.rates != doc.rates || cfg.input_hash() != doc.input_sha256 {
            return Err(Error::validation(
                "observer document does not match the configuration regenerated from its seed",
            ));
        }
        Ok(cfg)
    }
}

/// Serialized form of an [`ObserverConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverDocument {
    pub schema_version: u32,
    pub state_dim: usize,
    pub output_dim: usize,
    pub order: usize,
    pub rate_range: [f64; 2],
    pub seed: Option<u64>,
    pub rates: Vec<f64>,
    pub input_sha256: String,
}

pub(crate) fn hash_matrix(m: &Matrix) -> String {
    let mut h = Sha256::new();
    h.update((m.rows() as u64).to_le_bytes());
    h.update((m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Random observer of order `n_z = p(n+1)`.
///
/// Rates are i.i.d. uniform on `rate_range` and sorted ascending; `B` entries
/// are i.i.d. uniform on `[−1, 1]`.
pub fn make_observer(n: usize, p: usize, rate_range: (f64, f64), seed: u64) -> Result<ObserverConfig> {
    if n == 0 || p == 0 {
        return Err(Error::validation("state and output dimensions must be at least 1"));
    }
    make_observer_with_order(p * (n + 1), p, n, rate_range, seed)
}

/// Like [`make_observer`] with an explicit order `n_z`.
pub fn make_observer_with_order(
    order: usize,
    p: usize,
    n: usize,
    rate_range: (f64, f64),
    seed: u64,
) -> Result<ObserverConfig> {
    let (lo, hi) = rate_range;
    if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
        return Err(Error::validation(format!(
            "rate range must satisfy 0 < a_min < a_max, got [{lo}, {hi}]"
        )));
    }
    if order == 0 || p == 0 {
        return Err(Error::validation("observer order and output dimension must be positive"));
    }
    if (order as f64 - 1.0) * MIN_RATE_GAP > hi - lo {
        return Err(Error::validation("rate range too narrow for distinct rates"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rates: Vec<f64> = (0..order).map(|_| rng.gen_range(lo..=hi)).collect();
    rates.sort_by(f64::total_cmp);
    separate_rates(&mut rates, lo, hi);

    let mut input = Matrix::from_fn(order, p, |_, _| rng.gen_range(-1.0..=1.0));
    // A zero row has probability zero, but keep the invariant unconditional.
    for i in 0..order {
        if input.row(i).iter().all(|v| *v == 0.0) {
            input[(i, 0)] = 1.0;
        }
    }
    Ok(ObserverConfig {
        rates,
        input,
        seed: Some(seed),
        rate_range,
        state_dim: n,
    })
}

/// Enforce a gap of at least [`MIN_RATE_GAP`] between sorted rates, staying in `[lo, hi]`.
fn separate_rates(rates: &mut [f64], lo: f64, hi: f64) {
    for i in 1..rates.len() {
        if rates[i] - rates[i - 1] < MIN_RATE_GAP {
            rates[i] = rates[i - 1] + MIN_RATE_GAP;
        }
    }
    let n = rates.len();
    if n > 0 && rates[n - 1] > hi {
        rates[n - 1] = hi;
        for i in (0..n - 1).rev() {
            if rates[i + 1] - rates[i] < MIN_RATE_GAP {
                rates[i] = rates[i + 1] - MIN_RATE_GAP;
            }
        }
    }
    debug_assert!(rates.first().is_none_or(|&a| a >= lo - 1e-12));
}

/// Observer-state samples `z[k]`, one row per output sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSeries {
    times: Vec<f64>,
    states: Matrix,
    min_rate: f64,
}

impl LiftedSeries {
    pub fn new(times: Vec<f64>, states: Matrix, min_rate: f64) -> Result<Self> {
        crate::series::check_times(&times, states.rows())?;
        if !(min_rate > 0.0) {
            return Err(Error::validation("slowest observer rate must be positive"));
        }
        Ok(Self {
            times,
            states,
            min_rate,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `Z`, shape `N × n_z`.
    pub fn states(&self) -> &Matrix {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Slowest rate `a_min` of the observer that produced the series.
    pub fn min_rate(&self) -> f64 {
        self.min_rate
    }

    pub fn to_csv(&self) -> String {
        format_table("z", &self.times, &self.states)
    }

    /// Write as `t,z1,...,zn_z`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn read_csv(path: &Path, min_rate: f64) -> Result<Self> {
        let (times, states) = read_table(path, "z")?;
        Self::new(times, states, min_rate)
    }
}

/// Exact ZOH simulation of `ż = Az + By` over the sample grid of `y`.
///
/// `z0` defaults to zero.
pub fn lift(y: &OutputSeries, config: &ObserverConfig, z0: Option<&[f64]>) -> Result<LiftedSeries> {
    if y.dim() != config.output_dim() {
        return Err(Error::validation(format!(
            "output series has dimension {}, observer expects {}",
            y.dim(),
            config.output_dim()
        )));
    }
    let h = y.interval()?;
    let nz = config.order();
    let z_init = match z0 {
        Some(z) if z.len() != nz => {
            return Err(Error::validation(format!(
                "initial observer state has length {}, expected {nz}",
                z.len()
            )))
        }
        Some(z) => z.to_vec(),
        None => vec![0.0; nz],
    };

    let decay: Vec<f64> = config.rates.iter().map(|a| (-a * h).exp()).collect();
    // (1 − e^{−ah})/a without cancellation for small a·h.
    let gain: Vec<f64> = config.rates.iter().map(|a| -(-a * h).exp_m1() / a).collect();

    // Drive u[k] = B y[k] for all samples at once: U = Y Bᵀ.
    let drive = y.values().matmul_transpose(&config.input)?;
    let n = y.len();
    let mut z = Matrix::zeros(n, nz);
    z.row_mut(0).copy_from_slice(&z_init);
    for k in 1..n {
        let (prev, cur) = z.as_mut_slice().split_at_mut(k * nz);
        let prev = &prev[(k - 1) * nz..];
        let cur = &mut cur[..nz];
        let u = drive.row(k - 1);
        for i in 0..nz {
            cur[i] = decay[i] * prev[i] + gain[i] * u[i];
        }
    }
    LiftedSeries::new(y.times().to_vec(), z, config.min_rate())
}

/// Solution `T` of `TF − AT = BH` and its residual.
#[derive(Debug, Clone)]
pub struct SylvesterSolution {
    /// `T`, shape `n_z × n`.
    pub t: Matrix,
    /// `‖TF − AT − BH‖_max`.
    pub residual: f64,
}

/// Solve `TF − AT = BH` by vectorization:
/// `(Fᵀ ⊗ I − I ⊗ A) vec(T) = vec(BH)`.
pub fn solve_sylvester(f: &Matrix, h: &Matrix, a: &Matrix, b: &Matrix) -> Result<SylvesterSolution> {
    let n = f.rows();
    let nz = a.rows();
    if !f.is_square() || !a.is_square() {
        return Err(Error::validation("F and A must be square"));
    }
    if h.cols() != n || b.rows() != nz || b.cols() != h.rows() {
        return Err(Error::validation(format!(
            "incompatible shapes: F {}x{}, H {}x{}, A {}x{}, B {}x{}",
            f.rows(),
            f.cols(),
            h.rows(),
            h.cols(),
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let bh = b.matmul(h)?;
    let op = f
        .transpose()
        .kron(&Matrix::identity(nz))
        .sub(&Matrix::identity(n).kron(a))?;
    let vec_t = solve_linear(&op, &bh.vec_col_major()).map_err(|e| match e {
        Error::Singular { condition } => Error::Numerical(format!(
            "Sylvester operator is singular (F and A share an eigenvalue?); condition estimate {condition:.3e}"
        )),
        other => other,
    })?;
    let t = Matrix::from_col_major(nz, n, &vec_t);
    let residual = t.matmul(f)?.sub(&a.matmul(&t)?)?.sub(&bh)?.max_abs();
    Ok(SylvesterSolution { t, residual })
}

/// Least-squares fit of `log‖z[k] − T x[k]‖` against time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Estimated exponential rate (negative for convergence).
    pub slope: f64,
    pub intercept: f64,
    /// Samples used, `[start, end)`.
    pub window: (usize, usize),
    /// Error level treated as the floor (discretization/roundoff).
    pub floor: f64,
}

/// Fraction of trailing samples used to measure the error floor.
const FLOOR_TAIL: f64 = 0.1;
/// Samples within this factor of the floor are excluded from the fit.
const FLOOR_MARGIN: f64 = 100.0;

/// Estimate how fast the lifted states approach `T x` for a linear plant.
pub fn verify_linear_convergence(
    x_traj: &Trajectory,
    lifted: &LiftedSeries,
    sylvester: &SylvesterSolution,
) -> Result<DecayFit> {
    if x_traj.len() != lifted.len() {
        return Err(Error::validation(format!(
            "trajectory has {} samples, lifted series {}",
            x_traj.len(),
            lifted.len()
        )));
    }
    for (a, b) in x_traj.times().iter().zip(lifted.times()) {
        if (a - b).abs() > 1e-9 * (1.0 + a.abs()) {
            return Err(Error::validation("trajectory and lifted series are not time-aligned"));
        }
    }
    if sylvester.t.shape() != (lifted.states().cols(), x_traj.dim()) {
        return Err(Error::validation("T has the wrong shape for these series"));
    }
    let n = x_traj.len();
    let errors: Vec<f64> = (0..n)
        .map(|k| {
            let tx = sylvester.t.matvec(x_traj.state(k)).expect("shape checked");
            let d: Vec<f64> = lifted.states().row(k).iter().zip(&tx).map(|(z, t)| z - t).collect();
            norm2(&d)
        })
        .collect();
    let scale = (0..n)
        .map(|k| norm2(lifted.states().row(k)))
        .fold(0.0, f64::max);
    let tail_start = n - ((n as f64 * FLOOR_TAIL).ceil() as usize).clamp(1, n);
    let tail = errors[tail_start..].iter().cloned().fold(0.0, f64::max);
    let floor = tail.max(1e-14 * scale).max(f64::MIN_POSITIVE);

    let end = errors
        .iter()
        .position(|&e| e <= FLOOR_MARGIN * floor)
        .unwrap_or(n);
    if end < 3 {
        return Err(Error::Degenerate(format!(
            "observer error is already at its floor ({floor:.3e}); nothing to fit"
        )));
    }
    let ts = &x_traj.times()[..end];
    let ls: Vec<f64> = errors[..end].iter().map(|e| e.ln()).collect();
    let m = end as f64;
    let tm = ts.iter().sum::<f64>() / m;
    let lm = ls.iter().sum::<f64>() / m;
    let sxx: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
    let sxy: f64 = ts.iter().zip(&ls).map(|(t, l)| (t - tm) * (l - lm)).sum();
    let slope = sxy / sxx;
    Ok(DecayFit {
        slope,
        intercept: lm - slope * tm,
        window: (0, end),
        floor,
    })
}
