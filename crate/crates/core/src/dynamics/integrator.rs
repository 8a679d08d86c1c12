//! Adaptive Dormand–Prince 5(4) integrator with PI step-size control.

use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::linalg::Matrix;
use crate::{Error, Result};

/// Step-size and tolerance settings for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h_init: 1e-4,
            h_max: 1e-2,
            h_min: 1e-9,
            max_steps: 50_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::validation("integrator tolerances must be positive"));
        }
        if !(0.0 < self.h_min && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(Error::validation(format!(
                "integrator steps must satisfy 0 < h_min <= h_init <= h_max, got {} / {} / {}",
                self.h_min, self.h_init, self.h_max
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::validation("max_steps must be positive"));
        }
        Ok(())
    }

    /// Same settings with both tolerances divided by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            rtol: self.rtol / factor,
            atol: self.atol / factor,
            ..*self
        }
    }
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Error weights: fifth-order minus embedded fourth-order coefficients.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// PI controller constants.
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Integrate `ẋ = f(t, x)` over `t_span` and record every accepted step.
///
/// `rhs(t, x, dx)` writes the derivative into `dx`. The local error of each
/// accepted step satisfies `|e_i| ≤ atol + rtol·max(|x_i|, |x_i'|)`
/// componentwise.
pub fn integrate<F>(
    mut rhs: F,
    x0: &[f64],
    t_span: (f64, f64),
    config: &IntegratorConfig,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    config.validate()?;
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(Error::validation(format!(
            "time span [{t0}, {t1}] is empty or not finite"
        )));
    }
    if x0.is_empty() || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("initial state must be non-empty and finite"));
    }
    let n = x0.len();

    let mut times = vec![t0];
    let mut states = x0.to_vec();

    let mut t = t0;
    let mut x = x0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut x_new = vec![0.0; n];

    rhs(t, &x, &mut k1);
    let mut h = config.h_init.min(t1 - t0);
    let mut err_prev: f64 = 1e-4;
    let mut steps = 0usize;
    let mut rejected_last = false;

    while t < t1 {
        if steps >= config.max_steps {
            return Err(Error::Integration {
                t,
                reason: format!("exceeded max_steps = {}", config.max_steps),
            });
        }
        steps += 1;
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }

        stage(&mut tmp, &x, h, &[(A21, &k1)]);
        rhs(t + C2 * h, &tmp, &mut k2);
        stage(&mut tmp, &x, h, &[(A31, &k1), (A32, &k2)]);
        rhs(t + C3 * h, &tmp, &mut k3);
        stage(&mut tmp, &x, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        rhs(t + C4 * h, &tmp, &mut k4);
        stage(&mut tmp, &x, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        rhs(t + C5 * h, &tmp, &mut k5);
        stage(
            &mut tmp,
            &x,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        );
        let t_next = if last { t1 } else { t + h };
        rhs(t_next, &tmp, &mut k6);
        stage(
            &mut x_new,
            &x,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        rhs(t_next, &x_new, &mut k7);

        let mut err: f64 = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = config.atol + config.rtol * x[i].abs().max(x_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() || x_new.iter().any(|v| !v.is_finite()) {
            err = f64::INFINITY;
        }

        if err <= 1.0 {
            t = t_next;
            std::mem::swap(&mut x, &mut x_new);
            std::mem::swap(&mut k1, &mut k7);
            times.push(t);
            states.extend_from_slice(&x);

            let fac = (err.powf(ALPHA) / err_prev.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if rejected_last {
                h_new = h_new.min(h);
            }
            h = h_new.min(config.h_max);
            err_prev = err.max(1e-4);
            rejected_last = false;
        } else {
            let fac = if err.is_finite() {
                (err.powf(ALPHA) / SAFETY).min(1.0 / FAC_MIN)
            } else {
                1.0 / FAC_MIN
            };
            h /= fac;
            rejected_last = true;
            if h < config.h_min {
                return Err(Error::Integration {
                    t,
                    reason: format!(
                        "step size {h:.3e} fell below h_min = {:.3e} (stiffness?)",
                        config.h_min
                    ),
                });
            }
        }
    }

    let states = Matrix::new(times.len(), n, states)?;
    Trajectory::new(times, states)
}

#[inline]
fn stage(out: &mut [f64], x: &[f64], h: f64, terms: &[(f64, &Vec<f64>)]) {
    for i in 0..out.len() {
        let mut acc = 0.0;
        for (a, k) in terms {
            acc += a * k[i];
        }
        out[i] = x[i] + h * acc;
    }
}
