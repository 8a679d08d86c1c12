use serde::{Deserialize, Serialize};

use super::{integrate, IntegratorConfig, Trajectory};
use crate::{Error, Result};

/// Dimensionless Oregonator constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OregonatorParams {
    pub epsilon: f64,
    pub delta: f64,
    pub f: f64,
    pub q: f64,
}

impl Default for OregonatorParams {
    fn default() -> Self {
        Self {
            epsilon: 3.6e-2,
            delta: 1.2e-4,
            f: 1.0,
            q: 2.4e-4,
        }
    }
}

impl OregonatorParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.epsilon, self.delta, self.f, self.q];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "Oregonator constants must be positive, got {self:?}"
            )))
        }
    }
}

/// Three-variable Oregonator:
///
/// ```text
/// ε ẋ₁ = q x₂ − x₁ x₂ + x₁ (1 − x₁)
/// δ ẋ₂ = −q x₂ − x₁ x₂ + f x₃
///   ẋ₃ = x₁ − x₃
/// ```
#[inline]
pub fn oregonator_rhs(x: &[f64], p: &OregonatorParams) -> [f64; 3] {
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    [
        (p.q * x2 - x1 * x2 + x1 * (1.0 - x1)) / p.epsilon,
        (-p.q * x2 - x1 * x2 + p.f * x3) / p.delta,
        x1 - x3,
    ]
}

/// The positive steady state.
///
/// Eliminating `x₂ = f x₁/(q + x₁)` and `x₃ = x₁` leaves
/// `x₁² + (f + q − 1) x₁ − q(1 + f) = 0`.
pub fn oregonator_equilibrium(p: &OregonatorParams) -> [f64; 3] {
    let b = p.f + p.q - 1.0;
    let c = p.q * (1.0 + p.f);
    let disc = (b * b + 4.0 * c).sqrt();
    // Pick the cancellation-free form of the positive root.
    let x1 = if b > 0.0 { 2.0 * c / (b + disc) } else { (disc - b) / 2.0 };
    [x1, p.f * x1 / (p.q + x1), x1]
}

/// Integrate the Oregonator from `x0` over `[0, horizon]`.
pub fn simulate_oregonator(
    params: &OregonatorParams,
    x0: &[f64],
    horizon: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    params.validate()?;
    if x0.len() != 3 {
        return Err(Error::validation(format!(
            "Oregonator state has 3 components, got {}",
            x0.len()
        )));
    }
    let p = *params;
    integrate(
        move |_, x, dx| dx.copy_from_slice(&oregonator_rhs(x, &p)),
        x0,
        (0.0, horizon),
        config,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_residual() {
        let p = OregonatorParams::default();
        let xs = oregonator_equilibrium(&p);
        assert!((xs[0] - 0.021789).abs() < 1e-6, "{xs:?}");
        assert!((xs[1] - 0.98910).abs() < 1e-5, "{xs:?}");
        let r = oregonator_rhs(&xs, &p);
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-9, "residual {norm}");
    }

    #[test]
    fn hand_substitution() {
        let p = OregonatorParams::default();
        let r = oregonator_rhs(&[1.0, 0.0, 1.0], &p);
        assert_eq!(r[0], 0.0);
        assert!((r[1] - 1.0 / 1.2e-4).abs() < 1e-9);
        assert!((r[1] - 8333.33).abs() < 0.01);
        assert_eq!(r[2], 0.0);
        assert_eq!(oregonator_rhs(&[0.0, 0.0, 0.0], &p), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = OregonatorParams {
            delta: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        assert!(simulate_oregonator(&p, &[0.5; 3], 1.0, &IntegratorConfig::default()).is_err());
    }

    #[test]
    fn trajectory_stays_positive() {
        let cfg = IntegratorConfig::default();
        let traj =
            simulate_oregonator(&OregonatorParams::default(), &[0.5, 0.5, 0.5], 20.0, &cfg).unwrap();
        let min = traj.states().as_slice().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= -cfg.atol, "min state {min}");
    }
}
