use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cart-pole with explicit Euler integration.
///
/// State is `(x, x_dot, theta, theta_dot)`; the action is a push direction
/// in `{-1, +1}` scaled by `force_mag`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleEnv {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    /// Half the pole length.
    pub length: f64,
    pub force_mag: f64,
    pub tau: f64,
    pub x_threshold: f64,
    pub theta_threshold: f64,
    pub max_steps: usize,
    pub init_half_width: f64,
}

impl Default for CartPoleEnv {
    fn default() -> Self {
        CartPoleEnv {
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            length: 0.5,
            force_mag: 10.0,
            tau: 0.02,
            x_threshold: 2.4,
            theta_threshold: 12.0 * 2.0 * std::f64::consts::PI / 360.0,
            max_steps: 500,
            init_half_width: 0.05,
        }
    }
}

impl CartPoleEnv {
    pub fn step(&self, s: &[f64], a: f64) -> Result<[f64; 4]> {
        if s.len() != 4 {
            return Err(Error::Dimension {
                expected: 4,
                got: s.len(),
            });
        }
        if !a.is_finite() || s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("cart-pole step on non-finite input".into()));
        }
        let (x, x_dot, theta, theta_dot) = (s[0], s[1], s[2], s[3]);
        let force = self.force_mag * a;
        let total_mass = self.mass_cart + self.mass_pole;
        let pml = self.mass_pole * self.length;
        let (sin_t, cos_t) = (theta.sin(), theta.cos());

        let temp = (force + pml * theta_dot * theta_dot * sin_t) / total_mass;
        let theta_acc = (self.gravity * sin_t - cos_t * temp)
            / (self.length * (4.0 / 3.0 - self.mass_pole * cos_t * cos_t / total_mass));
        let x_acc = temp - pml * theta_acc * cos_t / total_mass;

        Ok([
            x + self.tau * x_dot,
            x_dot + self.tau * x_acc,
            theta + self.tau * theta_dot,
            theta_dot + self.tau * theta_acc,
        ])
    }

    pub fn is_terminal(&self, s: &[f64]) -> bool {
        s[0].abs() > self.x_threshold || s[2].abs() > self.theta_threshold
    }
}
