use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-link underactuated pendulum, torque on the middle joint, one RK4 step
/// per action.
///
/// Observations are `(sin a1, cos a1, sin a2, cos a2, w1, w2)`; the joint
/// angles are recovered with `atan2` at every step so the observation is the
/// whole state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcrobotEnv {
    pub link_length_1: f64,
    pub link_mass_1: f64,
    pub link_mass_2: f64,
    pub link_com_1: f64,
    pub link_com_2: f64,
    pub link_moi: f64,
    pub gravity: f64,
    pub dt: f64,
    pub max_vel_1: f64,
    pub max_vel_2: f64,
    pub max_steps: usize,
    pub init_half_width: f64,
}

impl Default for AcrobotEnv {
    fn default() -> Self {
        AcrobotEnv {
            link_length_1: 1.0,
            link_mass_1: 1.0,
            link_mass_2: 1.0,
            link_com_1: 0.5,
            link_com_2: 0.5,
            link_moi: 1.0,
            gravity: 9.8,
            dt: 0.2,
            max_vel_1: 4.0 * PI,
            max_vel_2: 9.0 * PI,
            max_steps: 500,
            init_half_width: 0.1,
        }
    }
}

impl AcrobotEnv {
    /// Time derivative of `(a1, a2, w1, w2)` under `torque`.
    ///
    /// Gravity terms use `sin a` directly rather than `cos(a - pi/2)` so that
    /// the right-hand side is exactly odd in `(angles, velocities, torque)`.
    pub fn derivatives(&self, q: [f64; 4], torque: f64) -> [f64; 4] {
        let (m1, m2) = (self.link_mass_1, self.link_mass_2);
        let (l1, lc1, lc2) = (self.link_length_1, self.link_com_1, self.link_com_2);
        let (i1, i2, g) = (self.link_moi, self.link_moi, self.gravity);
        let [a1, a2, w1, w2] = q;

        let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * a2.cos()) + i1 + i2;
        let d2 = m2 * (lc2 * lc2 + l1 * lc2 * a2.cos()) + i2;
        let phi2 = m2 * lc2 * g * (a1 + a2).sin();
        let phi1 = -m2 * l1 * lc2 * w2 * w2 * a2.sin()
            - 2.0 * m2 * l1 * lc2 * w2 * w1 * a2.sin()
            + (m1 * lc1 + m2 * l1) * g * a1.sin()
            + phi2;
        let acc2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * w1 * w1 * a2.sin() - phi2)
            / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
        let acc1 = -(d2 * acc2 + phi1) / d1;
        [w1, w2, acc1, acc2]
    }

    fn rk4(&self, q: [f64; 4], torque: f64) -> [f64; 4] {
        let h = self.dt;
        let add = |a: [f64; 4], k: [f64; 4], c: f64| std::array::from_fn(|i| a[i] + c * k[i]);
        let k1 = self.derivatives(q, torque);
        let k2 = self.derivatives(add(q, k1, h / 2.0), torque);
        let k3 = self.derivatives(add(q, k2, h / 2.0), torque);
        let k4 = self.derivatives(add(q, k3, h), torque);
        std::array::from_fn(|i| q[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
    }

    pub fn observe(&self, q: [f64; 4]) -> [f64; 6] {
        [q[0].sin(), q[0].cos(), q[1].sin(), q[1].cos(), q[2], q[3]]
    }

    pub fn angles_of(s: &[f64]) -> [f64; 4] {
        [s[0].atan2(s[1]), s[2].atan2(s[3]), s[4], s[5]]
    }

    pub fn step(&self, s: &[f64], a: f64) -> Result<[f64; 6]> {
        if s.len() != 6 {
            return Err(Error::Dimension {
                expected: 6,
                got: s.len(),
            });
        }
        if !a.is_finite() || s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("acrobot step on non-finite input".into()));
        }
        let mut q = self.rk4(Self::angles_of(s), a);
        q[2] = q[2].clamp(-self.max_vel_1, self.max_vel_1);
        q[3] = q[3].clamp(-self.max_vel_2, self.max_vel_2);
        Ok(self.observe(q))
    }

    /// Tip of the lower link above the bar.
    pub fn is_terminal(&self, s: &[f64]) -> bool {
        // cos(a1 + a2) = c1 c2 - s1 s2
        let cos12 = s[1] * s[3] - s[0] * s[2];
        -s[1] - cos12 > 1.0
    }
}
