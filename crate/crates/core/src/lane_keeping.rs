//! Lane-keeping demo: a linearized bicycle model with delayed steering and
//! previewed desired yaw rate, built from user-supplied vehicle parameters.
//!
//! State `(y, v, Δψ, r)`: lateral offset, lateral velocity, yaw angle error
//! and yaw rate. Forward Euler with step `h`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::HPolytope;
use crate::system::{DelaySystemSpec, DisturbanceChannel, LinearSystem};

/// Vehicle and scenario parameters. The defaults are illustrative values for
/// a mid-size passenger car, not measured data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaneKeepingParams {
    /// Vehicle mass, kg.
    pub mass: f64,
    /// Yaw moment of inertia, kg·m².
    pub yaw_inertia: f64,
    /// Distance from the center of gravity to the front axle, m.
    pub front_axle: f64,
    /// Distance from the center of gravity to the rear axle, m.
    pub rear_axle: f64,
    /// Front and rear cornering stiffness, N/rad.
    pub front_stiffness: f64,
    pub rear_stiffness: f64,
    /// Longitudinal speed, m/s.
    pub speed: f64,
    /// Sampling period, s.
    pub step: f64,
    /// Steering angle bound, rad.
    pub steer_limit: f64,
    /// Safe bounds on `|y|`, `|v|`, `|Δψ|`, `|r|`.
    pub state_bounds: [f64; 4],
    /// Bound on the desired yaw rate, rad/s.
    pub yaw_rate_bound: f64,
    pub tau: usize,
    pub preview: usize,
}

impl Default for LaneKeepingParams {
    fn default() -> Self {
        Self {
            mass: 1573.0,
            yaw_inertia: 2873.0,
            front_axle: 1.1,
            rear_axle: 1.58,
            front_stiffness: 80000.0,
            rear_stiffness: 80000.0,
            speed: 30.0,
            step: 0.1,
            steer_limit: std::f64::consts::FRAC_PI_2,
            state_bounds: [0.9, 1.2, 0.05, 0.3],
            yaw_rate_bound: 0.05,
            tau: 2,
            preview: 1,
        }
    }
}

impl LaneKeepingParams {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("front_axle", self.front_axle),
            ("rear_axle", self.rear_axle),
            ("front_stiffness", self.front_stiffness),
            ("rear_stiffness", self.rear_stiffness),
            ("speed", self.speed),
            ("step", self.step),
            ("steer_limit", self.steer_limit),
            ("yaw_rate_bound", self.yaw_rate_bound),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        if self.state_bounds.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidSpec("state bounds must be positive".into()));
        }
        Ok(())
    }

    /// Continuous-time `(A, B, F)`.
    pub fn continuous(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (m, iz, a, b) = (self.mass, self.yaw_inertia, self.front_axle, self.rear_axle);
        let (cf, cr, u) = (self.front_stiffness, self.rear_stiffness, self.speed);
        #[rustfmt::skip]
        let ac = DMatrix::from_row_slice(4, 4, &[
            0.0, 1.0, u, 0.0,
            0.0, -(cf + cr) / (m * u), 0.0, (b * cr - a * cf) / (m * u) - u,
            0.0, 0.0, 0.0, 1.0,
            0.0, (b * cr - a * cf) / (iz * u), 0.0, -(a * a * cf + b * b * cr) / (iz * u),
        ]);
        let bc = DMatrix::from_column_slice(4, 1, &[0.0, cf / m, 0.0, a * cf / iz]);
        let fc = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, -1.0, 0.0]);
        (ac, bc, fc)
    }

    /// The delayed, previewed discrete-time system.
    pub fn to_spec(&self) -> Result<DelaySystemSpec> {
        self.validate()?;
        let h = self.step;
        let (ac, bc, fc) = self.continuous();
        let a = DMatrix::identity(4, 4) + ac * h;
        let sb = &self.state_bounds;
        let base = LinearSystem::new(
            a,
            bc * h,
            vec![DisturbanceChannel {
                gain: fc * h,
                set: HPolytope::symmetric_box(&[self.yaw_rate_bound])?,
            }],
            HPolytope::universe(4),
            HPolytope::symmetric_box(&[self.steer_limit])?,
        )?;
        let safe = HPolytope::symmetric_box(&[sb[0], sb[1], sb[2], sb[3]])?;
        let previewed = (self.preview > 0).then_some(0);
        DelaySystemSpec::new(base, self.tau, self.preview, safe, previewed)
    }
}
