//! Physical constants of the cart and the flexible link.

use crate::error::{Error, Result};

/// Lower edge of the admissible modal-coordinate interval.
pub const THETA_MIN: f64 = -0.3;
/// Upper edge of the admissible modal-coordinate interval.
pub const THETA_MAX: f64 = 0.3;

/// Plant constants in SI units. `Default` yields the identified laboratory values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Cross-section area of the link (m²).
    pub a0: f64,
    /// Young's modulus (N/m²).
    pub e: f64,
    /// Gravitational acceleration (m/s²).
    pub g: f64,
    /// Second moment of the cross section (kg·m² as tabulated).
    pub i: f64,
    /// Link length (m).
    pub l: f64,
    /// Tip mass (kg). Plays the role of the inertia scalar D3.
    pub m: f64,
    /// Cart mass (kg).
    pub mc: f64,
    /// Mode-frequency constant (-).
    pub eta: f64,
    /// Mode-shape mixing constant (-).
    pub gamma: f64,
    /// Link density (kg/m³).
    pub rho: f64,
    /// Viscous friction at the link base (kg/s).
    pub r1: f64,
    /// Viscous friction between rail and cart (kg/s).
    pub r3: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            a0: 8e-6,
            e: 9e10,
            g: 9.81,
            i: 1.066e-13,
            l: 0.305,
            m: 2.75e-2,
            mc: 0.1,
            eta: 1.1741,
            gamma: 0.9049,
            rho: 8400.0,
            r1: 9.86e-4,
            r3: 7.69,
        }
    }
}

impl PhysicalParams {
    /// Same plant with the link-base friction removed.
    pub fn frictionless_link(mut self) -> Self {
        self.r1 = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a0", self.a0),
            ("e", self.e),
            ("g", self.g),
            ("i", self.i),
            ("l", self.l),
            ("m", self.m),
            ("mc", self.mc),
            ("eta", self.eta),
            ("gamma", self.gamma),
            ("rho", self.rho),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("r1", self.r1), ("r3", self.r3)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Argument(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Bending stiffness E·I.
    pub fn ei(&self) -> f64 {
        self.e * self.i
    }

    /// Mass per unit length of the link.
    pub fn linear_density(&self) -> f64 {
        self.rho * self.a0
    }
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if (THETA_MIN..=THETA_MAX).contains(&theta) {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "theta",
            value: theta,
            lo: THETA_MIN,
            hi: THETA_MAX,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        PhysicalParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_negative_friction() {
        let p = PhysicalParams {
            r3: -1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_friction_is_allowed() {
        PhysicalParams::default()
            .frictionless_link()
            .validate()
            .unwrap();
    }

    #[test]
    fn theta_domain() {
        assert!(check_theta(0.3).is_ok());
        assert!(check_theta(-0.3).is_ok());
        assert!(matches!(check_theta(0.31), Err(Error::Domain { .. })));
        assert!(check_theta(f64::NAN).is_err());
    }
}
