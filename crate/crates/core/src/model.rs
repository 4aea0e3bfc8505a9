//! Full three-coordinate constrained model in `q = (theta, x_e, z)`.
//!
//! `theta` is the amplitude of the single retained bending mode, `x_e` is the
//! horizontal reach of the link tip measured along the undeformed axis, and
//! `z` is the cart position. The link is inextensible, which ties `x_e` to
//! `theta` through the arc-length constraint.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::params::{check_theta, PhysicalParams};
use crate::quadrature::Simpson;

/// Mode shape and its first two spatial derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeShapeEval {
    pub phi: f64,
    pub dphi: f64,
    pub ddphi: f64,
}

/// Scalar entries of the constraint gradient, potential gradient, Coriolis
/// and inertia matrices at a configuration `(theta, x_e)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullCoeffs {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
}

/// `D(q)`, `C(q, qdot)`, `B(q) = grad V` and `A(q) = grad Gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullMatrices {
    pub d: Matrix3<f64>,
    pub c: Matrix3<f64>,
    pub b: Vector3<f64>,
    pub a: Vector3<f64>,
}

/// Integrals over `[0, x_e]` that share one adaptive mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BeamIntegrals {
    pub a1: f64,
    pub a5: f64,
    pub b1: f64,
    /// Bending energy `(EI/2) * int [theta phi'']^2 / (1 + [theta phi']^2)^3`.
    pub bending: f64,
    /// `int (sqrt(w) - 1)`, which equals `L - x_e` on the constraint manifold.
    pub shortening: f64,
}

/// Plant model with the mode-shape integrals over the whole link cached.
#[derive(Debug, Clone)]
pub struct Model {
    params: PhysicalParams,
    simpson: Simpson,
    wavenumber: f64,
    int_phi: f64,
    int_phi_sq: f64,
    int_dphi_sq: f64,
    int_ddphi_sq: f64,
}

impl Model {
    pub fn new(params: PhysicalParams) -> Result<Self> {
        Self::with_quadrature(params, Simpson::default())
    }

    pub fn with_quadrature(params: PhysicalParams, simpson: Simpson) -> Result<Self> {
        params.validate()?;
        let mut model = Self {
            params,
            simpson,
            wavenumber: params.eta / params.l,
            int_phi: 0.0,
            int_phi_sq: 0.0,
            int_dphi_sq: 0.0,
            int_ddphi_sq: 0.0,
        };
        let [i0, i1, i2, i3] = simpson.integrate_vec(
            |x| {
                let s = model.shape(x);
                [s.phi, s.phi * s.phi, s.dphi * s.dphi, s.ddphi * s.ddphi]
            },
            0.0,
            params.l,
        )?;
        model.int_phi = i0;
        model.int_phi_sq = i1;
        model.int_dphi_sq = i2;
        model.int_ddphi_sq = i3;
        Ok(model)
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn quadrature(&self) -> &Simpson {
        &self.simpson
    }

    /// `int_0^L phi dx`.
    pub fn int_phi(&self) -> f64 {
        self.int_phi
    }

    /// `int_0^L phi^2 dx`.
    pub fn int_phi_sq(&self) -> f64 {
        self.int_phi_sq
    }

    /// Tip-mass inertia scalar.
    pub fn d3(&self) -> f64 {
        self.params.m
    }

    /// Total translating mass: tip, cart and link.
    pub fn d4(&self) -> f64 {
        self.params.m + self.params.mc + self.params.linear_density() * self.params.l
    }

    /// Mode shape at `x`, for `0 <= x <= L`.
    pub fn mode_shape(&self, x: f64) -> Result<ModeShapeEval> {
        if !(0.0..=self.params.l).contains(&x) {
            return Err(Error::Domain {
                name: "x",
                value: x,
                lo: 0.0,
                hi: self.params.l,
            });
        }
        Ok(self.shape(x))
    }

    #[inline]
    pub(crate) fn shape(&self, x: f64) -> ModeShapeEval {
        let k = self.wavenumber;
        let gamma = self.params.gamma;
        let arg = k * x;
        let ex = arg.exp();
        let inv = 1.0 / ex;
        let (ch, sh) = (0.5 * (ex + inv), 0.5 * (ex - inv));
        let (sn, cs) = arg.sin_cos();
        ModeShapeEval {
            phi: ch - cs + gamma * (sn - sh),
            dphi: k * (sh + sn + gamma * (cs - ch)),
            ddphi: k * k * (ch + cs - gamma * (sn + sh)),
        }
    }

    pub(crate) fn check_config(&self, theta: f64, xe: f64) -> Result<()> {
        check_theta(theta)?;
        if !(xe > 0.0 && xe <= self.params.l) {
            return Err(Error::Domain {
                name: "x_e",
                value: xe,
                lo: 0.0,
                hi: self.params.l,
            });
        }
        Ok(())
    }

    /// Arc length of the deflected link between material abscissae `a` and `b`.
    pub(crate) fn arc_length(&self, theta: f64, a: f64, b: f64) -> Result<f64> {
        self.simpson.integrate(
            |x| {
                let s = theta * self.shape(x).dphi;
                (1.0 + s * s).sqrt()
            },
            a,
            b,
        )
    }

    /// Length constraint: arc length up to `x_e` minus the link length.
    pub fn gamma_constraint(&self, theta: f64, xe: f64) -> Result<f64> {
        self.check_config(theta, xe)?;
        Ok(self.arc_length(theta, 0.0, xe)? - self.params.l)
    }

    pub(crate) fn beam_integrals(&self, theta: f64, xe: f64) -> Result<BeamIntegrals> {
        let ei = self.params.ei();
        let [a1, a5, b1, bending, shortening] = self.simpson.integrate_vec(
            |x| {
                let s = self.shape(x);
                let dp2 = s.dphi * s.dphi;
                let dd2 = s.ddphi * s.ddphi;
                let w = 1.0 + theta * theta * dp2;
                let root = w.sqrt();
                let w3 = w * w * w;
                [
                    theta * dp2 / root,
                    dp2 / (w * root),
                    ei * theta * dd2 * (1.0 - 2.0 * theta * theta * dp2) / (w3 * w),
                    0.5 * ei * theta * theta * dd2 / w3,
                    theta * theta * dp2 / (1.0 + root),
                ]
            },
            0.0,
            xe,
        )?;
        Ok(BeamIntegrals {
            a1,
            a5,
            b1,
            bending,
            shortening,
        })
    }

    pub fn full_coeffs(&self, theta: f64, xe: f64) -> Result<FullCoeffs> {
        self.check_config(theta, xe)?;
        let ints = self.beam_integrals(theta, xe)?;
        Ok(self.assemble(theta, xe, &ints))
    }

    pub(crate) fn assemble(&self, theta: f64, xe: f64, ints: &BeamIntegrals) -> FullCoeffs {
        let p = &self.params;
        let d3 = self.d3();
        let s = self.shape(xe);
        let slope = theta * s.dphi;
        let w = 1.0 + slope * slope;
        let a2 = w.sqrt();
        let bend_tip = theta * s.ddphi;
        let lin = p.linear_density();
        FullCoeffs {
            a1: ints.a1,
            a2,
            a3: 2.0 * theta * s.dphi * s.dphi / a2,
            a4: theta * theta * s.dphi * s.ddphi / a2,
            a5: ints.a5,
            b1: ints.b1,
            b2: 0.5 * p.ei() * bend_tip * bend_tip / (w * w * w) + d3 * p.g,
            c1: 2.0 * d3 * s.phi * s.dphi,
            c2: d3 * s.dphi,
            d1: lin * self.int_phi_sq + d3 * s.phi * s.phi,
            d2: d3 * s.phi + lin * self.int_phi,
            d3,
            d4: self.d4(),
        }
    }

    /// Potential energy: bending energy minus the gravity drop of the tip mass.
    pub fn potential_v(&self, theta: f64, xe: f64) -> Result<f64> {
        self.check_config(theta, xe)?;
        let ints = self.beam_integrals(theta, xe)?;
        Ok(self.potential_from(xe, &ints))
    }

    pub(crate) fn potential_from(&self, xe: f64, ints: &BeamIntegrals) -> f64 {
        ints.bending - self.d3() * self.params.g * (self.params.l - xe)
    }

    /// Potential on the manifold, with the tip drop taken from the
    /// shortening integral to avoid cancellation near the upright.
    pub(crate) fn manifold_potential(&self, ints: &BeamIntegrals) -> f64 {
        ints.bending - self.d3() * self.params.g * ints.shortening
    }

    /// Assembles the matrices of the constrained Euler–Lagrange equations.
    pub fn full_matrices(&self, q: Vector3<f64>, qdot: Vector3<f64>) -> Result<FullMatrices> {
        let (theta, xe) = (q[0], q[1]);
        let k = self.full_coeffs(theta, xe)?;
        let (thd, xed, zd) = (qdot[0], qdot[1], qdot[2]);
        let delta = 0.5 * k.c1 * thd + 0.5 * k.c2 * zd;
        #[rustfmt::skip]
        let d = Matrix3::new(
            k.d1, 0.0, k.d2,
            0.0,  k.d3, 0.0,
            k.d2, 0.0, k.d4,
        );
        #[rustfmt::skip]
        let c = Matrix3::new(
            0.5 * k.c1 * xed, delta,             0.5 * k.c2 * xed,
            -delta,           0.0,               -0.5 * k.c2 * thd,
            0.5 * k.c2 * xed, 0.5 * k.c2 * thd,  0.0,
        );
        Ok(FullMatrices {
            d,
            c,
            b: Vector3::new(k.b1, k.b2, 0.0),
            a: Vector3::new(k.a1, k.a2, 0.0),
        })
    }

    /// Curvature of the reduced potential at the upright configuration:
    /// `EI int (phi'')^2 - D3 g int (phi')^2` over the whole link.
    pub fn hess_v_theta_origin(&self) -> f64 {
        self.params.ei() * self.int_ddphi_sq - self.d3() * self.params.g * self.int_dphi_sq
    }
}
