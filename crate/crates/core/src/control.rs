//! Energy-shaping controller: partial feedback linearization of the cart,
//! cyclo-passive outputs, and a PID on their weighted sum written in a form
//! that needs no differentiation of measured signals.

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::params::{PhysicalParams, THETA_MAX, THETA_MIN};
use crate::reduced::{CoefficientSource, ReducedCoeffs};
use crate::sim::ReducedState;

/// Default margin in the `k_u` bound.
pub const DEFAULT_EPS: f64 = 1e-2;
/// Default lower bound on `|K(theta)|`.
pub const DEFAULT_DELTA: f64 = 1e-3;
/// Safety factor applied to the sampled maximum of `D_theta / G_theta^2`.
pub const C_BOUND_SAFETY: f64 = 1.01;
/// Grid size used by [`check_gains`] for the grid-wide conditions.
pub const CHECK_GRID: usize = 2001;

/// Output weights, PID gains and feasibility margins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub ke: f64,
    pub ka: f64,
    pub ku: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub eps: f64,
    pub delta: f64,
    /// Dominating constant for `D_theta / G_theta^2`; computed over the
    /// admissible grid when absent.
    pub c_bound: Option<f64>,
}

impl Gains {
    pub fn new(ke: f64, ka: f64, ku: f64, kd: f64, kp: f64, ki: f64) -> Self {
        Self {
            ke,
            ka,
            ku,
            kp,
            ki,
            kd,
            eps: DEFAULT_EPS,
            delta: DEFAULT_DELTA,
            c_bound: None,
        }
    }

    pub fn set1() -> Self {
        Self::new(1.0, 0.5, -50.77, 1.47, 1.94, 0.35)
    }

    pub fn set2() -> Self {
        Self::new(1.0, 1.0, -61.37, 1.28, 1.92, 0.52)
    }

    pub fn set3() -> Self {
        Self::new(1.0, 1.0, -43.04, 2.18, 3.66, 1.35)
    }

    /// Gains retuned on the laboratory rig.
    pub fn experimental() -> Self {
        Self::new(1.0, 1.0, -47.5, 1.9, 3.0, 0.9)
    }

    /// Looks up a named preset (`Set1`, `Set2`, `Set3`, `Exp`), case-insensitively.
    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "set1" => Some(Self::set1()),
            "set2" => Some(Self::set2()),
            "set3" => Some(Self::set3()),
            "exp" => Some(Self::experimental()),
            _ => None,
        }
    }
}

/// PID integral state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub xi: f64,
}

impl ControllerState {
    /// Integral state that makes `xi = k_a z + k_u V_N(theta)` hold for the
    /// whole run, so the shaped energy carries no integration constant.
    pub fn initial<S: CoefficientSource + ?Sized>(
        source: &S,
        gains: &Gains,
        theta: f64,
        z: f64,
    ) -> Result<Self> {
        Ok(Self {
            xi: gains.ka * z + gains.ku * source.v_n(theta)?,
        })
    }
}

/// The two cyclo-passive outputs and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassiveOutputs {
    pub ya: f64,
    pub yu: f64,
    pub ytilde: f64,
}

pub fn passive_outputs(
    c: &ReducedCoeffs,
    gains: &Gains,
    thetadot: f64,
    zdot: f64,
) -> PassiveOutputs {
    let ya = zdot;
    let yu = c.g_theta * thetadot;
    PassiveOutputs {
        ya,
        yu,
        ytilde: gains.ka * ya + gains.ku * yu,
    }
}

/// Drift part of the derivative of the weighted output, divided by `k_u`.
pub fn s_function(c: &ReducedCoeffs, params: &PhysicalParams, thetadot: f64) -> f64 {
    c.dg_dtheta() * thetadot * thetadot
        - c.g_theta / c.d_theta
            * (c.c_theta * thetadot * thetadot + params.r1 * thetadot + c.b_theta)
}

/// Coefficient multiplying `u` once the output derivative is substituted.
pub fn k_function(c: &ReducedCoeffs, gains: &Gains) -> f64 {
    gains.ke + gains.kd * (gains.ka + gains.ku * c.g_theta * c.g_theta / c.d_theta)
}

/// Outer-loop cart acceleration command.
pub fn pid_u(
    c: &ReducedCoeffs,
    params: &PhysicalParams,
    gains: &Gains,
    state: &ReducedState,
) -> Result<f64> {
    let k = k_function(c, gains);
    if !(k.abs() >= gains.delta) {
        return Err(Error::Realizability {
            theta: state.theta,
            k_abs: k.abs(),
            delta: gains.delta,
        });
    }
    let y = passive_outputs(c, gains, state.thetadot, state.zdot).ytilde;
    let s = s_function(c, params, state.thetadot);
    Ok(-(gains.kp * y + gains.ki * state.xi + gains.kd * gains.ku * s) / k)
}

/// Cart force that turns the cart dynamics into `z'' = u`.
pub fn pfl_tau(
    c: &ReducedCoeffs,
    params: &PhysicalParams,
    d4: f64,
    state: &ReducedState,
    u: f64,
) -> Result<f64> {
    if !(c.d_theta > 0.0) {
        return Err(Error::Degenerate(format!(
            "reduced inertia {} is not positive at theta = {}",
            c.d_theta, state.theta
        )));
    }
    let ratio = c.d_z / c.d_theta;
    let thd = state.thetadot;
    Ok(
        params.r3 * state.zdot + (c.c_z - ratio * c.c_theta) * thd * thd
            - ratio * params.r1 * thd
            - ratio * c.b_theta
            + (d4 - c.d_z * ratio) * u,
    )
}

/// Storage function of the actuated output.
pub fn storage_ha(zdot: f64) -> f64 {
    0.5 * zdot * zdot
}

/// Storage function of the unactuated output.
pub fn storage_hu(c: &ReducedCoeffs, v_theta: f64, thetadot: f64) -> f64 {
    0.5 * c.d_theta * thetadot * thetadot + v_theta
}

/// Largest sampled `D_theta / G_theta^2`, inflated by [`C_BOUND_SAFETY`].
pub fn c_bound<S: CoefficientSource + ?Sized>(source: &S, theta_samples: &[f64]) -> Result<f64> {
    if theta_samples.is_empty() {
        return Err(Error::Argument("c_bound needs at least one sample".into()));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut hint = None;
    for &theta in theta_samples {
        let s = source.sample(theta, hint)?;
        hint = Some(s.xe);
        let c = s.coeffs;
        worst = worst.max(c.d_theta / (c.g_theta * c.g_theta));
    }
    Ok(C_BOUND_SAFETY * worst)
}

/// Uniform grid over the admissible amplitudes, endpoints included.
pub fn admissible_grid(n: usize) -> Vec<f64> {
    let n = n.max(2);
    let step = (THETA_MAX - THETA_MIN) / (n - 1) as f64;
    (0..n)
        .map(|i| {
            if i == n - 1 {
                THETA_MAX
            } else {
                THETA_MIN + i as f64 * step
            }
        })
        .collect()
}

/// Kinetic metric of the shaped energy.
pub fn dd_matrix(c: &ReducedCoeffs, gains: &Gains) -> Matrix2<f64> {
    let Gains { ke, ka, ku, kd, .. } = *gains;
    let g = c.g_theta;
    let off = ka * ku * kd * g;
    Matrix2::new(
        ke * ku * c.d_theta + ku * ku * kd * g * g,
        off,
        off,
        ke * ka + ka * ka * kd,
    )
}

/// Shaped potential from the reduced potential and the virtual-spring term.
pub fn v_d_from(v_theta: f64, spring: f64, gains: &Gains) -> f64 {
    gains.ke * gains.ku * v_theta + 0.5 * gains.ki * spring * spring
}

/// Shaped potential `k_e k_u V_theta + (K_I / 2) (k_a z + k_u V_N)^2`.
pub fn v_d(model: &Model, theta: f64, z: f64, gains: &Gains) -> Result<f64> {
    let spring = gains.ka * z + gains.ku * model.v_n(theta)?;
    Ok(v_d_from(model.v_theta(theta)?, spring, gains))
}

/// Shaped total energy as a function of `(theta, z, thetadot, zdot)`.
pub fn h_d(model: &Model, state: &ReducedState, gains: &Gains) -> Result<f64> {
    let sample = model.manifold_sample(state.theta)?;
    let spring = gains.ka * state.z + gains.ku * model.v_n(state.theta)?;
    Ok(kinetic_d(&sample.coeffs, gains, state) + v_d_from(sample.v_theta, spring, gains))
}

fn kinetic_d(c: &ReducedCoeffs, gains: &Gains, state: &ReducedState) -> f64 {
    let v = nalgebra::Vector2::new(state.thetadot, state.zdot);
    0.5 * v.dot(&(dd_matrix(c, gains) * v))
}

/// Shaped energy evaluated with the integral state standing in for the
/// virtual-spring elongation. Equals [`h_d`] whenever `xi` was initialized
/// by [`ControllerState::initial`].
pub fn shaped_energy(c: &ReducedCoeffs, v_theta: f64, state: &ReducedState, gains: &Gains) -> f64 {
    kinetic_d(c, gains, state) + v_d_from(v_theta, state.xi, gains)
}

/// Hessian of the shaped potential at the origin.
pub fn vd_hessian_origin(model: &Model, gains: &Gains) -> Result<Matrix2<f64>> {
    let dz0 = model.reduced_coeffs(0.0)?.d_z;
    let Gains { ke, ka, ku, ki, .. } = *gains;
    let nu = ke * ku * model.hess_v_theta_origin() + ki * ku * ku * dz0 * dz0;
    let off = -ki * ku * ka * dz0;
    Ok(Matrix2::new(nu, off, off, ki * ka * ka))
}

/// One line of the feasibility report.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Distance to the threshold; non-negative iff the condition passes
    /// (strict conditions require it to be positive).
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub c_bound: f64,
    pub conditions: Vec<ConditionCheck>,
}

impl FeasibilityReport {
    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionCheck> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

/// Evaluates every gain condition that guarantees a positive-definite shaped
/// energy and a realizable control law.
pub fn check_gains(model: &Model, gains: &Gains) -> Result<FeasibilityReport> {
    let grid = admissible_grid(CHECK_GRID);
    let samples = {
        let mut hint = None;
        let mut out = Vec::with_capacity(grid.len());
        for &theta in &grid {
            let s = model.sample(theta, hint)?;
            hint = Some(s.xe);
            out.push(s);
        }
        out
    };
    let c_bound = match gains.c_bound {
        Some(c) => c,
        None => {
            let worst = samples
                .iter()
                .map(|s| s.coeffs.d_theta / (s.coeffs.g_theta * s.coeffs.g_theta))
                .fold(f64::NEG_INFINITY, f64::max);
            C_BOUND_SAFETY * worst
        }
    };
    let Gains {
        ke,
        ka,
        ku,
        kp,
        ki,
        kd,
        eps,
        delta,
        ..
    } = *gains;

    let mut conditions = Vec::new();

    let sign_margin = [ke, ka, kp, ki, kd, -ku]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    conditions.push(ConditionCheck {
        name: "signs",
        passed: sign_margin > 0.0,
        margin: sign_margin,
        detail: "ke, ka, KP, KI, KD > 0 and ku < 0".into(),
    });

    let threshold = if kd > 0.0 {
        -c_bound * (ka + ke / kd) - eps
    } else {
        f64::NEG_INFINITY
    };
    let ku_margin = threshold - ku;
    conditions.push(ConditionCheck {
        name: "ku_bound",
        passed: ku_margin >= 0.0,
        margin: ku_margin,
        detail: format!("ku <= -C (ka + ke/KD) - eps = {threshold}"),
    });

    let (k_min, k_at) = samples
        .iter()
        .map(|s| (k_function(&s.coeffs, gains).abs(), s.theta))
        .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    conditions.push(ConditionCheck {
        name: "realizability",
        passed: k_min >= delta,
        margin: k_min - delta,
        detail: format!("min |K(theta)| = {k_min} at theta = {k_at}, delta = {delta}"),
    });

    let (det_min, det_at) = samples
        .iter()
        .map(|s| (dd_matrix(&s.coeffs, gains).determinant(), s.theta))
        .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    let dd22 = ke * ka + ka * ka * kd;
    let dd_margin = det_min.min(dd22);
    conditions.push(ConditionCheck {
        name: "dd_positive",
        passed: dd_margin > 0.0,
        margin: dd_margin,
        detail: format!("min det D_d = {det_min} at theta = {det_at}, D_d[1,1] = {dd22}"),
    });

    let hess = vd_hessian_origin(model, gains)?;
    let eig_min = hess.symmetric_eigenvalues().min();
    conditions.push(ConditionCheck {
        name: "vd_hessian",
        passed: eig_min > 0.0,
        margin: eig_min,
        detail: format!("min eigenvalue of the V_d Hessian at the origin = {eig_min}"),
    });

    Ok(FeasibilityReport {
        c_bound,
        conditions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn model() -> Model {
        Model::new(PhysicalParams::default()).unwrap()
    }

    fn at(model: &Model, theta: f64) -> ReducedCoeffs {
        model.reduced_coeffs(theta).unwrap()
    }

    #[test]
    fn presets_match_the_tables() {
        let s1 = Gains::preset("Set1").unwrap();
        assert_eq!(
            (s1.ke, s1.ka, s1.ku, s1.kd, s1.kp, s1.ki),
            (1.0, 0.5, -50.77, 1.47, 1.94, 0.35)
        );
        let s3 = Gains::preset("set3").unwrap();
        assert_eq!(
            (s3.ke, s3.ka, s3.ku, s3.kd, s3.kp, s3.ki),
            (1.0, 1.0, -43.04, 2.18, 3.66, 1.35)
        );
        assert!(Gains::preset("Set4").is_none());
    }

    #[test]
    fn outputs_vanish_at_rest() {
        let m = model();
        let o = passive_outputs(&at(&m, 0.1), &Gains::set1(), 0.0, 0.0);
        assert_eq!((o.ya, o.yu, o.ytilde), (0.0, 0.0, 0.0));
    }

    #[test]
    fn weighted_output_with_set1() {
        let m = model();
        let c = at(&m, 0.0);
        let o = passive_outputs(&c, &Gains::set1(), 1.0, 1.0);
        assert_eq!(o.yu, c.g_theta);
        assert!(o.yu < 0.0);
        assert_abs_diff_eq!(o.ytilde, 0.5 + (-50.77) * c.g_theta, epsilon = 1e-15);
    }

    #[test]
    fn s_vanishes_at_upright_rest() {
        let m = Model::new(PhysicalParams::default().frictionless_link()).unwrap();
        assert_eq!(s_function(&at(&m, 0.0), m.params(), 0.0), 0.0);
    }

    #[test]
    fn k_without_derivative_gain_is_ke() {
        let m = model();
        let mut g = Gains::set2();
        g.kd = 0.0;
        for theta in [-0.2, 0.0, 0.15] {
            assert_eq!(k_function(&at(&m, theta), &g), g.ke);
        }
    }

    #[test]
    fn k_is_bounded_away_from_zero_at_upright() {
        let m = model();
        let k = k_function(&at(&m, 0.0), &Gains::set1());
        assert!(k.abs() >= DEFAULT_DELTA);
        // The ku bound forces K to be negative.
        assert!(k < 0.0);
    }

    #[test]
    fn pid_is_zero_at_origin() {
        let m = model();
        let u = pid_u(
            &at(&m, 0.0),
            m.params(),
            &Gains::set1(),
            &ReducedState::default(),
        )
        .unwrap();
        assert_eq!(u, 0.0);
    }

    #[test]
    fn pid_reduces_to_proportional() {
        let m = model();
        let mut g = Gains::set1();
        g.ki = 0.0;
        g.kd = 0.0;
        let c = at(&m, 0.05);
        let state = ReducedState {
            theta: 0.05,
            thetadot: 0.3,
            zdot: -0.2,
            ..Default::default()
        };
        let y = passive_outputs(&c, &g, 0.3, -0.2).ytilde;
        let u = pid_u(&c, m.params(), &g, &state).unwrap();
        assert_abs_diff_eq!(u, -g.kp * y / g.ke, epsilon = 1e-15);
    }

    #[test]
    fn pid_rejects_unrealizable_gains() {
        let m = model();
        let c = at(&m, 0.0);
        // Choose ke so that K(0) is exactly zero.
        let mut g = Gains::set1();
        g.ke = 0.0;
        g.ke = -k_function(&c, &g);
        let err = pid_u(&c, m.params(), &g, &ReducedState::default()).unwrap_err();
        assert!(matches!(err, Error::Realizability { .. }));
    }

    #[test]
    fn pfl_at_origin() {
        let m = model();
        let c = at(&m, 0.0);
        let origin = ReducedState::default();
        assert_eq!(pfl_tau(&c, m.params(), m.d4(), &origin, 0.0).unwrap(), 0.0);
        let tau = pfl_tau(&c, m.params(), m.d4(), &origin, 1.0).unwrap();
        assert_abs_diff_eq!(tau, m.d4() - c.d_z * c.d_z / c.d_theta, epsilon = 1e-15);
        assert!(tau > 0.0);
    }

    #[test]
    fn pfl_rejects_degenerate_inertia() {
        let m = model();
        let mut c = at(&m, 0.0);
        c.d_theta = 0.0;
        assert!(matches!(
            pfl_tau(&c, m.params(), m.d4(), &ReducedState::default(), 1.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn c_bound_single_sample() {
        let m = model();
        let c = at(&m, 0.0);
        let lin = m.params().linear_density();
        let tip = m.mode_shape(0.305).unwrap().phi;
        let closed = (0.0275 * tip * tip + lin * m.int_phi_sq())
            / (0.0275 * tip + lin * m.int_phi()).powi(2);
        assert_abs_diff_eq!(c.d_theta / (c.g_theta * c.g_theta), closed, epsilon = 1e-12);
        assert_abs_diff_eq!(c_bound(&m, &[0.0]).unwrap(), 1.01 * closed, epsilon = 1e-12);
    }

    #[test]
    fn c_bound_grows_with_samples() {
        let m = model();
        let one = c_bound(&m, &[0.0]).unwrap();
        let many = c_bound(&m, &[0.0, 0.1, -0.1, 0.2, -0.2]).unwrap();
        assert!(many >= one);
        assert!(c_bound(&m, &[]).is_err());
    }

    #[test]
    fn set1_is_feasible() {
        let report = check_gains(&model(), &Gains::set1()).unwrap();
        assert!(report.all_passed(), "{report:#?}");
    }

    #[test]
    fn positive_ku_fails_sign_check() {
        let mut g = Gains::set1();
        g.ku = 1.0;
        let report = check_gains(&model(), &g).unwrap();
        assert!(!report.get("signs").unwrap().passed);
        assert!(!report.all_passed());
    }

    #[test]
    fn ku_just_above_threshold_fails() {
        let m = model();
        let base = check_gains(&m, &Gains::set1()).unwrap();
        let mut g = Gains::set1();
        g.ku = -base.c_bound * (g.ka + g.ke / g.kd) + 0.01;
        let report = check_gains(&m, &g).unwrap();
        assert!(!report.get("ku_bound").unwrap().passed);
    }

    #[test]
    fn shaped_energy_vanishes_at_origin() {
        let m = model();
        assert_eq!(
            h_d(&m, &ReducedState::default(), &Gains::set2()).unwrap(),
            0.0
        );
        assert_eq!(v_d(&m, 0.0, 0.0, &Gains::set2()).unwrap(), 0.0);
    }

    #[test]
    fn hessian_determinant_closed_form() {
        let m = model();
        let g = Gains::set1();
        let h = vd_hessian_origin(&m, &g).unwrap();
        let expected = g.ke * g.ku * m.hess_v_theta_origin() * g.ki * g.ka * g.ka;
        assert!(expected > 0.0);
        assert_abs_diff_eq!(h.determinant(), expected, epsilon = 1e-12 * expected.abs());
    }
}
