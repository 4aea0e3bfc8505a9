//! Fixed-step RK4 simulation of the reduced closed loop, either in Spong's
//! normal form (driven by the cart acceleration `u`) or in the reduced
//! Euler–Lagrange form (driven by the PFL cart force `tau`).

use std::fmt;

use crate::control::{
    passive_outputs, pfl_tau, pid_u, shaped_energy, storage_hu, v_d_from, ControllerState, Gains,
};
use crate::error::{Error, Result};
use crate::params::PhysicalParams;
use crate::reduced::{CoefficientSource, ManifoldSample, ReducedCoeffs};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 30.0;

/// Reduced configuration, velocities and the PID integral state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReducedState {
    pub theta: f64,
    pub z: f64,
    pub thetadot: f64,
    pub zdot: f64,
    pub xi: f64,
}

impl ReducedState {
    pub fn to_array(self) -> [f64; 5] {
        [self.theta, self.z, self.thetadot, self.zdot, self.xi]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            theta: a[0],
            z: a[1],
            thetadot: a[2],
            zdot: a[3],
            xi: a[4],
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Initial configuration and velocities; the integral state is derived.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InitialConditions {
    pub theta: f64,
    pub z: f64,
    pub thetadot: f64,
    pub zdot: f64,
}

impl InitialConditions {
    pub fn ics1() -> Self {
        Self {
            theta: -0.08,
            z: -0.1,
            ..Default::default()
        }
    }

    /// Starts at rest on a stable open-loop equilibrium.
    pub fn ics2() -> Self {
        Self {
            theta: 0.134,
            ..Default::default()
        }
    }

    /// Upright link with the cart displaced.
    pub fn ics3() -> Self {
        Self {
            z: -0.15,
            ..Default::default()
        }
    }

    pub fn origin() -> Self {
        Self::default()
    }

    /// Named preset (`ICs1`, `ICs2`, `ICs3`, `origin`), case-insensitively.
    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "ics1" => Some(Self::ics1()),
            "ics2" => Some(Self::ics2()),
            "ics3" => Some(Self::ics3()),
            "origin" => Some(Self::origin()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Form {
    /// Normal form: `z'' = u`.
    #[default]
    Rel,
    /// Reduced Euler–Lagrange form driven by the cart force.
    Srel,
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Form::Rel => "rel",
            Form::Srel => "srel",
        })
    }
}

/// Normal-form vector field for a given cart acceleration.
pub fn rhs_rel(
    c: &ReducedCoeffs,
    params: &PhysicalParams,
    gains: &Gains,
    state: &ReducedState,
    u: f64,
) -> [f64; 5] {
    let thd = state.thetadot;
    let thdd = (c.g_theta * u - c.c_theta * thd * thd - params.r1 * thd - c.b_theta) / c.d_theta;
    let y = passive_outputs(c, gains, thd, state.zdot).ytilde;
    [thd, state.zdot, thdd, u, y]
}

/// Reduced Euler–Lagrange vector field for a given cart force.
pub fn rhs_srel(
    c: &ReducedCoeffs,
    params: &PhysicalParams,
    d4: f64,
    gains: &Gains,
    state: &ReducedState,
    tau: f64,
) -> Result<[f64; 5]> {
    let det = c.d_theta * d4 - c.d_z * c.d_z;
    if !(det.abs() > f64::EPSILON * (c.d_theta * d4).abs()) {
        return Err(Error::Degenerate(format!(
            "reduced inertia block is singular at theta = {}",
            state.theta
        )));
    }
    let thd = state.thetadot;
    let r1 = -c.c_theta * thd * thd - params.r1 * thd - c.b_theta;
    let r2 = tau - c.c_z * thd * thd - params.r3 * state.zdot;
    let thdd = (d4 * r1 - c.d_z * r2) / det;
    let zdd = (c.d_theta * r2 - c.d_z * r1) / det;
    let y = passive_outputs(c, gains, thd, state.zdot).ytilde;
    Ok([thd, state.zdot, thdd, zdd, y])
}

/// One recorded instant of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: ReducedState,
    pub u: f64,
    pub tau: f64,
    pub xe: f64,
    pub ya: f64,
    pub yu: f64,
    pub ytilde: f64,
    /// Shaped energy; the spring elongation is read from the integral state.
    pub h_d: f64,
    pub h_u: f64,
    pub v_d: f64,
}

/// Why a run stopped before the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Abort {
    pub t: f64,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub step: f64,
    pub form: Form,
    pub samples: Vec<TrajectorySample>,
    pub abort: Option<Abort>,
}

impl Trajectory {
    pub fn is_complete(&self) -> bool {
        self.abort.is_none()
    }

    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }
}

/// Closed loop of a coefficient source with the energy-shaping PID.
pub struct ClosedLoop<'a, S: CoefficientSource + ?Sized> {
    source: &'a S,
    gains: Gains,
    form: Form,
}

struct Evaluation {
    sample: ManifoldSample,
    u: f64,
    tau: f64,
    deriv: [f64; 5],
}

impl<'a, S: CoefficientSource + ?Sized> ClosedLoop<'a, S> {
    pub fn new(source: &'a S, gains: Gains, form: Form) -> Self {
        Self {
            source,
            gains,
            form,
        }
    }

    fn evaluate(&self, state: &ReducedState, hint: Option<f64>) -> Result<Evaluation> {
        if !state.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite state {state:?}")));
        }
        let params = self.source.params();
        let d4 = self.source.d4();
        let sample = self.source.sample(state.theta, hint)?;
        let c = &sample.coeffs;
        let u = pid_u(c, params, &self.gains, state)?;
        let tau = pfl_tau(c, params, d4, state, u)?;
        let deriv = match self.form {
            Form::Rel => rhs_rel(c, params, &self.gains, state, u),
            Form::Srel => rhs_srel(c, params, d4, &self.gains, state, tau)?,
        };
        Ok(Evaluation {
            sample,
            u,
            tau,
            deriv,
        })
    }

    /// Closed-loop vector field at `state`.
    pub fn derivative(&self, state: &ReducedState) -> Result<[f64; 5]> {
        Ok(self.evaluate(state, None)?.deriv)
    }

    fn record(&self, t: f64, state: ReducedState, e: &Evaluation) -> TrajectorySample {
        let c = &e.sample.coeffs;
        let out = passive_outputs(c, &self.gains, state.thetadot, state.zdot);
        TrajectorySample {
            t,
            state,
            u: e.u,
            tau: e.tau,
            xe: e.sample.xe,
            ya: out.ya,
            yu: out.yu,
            ytilde: out.ytilde,
            h_d: shaped_energy(c, e.sample.v_theta, &state, &self.gains),
            h_u: storage_hu(c, e.sample.v_theta, state.thetadot),
            v_d: v_d_from(e.sample.v_theta, state.xi, &self.gains),
        }
    }

    /// Integrates from `ics` over `[0, horizon]` with fixed step `step`.
    /// Leaving the admissible domain or losing realizability stops the run
    /// and is reported in [`Trajectory::abort`].
    pub fn run(&self, ics: &InitialConditions, horizon: f64, step: f64) -> Result<Trajectory> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Argument(format!(
                "step must be positive, got {step}"
            )));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::Argument(format!(
                "horizon must be non-negative, got {horizon}"
            )));
        }
        let n_steps = (horizon / step - 1e-9).ceil().max(0.0) as usize;
        let xi = ControllerState::initial(self.source, &self.gains, ics.theta, ics.z)?.xi;
        let mut state = ReducedState {
            theta: ics.theta,
            z: ics.z,
            thetadot: ics.thetadot,
            zdot: ics.zdot,
            xi,
        };
        let mut traj = Trajectory {
            step,
            form: self.form,
            samples: Vec::with_capacity(n_steps + 1),
            abort: None,
        };
        let mut hint = None;
        for k in 0..=n_steps {
            let t = k as f64 * step;
            let stepped = self.evaluate(&state, hint).and_then(|e1| {
                traj.samples.push(self.record(t, state, &e1));
                if k == n_steps {
                    return Ok(None);
                }
                let xe = Some(e1.sample.xe);
                self.rk4(&state, &e1.deriv, step, xe).map(|s| Some((s, xe)))
            });
            match stepped {
                Ok(Some((next, xe))) => {
                    state = next;
                    hint = xe;
                }
                Ok(None) => {}
                Err(error) => {
                    traj.abort = Some(Abort { t, error });
                    break;
                }
            }
        }
        Ok(traj)
    }

    fn rk4(
        &self,
        state: &ReducedState,
        k1: &[f64; 5],
        h: f64,
        hint: Option<f64>,
    ) -> Result<ReducedState> {
        let x = state.to_array();
        let shift = |k: &[f64; 5], a: f64| {
            let mut out = x;
            for i in 0..5 {
                out[i] += a * k[i];
            }
            ReducedState::from_array(out)
        };
        let k2 = self.evaluate(&shift(k1, 0.5 * h), hint)?.deriv;
        let k3 = self.evaluate(&shift(&k2, 0.5 * h), hint)?.deriv;
        let k4 = self.evaluate(&shift(&k3, h), hint)?.deriv;
        let mut out = x;
        for i in 0..5 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(ReducedState::from_array(out))
    }
}

/// Runs the closed loop from `ics` in the requested form.
pub fn integrate_closed_loop<S: CoefficientSource + ?Sized>(
    source: &S,
    gains: &Gains,
    ics: &InitialConditions,
    horizon: f64,
    step: f64,
    form: Form,
) -> Result<Trajectory> {
    ClosedLoop::new(source, *gains, form).run(ics, horizon, step)
}

/// Largest state difference between the two closed-loop forms over a run.
pub fn cross_check_pfl<S: CoefficientSource + ?Sized>(
    source: &S,
    gains: &Gains,
    ics: &InitialConditions,
    horizon: f64,
    step: f64,
) -> Result<f64> {
    let rel = integrate_closed_loop(source, gains, ics, horizon, step, Form::Rel)?;
    let srel = integrate_closed_loop(source, gains, ics, horizon, step, Form::Srel)?;
    for (name, t) in [("rel", &rel), ("srel", &srel)] {
        if let Some(a) = &t.abort {
            return Err(Error::Setup(format!(
                "{name} run aborted at t = {}: {}",
                a.t, a.error
            )));
        }
    }
    Ok(rel
        .samples
        .iter()
        .zip(&srel.samples)
        .map(|(a, b)| a.state.max_abs_diff(&b.state))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;
    use approx::assert_abs_diff_eq;

    fn model() -> Model {
        Model::new(PhysicalParams::default()).unwrap()
    }

    #[test]
    fn origin_is_an_equilibrium_of_both_forms() {
        let m = model();
        let c = m.reduced_coeffs(0.0).unwrap();
        let g = Gains::set1();
        let o = ReducedState::default();
        assert_eq!(rhs_rel(&c, m.params(), &g, &o, 0.0), [0.0; 5]);
        assert_eq!(
            rhs_srel(&c, m.params(), m.d4(), &g, &o, 0.0).unwrap(),
            [0.0; 5]
        );
    }

    #[test]
    fn rel_defining_relation() {
        let m = model();
        let theta = 0.11;
        let c = m.reduced_coeffs(theta).unwrap();
        let s = ReducedState {
            theta,
            z: 0.2,
            thetadot: -0.7,
            zdot: 0.4,
            xi: 0.01,
        };
        let u = 0.37;
        let d = rhs_rel(&c, m.params(), &Gains::set2(), &s, u);
        let res = c.d_theta * d[2]
            + c.c_theta * s.thetadot.powi(2)
            + m.params().r1 * s.thetadot
            + c.b_theta
            - c.g_theta * u;
        assert!(res.abs() <= 1e-12);
        assert_eq!(d[3], u);
    }

    #[test]
    fn pfl_force_produces_commanded_acceleration() {
        let m = model();
        for (theta, u) in [(0.0, 1.0), (0.134, -0.4), (-0.22, 2.5)] {
            let c = m.reduced_coeffs(theta).unwrap();
            let s = ReducedState {
                theta,
                z: -0.1,
                thetadot: 0.9,
                zdot: -0.3,
                xi: 0.0,
            };
            let tau = pfl_tau(&c, m.params(), m.d4(), &s, u).unwrap();
            let d = rhs_srel(&c, m.params(), m.d4(), &Gains::set1(), &s, tau).unwrap();
            assert_abs_diff_eq!(d[3], u, epsilon = 1e-9);
            let rel = rhs_rel(&c, m.params(), &Gains::set1(), &s, u);
            assert_abs_diff_eq!(d[2], rel[2], epsilon = 1e-9);
        }
    }

    #[test]
    fn unforced_srel_matches_two_by_two_solve() {
        let m = model();
        let c = m.reduced_coeffs(0.07).unwrap();
        let s = ReducedState {
            theta: 0.07,
            ..Default::default()
        };
        let d = rhs_srel(&c, m.params(), m.d4(), &Gains::set1(), &s, 0.0).unwrap();
        let det = c.d_theta * m.d4() - c.d_z * c.d_z;
        assert_abs_diff_eq!(d[2], -c.b_theta * m.d4() / det, epsilon = 1e-12);
        assert_abs_diff_eq!(d[3], c.b_theta * c.d_z / det, epsilon = 1e-12);
    }

    #[test]
    fn origin_trajectory_stays_at_origin() {
        let m = model();
        let t = integrate_closed_loop(
            &m,
            &Gains::set1(),
            &InitialConditions::origin(),
            0.5,
            1e-2,
            Form::Rel,
        )
        .unwrap();
        assert!(t.is_complete());
        assert_eq!(t.samples.len(), 51);
        for s in &t.samples {
            assert_eq!(s.state, ReducedState::default());
            assert_eq!(s.u, 0.0);
        }
    }

    #[test]
    fn leaving_the_domain_aborts() {
        let m = model();
        let ics = InitialConditions {
            theta: 0.29,
            thetadot: 5.0,
            ..Default::default()
        };
        let t = integrate_closed_loop(&m, &Gains::set1(), &ics, 1.0, 1e-2, Form::Rel).unwrap();
        let abort = t.abort.as_ref().expect("run should abort");
        assert!(matches!(abort.error, Error::Domain { .. }));
        assert!(!t.samples.is_empty());
        assert!(t.samples.iter().all(|s| s.state.theta.abs() <= 0.3));
    }

    #[test]
    fn rejects_bad_step() {
        let m = model();
        let ics = InitialConditions::ics1();
        assert!(integrate_closed_loop(&m, &Gains::set1(), &ics, 1.0, 0.0, Form::Rel).is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(InitialConditions::preset("ICs2").unwrap().theta, 0.134);
        assert_eq!(InitialConditions::preset("ics3").unwrap().z, -0.15);
        assert!(InitialConditions::preset("ics9").is_none());
    }
}
