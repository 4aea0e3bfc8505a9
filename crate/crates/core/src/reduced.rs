//! Reduction of the constrained model to the manifold `Gamma(theta, x_e) = 0`.
//!
//! Every quantity here is a function of the modal amplitude alone: the tip
//! reach `x_e` is eliminated through [`Model::solve_xe`].

use crate::error::{Error, Result};
use crate::model::Model;
use crate::params::{check_theta, PhysicalParams, THETA_MAX, THETA_MIN};
use crate::quadrature::GaussLegendre;

/// Bracket width at which the root solve switches from bisection to Newton.
const NEWTON_SWITCH: f64 = 1e-3;
/// A Newton step this small leaves an error far below `1e-12`.
const NEWTON_STEP_TOL: f64 = 1e-9;

/// Coefficients of the reduced second-order model at one amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedCoeffs {
    pub d_theta: f64,
    pub c_theta: f64,
    pub b_theta: f64,
    pub d_z: f64,
    pub c_z: f64,
    /// Input coefficient of the normal form, `-d_z`.
    pub g_theta: f64,
    pub zeta: f64,
}

impl ReducedCoeffs {
    /// Derivative of `g_theta`, which equals `-c_z` on the manifold.
    pub fn dg_dtheta(&self) -> f64 {
        -self.c_z
    }
}

/// Reduced coefficients, tip reach and reduced potential at one amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldSample {
    pub theta: f64,
    pub xe: f64,
    pub coeffs: ReducedCoeffs,
    pub v_theta: f64,
}

/// Anything that can evaluate the reduced model along the manifold.
pub trait CoefficientSource: Sync {
    fn params(&self) -> &PhysicalParams;

    /// Total translating mass `D4`.
    fn d4(&self) -> f64;

    /// Evaluates the manifold at `theta`. `xe_hint` is a nearby tip reach
    /// that may be used to warm-start the constraint solve.
    fn sample(&self, theta: f64, xe_hint: Option<f64>) -> Result<ManifoldSample>;

    /// Primitive of the input coefficient, vanishing at zero.
    fn v_n(&self, theta: f64) -> Result<f64>;
}

impl Model {
    /// Tip reach satisfying the length constraint for amplitude `theta`.
    pub fn solve_xe(&self, theta: f64) -> Result<f64> {
        check_theta(theta)?;
        self.solve_xe_near(theta, None)
    }

    pub(crate) fn solve_xe_near(&self, theta: f64, hint: Option<f64>) -> Result<f64> {
        let l = self.params().l;
        if theta == 0.0 {
            return Ok(l);
        }
        if let Some(guess) = hint {
            if let Some(x) = self.newton_unbracketed(theta, guess.clamp(0.5 * l, l))? {
                return Ok(x);
            }
        }
        self.solve_bracketed(theta)
    }

    fn tip_stretch(&self, theta: f64, xe: f64) -> f64 {
        let s = theta * self.shape(xe).dphi;
        (1.0 + s * s).sqrt()
    }

    /// Newton from a warm start. Returns `None` when the iteration wanders
    /// out of `[L/2, L]` or stalls, so the caller can fall back to bisection.
    fn newton_unbracketed(&self, theta: f64, mut x: f64) -> Result<Option<f64>> {
        let l = self.params().l;
        for _ in 0..8 {
            let g = self.arc_length(theta, 0.0, x)? - l;
            if g == 0.0 {
                return Ok(Some(x));
            }
            let step = g / self.tip_stretch(theta, x);
            let next = x - step;
            if !(next >= 0.5 * l && next <= l) {
                return Ok(None);
            }
            if step.abs() <= NEWTON_STEP_TOL {
                return Ok(Some(next));
            }
            x = next;
        }
        Ok(None)
    }

    fn solve_bracketed(&self, theta: f64) -> Result<f64> {
        let l = self.params().l;
        let mut lo = 0.5 * l;
        let mut g_lo = self.arc_length(theta, 0.0, lo)? - l;
        if g_lo >= 0.0 {
            return Err(Error::NotBracketed { theta });
        }
        let mut hi = l;
        let g_hi = g_lo + self.arc_length(theta, lo, hi)?;
        if g_hi < 0.0 {
            return Err(Error::NotBracketed { theta });
        }
        if g_hi == 0.0 {
            return Ok(l);
        }
        // Bisection on increments: the arc length of [lo, mid] is added to
        // the known value at lo instead of re-integrating from zero.
        while hi - lo >= NEWTON_SWITCH {
            let mid = 0.5 * (lo + hi);
            let g_mid = g_lo + self.arc_length(theta, lo, mid)?;
            if g_mid < 0.0 {
                lo = mid;
                g_lo = g_mid;
            } else {
                hi = mid;
            }
        }

        let mut x = lo - g_lo / self.tip_stretch(theta, lo);
        for _ in 0..60 {
            let g = self.arc_length(theta, 0.0, x)? - l;
            if g == 0.0 {
                return Ok(x);
            }
            if g < 0.0 {
                lo = lo.max(x);
            } else {
                hi = hi.min(x);
            }
            let step = g / self.tip_stretch(theta, x);
            let mut next = x - step;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            } else if step.abs() <= NEWTON_STEP_TOL {
                return Ok(next);
            }
            x = next;
        }
        Err(Error::Numeric(format!(
            "tip reach solve did not converge for theta = {theta}"
        )))
    }

    /// Slope of the tip reach along the manifold, `-A1 / A2`.
    pub fn dxe_dtheta(&self, theta: f64) -> Result<f64> {
        let xe = self.solve_xe(theta)?;
        let k = self.full_coeffs(theta, xe)?;
        Ok(-k.a1 / k.a2)
    }

    pub fn reduced_coeffs(&self, theta: f64) -> Result<ReducedCoeffs> {
        Ok(self.manifold_sample(theta)?.coeffs)
    }

    pub fn manifold_sample(&self, theta: f64) -> Result<ManifoldSample> {
        check_theta(theta)?;
        self.manifold_sample_near(theta, None)
    }

    fn manifold_sample_near(&self, theta: f64, hint: Option<f64>) -> Result<ManifoldSample> {
        let xe = self.solve_xe_near(theta, hint)?;
        let ints = self.beam_integrals(theta, xe)?;
        let k = self.assemble(theta, xe, &ints);
        let ratio = k.a1 / k.a2;
        let zeta = k.a5 + k.a4 * ratio * ratio - k.a3 * ratio;
        let coeffs = ReducedCoeffs {
            d_theta: k.d1 + k.d3 * ratio * ratio,
            c_theta: k.d3 * k.a1 / (k.a2 * k.a2) * zeta - 0.5 * k.c1 * ratio,
            b_theta: k.b1 - k.b2 * ratio,
            d_z: k.d2,
            c_z: -k.c2 * ratio,
            g_theta: -k.d2,
            zeta,
        };
        Ok(ManifoldSample {
            theta,
            xe,
            coeffs,
            v_theta: self.manifold_potential(&ints),
        })
    }

    /// Potential energy restricted to the manifold.
    pub fn v_theta(&self, theta: f64) -> Result<f64> {
        Ok(self.manifold_sample(theta)?.v_theta)
    }

    /// Primitive of the input coefficient, normalized to vanish at zero:
    /// `V_N(theta) = -D3 int_0^theta phi(x_e(s)) ds - (rho A0 int phi) theta`.
    pub fn v_n(&self, theta: f64) -> Result<f64> {
        check_theta(theta)?;
        let mut hint = None;
        let mut acc = 0.0;
        for (s, w) in GaussLegendre::rule64().mapped(0.0, theta) {
            let xe = self.solve_xe_near(s, hint)?;
            hint = Some(xe);
            acc += w * self.shape(xe).phi;
        }
        Ok(-self.d3() * acc - self.params().linear_density() * self.int_phi() * theta)
    }

    /// `g_theta` from the tip reach alone, without the beam integrals.
    fn g_theta_at(&self, theta: f64, hint: Option<f64>) -> Result<(f64, f64)> {
        let xe = self.solve_xe_near(theta, hint)?;
        let g = -(self.d3() * self.shape(xe).phi + self.params().linear_density() * self.int_phi());
        Ok((g, xe))
    }
}

impl CoefficientSource for Model {
    fn params(&self) -> &PhysicalParams {
        Model::params(self)
    }

    fn d4(&self) -> f64 {
        Model::d4(self)
    }

    fn sample(&self, theta: f64, xe_hint: Option<f64>) -> Result<ManifoldSample> {
        check_theta(theta)?;
        self.manifold_sample_near(theta, xe_hint)
    }

    fn v_n(&self, theta: f64) -> Result<f64> {
        Model::v_n(self, theta)
    }
}

/// Nodal data of the lookup table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookupRecord {
    pub xe: f64,
    pub coeffs: ReducedCoeffs,
    pub v_theta: f64,
    pub v_n: f64,
    pub dg_dtheta: f64,
}

const RECORD_LEN: usize = 11;

impl LookupRecord {
    fn to_array(self) -> [f64; RECORD_LEN] {
        let c = self.coeffs;
        [
            self.xe,
            c.d_theta,
            c.c_theta,
            c.b_theta,
            c.d_z,
            c.c_z,
            c.g_theta,
            c.zeta,
            self.v_theta,
            self.v_n,
            self.dg_dtheta,
        ]
    }

    fn from_array(a: [f64; RECORD_LEN]) -> Self {
        Self {
            xe: a[0],
            coeffs: ReducedCoeffs {
                d_theta: a[1],
                c_theta: a[2],
                b_theta: a[3],
                d_z: a[4],
                c_z: a[5],
                g_theta: a[6],
                zeta: a[7],
            },
            v_theta: a[8],
            v_n: a[9],
            dg_dtheta: a[10],
        }
    }
}

/// Tabulated manifold on a uniform grid over the admissible amplitudes,
/// evaluated by local cubic interpolation. Immutable once built.
#[derive(Debug, Clone)]
pub struct LookupTable {
    params: PhysicalParams,
    d4: f64,
    theta_grid: Vec<f64>,
    records: Vec<LookupRecord>,
}

impl LookupTable {
    pub fn build(model: &Model, n_nodes: usize) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::Argument(format!(
                "lookup table needs at least 2 nodes, got {n_nodes}"
            )));
        }
        let step = (THETA_MAX - THETA_MIN) / (n_nodes - 1) as f64;
        let theta_grid: Vec<f64> = (0..n_nodes)
            .map(|i| {
                if i == n_nodes - 1 {
                    THETA_MAX
                } else {
                    THETA_MIN + i as f64 * step
                }
            })
            .collect();

        let v_n = cumulative_v_n(model, &theta_grid)?;
        let mut records = Vec::with_capacity(n_nodes);
        let mut hint = None;
        for (&theta, &vn) in theta_grid.iter().zip(&v_n) {
            let s = model.manifold_sample_near(theta, hint)?;
            hint = Some(s.xe);
            records.push(LookupRecord {
                xe: s.xe,
                coeffs: s.coeffs,
                v_theta: s.v_theta,
                v_n: vn,
                dg_dtheta: s.coeffs.dg_dtheta(),
            });
        }
        Ok(Self {
            params: *model.params(),
            d4: model.d4(),
            theta_grid,
            records,
        })
    }

    pub fn theta_grid(&self) -> &[f64] {
        &self.theta_grid
    }

    pub fn records(&self) -> &[LookupRecord] {
        &self.records
    }

    pub fn eval(&self, theta: f64) -> Result<LookupRecord> {
        let n = self.theta_grid.len();
        let (lo, hi) = (self.theta_grid[0], self.theta_grid[n - 1]);
        if !(lo..=hi).contains(&theta) {
            return Err(Error::Domain {
                name: "theta",
                value: theta,
                lo,
                hi,
            });
        }
        let step = (hi - lo) / (n - 1) as f64;
        let pos = (theta - lo) / step;
        let idx = (pos.floor() as usize).min(n - 1);
        if self.theta_grid[idx] == theta {
            return Ok(self.records[idx]);
        }
        if idx + 1 < n && self.theta_grid[idx + 1] == theta {
            return Ok(self.records[idx + 1]);
        }

        let width = n.min(4);
        let start = idx.saturating_sub(1).min(n - width);
        let nodes = &self.theta_grid[start..start + width];
        let mut out = [0.0; RECORD_LEN];
        for (j, &tj) in nodes.iter().enumerate() {
            let mut w = 1.0;
            for (m, &tm) in nodes.iter().enumerate() {
                if m != j {
                    w *= (theta - tm) / (tj - tm);
                }
            }
            let vals = self.records[start + j].to_array();
            for (o, v) in out.iter_mut().zip(vals) {
                *o += w * v;
            }
        }
        Ok(LookupRecord::from_array(out))
    }
}

/// `V_N` at every grid node, accumulated outward from zero with an 8-point
/// Gauss–Legendre rule on each sub-interval.
fn cumulative_v_n(model: &Model, grid: &[f64]) -> Result<Vec<f64>> {
    let rule = GaussLegendre::new(8);
    let mut out = vec![0.0; grid.len()];
    let split = grid.partition_point(|&t| t < 0.0);

    let mut walk = |indices: &mut dyn Iterator<Item = usize>| -> Result<()> {
        let (mut prev, mut acc, mut hint) = (0.0, 0.0, None);
        for i in indices {
            let target = grid[i];
            for (s, w) in rule.mapped(prev, target) {
                let (g, xe) = model.g_theta_at(s, hint)?;
                hint = Some(xe);
                acc += w * g;
            }
            out[i] = acc;
            prev = target;
        }
        Ok(())
    };
    walk(&mut (split..grid.len()))?;
    walk(&mut (0..split).rev())?;
    Ok(out)
}

impl CoefficientSource for LookupTable {
    fn params(&self) -> &PhysicalParams {
        &self.params
    }

    fn d4(&self) -> f64 {
        self.d4
    }

    fn sample(&self, theta: f64, _xe_hint: Option<f64>) -> Result<ManifoldSample> {
        let r = self.eval(theta)?;
        Ok(ManifoldSample {
            theta,
            xe: r.xe,
            coeffs: r.coeffs,
            v_theta: r.v_theta,
        })
    }

    fn v_n(&self, theta: f64) -> Result<f64> {
        Ok(self.eval(theta)?.v_n)
    }
}
