//! Closed-loop linearization and poles, open-loop equilibria, level grids of
//! the shaped potential, and a sample-wise audit of the energy decay.

use nalgebra::{Complex, DMatrix, Matrix4, SMatrix};

use crate::control::{v_d_from, Gains};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::reduced::CoefficientSource;
use crate::sim::{ClosedLoop, Form, ReducedState, Trajectory};

pub type Matrix5 = SMatrix<f64, 5, 5>;
pub type Pole = Complex<f64>;

/// Default central-difference step for [`linearize`].
pub const DEFAULT_FD_STEP: f64 = 1e-6;
/// Largest closed-loop vector field norm accepted at the origin.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;
/// Largest accepted eigenpair residual.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;
const SCHUR_MAX_ITER: usize = 10_000;

/// Jacobian of the closed loop at the origin over `(theta, z, thetadot, zdot, xi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSystem {
    pub jacobian: Matrix5,
    pub fd_step: f64,
    /// Linearized integral state on its invariant manifold:
    /// `xi = ka z + ku V_N(theta)` becomes `ku G(0) theta + ka z`.
    pub manifold_row: [f64; 4],
}

impl LinearizedSystem {
    /// Restriction of the Jacobian to the invariant manifold of the
    /// integral state. The full Jacobian carries an extra structural zero
    /// eigenvalue from the conserved quantity `xi - ka z - ku V_N(theta)`.
    pub fn reduced(&self) -> Matrix4<f64> {
        let j = &self.jacobian;
        Matrix4::from_fn(|r, c| j[(r, c)] + j[(r, 4)] * self.manifold_row[c])
    }

    /// Closed-loop poles on the manifold, slowest first.
    pub fn poles(&self) -> Result<Vec<Complex<f64>>> {
        let r = self.reduced();
        eigenvalues(&DMatrix::from_fn(4, 4, |i, j| r[(i, j)]))
    }

    /// All five eigenvalues of the full Jacobian, slowest first.
    pub fn full_spectrum(&self) -> Result<Vec<Complex<f64>>> {
        eigenvalues(&DMatrix::from_fn(5, 5, |i, j| self.jacobian[(i, j)]))
    }
}

/// Central-difference Jacobian of the normal-form closed loop at the origin.
pub fn linearize<S: CoefficientSource + ?Sized>(
    source: &S,
    gains: &Gains,
    fd_step: f64,
) -> Result<LinearizedSystem> {
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::Argument(format!(
            "finite-difference step must be positive, got {fd_step}"
        )));
    }
    let cl = ClosedLoop::new(source, *gains, Form::Rel);
    let f0 = cl.derivative(&ReducedState::default())?;
    let res = f0.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if !(res <= EQUILIBRIUM_TOL) {
        return Err(Error::Setup(format!(
            "origin is not a closed-loop equilibrium (residual {res})"
        )));
    }
    let mut jacobian = Matrix5::zeros();
    for col in 0..5 {
        let mut plus = [0.0; 5];
        let mut minus = [0.0; 5];
        plus[col] = fd_step;
        minus[col] = -fd_step;
        let fp = cl.derivative(&ReducedState::from_array(plus))?;
        let fm = cl.derivative(&ReducedState::from_array(minus))?;
        for row in 0..5 {
            jacobian[(row, col)] = (fp[row] - fm[row]) / (2.0 * fd_step);
        }
    }
    let g0 = source.sample(0.0, None)?.coeffs.g_theta;
    Ok(LinearizedSystem {
        jacobian,
        fd_step,
        manifold_row: [gains.ku * g0, gains.ka, 0.0, 0.0],
    })
}

/// Eigenvalues of a small dense real matrix, sorted by real part (then
/// imaginary part) in descending order.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Argument(format!(
            "eigenvalues need a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 || n > 8 {
        return Err(Error::Argument(format!(
            "eigenvalues supports 1 to 8 rows, got {n}"
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Numeric("Schur iteration did not converge".into()))?;
    let mut eig: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));

    let ac = a.map(|v| Complex::new(v, 0.0));
    for &lambda in &eig {
        let shifted = &ac - DMatrix::from_diagonal_element(n, n, lambda);
        let sigma = shifted
            .singular_values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !(sigma <= EIGEN_RESIDUAL_TOL) {
            return Err(Error::Numeric(format!(
                "eigenvalue {lambda} has residual {sigma}"
            )));
        }
    }
    Ok(eig)
}

/// One open-loop equilibrium amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub theta: f64,
    pub stable: bool,
    /// `d(A1 B2 - A2 B1)/dtheta` at the root; negative means stable.
    pub slope: f64,
    /// `dB_theta/dtheta`, the curvature of the reduced potential.
    pub curvature: f64,
}

impl Equilibrium {
    /// Whether the two stability certificates agree.
    pub fn consistent(&self) -> bool {
        (self.slope < 0.0) == (self.curvature > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EquilibriumSet {
    /// Roots in ascending order.
    pub roots: Vec<Equilibrium>,
}

impl EquilibriumSet {
    pub fn nearest(&self, theta: f64) -> Option<&Equilibrium> {
        self.roots
            .iter()
            .min_by(|a, b| (a.theta - theta).abs().total_cmp(&(b.theta - theta).abs()))
    }

    /// Whether every root has a mirror image within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.roots.iter().all(|r| {
            self.nearest(-r.theta)
                .is_some_and(|m| (m.theta + r.theta).abs() <= tol && m.stable == r.stable)
        })
    }
}

/// Equilibrium residual `A1 B2 - A2 B1` on the constraint manifold.
pub fn equilibrium_residual(model: &Model, theta: f64) -> Result<f64> {
    let xe = model.solve_xe(theta)?;
    let c = model.full_coeffs(theta, xe)?;
    Ok(c.a1 * c.b2 - c.a2 * c.b1)
}

const ROOT_TOL: f64 = 1e-13;
const SLOPE_STEP: f64 = 1e-6;

/// Brackets sign changes of the equilibrium residual on `theta_grid` and
/// refines each by bisection.
pub fn equilibria_scan(model: &Model, theta_grid: &[f64]) -> Result<EquilibriumSet> {
    let values = theta_grid
        .iter()
        .map(|&t| equilibrium_residual(model, t))
        .collect::<Result<Vec<_>>>()?;
    let mut thetas = Vec::new();
    for (i, (&t, &f)) in theta_grid.iter().zip(&values).enumerate() {
        if f == 0.0 {
            thetas.push(t);
        }
        if let (Some(&tn), Some(&fn_)) = (theta_grid.get(i + 1), values.get(i + 1)) {
            if f * fn_ < 0.0 {
                thetas.push(bisect(model, t, f, tn)?);
            }
        }
    }
    let mut roots = thetas
        .into_iter()
        .map(|theta| classify(model, theta))
        .collect::<Result<Vec<_>>>()?;
    roots.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    roots.dedup_by(|a, b| a.theta == b.theta);
    Ok(EquilibriumSet { roots })
}

fn bisect(model: &Model, mut a: f64, mut fa: f64, mut b: f64) -> Result<f64> {
    while (b - a).abs() > ROOT_TOL {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = equilibrium_residual(model, m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}

fn classify(model: &Model, theta: f64) -> Result<Equilibrium> {
    let (lo, hi) = (
        (theta - SLOPE_STEP).max(crate::params::THETA_MIN),
        (theta + SLOPE_STEP).min(crate::params::THETA_MAX),
    );
    let slope = (equilibrium_residual(model, hi)? - equilibrium_residual(model, lo)?) / (hi - lo);
    let curvature =
        (model.reduced_coeffs(hi)?.b_theta - model.reduced_coeffs(lo)?.b_theta) / (hi - lo);
    Ok(Equilibrium {
        theta,
        stable: slope < 0.0,
        slope,
        curvature,
    })
}

/// `n` evenly spaced points from `lo` to `hi`; a symmetric range places an
/// exact zero at the centre of an odd-sized grid.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => {
            let m = (n - 1) as f64;
            (0..n)
                .map(|i| (lo * (m - i as f64) + hi * i as f64) / m)
                .collect()
        }
    }
}

pub const LEVEL_THETA_RANGE: (f64, f64) = (-0.2, 0.2);
pub const LEVEL_Z_RANGE: (f64, f64) = (-0.5, 0.5);
pub const LEVEL_NODES: usize = 201;

/// Shaped potential sampled on a uniform `(theta, z)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGrid {
    pub thetas: Vec<f64>,
    pub zs: Vec<f64>,
    /// Row-major, `theta` outer and `z` inner.
    pub values: Vec<f64>,
}

impl LevelGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.zs.len() + j]
    }

    /// Index pair of the smallest value.
    pub fn argmin(&self) -> (usize, usize) {
        let k = self
            .values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(k, _)| k);
        (k / self.zs.len(), k % self.zs.len())
    }

    /// Index pair of the node closest to `(0, 0)`.
    pub fn origin_node(&self) -> (usize, usize) {
        let closest = |v: &[f64]| {
            v.iter()
                .enumerate()
                .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map_or(0, |(k, _)| k)
        };
        (closest(&self.thetas), closest(&self.zs))
    }

    /// Area of the connected component of `{V_d <= level}` that contains the
    /// node nearest the origin, counting one cell per node.
    pub fn sublevel_area(&self, level: f64) -> f64 {
        let (nt, nz) = (self.thetas.len(), self.zs.len());
        if nt < 2 || nz < 2 {
            return 0.0;
        }
        let cell = (self.thetas[nt - 1] - self.thetas[0]) / (nt - 1) as f64
            * (self.zs[nz - 1] - self.zs[0])
            / (nz - 1) as f64;
        let start = self.origin_node();
        if self.at(start.0, start.1) > level {
            return 0.0;
        }
        let mut seen = vec![false; nt * nz];
        let mut stack = vec![start];
        seen[start.0 * nz + start.1] = true;
        let mut count = 0usize;
        while let Some((i, j)) = stack.pop() {
            count += 1;
            let neighbours = [
                (i.wrapping_sub(1), j),
                (i + 1, j),
                (i, j.wrapping_sub(1)),
                (i, j + 1),
            ];
            for (a, b) in neighbours {
                if a < nt && b < nz && !seen[a * nz + b] && self.at(a, b) <= level {
                    seen[a * nz + b] = true;
                    stack.push((a, b));
                }
            }
        }
        count as f64 * cell
    }
}

/// Evaluates `V_d(theta, z)` on an `n x n` grid.
pub fn level_grid(
    model: &Model,
    gains: &Gains,
    theta_range: (f64, f64),
    z_range: (f64, f64),
    n: usize,
) -> Result<LevelGrid> {
    let thetas = linspace(theta_range.0, theta_range.1, n);
    let zs = linspace(z_range.0, z_range.1, n);
    let mut values = Vec::with_capacity(n * n);
    for &theta in &thetas {
        let v_theta = model.v_theta(theta)?;
        let v_n = model.v_n(theta)?;
        for &z in &zs {
            let spring = gains.ka * z + gains.ku * v_n;
            values.push(v_d_from(v_theta, spring, gains));
        }
    }
    Ok(LevelGrid { thetas, zs, values })
}

/// Comparison of the sampled shaped energy against its predicted decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LyapunovReport {
    pub samples: usize,
    /// Largest `|dH_d/dt + K_P ytilde^2|`.
    pub max_abs_residual: f64,
    /// Largest `|dH_d/dt + K_P ytilde^2| / (1 + K_P ytilde^2)`.
    pub max_rel_residual: f64,
    /// Largest step-to-step increase of `H_d` (zero when monotone).
    pub max_increase: f64,
    /// Samples with `H_d < 0`.
    pub positivity_violations: usize,
}

/// Central-difference audit of `dH_d/dt = -K_P ytilde^2` along a trajectory.
pub fn lyapunov_audit(trajectory: &Trajectory, gains: &Gains) -> LyapunovReport {
    let s = &trajectory.samples;
    let h = trajectory.step;
    let mut report = LyapunovReport {
        samples: s.len(),
        ..Default::default()
    };
    report.positivity_violations = s.iter().filter(|p| p.h_d < 0.0).count();
    for w in s.windows(2) {
        report.max_increase = report.max_increase.max(w[1].h_d - w[0].h_d);
    }
    for w in s.windows(3) {
        let dh = (w[2].h_d - w[0].h_d) / (2.0 * h);
        let rate = gains.kp * w[1].ytilde * w[1].ytilde;
        let res = (dh + rate).abs();
        report.max_abs_residual = report.max_abs_residual.max(res);
        report.max_rel_residual = report.max_rel_residual.max(res / (1.0 + rate));
    }
    report
}
