//! One-dimensional quadrature: adaptive Simpson for the beam integrals and a
//! fixed Gauss–Legendre rule for integrals whose integrand is expensive.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Absolute tolerance used for every model integral.
pub const MODEL_TOL: f64 = 1e-10;
/// Maximum bisection depth of the adaptive Simpson recursion.
pub const MAX_DEPTH: u32 = 40;
/// Levels that are always refined, so that symmetric integrands cannot
/// fool the first error estimate.
const MIN_DEPTH: u32 = 2;

/// Adaptive Simpson settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simpson {
    pub tol: f64,
    pub max_depth: u32,
}

impl Default for Simpson {
    fn default() -> Self {
        Self {
            tol: MODEL_TOL,
            max_depth: MAX_DEPTH,
        }
    }
}

/// Integrates `f` over `[a, b]` with the default model settings.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    Simpson {
        tol,
        max_depth: MAX_DEPTH,
    }
    .integrate(f, a, b)
}

impl Simpson {
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        self.integrate_vec(|x| [f(x)], a, b).map(|[v]| v)
    }

    /// Integrates every component of a vector-valued integrand on a shared
    /// mesh. A panel is accepted once all components meet the tolerance.
    pub fn integrate_vec<const N: usize, F>(&self, f: F, a: f64, b: f64) -> Result<[f64; N]>
    where
        F: Fn(f64) -> [f64; N],
    {
        if !(a <= b) {
            return Err(Error::Argument(format!(
                "integration bounds must satisfy a <= b, got [{a}, {b}]"
            )));
        }
        if a == b {
            return Ok([0.0; N]);
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        let whole = simpson(b - a, &fa, &fm, &fb);
        let mut ok = true;
        let out = self.refine(
            &f,
            Panel {
                a,
                b,
                fa,
                fm,
                fb,
                whole,
            },
            self.tol,
            0,
            &mut ok,
        );
        if ok {
            Ok(out)
        } else {
            Err(Error::Quadrature { a, b, best: out[0] })
        }
    }

    fn refine<const N: usize, F>(
        &self,
        f: &F,
        p: Panel<N>,
        tol: f64,
        depth: u32,
        ok: &mut bool,
    ) -> [f64; N]
    where
        F: Fn(f64) -> [f64; N],
    {
        let Panel {
            a,
            b,
            fa,
            fm,
            fb,
            whole,
        } = p;
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(m - a, &fa, &flm, &fm);
        let right = simpson(b - m, &fm, &frm, &fb);

        let mut err = 0.0f64;
        for k in 0..N {
            err = err.max((left[k] + right[k] - whole[k]).abs());
        }
        let converged = err <= 15.0 * tol && depth >= MIN_DEPTH;
        if converged || depth >= self.max_depth || !err.is_finite() {
            if !converged {
                *ok = false;
            }
            let mut out = [0.0; N];
            for k in 0..N {
                let s = left[k] + right[k];
                out[k] = s + (s - whole[k]) / 15.0;
            }
            return out;
        }
        let l = self.refine(
            f,
            Panel {
                a,
                b: m,
                fa,
                fm: flm,
                fb: fm,
                whole: left,
            },
            0.5 * tol,
            depth + 1,
            ok,
        );
        let r = self.refine(
            f,
            Panel {
                a: m,
                b,
                fa: fm,
                fm: frm,
                fb,
                whole: right,
            },
            0.5 * tol,
            depth + 1,
            ok,
        );
        let mut out = [0.0; N];
        for k in 0..N {
            out[k] = l[k] + r[k];
        }
        out
    }
}

struct Panel<const N: usize> {
    a: f64,
    b: f64,
    fa: [f64; N],
    fm: [f64; N],
    fb: [f64; N],
    whole: [f64; N],
}

fn simpson<const N: usize>(h: f64, fa: &[f64; N], fm: &[f64; N], fb: &[f64; N]) -> [f64; N] {
    let mut out = [0.0; N];
    for k in 0..N {
        out[k] = h / 6.0 * (fa[k] + 4.0 * fm[k] + fb[k]);
    }
    out
}

/// Gauss–Legendre rule with nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `n`-point rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi's initial guess for the i-th largest root.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// The shared 64-point rule.
    pub fn rule64() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(64))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes mapped to `[a, b]`, paired with their scaled weights.
    /// Orientation is preserved, so `b < a` yields negated weights.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Legendre polynomial P_n(x) and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
