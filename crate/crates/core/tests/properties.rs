use flexpend::control::{dd_matrix, k_function, pfl_tau};
use flexpend::sim::{rhs_rel, rhs_srel};
use flexpend::{Gains, Model, PhysicalParams, ReducedState};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use std::sync::OnceLock;

fn model() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| Model::new(PhysicalParams::default()).unwrap())
}

fn theta() -> impl Strategy<Value = f64> {
    -0.3f64..=0.3
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn gains() -> impl Strategy<Value = Gains> {
    prop_oneof![
        Just(Gains::set1()),
        Just(Gains::set2()),
        Just(Gains::set3())
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tip_slope_factor_at_least_one(t in theta(), xe in 0.01f64..=0.305) {
        let k = model().full_coeffs(t, xe).unwrap();
        prop_assert!(k.a2 >= 1.0);
    }

    #[test]
    fn inertia_rate_minus_twice_coriolis_is_skew(
        t in -0.29f64..0.29,
        xe in 0.1f64..0.3,
        z in -1.0f64..1.0,
        qd in prop::array::uniform3(-2.0f64..2.0),
        x in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let m = model();
        let q = Vector3::new(t, xe, z);
        let qd = Vector3::from(qd);
        let h = 1e-5;
        let d = |s: f64| -> Matrix3<f64> {
            m.full_matrices(q + s * qd, Vector3::zeros()).unwrap().d
        };
        let ddot = (d(h) - d(-h)) / (2.0 * h);
        let n = ddot - 2.0 * m.full_matrices(q, qd).unwrap().c;
        let x = Vector3::from(x);
        prop_assert!(x.dot(&(n * x)).abs() <= 1e-7);
    }

    #[test]
    fn reduction_is_even_in_theta(t in theta()) {
        let m = model();
        let (p, n) = (m.manifold_sample(t).unwrap(), m.manifold_sample(-t).unwrap());
        prop_assert_eq!(p.xe, n.xe);
        prop_assert!(rel(p.coeffs.d_theta, n.coeffs.d_theta) <= 1e-13);
        prop_assert!(rel(p.coeffs.g_theta, n.coeffs.g_theta) <= 1e-13);
        prop_assert!(rel(p.coeffs.c_theta, -n.coeffs.c_theta) <= 1e-12);
        prop_assert!(rel(p.coeffs.b_theta, -n.coeffs.b_theta) <= 1e-12);
        prop_assert!(rel(p.coeffs.c_z, -n.coeffs.c_z) <= 1e-12);
        prop_assert!(rel(p.v_theta, n.v_theta) <= 1e-12);
        prop_assert!(rel(m.v_n(t).unwrap(), -m.v_n(-t).unwrap()) <= 1e-12);
    }

    #[test]
    fn potential_gradient_consistency(t in -0.299f64..0.299) {
        let m = model();
        let h = 2.5e-4;
        let v = |s: f64| m.v_theta(s).unwrap();
        let fd = (-v(t + 2.0 * h) + 8.0 * v(t + h) - 8.0 * v(t - h) + v(t - 2.0 * h)) / (12.0 * h);
        let b = m.reduced_coeffs(t).unwrap().b_theta;
        prop_assert!((fd - b).abs() <= 1e-5 * b.abs().max(1e-6), "{} vs {}", fd, b);
    }

    #[test]
    fn pfl_force_realizes_commanded_acceleration(
        t in theta(),
        thd in -3.0f64..3.0,
        zd in -2.0f64..2.0,
        u in -10.0f64..10.0,
        g in gains(),
    ) {
        let m = model();
        let c = m.reduced_coeffs(t).unwrap();
        let s = ReducedState { theta: t, z: 0.0, thetadot: thd, zdot: zd, xi: 0.0 };
        let tau = pfl_tau(&c, m.params(), m.d4(), &s, u).unwrap();
        let srel = rhs_srel(&c, m.params(), m.d4(), &g, &s, tau).unwrap();
        let rel_form = rhs_rel(&c, m.params(), &g, &s, u);
        prop_assert!((srel[3] - u).abs() <= 1e-9);
        prop_assert!((srel[2] - rel_form[2]).abs() <= 1e-9 * rel_form[2].abs().max(1.0));
    }

    #[test]
    fn normal_form_defining_relation(
        t in theta(),
        thd in -3.0f64..3.0,
        u in -10.0f64..10.0,
    ) {
        let m = model();
        let c = m.reduced_coeffs(t).unwrap();
        let s = ReducedState { theta: t, thetadot: thd, ..Default::default() };
        let d = rhs_rel(&c, m.params(), &Gains::set1(), &s, u);
        let res = c.d_theta * d[2] + c.c_theta * thd * thd + m.params().r1 * thd + c.b_theta
            - c.g_theta * u;
        prop_assert!(res.abs() <= 1e-12);
    }

    #[test]
    fn shaped_metric_positive_and_law_realizable(t in theta(), g in gains()) {
        let c = model().reduced_coeffs(t).unwrap();
        let dd = dd_matrix(&c, &g);
        prop_assert_eq!(dd[(0, 1)], dd[(1, 0)]);
        prop_assert!(dd[(1, 1)] > 0.0 && dd.determinant() > 0.0);
        let k = k_function(&c, &g);
        prop_assert!(k < 0.0 && k.abs() >= g.delta);
    }
}
