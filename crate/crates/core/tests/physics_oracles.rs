use dgsem_tau::*;
use nalgebra::{Matrix4, Vector4};
use proptest::prelude::*;

fn gas() -> GasParameters64 {
    GasParameters::default()
}

fn to_vec(s: State64) -> Vector4<f64> {
    Vector4::from(s.to_array())
}

fn normal_flux(q: &Vector4<f64>, n: [f64; 2]) -> Vector4<f64> {
    let s = State::from_array([q[0], q[1], q[2], q[3]]);
    to_vec(advective_flux(&s, &gas()).unwrap().normal(n))
}

/// Normal-flux Jacobian by central differences.
fn jacobian(q: &Vector4<f64>, n: [f64; 2]) -> Matrix4<f64> {
    let mut a = Matrix4::zeros();
    for k in 0..4 {
        let h = 1e-6 * q[k].abs().max(1.0);
        let mut plus = *q;
        let mut minus = *q;
        plus[k] += h;
        minus[k] -= h;
        a.set_column(
            k,
            &((normal_flux(&plus, n) - normal_flux(&minus, n)) / (2.0 * h)),
        );
    }
    a
}

/// `|A|` from the spectrum via Sylvester's formula over distinct eigenvalues.
fn abs_matrix(a: &Matrix4<f64>) -> Matrix4<f64> {
    let mut eig: Vec<f64> = a.complex_eigenvalues().iter().map(|z| z.re).collect();
    eig.sort_by(f64::total_cmp);
    eig.dedup_by(|x, y| (*x - *y).abs() < 1e-6 * (1.0 + y.abs()));
    let id = Matrix4::identity();
    let mut out = Matrix4::zeros();
    for (k, &lk) in eig.iter().enumerate() {
        let mut term = id * lk.abs();
        for (j, &lj) in eig.iter().enumerate() {
            if j != k {
                term = term * (a - id * lj) / (lk - lj);
            }
        }
        out += term;
    }
    out
}

fn roe_average(l: State64, r: State64) -> Vector4<f64> {
    let g = gas().gamma;
    let (sl, sr) = (l.rho.sqrt(), r.rho.sqrt());
    let avg = |a: f64, b: f64| (sl * a + sr * b) / (sl + sr);
    let (ul, vl) = l.velocity();
    let (ur, vr) = r.velocity();
    let hl = (l.rho_e + l.pressure(g)) / l.rho;
    let hr = (r.rho_e + r.pressure(g)) / r.rho;
    let (u, v, h) = (avg(ul, ur), avg(vl, vr), avg(hl, hr));
    // Any density works: the Euler Jacobian depends on (u, v, H) only.
    let rho = 1.0;
    let p = (g - 1.0) / g * rho * (h - 0.5 * (u * u + v * v));
    to_vec(State::from_primitive(rho, u, v, p, g))
}

fn state_strategy() -> impl Strategy<Value = State64> {
    (0.5..2.0f64, -0.8..0.8f64, -0.8..0.8f64, 0.5..2.0f64)
        .prop_map(|(rho, u, v, p)| State::from_primitive(rho, u, v, p, 1.4))
}

fn normal_strategy() -> impl Strategy<Value = [f64; 2]> {
    (0.0..std::f64::consts::TAU).prop_map(|t| [t.cos(), t.sin()])
}

#[test]
fn roe_matches_eigen_decomposition_oracle() {
    let cases = [
        (
            State::from_primitive(1.0, 0.3, 0.1, 1.0, 1.4),
            State::from_primitive(1.2, 0.2, -0.1, 1.1, 1.4),
            [1.0, 0.0],
        ),
        (
            State::from_primitive(2.0, 1.0, 1.0, 2.0, 1.4),
            State::from_primitive(1.1, 1.0, 1.0, 1.1, 1.4),
            [0.0, 1.0],
        ),
        (
            State::from_primitive(0.8, -0.4, 0.5, 0.6, 1.4),
            State::from_primitive(1.3, 0.1, -0.2, 1.5, 1.4),
            [0.6, -0.8],
        ),
    ];
    for (l, r, n) in cases {
        let qhat = roe_average(l, r);
        let dissipation = abs_matrix(&jacobian(&qhat, n)) * (to_vec(r) - to_vec(l));
        let oracle = (normal_flux(&to_vec(l), n) + normal_flux(&to_vec(r), n) - dissipation) * 0.5;
        let got = to_vec(roe_flux(&l, &r, n, &gas()).unwrap());
        let err = (got - oracle).amax();
        assert!(err < 1e-7, "mismatch {err:e}: {got} vs {oracle}");
    }
}

#[test]
fn manufactured_source_matches_finite_differences() {
    let g = gas();
    let h = 1e-5;
    let div = |x: f64, y: f64| {
        let f = |x, y| advective_flux(&manufactured_state(x, y, g.gamma), &g).unwrap();
        let dfdx = (f(x + h, y).f - f(x - h, y).f) * (0.5 / h);
        let dgdy = (f(x, y + h).g - f(x, y - h).g) * (0.5 / h);
        dfdx + dgdy
    };
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for j in 0..10 {
        for i in 0..10 {
            let (x, y) = ((i as f64 + 0.5) / 10.0, (j as f64 + 0.5) / 10.0);
            let s = manufactured_source(x, y, &g);
            worst = worst.max((div(x, y) - s).max_abs());
            scale = scale.max(s.max_abs());
        }
    }
    assert!(
        worst / scale < 1e-6,
        "relative mismatch {:e}",
        worst / scale
    );
}

#[test]
fn source_check_passes_and_negative_control_fails() {
    let g = gas();
    let good = check_source(&g, 10, 1e-3, manufactured_source).unwrap();
    assert_eq!(good.points, 100);
    assert!(good.relative <= 1e-6, "{good:?}");
    let bad = check_source(&g, 10, 1e-3, flipped_exponent_source).unwrap();
    assert!(bad.relative > 1e-2, "{bad:?}");
    assert!(flipped_exponent_source(0.5, 0.5, &g).max_abs() == 0.0);
    assert!(manufactured_source(0.5, 0.5, &g).max_abs() == 0.0);
}

#[test]
fn manufactured_state_carries_no_viscous_flux() {
    let g = gas();
    let (x, y, h) = (0.37, 0.61, 1e-6);
    let q = manufactured_state(x, y, g.gamma);
    let d = |dx: f64, dy: f64| {
        (manufactured_state(x + dx, y + dy, g.gamma) - manufactured_state(x - dx, y - dy, g.gamma))
            * (0.5 / h)
    };
    let grad = StateGradient {
        dx: d(h, 0.0),
        dy: d(0.0, h),
    };
    let fv = viscous_flux(&q, &grad, &g);
    assert!(fv.f.max_abs() < 1e-6 && fv.g.max_abs() < 1e-6, "{fv:?}");
}

proptest! {
    #[test]
    fn roe_is_consistent(q in state_strategy(), n in normal_strategy()) {
        let f = roe_flux(&q, &q, n, &gas()).unwrap();
        let exact = advective_flux(&q, &gas()).unwrap().normal(n);
        prop_assert!((f - exact).max_abs() < 1e-12);
    }

    #[test]
    fn roe_is_conservative(l in state_strategy(), r in state_strategy(), n in normal_strategy()) {
        let a = roe_flux(&l, &r, n, &gas()).unwrap();
        let b = roe_flux(&r, &l, [-n[0], -n[1]], &gas()).unwrap();
        prop_assert!((a + b).max_abs() < 1e-12);
    }

    #[test]
    fn primitive_round_trip(q in state_strategy()) {
        let (u, v) = q.velocity();
        let back = State::from_primitive(q.rho, u, v, q.pressure(1.4), 1.4);
        prop_assert!((back - q).max_abs() < 1e-13);
    }
}
