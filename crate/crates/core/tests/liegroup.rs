use std::f64::consts::PI;

use mags_core::liegroup::{Sim3, Sim3Tangent, Vector7};
use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn unit_axis() -> impl Strategy<Value = Vector3<f64>> {
    vec3(1.0).prop_filter("non-degenerate axis", |v| v.norm() > 1e-2).prop_map(|v| v.normalize())
}

fn tangent() -> impl Strategy<Value = Sim3Tangent> {
    (vec3(3.0), unit_axis(), 0.0..PI - 1e-3, -3.0..3.0f64)
        .prop_map(|(nu, axis, angle, lambda)| Sim3Tangent::new(nu, axis * angle, lambda))
}

fn sim3() -> impl Strategy<Value = Sim3> {
    (0.2..5.0f64, unit_axis(), 0.0..PI, vec3(10.0)).prop_map(|(s, axis, angle, t)| {
        Sim3::new(s, UnitQuaternion::from_scaled_axis(axis * angle), t)
    })
}

fn matrix(t: &Sim3) -> nalgebra::Matrix4<f64> {
    let mut m = nalgebra::Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(t.scale() * t.rotation_matrix()));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t.translation());
    m
}

proptest! {
    #[test]
    fn compose_acts_sequentially(a in sim3(), b in sim3(), p in vec3(5.0)) {
        let lhs = a.compose(&b).act(&p);
        let rhs = a.act(&b.act(&p));
        prop_assert!((lhs - rhs).amax() <= 1e-9 * (1.0 + rhs.amax()));
        prop_assert!((a.compose(&b).scale() - a.scale() * b.scale()).abs() <= 1e-12 * a.scale() * b.scale());
    }

    #[test]
    fn compose_matches_homogeneous_matrices(a in sim3(), b in sim3()) {
        let m = matrix(&a) * matrix(&b);
        prop_assert!((matrix(&a.compose(&b)) - m).amax() <= 1e-9 * (1.0 + m.amax()));
    }

    #[test]
    fn inverse_is_an_involution(t in sim3()) {
        prop_assert!(t.inverse().inverse().max_abs_diff(&t) <= 1e-12 * (1.0 + t.translation().amax()));
        prop_assert!(t.compose(&t.inverse()).max_abs_diff(&Sim3::identity()) <= 1e-9);
    }

    #[test]
    fn exp_log_round_trip(x in tangent()) {
        let back = Sim3::exp(&x).log();
        prop_assert!((back.to_vector() - x.to_vector()).amax() <= 1e-9);
    }

    #[test]
    fn log_exp_round_trip(t in sim3()) {
        prop_assert!(Sim3::exp(&t.log()).max_abs_diff(&t) <= 1e-9);
    }

    #[test]
    fn exp_matches_matrix_exponential(x in tangent()) {
        let mut alg = nalgebra::Matrix4::zeros();
        let omega = nalgebra::Matrix3::new(
            0.0, -x.omega.z, x.omega.y,
            x.omega.z, 0.0, -x.omega.x,
            -x.omega.y, x.omega.x, 0.0,
        );
        alg.fixed_view_mut::<3, 3>(0, 0).copy_from(&(omega + Matrix3::identity() * x.lambda));
        alg.fixed_view_mut::<3, 1>(0, 3).copy_from(&x.nu);
        let expected = alg.exp();
        let got = matrix(&Sim3::exp(&x));
        prop_assert!((got - expected).amax() <= 1e-9 * (1.0 + expected.amax()));
    }

    #[test]
    fn adjoint_conjugates(t in sim3(), x in tangent()) {
        let lhs = t.compose(&Sim3::exp(&x)).compose(&t.inverse());
        let rhs = Sim3::exp(&t.adjoint(&x));
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-9 * (1.0 + rhs.translation().amax()));
    }

    #[test]
    fn adjoint_is_linear(t in sim3(), x in tangent(), y in tangent(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let combo = Sim3Tangent::from_vector(&(a * x.to_vector() + b * y.to_vector()));
        let lhs = t.adjoint(&combo).to_vector();
        let rhs = a * t.adjoint(&x).to_vector() + b * t.adjoint(&y).to_vector();
        prop_assert!((lhs - rhs).amax() <= 1e-9 * (1.0 + rhs.amax()));
        prop_assert!((t.adjoint_matrix() * combo.to_vector() - lhs).amax() <= 1e-9 * (1.0 + lhs.amax()));
    }

    #[test]
    fn right_jacobian_matches_finite_differences(
        x in tangent(),
        d in prop::array::uniform7(-1.0..1.0f64),
    ) {
        // exp(x + δ) ≈ exp(x)·exp(J_r(x)·δ) to first order.
        let delta = Vector7::from_column_slice(&d);
        let h = 1e-6;
        let base_inv = Sim3::exp(&x).inverse();
        let side = |sign: f64| {
            base_inv
                .compose(&Sim3::exp(&Sim3Tangent::from_vector(&(x.to_vector() + sign * h * delta))))
                .log()
                .to_vector()
        };
        let fd = (side(1.0) - side(-1.0)) / (2.0 * h);
        let analytic = x.right_jacobian() * delta;
        prop_assert!((fd - analytic).amax() <= 1e-5 * (1.0 + analytic.amax()));
    }

    #[test]
    fn array_round_trip(t in sim3()) {
        let back = Sim3::from_array(&t.to_array()).unwrap();
        prop_assert_eq!(back.to_array(), t.to_array());
    }
}

#[test]
fn long_chains_stay_normalized() {
    let step = Sim3::exp(&Sim3Tangent::new(
        Vector3::new(0.01, 0.0, 0.02),
        Vector3::new(0.013, -0.007, 0.021),
        1e-4,
    ));
    let mut t = Sim3::identity();
    for _ in 0..100_000 {
        t = t.compose(&step);
    }
    assert!((t.rotation().quaternion().norm() - 1.0).abs() < 1e-12);
    let r = t.rotation_matrix();
    assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-9);
    assert!((r.determinant() - 1.0).abs() < 1e-9);
}
