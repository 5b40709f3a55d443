use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

use softchain::kinematics::*;

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-r..r).prop_map(Vector3::from)
}

fn angles(max_pairs: usize) -> impl Strategy<Value = Vec<f64>> {
    (1..=max_pairs).prop_flat_map(|n| prop::collection::vec(-1.5f64..1.5, 2 * n))
}

proptest! {
    #[test]
    fn exp_is_a_rotation_and_log_inverts_it(w in vec3(3.0)) {
        prop_assume!(w.norm() < std::f64::consts::PI - 1e-6);
        let r = so3_exp(&w);
        prop_assert!(is_rotation(&r, 1e-12));
        let back = so3_log(&r).unwrap();
        prop_assert!((back - w).norm() < 1e-9);
    }

    #[test]
    fn exp_agrees_with_the_rodrigues_series(w in vec3(1.0)) {
        // truncated power series of the matrix exponential as an oracle
        let k = hat(&w);
        let mut term = Matrix3::identity();
        let mut sum = Matrix3::identity();
        for i in 1..30 {
            term = term * k / i as f64;
            sum += term;
        }
        prop_assert!((so3_exp(&w) - sum).norm() < 1e-12);
    }

    #[test]
    fn uj_chain_poses_are_rigid(phi in angles(12), ell in 0.005f64..0.1) {
        let fk = uj_fk_angles(&phi, ell);
        for d in &fk.disks {
            prop_assert!(is_rotation(&d.rotation, 1e-10));
        }
        // consecutive disks reach their shared pivot along their own axes
        for w in fk.disks.windows(2) {
            let from_a = w[0].translation + w[0].rotation.column(2) * ell;
            let from_b = w[1].translation - w[1].rotation.column(2) * ell;
            prop_assert!((from_a - from_b).norm() < 1e-12);
        }
        prop_assert!((fk.tip().rotation - uj_chain_rotation(&phi)).norm() < 1e-10);
    }

    #[test]
    fn uj_chain_composes_over_splits(phi in angles(10), ell in 0.01f64..0.1, cut in 0usize..10) {
        let pairs = phi.len() / 2;
        let cut = cut.min(pairs);
        let whole = *uj_fk_angles(&phi, ell).tip();
        let head = *uj_fk_angles(&phi[..2 * cut], ell).tip();
        let tail = *uj_fk_angles(&phi[2 * cut..], ell).tip();
        let joined = head.compose(&tail);
        prop_assert!((joined.rotation - whole.rotation).norm() < 1e-10);
        prop_assert!((joined.translation - whole.translation).norm() < 1e-10);
    }

    #[test]
    fn cc_tip_stays_inside_the_arc_length(q0 in -2.1f64..2.1, q1 in -2.1f64..2.1, l in 0.05f64..1.0) {
        let cfg = CcConfig::new([q0, q1], l).unwrap();
        let tip = cc_fk(&cfg);
        prop_assert!(is_rotation(&tip.rotation, 1e-12));
        prop_assert!(tip.translation.norm() <= l + 1e-12);
        // the chord of a circular arc of bend t is L sin(t/2)/(t/2)
        let t = cfg.bend();
        let chord = if t < 1e-9 { l } else { l * (t / 2.0).sin() / (t / 2.0) };
        prop_assert!((tip.translation.norm() - chord).abs() < 1e-12);
        // no twist: the tip z axis stays in the bending plane
        prop_assert!(tip.translation.dot(&Vector3::new(q0, q1, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn cc_estimate_round_trips(q0 in -2.5f64..2.5, q1 in -2.5f64..2.5, l in 0.05f64..1.0) {
        prop_assume!(q0.hypot(q1) < 3.0);
        let cfg = CcConfig::new([q0, q1], l).unwrap();
        let est = cc_estimate(&cc_fk(&cfg).rotation, l).unwrap();
        prop_assert!((est.config.q[0] - q0).abs() < 1e-9);
        prop_assert!((est.config.q[1] - q1).abs() < 1e-9);
        prop_assert!(est.twist.abs() < 1e-9 && !est.degraded);
    }

    #[test]
    fn pose_inverse_undoes_compose(w in vec3(2.0), t in vec3(1.0), p in vec3(1.0)) {
        let a = Pose::new(so3_exp(&w), t);
        let q = a.inverse().transform_point(&a.transform_point(&p));
        prop_assert!((q - p).norm() < 1e-12);
        let id = a.compose(&a.inverse());
        prop_assert!((id.to_homogeneous() - Pose::identity().to_homogeneous()).norm() < 1e-12);
    }
}
