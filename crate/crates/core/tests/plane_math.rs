use lampdet_core::bim::{estimate_offset, msac_plane, project_detection, Detection, MsacParams};
use lampdet_core::pose::Vec3;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec3> {
    (-20.0f64..20.0, -20.0f64..20.0, -20.0f64..20.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn unit() -> impl Strategy<Value = Vec3> {
    vec3().prop_filter("non-zero", |v| v.norm() > 1e-3).prop_map(|v| v.normalize())
}

/// Least-squares offset through the normal equations of `min Σ(n·p − d)²`
/// solved by SVD.
fn lstsq_offset(n: &Vec3, pts: &[Vec3]) -> f64 {
    let a = DMatrix::from_element(pts.len(), 1, 1.0);
    let b = DVector::from_iterator(pts.len(), pts.iter().map(|p| n.dot(p)));
    a.svd(true, true).solve(&b, 1e-15).unwrap()[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn offset_matches_least_squares(n in unit(), pts in proptest::collection::vec(vec3(), 1..50)) {
        let d = estimate_offset(&n, &pts).unwrap();
        prop_assert!((d - lstsq_offset(&n, &pts)).abs() < 1e-12);
    }

    #[test]
    fn offset_is_stationary(n in unit(), pts in proptest::collection::vec(vec3(), 1..50), eps in 1e-3f64..1.0) {
        let d = estimate_offset(&n, &pts).unwrap();
        let cost = |d: f64| pts.iter().map(|p| (n.dot(p) - d).powi(2)).sum::<f64>();
        prop_assert!(cost(d) <= cost(d + eps));
        prop_assert!(cost(d) <= cost(d - eps));
    }

    #[test]
    fn projection_satisfies_plane_and_ray(c in vec3(), p in vec3(), n in unit(), offset in -20.0f64..20.0) {
        prop_assume!((p - c).norm() > 1e-3);
        let f = (p - c).normalize();
        prop_assume!(n.dot(&f).abs() > 0.05);
        let det = Detection::new(p, c, 2, 0.9, false, 3).unwrap();
        let x = project_detection(&det, &n, offset).unwrap();
        prop_assert!((n.dot(&x) - offset).abs() < 1e-9);
        prop_assert!((x - c).cross(&f).norm() < 1e-9);
    }

    #[test]
    fn msac_is_deterministic(pts in proptest::collection::vec(vec3(), 2..40), seed in any::<u64>()) {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let a = msac_plane(&n, &pts, &MsacParams::default(), seed).unwrap();
        prop_assert_eq!(a, msac_plane(&n, &pts, &MsacParams::default(), seed).unwrap());
    }
}
