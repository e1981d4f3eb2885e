use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use proptest::prelude::*;

use panoalign::geometry::{
    erp_pixel_to_spherical, lift_points, ray_to_spherical, spherical_to_erp_pixel,
    spherical_to_ray, CameraModel, SphericalCoord, UnitRay,
};
use panoalign::{ErpGrid, FACE_COUNT};

fn direction() -> impl Strategy<Value = Vector3<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_map(|(x, y, z)| Vector3::new(x, y, z))
        .prop_filter("non-degenerate", |v| v.norm() > 1e-3)
}

/// Faces whose frustum contains `s`, computed from the rotations alone.
fn claiming_faces(cam: &CameraModel, s: &Vector3<f64>) -> Vec<usize> {
    (0..FACE_COUNT)
        .filter(|&c| {
            let local = cam.rotation(c).transpose() * s;
            local.z > 0.0 && local.x.abs() < local.z && local.y.abs() < local.z
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn canonical_angles_stay_in_range(theta in -50.0..50.0f64, phi in -10.0..10.0f64) {
        let xi = SphericalCoord::canonical(theta, phi);
        prop_assert!((-PI..=PI).contains(&xi.theta));
        prop_assert!((-FRAC_PI_2..=FRAC_PI_2).contains(&xi.phi));
    }

    #[test]
    fn canonical_keeps_direction(theta in -50.0..50.0f64, phi in -FRAC_PI_2..FRAC_PI_2) {
        let xi = SphericalCoord::canonical(theta, phi);
        let a = spherical_to_ray(xi);
        let b = spherical_to_ray(SphericalCoord { theta, phi });
        prop_assert!((a.as_vector() - b.as_vector()).norm() < 1e-9);
    }

    #[test]
    fn rays_are_unit_and_round_trip(v in direction()) {
        let s = UnitRay::new(v).unwrap();
        prop_assert!((s.as_vector().norm() - 1.0).abs() < 1e-9);
        let back = spherical_to_ray(ray_to_spherical(&s));
        prop_assert!((back.as_vector() - s.as_vector()).norm() < 1e-9);
    }

    #[test]
    fn erp_pixels_round_trip(h in 1usize..600, fu in 0.0..1.0f64, fv in 0.0..1.0f64) {
        let w = 2 * h;
        let (u, v) = (fu * w as f64 - 0.5, fv * h as f64 - 0.5);
        let (u2, v2) = spherical_to_erp_pixel(erp_pixel_to_spherical(u, v, w, h).unwrap(), w, h);
        prop_assert!((u2 - u).abs() < 1e-6 && (v2 - v).abs() < 1e-6);
    }

    #[test]
    fn every_face_pixel_comes_back(n in 2usize..512, face in 0usize..FACE_COUNT, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let cam = CameraModel::new(n);
        let col = ((a * n as f64) as usize).min(n - 1);
        let row = ((b * n as f64) as usize).min(n - 1);
        let (u, v) = cam.pixel_center(col, row);
        let p = cam.ray_to_face_pixel(&cam.face_ray(face, u, v)).unwrap();
        prop_assert_eq!(p.face, face);
        prop_assert!((p.u - u).abs() < 0.5 && (p.v - v).abs() < 0.5);
    }

    #[test]
    fn rho_is_at_least_one(n in 2usize..1024, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let cam = CameraModel::new(n);
        let (u, v) = (a * n as f64, b * n as f64);
        let rho = cam.rho_factor(u, v);
        let c = n as f64 / 2.0;
        if u == c && v == c {
            prop_assert_eq!(rho, 1.0);
        } else {
            prop_assert!(rho > 1.0);
        }
    }

    #[test]
    fn faces_partition_the_sphere(v in direction()) {
        let cam = CameraModel::new(64);
        let s = v.normalize();
        let claims = claiming_faces(&cam, &s);
        prop_assume!(claims.len() == 1);
        prop_assert_eq!(cam.select_face(&s), claims[0]);
        let p = cam.ray_to_face_pixel(&UnitRay::new(s).unwrap()).unwrap();
        prop_assert_eq!(p.face, claims[0]);
    }

    #[test]
    fn lifted_norms_reproduce_depth(h in 1usize..24, seed in any::<u64>()) {
        let mut state = seed | 1;
        let depth = ErpGrid::from_fn(h, |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            0.1 + (state % 10_000) as f64 / 500.0
        });
        let cloud = lift_points(&depth, None).unwrap();
        for (p, d) in cloud.points.iter().zip(depth.data()) {
            prop_assert!((p.norm() - d).abs() <= 4.0 * f64::EPSILON * d);
        }
    }
}

#[test]
fn rotations_are_proper() {
    let cam = CameraModel::new(8);
    for r in cam.rotations() {
        assert!((r.transpose() * r - nalgebra::Matrix3::identity()).norm() < 1e-9);
        assert!((r.determinant() - 1.0).abs() < 1e-9);
    }
    let k = cam.k();
    assert_eq!([k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)]], [4.0; 4]);
    assert_eq!([k[(1, 0)], k[(2, 0)], k[(2, 1)]], [0.0; 3]);
}
