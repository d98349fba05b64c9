use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use proptest::prelude::*;

use splatcal::io::checkpoint::{decode_checkpoint, encode_gaussians};
use splatcal::io::npy::{encode_npy, parse_npy};
use splatcal::io::ply::{encode_ply, encode_ply_ascii, parse_ply};
use splatcal::io::{psnr, PoseEntry, SavedScene};
use splatcal::lie::{exp, log, Pose, Rotation, Twist};
use splatcal::losses::{scale_reg, ssim};
use splatcal::optim::{pose_update, AdamParams, PoseAdam, ViewSampler};
use splatcal::raster::{render, PinholeCamera, RenderOptions, Splat2D};
use splatcal::rig::extrinsic_error;
use splatcal::scene::{AuxGaussian, PointCloud};
use splatcal::ColorImage;

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

/// Twists with rotation angle below `max_angle`.
fn twist(max_angle: f64) -> impl Strategy<Value = Twist> {
    (vec3(5.0), vec3(1.0), 0.0..max_angle).prop_map(|(rho, axis, angle)| {
        let phi = if axis.norm() < 1e-6 { Vector3::zeros() } else { axis.normalize() * angle };
        Twist::new(rho, phi)
    })
}

fn pose() -> impl Strategy<Value = Pose> {
    twist(3.0).prop_map(|xi| exp(&xi))
}

fn image(w: usize, h: usize) -> impl Strategy<Value = ColorImage> {
    prop::collection::vec(0.0..1.0f64, w * h * 3).prop_map(move |d| ColorImage::from_data(w, h, d).unwrap())
}

fn close(a: &nalgebra::Matrix4<f64>, b: &nalgebra::Matrix4<f64>, tol: f64) -> bool {
    (a - b).abs().max() <= tol
}

proptest! {
    #[test]
    fn exp_log_round_trip(xi in twist(3.0)) {
        let back = log(&exp(&xi)).unwrap();
        prop_assert!((back.to_vector() - xi.to_vector()).norm() < 1e-8);
    }

    #[test]
    fn composition_is_associative(a in pose(), b in pose(), c in pose()) {
        prop_assert!(close(&((a * b) * c).matrix(), &(a * (b * c)).matrix(), 1e-9));
    }

    #[test]
    fn inverse_cancels(p in pose()) {
        prop_assert!(close(&(p * p.inverse()).matrix(), &nalgebra::Matrix4::identity(), 1e-12));
        prop_assert!(close(&(p.inverse() * p).matrix(), &nalgebra::Matrix4::identity(), 1e-12));
    }

    #[test]
    fn rotations_stay_orthonormal(p in pose()) {
        let r = p.rotation.matrix();
        prop_assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exp_of_negated_twist_is_inverse(xi in twist(3.0)) {
        let neg = Twist::from_vector(&(-xi.to_vector()));
        prop_assert!(close(&exp(&neg).matrix(), &exp(&xi).inverse().matrix(), 1e-9));
    }

    #[test]
    fn matrix_round_trip(p in pose()) {
        let back = Pose::from_row_major(&p.to_row_major());
        prop_assert!(close(&back.matrix(), &p.matrix(), 1e-14));
    }

    #[test]
    fn stored_pose_reloads_exactly(p in pose()) {
        let text = serde_json::to_string(&PoseEntry::from_pose(&p)).unwrap();
        let entry: PoseEntry = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(entry.to_pose("p").unwrap(), p);
    }

    #[test]
    fn pose_error_is_symmetric(a in pose(), b in pose()) {
        let (r1, t1) = extrinsic_error(&a, &b);
        let (r2, t2) = extrinsic_error(&b, &a);
        prop_assert!((r1 - r2).abs() < 1e-9);
        prop_assert!((t1 - t2).abs() < 1e-9);
        prop_assert!((0.0..=180.0).contains(&r1));
        prop_assert_eq!(extrinsic_error(&a, &a), (0.0, 0.0));
    }

    #[test]
    fn pose_error_triangle_inequality(a in pose(), b in pose(), c in pose()) {
        let (rab, tab) = extrinsic_error(&a, &b);
        let (rbc, tbc) = extrinsic_error(&b, &c);
        let (rac, tac) = extrinsic_error(&a, &c);
        prop_assert!(rac <= rab + rbc + 1e-9);
        prop_assert!(tac <= tab + tbc + 1e-9);
    }

    #[test]
    fn pose_update_with_zero_rates_is_identity(p in pose(), g in prop::array::uniform6(-1.0..1.0f64)) {
        let mut m = PoseAdam::default();
        let next = pose_update(&p, &Twist::from_array(g), 0.0, 0.0, &mut m, &AdamParams::default());
        prop_assert_eq!(next, p);
    }

    #[test]
    fn rotation_from_matrix_recovers_quaternion(xi in twist(3.1)) {
        let r = exp(&xi).rotation;
        let back = Rotation::from_matrix(&r.matrix());
        let d = back.wxyz().iter().zip(r.wxyz()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(d < 1e-12);
    }

    #[test]
    fn scale_reg_is_scale_invariant(
        scales in prop::collection::vec((0.01..5.0f64, 0.01..5.0f64, 0.01..5.0f64), 0..20),
        k in 0.01..100.0f64,
        sigma in 1.0..20.0f64,
    ) {
        let s: Vec<Vector3<f64>> = scales.iter().map(|&(a, b, c)| Vector3::new(a, b, c)).collect();
        let scaled: Vec<Vector3<f64>> = s.iter().map(|v| v * k).collect();
        let (a, _) = scale_reg(&s, sigma);
        let (b, _) = scale_reg(&scaled, sigma);
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn scale_reg_is_zero_for_mild_shapes(scales in prop::collection::vec((1.0..2.0f64, 1.0..2.0f64, 1.0..2.0f64), 1..20)) {
        let s: Vec<Vector3<f64>> = scales.iter().map(|&(a, b, c)| Vector3::new(a, b, c)).collect();
        let (v, g) = scale_reg(&s, 10.0);
        prop_assert_eq!(v, 0.0);
        prop_assert!(g.iter().all(|g| *g == Vector3::zeros()));
    }

    #[test]
    fn ssim_is_bounded_and_symmetric(a in image(12, 12), b in image(12, 12)) {
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&ab));
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_is_symmetric_and_finite(a in image(8, 8), b in image(8, 8)) {
        prop_assume!(a != b);
        let ab = psnr(&a, &b).unwrap();
        prop_assert!(ab.is_finite());
        prop_assert_eq!(ab, psnr(&b, &a).unwrap());
    }

    #[test]
    fn sampler_visits_every_view_once_per_cycle(count in 1usize..40, seed in any::<u64>()) {
        let mut s = ViewSampler::new(count, seed);
        for _ in 0..3 {
            let mut seen: Vec<usize> = (0..count).map(|_| s.next_view()).collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..count).collect::<Vec<_>>());
        }
    }

    #[test]
    fn blending_weights_never_exceed_one(
        splats in prop::collection::vec((0.0..24.0f64, 0.0..24.0f64, 0.3..6.0f64, 0.3..6.0f64, 0.0..3.2f64, 0.0..0.99f64, 0.1..10.0f64), 0..30),
        early_exit in any::<bool>(),
    ) {
        let splats: Vec<Splat2D> = splats
            .into_iter()
            .map(|(x, y, a, b, th, o, d)| {
                let r = Matrix2::new(th.cos(), -th.sin(), th.sin(), th.cos());
                let cov = r * Matrix2::new(a * a, 0.0, 0.0, b * b) * r.transpose();
                Splat2D { mean: Vector2::new(x, y), cov: (cov + cov.transpose()) * 0.5, color: Vector3::repeat(1.0), opacity: o, depth: d }
            })
            .collect();
        let cam = PinholeCamera { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0, width: 24, height: 24, near: 0.1, far: 50.0 };
        let p = render(&splats, &cam, &RenderOptions { early_exit, keep_cache: false, ..Default::default() });
        prop_assert!(p.image.data().iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        prop_assert!(p.transmittance.iter().all(|&t| (0.0..=1.0).contains(&t)));
    }

    #[test]
    fn ply_round_trips_f32_clouds(points in prop::collection::vec((any::<f32>(), any::<f32>(), any::<f32>()), 1..50)) {
        let pts: Vec<Vector3<f64>> = points
            .iter()
            .filter(|(x, y, z)| x.is_finite() && y.is_finite() && z.is_finite())
            .map(|&(x, y, z)| Vector3::new(x as f64, y as f64, z as f64))
            .collect();
        prop_assume!(!pts.is_empty());
        let cloud = PointCloud::new(pts).unwrap();
        let binary = parse_ply(&encode_ply(&cloud), Path::new("mem.ply")).unwrap();
        prop_assert_eq!(binary.points(), cloud.points());
        let ascii = parse_ply(&encode_ply_ascii(&cloud), Path::new("mem.ply")).unwrap();
        prop_assert_eq!(ascii.points(), cloud.points());
    }

    #[test]
    fn npy_round_trips_f32_images(w in 1usize..9, h in 1usize..9, seed in prop::collection::vec(any::<f32>(), 243)) {
        let data: Vec<f64> = seed.iter().take(w * h * 3).map(|&v| if v.is_finite() { v as f64 } else { 0.0 }).collect();
        let img = ColorImage::from_data(w, h, data).unwrap();
        prop_assert_eq!(parse_npy(&encode_npy(&img), Path::new("mem.npy")).unwrap(), img);
    }

    #[test]
    fn explicit_checkpoints_round_trip_f32(gs in prop::collection::vec(prop::collection::vec(-10.0..10.0f32, 14), 0..20)) {
        let gaussians: Vec<AuxGaussian> = gs
            .iter()
            .map(|v| {
                let f = |i: usize| v[i] as f64;
                AuxGaussian {
                    center: Vector3::new(f(0), f(1), f(2)),
                    rotation: nalgebra::Vector4::new(f(3), f(4), f(5), f(6)),
                    scale: Vector3::new(f(7), f(8), f(9)),
                    color: Vector3::new(f(10), f(11), f(12)),
                    opacity: f(13),
                }
            })
            .collect();
        match decode_checkpoint(&encode_gaussians(&gaussians), Path::new("mem.ckpt")).unwrap() {
            SavedScene::Explicit(back) => prop_assert_eq!(back, gaussians),
            SavedScene::Neural(_) => prop_assert!(false, "wrong kind"),
        }
    }
}
