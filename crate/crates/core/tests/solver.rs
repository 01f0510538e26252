use nalgebra::{Point3, Vector3};
use rand::Rng;
use rfa_core::geometry::{shapes, CameraIntrinsics, Pose, TriangleMesh};
use rfa_core::losses::{loss_mask, Normalization};
use rfa_core::metrics::{add, add_s};
use rfa_core::render::{render_rfa, RenderConfig};
use rfa_core::rng::{self, Domain};
use rfa_core::solver::*;

fn scene() -> (CameraIntrinsics, RenderConfig) {
    (CameraIntrinsics::centered(300.0, 128, 128), RenderConfig::default())
}

#[test]
fn objective_is_zero_at_truth_and_positive_nearby() {
    let (intr, cfg) = scene();
    let mesh = shapes::icosphere(2, 0.05);
    let truth = Pose::from_rotation_vector(Vector3::new(0.3, 0.1, -0.2), Vector3::new(0.0, 0.0, 0.45));
    let obs = render_rfa(&mesh, &truth, &intr, &cfg).unwrap();
    let opts = SolverOptions::default();
    assert_eq!(objective(&truth, &obs, &mesh, &intr, &cfg, &opts).unwrap(), 0.0);
    let nudged = truth.with_translation(truth.translation() + Vector3::new(0.01 * mesh.diameter(), 0.0, 0.0));
    assert!(objective(&nudged, &obs, &mesh, &intr, &cfg, &opts).unwrap() > 0.0);

    let far = truth.with_translation(Vector3::new(0.12, 0.0, 0.45));
    let est = render_rfa(&mesh, &far, &intr, &cfg).unwrap();
    assert!(obs.mask.iter().zip(&est.mask).all(|(a, b)| a * b == 0.0));
    let mask_term = opts.weights.mask * loss_mask(&obs, &est, Normalization::Mean).unwrap();
    let value = objective(&far, &obs, &mesh, &intr, &cfg, &opts).unwrap();
    assert!(mask_term > 0.0 && value >= mask_term);
}

#[test]
fn recovers_icosphere_pose_from_small_perturbation() {
    let (intr, cfg) = scene();
    let mesh = shapes::icosphere(1, 0.05);
    let d = mesh.diameter();
    for trial in 0..2u64 {
        let mut rng = rng::stream(51, Domain::Test, trial);
        let truth = Pose::from_quaternion(&rng::uniform_rotation(&mut rng), Vector3::new(0.0, 0.0, 0.45));
        let init = perturb_pose(&truth, 10.0, 0.05, d, &mut rng);
        let obs = render_rfa(&mesh, &truth, &intr, &cfg).unwrap();
        let res = solve_pose(&obs, &mesh, &intr, &cfg, &init, &SolverOptions::default()).unwrap();
        let err = add(&truth, &res.pose, mesh.vertices()).unwrap();
        assert!(err < 0.02 * d, "trial {trial}: ADD {err} vs diameter {d}");
        assert!(res.objective <= res.initial_objective);
        assert!(res.trace.windows(2).all(|w| w[1].objective <= w[0].objective));
        assert_eq!(res.starts.len(), 9);
    }
}

/// Barycentric grid of points on every face.
fn surface_samples(mesh: &TriangleMesh, n: usize) -> Vec<Point3<f64>> {
    let mut out = Vec::new();
    for f in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(f);
        for i in 0..=n {
            for j in 0..=n - i {
                let (u, v) = (i as f64 / n as f64, j as f64 / n as f64);
                out.push(Point3::from(a.coords * (1.0 - u - v) + b.coords * u + c.coords * v));
            }
        }
    }
    out
}

#[test]
fn cylinder_is_recovered_up_to_its_symmetry() {
    let (intr, cfg) = scene();
    let mesh = shapes::cylinder(0.03, 0.08, 16);
    let d = mesh.diameter();
    let mut rng = rng::stream(52, Domain::Test, 0);
    let truth = Pose::from_quaternion(&rng::uniform_rotation(&mut rng), Vector3::new(0.0, 0.0, 0.45));
    let init = perturb_pose(&truth, 10.0, 0.05, d, &mut rng);
    let obs = render_rfa(&mesh, &truth, &intr, &cfg).unwrap();
    let res = solve_pose(&obs, &mesh, &intr, &cfg, &init, &SolverOptions::default()).unwrap();
    let err = add_s(&truth, &res.pose, &surface_samples(&mesh, 8)).unwrap();
    assert!(err < 0.02 * d, "ADD-S {err} vs diameter {d}");
}

#[test]
fn solve_is_deterministic_and_gradient_mode_descends() {
    let intr = CameraIntrinsics::centered(150.0, 64, 64);
    let cfg = RenderConfig::default();
    let mesh = shapes::box_mesh(0.08, 0.06, 0.05);
    let truth = Pose::from_rotation_vector(Vector3::new(0.4, 0.2, 0.1), Vector3::new(0.0, 0.0, 0.45));
    let init = Pose::from_rotation_vector(Vector3::new(0.45, 0.15, 0.12), Vector3::new(0.004, -0.003, 0.46));
    let obs = render_rfa(&mesh, &truth, &intr, &cfg).unwrap();
    let opts = SolverOptions { multi_start: 2, max_evaluations: 60, polish_evaluations: 40, seed: 9, ..SolverOptions::default() };
    let a = solve_pose(&obs, &mesh, &intr, &cfg, &init, &opts).unwrap();
    let b = solve_pose(&obs, &mesh, &intr, &cfg, &init, &opts).unwrap();
    assert_eq!(a, b);
    let fd = SolverOptions { optimizer: Optimizer::FiniteDifferenceGradient, multi_start: 0, ..opts };
    let g = solve_pose(&obs, &mesh, &intr, &cfg, &init, &fd).unwrap();
    assert!(g.objective < g.initial_objective);
    assert!(g.evaluations <= 100);
}

#[test]
fn procrustes_recovers_rigid_motion_exactly() {
    for (k, n) in [3usize, 10, 100].into_iter().enumerate() {
        let mut rng = rng::stream(53, Domain::Test, k as u64);
        let src: Vec<Point3<f64>> = (0..n).map(|_| Point3::from(rng::in_unit_ball(&mut rng))).collect();
        let truth = Pose::from_quaternion(&rng::uniform_rotation(&mut rng), rng::in_unit_ball(&mut rng) * 3.0);
        let dst: Vec<Point3<f64>> = src.iter().map(|p| truth.transform_point(p)).collect();
        let est = procrustes(&src, &dst).unwrap();
        assert!((est.rotation() - truth.rotation()).amax() < 1e-9);
        assert!((est.translation() - truth.translation()).amax() < 1e-9);
        assert!(alignment_rms(&est, &src, &dst) < 1e-9);
        assert!((est.rotation().determinant() - 1.0).abs() < 1e-12);
    }
    let line: Vec<Point3<f64>> = (0..5).map(|k| Point3::new(k as f64, 2.0 * k as f64, 0.5)).collect();
    assert!(procrustes(&line, &line).is_err());
    assert!(procrustes(&line[..2], &line[..2]).is_err());
}

#[test]
fn procrustes_beats_random_rotations_on_noisy_data() {
    let mut rng = rng::stream(54, Domain::Test, 0);
    let src: Vec<Point3<f64>> = (0..30).map(|_| Point3::from(rng::in_unit_ball(&mut rng))).collect();
    let truth = Pose::from_quaternion(&rng::uniform_rotation(&mut rng), Vector3::new(0.2, -0.1, 1.0));
    let dst: Vec<Point3<f64>> = src
        .iter()
        .map(|p| truth.transform_point(p) + Vector3::new(rng.gen(), rng.gen(), rng.gen()) * 0.02)
        .collect();
    let est = procrustes(&src, &dst).unwrap();
    let best = alignment_rms(&est, &src, &dst);
    for _ in 0..1000 {
        let r = rng::uniform_rotation(&mut rng);
        let cs = src.iter().map(|p| p.coords).sum::<Vector3<f64>>() / 30.0;
        let cd = dst.iter().map(|p| p.coords).sum::<Vector3<f64>>() / 30.0;
        let p = Pose::from_quaternion(&r, cd - r * cs);
        assert!(best <= alignment_rms(&p, &src, &dst));
    }
}

#[test]
fn site_hand_case_and_round_trip() {
    let intr = CameraIntrinsics::centered(500.0, 640, 480);
    let crop = CropBox { center_x: 300.0, center_y: 250.0, size: 64.0, output_size: 64.0 };
    // Object center projects to (316, 242).
    let z = 0.8;
    let t = Vector3::new((316.0 - 320.0) * z / 500.0, (242.0 - 240.0) * z / 500.0, z);
    let deltas = encode_site(&Pose::from_translation(t), &intr, &crop).unwrap();
    assert!((deltas.delta_x - 0.25).abs() < 1e-12);
    assert!((deltas.delta_y + 0.125).abs() < 1e-12);
    assert!((deltas.delta_z - z).abs() < 1e-15);

    let zoomed = CropBox { output_size: 256.0, ..crop };
    let mut rng = rng::stream(55, Domain::Test, 0);
    for _ in 0..100 {
        let t = Vector3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(0.3..2.0));
        let p = Pose::from_quaternion(&rng::uniform_rotation(&mut rng), t);
        let back = decode_site(&encode_site(&p, &intr, &zoomed).unwrap(), &intr, &zoomed).unwrap();
        assert!((back - t).amax() < 1e-12);
    }
    assert!(encode_site(&Pose::identity(), &intr, &CropBox { size: 0.0, ..crop }).is_err());
}
