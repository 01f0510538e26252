use nalgebra::{Matrix3, Point2, Point3, Vector3};
use proptest::prelude::*;
use rand::Rng;
use rfa_core::geometry::{shapes, CameraIntrinsics, Pose};
use rfa_core::metrics::*;
use rfa_core::rng::{self, Domain, StreamRng};

fn random_pose(rng: &mut StreamRng, z: f64) -> Pose {
    let t = rng::in_unit_ball(rng) * 0.05 + Vector3::new(0.0, 0.0, z);
    Pose::from_quaternion(&rng::uniform_rotation(rng), t)
}

fn cloud(rng: &mut StreamRng, n: usize) -> Vec<Point3<f64>> {
    (0..n).map(|_| Point3::from(rng::in_unit_ball(rng) * 0.05)).collect()
}

#[test]
fn accelerated_add_s_equals_quadratic_scan() {
    for case in 0..100u64 {
        let mut rng = rng::stream(41, Domain::Test, case);
        let pts = cloud(&mut rng, 50 + (case as usize % 7) * 30);
        let g = random_pose(&mut rng, 0.5);
        let e = random_pose(&mut rng, 0.5);
        let fast = add_s(&g, &e, &pts).unwrap();
        let slow = add_s_brute(&g, &e, &pts).unwrap();
        assert!((fast - slow).abs() < 1e-9);
        assert!(fast <= add(&g, &e, &pts).unwrap() + 1e-15);
    }
}

#[test]
fn add_matches_per_point_brute_force() {
    let mut rng = rng::stream(42, Domain::Test, 0);
    let pts = cloud(&mut rng, 500);
    let g = random_pose(&mut rng, 0.5);
    let e = random_pose(&mut rng, 0.5);
    let mut sum = 0.0;
    for p in &pts {
        let a = g.rotation() * p.coords + g.translation();
        let b = e.rotation() * p.coords + e.translation();
        sum += (a - b).norm();
    }
    assert!((add(&g, &e, &pts).unwrap() - sum / 500.0).abs() < 1e-12);
}

#[test]
fn rotated_sphere_has_small_add_s_but_large_add() {
    let mesh = shapes::icosphere(3, 0.05);
    let pts = mesh.vertices();
    let g = Pose::from_translation(Vector3::new(0.0, 0.0, 0.5));
    let e = Pose::from_axis_angle(Vector3::new(1.0, 2.0, 0.5), 1.3, Vector3::new(0.0, 0.0, 0.5));
    let edge = mesh
        .faces()
        .iter()
        .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
        .map(|(a, b)| (pts[a] - pts[b]).norm())
        .fold(0.0, f64::max);
    let s = add_s(&g, &e, pts).unwrap();
    assert!(s <= edge, "{s} vs {edge}");
    assert!(add(&g, &e, pts).unwrap() > 5.0 * edge);
}

fn box_group() -> Vec<Matrix3<f64>> {
    vec![
        Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0)),
        Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, -1.0)),
        Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0)),
    ]
}

#[test]
fn mssd_and_mspd_are_exactly_invariant_under_listed_symmetries() {
    let intr = CameraIntrinsics::centered(500.0, 640, 480);
    let sym = SymmetrySpec::discrete(&box_group());
    let pts = shapes::box_mesh(0.1, 0.06, 0.04).vertices().to_vec();
    for case in 0..20u64 {
        let mut rng = rng::stream(43, Domain::Test, case);
        let g = random_pose(&mut rng, 0.6);
        let e = random_pose(&mut rng, 0.6);
        let base_s = mssd(&g, &e, &pts, &sym).unwrap();
        let base_p = mspd(&g, &e, &pts, &sym, &intr).unwrap();
        for s in box_group() {
            let es = e.compose(&Pose::new(s, Vector3::zeros()).unwrap());
            assert_eq!(mssd(&g, &es, &pts, &sym).unwrap(), base_s);
            assert_eq!(mspd(&g, &es, &pts, &sym, &intr).unwrap(), base_p);
            let gs = g.compose(&Pose::new(s, Vector3::zeros()).unwrap());
            assert_eq!(mssd(&g, &gs, &pts, &sym).unwrap(), 0.0);
        }
        assert_eq!(mssd(&g, &g, &pts, &sym).unwrap(), 0.0);
        assert_eq!(mspd(&g, &g, &pts, &sym, &intr).unwrap(), 0.0);
    }
}

#[test]
fn mssd_and_mspd_match_brute_force_with_two_symmetries() {
    let intr = CameraIntrinsics::centered(500.0, 640, 480);
    let mut rng = rng::stream(44, Domain::Test, 0);
    let pts = cloud(&mut rng, 80);
    let syms: Vec<Matrix3<f64>> = (0..2)
        .map(|_| *rng::uniform_rotation(&mut rng).to_rotation_matrix().matrix())
        .collect();
    let spec = SymmetrySpec::discrete(&syms);
    let g = random_pose(&mut rng, 0.6);
    let e = random_pose(&mut rng, 0.6);
    let mut transforms = vec![Matrix3::identity()];
    transforms.extend(syms.iter().map(|m| Matrix3::from_fn(|r, c| m[(r, c)])));
    let (mut best3, mut best2) = (f64::INFINITY, f64::INFINITY);
    for s in &transforms {
        let (mut w3, mut w2): (f64, f64) = (0.0, 0.0);
        for p in &pts {
            let a = g.rotation() * p.coords + g.translation();
            let b = e.rotation() * (s * p.coords) + e.translation();
            w3 = w3.max((a - b).norm());
            let pa = Point2::new(intr.fx * a.x / a.z + intr.cx, intr.fy * a.y / a.z + intr.cy);
            let pb = Point2::new(intr.fx * b.x / b.z + intr.cx, intr.fy * b.y / b.z + intr.cy);
            w2 = w2.max((pa - pb).norm());
        }
        best3 = best3.min(w3);
        best2 = best2.min(w2);
    }
    assert!((mssd(&g, &e, &pts, &spec).unwrap() - best3).abs() < 1e-9);
    assert!((mspd(&g, &e, &pts, &spec, &intr).unwrap() - best2).abs() < 1e-9);
}

#[test]
fn vsd_counts_half_overlap() {
    // 4x4 maps: gt covers the left half, est the middle two columns.
    let gt: Vec<f64> = (0..16).map(|i| if i % 4 < 2 { 1.0 } else { 0.0 }).collect();
    let est: Vec<f64> = (0..16).map(|i| if (1..3).contains(&(i % 4)) { 1.0 } else { 0.0 }).collect();
    // Union = 3 columns, shared column agrees.
    assert!((vsd(&gt, &est, 0.01).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    let deeper: Vec<f64> = est.iter().map(|d| d * 1.05).collect();
    assert_eq!(vsd(&gt, &deeper, 0.01).unwrap(), 1.0);
    assert!((vsd(&gt, &deeper, 0.1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn vsd_is_monotone_in_tau(seed in 0u64..500, t1 in 0.0..0.2f64, t2 in 0.0..0.2f64) {
        let mut rng = rng::stream(seed, Domain::Test, 45);
        let a: Vec<f64> = (0..64).map(|_| if rng.gen_bool(0.6) { rng.gen_range(0.3..0.6) } else { 0.0 }).collect();
        let b: Vec<f64> = (0..64).map(|_| if rng.gen_bool(0.6) { rng.gen_range(0.3..0.6) } else { 0.0 }).collect();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(vsd(&a, &b, hi).unwrap() <= vsd(&a, &b, lo).unwrap());
    }

    #[test]
    fn add_s_never_exceeds_add(seed in 0u64..500) {
        let mut rng = rng::stream(seed, Domain::Test, 46);
        let pts = cloud(&mut rng, 40);
        let g = random_pose(&mut rng, 0.5);
        let e = random_pose(&mut rng, 0.5);
        prop_assert!(add_s(&g, &e, &pts).unwrap() <= add(&g, &e, &pts).unwrap());
    }
}

fn instance(mssd: f64, mspd: f64, vsd: Vec<f64>, d: f64) -> InstanceMetrics {
    let grid = ArThresholds::default();
    let pass = vsd.iter().flat_map(|e| grid.vsd_theta.iter().map(move |t| e < t)).filter(|b| *b).count();
    InstanceMetrics {
        add: 0.0,
        add_s: 0.0,
        mssd,
        mspd,
        vsd_recall: pass as f64 / 100.0,
        vsd,
        mae: None,
        diameter: d,
        symmetric: false,
    }
}

#[test]
fn ar_grid_counts() {
    let intr = CameraIntrinsics::centered(500.0, 640, 480);
    let grid = ArThresholds::default();
    let r = intr.diagonal() / 640.0;
    let d = 0.2;
    let perfect = instance(0.0, 0.0, vec![0.0; 10], d);
    assert_eq!(ar_score(&[perfect], &[d], &intr, &grid).unwrap(), 1.0);
    let failed = instance(10.0, 1e4, vec![1.0; 10], d);
    assert_eq!(ar_score(&[failed], &[d], &intr, &grid).unwrap(), 0.0);
    // Passes thresholds 0.30..0.50 (five of ten) on every grid.
    let mut vsd = vec![0.0; 5];
    vsd.extend([1.0; 5]);
    let half = instance(0.275 * d, 27.5 * r, vsd, d);
    let ar = ar_score(&[half], &[d], &intr, &grid).unwrap();
    assert!((ar - 0.5).abs() < 1e-12, "{ar}");
}

#[test]
fn keypoint_mae_matches_brute_force() {
    let intr = CameraIntrinsics::centered(600.0, 640, 480);
    let mut rng = rng::stream(47, Domain::Test, 0);
    let k3 = cloud(&mut rng, 17);
    let pose = random_pose(&mut rng, 0.7);
    let k2: Vec<Point2<f64>> = (0..17).map(|_| Point2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0))).collect();
    let mut sum = 0.0;
    for (p, q) in k3.iter().zip(&k2) {
        let c = pose.rotation() * p.coords + pose.translation();
        sum += (600.0 * c.x / c.z + 320.0 - q.x).abs() + (600.0 * c.y / c.z + 240.0 - q.y).abs();
    }
    assert!((mae_keypoints(&k3, &pose, &intr, &k2).unwrap() - sum / 34.0).abs() < 1e-9);
    let exact: Vec<Point2<f64>> = k3.iter().map(|p| intr.project(&pose.transform_point(p)).unwrap()).collect();
    assert_eq!(mae_keypoints(&k3, &pose, &intr, &exact).unwrap(), 0.0);
}

#[test]
fn perfect_estimates_score_full_marks() {
    let mesh = shapes::box_mesh(0.08, 0.05, 0.04);
    let intr = CameraIntrinsics::centered(200.0, 64, 64);
    let sym = SymmetrySpec::none();
    let (pts, label) = model_points(&mesh, MAX_MODEL_POINTS, 0).unwrap();
    let mut rng = rng::stream(48, Domain::Test, 0);
    let poses: Vec<Pose> = (0..20).map(|_| random_pose(&mut rng, 0.4)).collect();
    let insts: Vec<Instance> = poses
        .iter()
        .map(|p| Instance {
            mesh: &mesh,
            points: &pts,
            pose_gt: p,
            pose_est: p,
            intr: &intr,
            symmetry: &sym,
            keypoints: None,
        })
        .collect();
    let report = evaluate(&insts, &ArThresholds::default(), &label).unwrap();
    assert_eq!(report.ar, 1.0);
    assert_eq!(report.add_recall_01d, 1.0);
    assert_eq!(report.model_points, "vertices:8");
}
