//! Built-in analytic checks run by `rfa selftest`.

use anyhow::{ensure, Result};
use nalgebra::{Point3, Vector3};
use rand::Rng;
use rfa_core::compositing::composite;
use rfa_core::geometry::{shapes, CameraIntrinsics, Pose};
use rfa_core::graycode::{capture_with_maps, decode_flow, generate_patterns, DecodeStatus};
use rfa_core::image::Image;
use rfa_core::metrics::{add_s, add_s_brute};
use rfa_core::render::{fresnel_transmittance, refract_direction, render_rfa, RenderConfig, RfaMaps};
use rfa_core::rng::{stream, uniform_rotation, Domain};
use rfa_core::solver::procrustes;

pub struct CheckResult {
    pub name: &'static str,
    pub outcome: Result<String>,
}

fn snell() -> Result<String> {
    let mut rng = stream(0, Domain::Test, 100);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let eta = rng.gen_range(0.5..1.5);
        let a: f64 = rng.gen_range(0.0..std::f64::consts::FRAC_PI_2);
        let sin_t = eta * a.sin();
        let d = refract_direction(&Vector3::new(a.sin(), 0.0, -a.cos()), &Vector3::z(), eta);
        match d {
            None => ensure!(sin_t >= 1.0 - 1e-12, "unexpected total reflection at {a} rad, eta {eta}"),
            Some(d) => {
                ensure!(sin_t <= 1.0, "missed total reflection at {a} rad, eta {eta}");
                worst = worst.max((d.x.atan2(-d.z) - sin_t.asin()).abs());
            }
        }
    }
    ensure!(worst < 1e-9, "angle error {worst:e}");
    Ok(format!("max angle error {worst:.1e} rad"))
}

fn fresnel() -> Result<String> {
    let t = fresnel_transmittance(1.0, 1.0 / 1.5);
    ensure!((t - 0.96).abs() < 1e-12, "normal transmittance {t}");
    Ok(format!("normal transmittance {t}"))
}

fn slab() -> Result<String> {
    let h = 0.05;
    let intr = CameraIntrinsics::centered(300.0, 64, 64);
    let pose = Pose::from_axis_angle(Vector3::y(), 30f64.to_radians(), Vector3::new(0.0, 0.0, 0.5));
    let maps = render_rfa(&shapes::box_mesh(0.3, 0.3, h), &pose, &intr, &RenderConfig::default())?;
    let (u, v) = (32usize, 32usize);
    let d = intr.pixel_direction(u as f64, v as f64).normalize();
    let mut normal = pose.transform_vector(&Vector3::z());
    if normal.dot(&d) > 0.0 {
        normal = -normal;
    }
    let a = (-normal.dot(&d)).acos();
    let ar = (a.sin() / 1.5).asin();
    let off = (-normal - d * (-normal).dot(&d)).normalize() * (h * (a - ar).sin() / ar.cos());
    let land = off - d * (off.z / d.z);
    let want = [intr.fx * land.x, intr.fy * land.y];
    let got = maps.flow[maps.index(u, v)];
    let err = (got[0] - want[0]).abs().max((got[1] - want[1]).abs());
    ensure!(err < 0.5, "flow {got:?}, expected {want:?}");
    Ok(format!("center flow error {err:.3} px"))
}

fn graycode() -> Result<String> {
    let intr = CameraIntrinsics::centered(150.0, 64, 64);
    let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 0.4));
    let maps = render_rfa(&shapes::icosphere(2, 0.06), &pose, &intr, &RenderConfig::default())?;
    let patterns = generate_patterns(64, 64)?;
    let decoded = decode_flow(&capture_with_maps(&patterns, &maps)?, &patterns, &maps.mask)?;
    let mut good = 0;
    for i in 0..maps.len() {
        if decoded.status[i] == DecodeStatus::Valid {
            let (a, b) = (decoded.flow[i], maps.flow[i]);
            good += ((a[0] - b[0]).abs() <= 1.0 && (a[1] - b[1]).abs() <= 1.0) as usize;
        }
    }
    let valid = decoded.valid_count();
    ensure!(valid > 0, "no decodable pixels");
    let frac = good as f64 / valid as f64;
    ensure!(frac >= 0.99, "{good}/{valid} pixels within 1 px");
    Ok(format!("{good}/{valid} pixels within 1 px"))
}

fn compositing() -> Result<String> {
    let bg = Image::from_fn(16, 8, 3, |x, y, c| ((x * 7 + y * 3 + c) % 11) as f64 / 10.0);
    ensure!(composite(&RfaMaps::empty(16, 8), &bg)? == bg, "empty matte changed the background");
    let mut m = RfaMaps::empty(16, 8);
    for r in [0.25, 0.5, 1.0] {
        m.mask[20] = 1.0;
        m.rho[20] = r;
        let out = composite(&m, &bg)?;
        for c in 0..3 {
            let want = r * bg.get(4, 1, c);
            ensure!((out.get(4, 1, c) - want).abs() < 1e-12, "rho {r}: {} vs {want}", out.get(4, 1, c));
        }
    }
    Ok("identity and attenuation scaling hold".into())
}

fn kabsch() -> Result<String> {
    let mut rng = stream(0, Domain::Test, 101);
    let src: Vec<Point3<f64>> = (0..10)
        .map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let truth = Pose::from_quaternion(&uniform_rotation(&mut rng), Vector3::new(0.1, -0.2, 0.7));
    let dst: Vec<Point3<f64>> = src.iter().map(|p| truth.transform_point(p)).collect();
    let est = procrustes(&src, &dst)?;
    let err = (est.rotation() - truth.rotation()).amax().max((est.translation() - truth.translation()).amax());
    ensure!(err < 1e-9, "pose error {err:e}");
    let line: Vec<Point3<f64>> = (0..5).map(|k| Point3::new(k as f64, 0.0, 0.0)).collect();
    ensure!(procrustes(&line, &line).is_err(), "collinear points accepted");
    Ok(format!("pose error {err:.1e}"))
}

fn add_s_exact() -> Result<String> {
    let mesh = shapes::icosphere(2, 0.05);
    let mut rng = stream(0, Domain::Test, 102);
    let gt = Pose::from_translation(Vector3::new(0.0, 0.0, 0.5));
    let est = Pose::from_quaternion(&uniform_rotation(&mut rng), Vector3::new(0.01, 0.0, 0.5));
    let (a, b) = (add_s(&gt, &est, mesh.vertices())?, add_s_brute(&gt, &est, mesh.vertices())?);
    ensure!((a - b).abs() < 1e-12, "accelerated {a} vs brute force {b}");
    Ok(format!("ADD-S {a:.6}"))
}

pub fn run_all() -> Vec<CheckResult> {
    let checks: [(&'static str, fn() -> Result<String>); 7] = [
        ("snell", snell),
        ("fresnel", fresnel),
        ("slab-displacement", slab),
        ("graycode-roundtrip", graycode),
        ("compositing", compositing),
        ("procrustes", kabsch),
        ("add-s", add_s_exact),
    ];
    checks
        .into_iter()
        .map(|(name, f)| CheckResult { name, outcome: f() })
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all() {
            assert!(c.outcome.is_ok(), "{}: {:?}", c.name, c.outcome.err());
        }
    }
}
