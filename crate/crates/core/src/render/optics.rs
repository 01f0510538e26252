use nalgebra::Vector3;

/// Refracts `incident` at a surface with unit `normal` facing against it.
/// `eta` is n1/n2 (incident side over transmitted side). Returns `None` on
/// total internal reflection.
pub fn refract_direction(incident: &Vector3<f64>, normal: &Vector3<f64>, eta: f64) -> Option<Vector3<f64>> {
    if eta == 1.0 {
        return Some(*incident);
    }
    let cos_i = (-incident.dot(normal)).clamp(0.0, 1.0);
    let sin2_t = eta * eta * (1.0 - cos_i * cos_i);
    if sin2_t > 1.0 {
        return None;
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    Some((incident * eta + normal * (eta * cos_i - cos_t)).normalize())
}

/// Mirror reflection about `normal`.
pub fn reflect(incident: &Vector3<f64>, normal: &Vector3<f64>) -> Vector3<f64> {
    (incident - normal * (2.0 * incident.dot(normal))).normalize()
}

/// Unpolarized Fresnel transmittance `1 - (Rs + Rp) / 2` for incidence cosine
/// `cos_i` and relative index `eta = n1/n2`. Zero beyond the critical angle.
pub fn fresnel_transmittance(cos_i: f64, eta: f64) -> f64 {
    if eta == 1.0 {
        return 1.0;
    }
    let cos_i = cos_i.clamp(0.0, 1.0);
    let sin2_t = eta * eta * (1.0 - cos_i * cos_i);
    if sin2_t >= 1.0 {
        return 0.0;
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    let rs = ((eta * cos_i - cos_t) / (eta * cos_i + cos_t)).powi(2);
    let rp = ((cos_i - eta * cos_t) / (cos_i + eta * cos_t)).powi(2);
    (1.0 - 0.5 * (rs + rp)).clamp(0.0, 1.0)
}
