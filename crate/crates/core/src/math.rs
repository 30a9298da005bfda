//! Small 3D helpers shared across modules.
//!
//! Points and vectors are column vectors. A rigid pose maps a rest-frame point
//! `x` to `R x + t`; the canonical frame of a contact set is recovered with
//! `R^T (y - t)`.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Rotation matrix for an axis-angle vector (Rodrigues).
pub fn exp_so3(v: &Vec3) -> Mat3 {
    Rotation3::from_scaled_axis(*v).into_inner()
}

/// Axis-angle vector of a rotation matrix. Goes through the quaternion:
/// the matrix route loses the axis at exactly π.
pub fn log_so3(r: &Mat3) -> Vec3 {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r)).scaled_axis()
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Left Jacobian of SO(3): `d exp(v) / dv_c = [J_l(v) e_c]x exp(v)`.
pub fn left_jacobian_so3(v: &Vec3) -> Mat3 {
    let theta2 = v.norm_squared();
    let k = skew(v);
    let (a, b) = if theta2 < 1e-10 {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Mat3::identity() + k * a + k * k * b
}

/// Uniformly distributed random rotation.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Mat3 {
    let q = nalgebra::Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    UnitQuaternion::from_quaternion(q)
        .to_rotation_matrix()
        .into_inner()
}

pub fn standard_normal_vec3<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * s)).norm()
}

/// Any unit vector orthogonal to `d` (which must be nonzero).
pub fn any_orthonormal(d: &Vec3) -> Vec3 {
    let d = d.normalize();
    let helper = if d.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    d.cross(&helper).normalize()
}

/// Least-squares rigid alignment (Kabsch): rotation `R` and translation `t`
/// minimizing `sum |R a_i + t - b_i|^2`.
pub fn kabsch(a: &[Vec3], b: &[Vec3]) -> (Mat3, Vec3) {
    let n = a.len() as f64;
    let ca = a.iter().sum::<Vec3>() / n;
    let cb = b.iter().sum::<Vec3>() / n;
    let mut h = Mat3::zeros();
    for (p, q) in a.iter().zip(b) {
        h += (q - cb) * (p - ca).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut d = Mat3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * vt;
    (r, cb - r * ca)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_inverts_exp_up_to_half_turns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let half_turns = [
            Mat3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0),
            Mat3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0),
            exp_so3(&(Vec3::new(1.0, -2.0, 0.5).normalize() * std::f64::consts::PI)),
        ];
        let random = (0..200).map(|_| random_rotation(&mut rng));
        for r in half_turns.into_iter().chain(random) {
            assert!((exp_so3(&log_so3(&r)) - r).abs().max() < 1e-9, "{r}");
        }
    }

    #[test]
    fn left_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v = standard_normal_vec3(&mut rng);
            let jl = left_jacobian_so3(&v);
            let r = exp_so3(&v);
            for c in 0..3 {
                let mut e = Vec3::zeros();
                e[c] = 1e-6;
                let fd = (exp_so3(&(v + e)) - exp_so3(&(v - e))) / 2e-6;
                let analytic = skew(&(jl.column(c).into_owned())) * r;
                assert!((fd - analytic).abs().max() < 1e-8);
            }
        }
    }

    #[test]
    fn kabsch_recovers_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = random_rotation(&mut rng);
        let t = Vec3::new(0.1, -0.2, 0.3);
        let a: Vec<Vec3> = (0..6).map(|_| standard_normal_vec3(&mut rng)).collect();
        let b: Vec<Vec3> = a.iter().map(|p| r * p + t).collect();
        let (r2, t2) = kabsch(&a, &b);
        assert!((r2 - r).abs().max() < 1e-12);
        assert!((t2 - t).norm() < 1e-12);
    }
}
