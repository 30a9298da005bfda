//! Analytic rigid objects: primitive SDFs, surface samples, and poses.

use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

/// Target spacing between neighbouring rest-frame surface samples (m).
pub const SURFACE_SPACING: f64 = 0.003;

/// Primitive kind and its dimensions, all in meters. Every primitive is
/// centered at its rest-frame origin; cylinder and torus axes are `+z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
    Cylinder { radius: f64, half_height: f64 },
    Torus { major_radius: f64, minor_radius: f64 },
}

impl Primitive {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Primitive::Sphere { .. } => "sphere",
            Primitive::Box { .. } => "box",
            Primitive::Cylinder { .. } => "cylinder",
            Primitive::Torus { .. } => "torus",
        }
    }

    /// Dimensions in the order used by the trajectory file format.
    pub fn dims(&self) -> Vec<f64> {
        match *self {
            Primitive::Sphere { radius } => vec![radius],
            Primitive::Box { half_extents } => half_extents.to_vec(),
            Primitive::Cylinder {
                radius,
                half_height,
            } => vec![radius, half_height],
            Primitive::Torus {
                major_radius,
                minor_radius,
            } => vec![major_radius, minor_radius],
        }
    }

    pub fn from_kind_dims(kind: &str, dims: &[f64]) -> Result<Self> {
        let want = |n: usize| -> Result<()> {
            if dims.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidShape(format!(
                    "{kind} expects {n} dims, got {}",
                    dims.len()
                )))
            }
        };
        let p = match kind {
            "sphere" => {
                want(1)?;
                Primitive::Sphere { radius: dims[0] }
            }
            "box" => {
                want(3)?;
                Primitive::Box {
                    half_extents: [dims[0], dims[1], dims[2]],
                }
            }
            "cylinder" => {
                want(2)?;
                Primitive::Cylinder {
                    radius: dims[0],
                    half_height: dims[1],
                }
            }
            "torus" => {
                want(2)?;
                Primitive::Torus {
                    major_radius: dims[0],
                    minor_radius: dims[1],
                }
            }
            other => return Err(Error::InvalidShape(format!("unknown kind {other:?}"))),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        if dims.iter().any(|d| !d.is_finite() || *d <= 0.0) {
            return Err(Error::InvalidShape(format!(
                "{} dims must be positive and finite: {dims:?}",
                self.kind_name()
            )));
        }
        if let Primitive::Torus {
            major_radius,
            minor_radius,
        } = *self
        {
            if minor_radius >= major_radius {
                return Err(Error::InvalidShape(
                    "torus minor radius must be below major radius".into(),
                ));
            }
        }
        Ok(())
    }

    /// Radius of the smallest origin-centered ball containing the primitive.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Primitive::Sphere { radius } => radius,
            Primitive::Box { half_extents } => Vec3::from(half_extents).norm(),
            Primitive::Cylinder {
                radius,
                half_height,
            } => radius.hypot(half_height),
            Primitive::Torus {
                major_radius,
                minor_radius,
            } => major_radius + minor_radius,
        }
    }

    /// Signed distance and its gradient in the rest frame.
    pub fn sdf_local(&self, p: &Vec3) -> (f64, Vec3) {
        match *self {
            Primitive::Sphere { radius } => {
                let r = p.norm();
                let n = if r > 0.0 { p / r } else { Vec3::z() };
                (r - radius, n)
            }
            Primitive::Box { half_extents } => box_sdf(p, &Vec3::from(half_extents)),
            Primitive::Cylinder {
                radius,
                half_height,
            } => cylinder_sdf(p, radius, half_height),
            Primitive::Torus {
                major_radius,
                minor_radius,
            } => {
                let (rxy, radial) = radial_part(p);
                let q = Vec3::new(rxy - major_radius, p.z, 0.0);
                let len = q.norm();
                let g = if len > 0.0 {
                    (radial * q.x + Vec3::z() * q.y) / len
                } else {
                    radial
                };
                (len - minor_radius, g)
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn radial_part(p: &Vec3) -> (f64, Vec3) {
    let rxy = p.x.hypot(p.y);
    let dir = if rxy > 0.0 {
        Vec3::new(p.x / rxy, p.y / rxy, 0.0)
    } else {
        Vec3::x()
    };
    (rxy, dir)
}

fn box_sdf(p: &Vec3, h: &Vec3) -> (f64, Vec3) {
    let q = p.abs() - h;
    if q.iter().any(|&c| c > 0.0) {
        let w = q.map(|c| c.max(0.0));
        let len = w.norm();
        let g = Vec3::new(sign(p.x) * w.x, sign(p.y) * w.y, sign(p.z) * w.z) / len;
        (len, g)
    } else {
        let axis = q.imax();
        let mut g = Vec3::zeros();
        g[axis] = sign(p[axis]);
        (q[axis], g)
    }
}

fn cylinder_sdf(p: &Vec3, radius: f64, half_height: f64) -> (f64, Vec3) {
    let (rxy, radial) = radial_part(p);
    let a = rxy - radius;
    let b = p.z.abs() - half_height;
    let axial = Vec3::z() * sign(p.z);
    if a > 0.0 || b > 0.0 {
        let wa = a.max(0.0);
        let wb = b.max(0.0);
        let len = wa.hypot(wb);
        (len, (radial * wa + axial * wb) / len)
    } else if a > b {
        (a, radial)
    } else {
        (b, axial)
    }
}

/// Rest-frame surface samples with outward unit normals.
fn sample_surface(primitive: &Primitive, spacing: f64) -> (Vec<Vec3>, Vec<Vec3>) {
    let mut pts = Vec::new();
    let mut nrm = Vec::new();
    let count = |len: f64| ((len / spacing).ceil() as usize).max(1);
    match *primitive {
        Primitive::Sphere { radius } => {
            let area = 4.0 * std::f64::consts::PI * radius * radius;
            let n = ((area / (spacing * spacing)).round() as usize).max(32);
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for i in 0..n {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                let d = Vec3::new(r * phi.cos(), r * phi.sin(), z);
                pts.push(d * radius);
                nrm.push(d);
            }
        }
        Primitive::Box { half_extents } => {
            let h = Vec3::from(half_extents);
            for axis in 0..3 {
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                let (nu, nv) = (count(2.0 * h[u]), count(2.0 * h[v]));
                for s in [-1.0, 1.0] {
                    for i in 0..nu {
                        for j in 0..nv {
                            let mut p = Vec3::zeros();
                            p[axis] = s * h[axis];
                            p[u] = -h[u] + 2.0 * h[u] * (i as f64 + 0.5) / nu as f64;
                            p[v] = -h[v] + 2.0 * h[v] * (j as f64 + 0.5) / nv as f64;
                            let mut n = Vec3::zeros();
                            n[axis] = s;
                            pts.push(p);
                            nrm.push(n);
                        }
                    }
                }
            }
        }
        Primitive::Cylinder {
            radius,
            half_height,
        } => {
            let nz = count(2.0 * half_height);
            let nt = count(2.0 * std::f64::consts::PI * radius);
            for i in 0..nz {
                let z = -half_height + 2.0 * half_height * (i as f64 + 0.5) / nz as f64;
                for j in 0..nt {
                    let a = 2.0 * std::f64::consts::PI * j as f64 / nt as f64;
                    let d = Vec3::new(a.cos(), a.sin(), 0.0);
                    pts.push(d * radius + Vec3::z() * z);
                    nrm.push(d);
                }
            }
            let nr = count(radius);
            for s in [-1.0, 1.0] {
                for i in 0..nr {
                    let r = radius * (i as f64 + 0.5) / nr as f64;
                    let nt = count(2.0 * std::f64::consts::PI * r);
                    for j in 0..nt {
                        let a = 2.0 * std::f64::consts::PI * (j as f64 + 0.5 * i as f64) / nt as f64;
                        pts.push(Vec3::new(r * a.cos(), r * a.sin(), s * half_height));
                        nrm.push(Vec3::z() * s);
                    }
                }
            }
        }
        Primitive::Torus {
            major_radius,
            minor_radius,
        } => {
            let nu = count(2.0 * std::f64::consts::PI * major_radius);
            let nv = count(2.0 * std::f64::consts::PI * minor_radius);
            for i in 0..nu {
                let u = 2.0 * std::f64::consts::PI * i as f64 / nu as f64;
                for j in 0..nv {
                    let v = 2.0 * std::f64::consts::PI * j as f64 / nv as f64;
                    let n = Vec3::new(v.cos() * u.cos(), v.cos() * u.sin(), v.sin());
                    let c = Vec3::new(major_radius * u.cos(), major_radius * u.sin(), 0.0);
                    pts.push(c + n * minor_radius);
                    nrm.push(n);
                }
            }
        }
    }
    (pts, nrm)
}

/// A primitive together with its rest-frame surface sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectShape {
    primitive: Primitive,
    points: Vec<Vec3>,
    normals: Vec<Vec3>,
}

impl ObjectShape {
    pub fn new(primitive: Primitive) -> Result<Self> {
        Self::with_spacing(primitive, SURFACE_SPACING)
    }

    pub fn with_spacing(primitive: Primitive, spacing: f64) -> Result<Self> {
        primitive.validate()?;
        if !(spacing > 0.0) {
            return Err(Error::InvalidInput(format!(
                "surface spacing must be positive, got {spacing}"
            )));
        }
        let (points, normals) = sample_surface(&primitive, spacing);
        Ok(Self {
            primitive,
            points,
            normals,
        })
    }

    pub fn primitive(&self) -> &Primitive {
        &self.primitive
    }

    /// Rest-frame surface samples.
    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Unit outward normals matching [`ObjectShape::points`].
    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }
}

/// Rigid object pose: `world = rotation * rest + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectPose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl Default for ObjectPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl ObjectPose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn matrix(&self) -> Mat3 {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse_apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse() * (p - self.translation)
    }
}

/// Signed distance from world point `p` to the posed object, with the unit
/// outward normal (the world-frame SDF gradient).
pub fn object_sdf(shape: &ObjectShape, pose: &ObjectPose, p: &Vec3) -> (f64, Vec3) {
    let (d, g) = shape.primitive.sdf_local(&pose.inverse_apply(p));
    (d, pose.apply_vector(&g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::standard_normal_vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn primitives() -> Vec<Primitive> {
        vec![
            Primitive::Sphere { radius: 0.05 },
            Primitive::Box {
                half_extents: [0.03, 0.05, 0.02],
            },
            Primitive::Cylinder {
                radius: 0.03,
                half_height: 0.06,
            },
            Primitive::Torus {
                major_radius: 0.05,
                minor_radius: 0.015,
            },
        ]
    }

    #[test]
    fn sphere_analytic_values() {
        let shape = ObjectShape::new(Primitive::Sphere { radius: 0.05 }).unwrap();
        let pose = ObjectPose::identity();
        let (d, n) = object_sdf(&shape, &pose, &Vec3::new(0.0, 0.0, 0.06));
        assert!((d - 0.01).abs() < 1e-15);
        assert!((n - Vec3::z()).norm() < 1e-15);
        let (d, _) = object_sdf(&shape, &pose, &Vec3::zeros());
        assert_eq!(d, -0.05);
    }

    #[test]
    fn samples_on_surface_with_unit_normals() {
        for p in primitives() {
            let shape = ObjectShape::new(p).unwrap();
            assert!(shape.points().len() > 100);
            for (x, n) in shape.points().iter().zip(shape.normals()) {
                let (d, g) = p.sdf_local(x);
                assert!(d.abs() < 1e-7, "{p:?} sample off surface by {d}");
                assert!((n.norm() - 1.0).abs() < 1e-9);
                assert!((g - n).norm() < 1e-6, "{p:?} normal disagrees with gradient");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for p in primitives() {
            let shape = ObjectShape::new(p).unwrap();
            let axis = standard_normal_vec3(&mut rng);
            let rot = UnitQuaternion::from_scaled_axis(axis);
            let pose = ObjectPose::new(rot, Vec3::new(0.01, -0.02, 0.03));
            for _ in 0..1000 {
                let local = Vec3::new(
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                );
                let x = pose.apply(&local);
                let (_, g) = object_sdf(&shape, &pose, &x);
                let mut fd = Vec3::zeros();
                for c in 0..3 {
                    let mut e = Vec3::zeros();
                    e[c] = h;
                    fd[c] = (object_sdf(&shape, &pose, &(x + e)).0
                        - object_sdf(&shape, &pose, &(x - e)).0)
                        / (2.0 * h);
                }
                worst = worst.max((fd - g).abs().max());
            }
        }
        assert!(worst < 1e-4, "max gradient error {worst}");
    }

    #[test]
    fn sdf_is_one_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in primitives() {
            for _ in 0..2000 {
                let a = standard_normal_vec3(&mut rng) * 0.05;
                let b = standard_normal_vec3(&mut rng) * 0.05;
                let da = p.sdf_local(&a).0;
                let db = p.sdf_local(&b).0;
                assert!((da - db).abs() <= (a - b).norm() + 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(ObjectShape::new(Primitive::Sphere { radius: -1.0 }).is_err());
        assert!(Primitive::from_kind_dims("torus", &[0.01, 0.02]).is_err());
        assert!(Primitive::from_kind_dims("cone", &[0.01]).is_err());
    }
}
