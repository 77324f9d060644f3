use nalgebra::{Matrix3, Rotation3};

use super::{Point3, PointCloud, Vector3};
use crate::{Error, Result};

const ORTHO_TOL: f64 = 1e-9;

/// Rotation followed by translation: `p' = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if err > ORTHO_TOL || (rotation.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(Error::InvalidGeometry(
                "rotation is not a proper orthonormal matrix".into(),
            ));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn translation(t: Vector3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn from_axis_angle(axis: Vector3, angle: f64, translation: Vector3) -> Self {
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Self {
            rotation: *r.matrix(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation_vector(&self) -> &Vector3 {
        &self.translation
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vector3::zeros()
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply_point(&self, p: &Point3) -> Point3 {
        if self.rotation == Matrix3::identity() {
            return p + self.translation;
        }
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3) -> Vector3 {
        if self.rotation == Matrix3::identity() {
            return *v;
        }
        self.rotation * v
    }

    /// Rotates then translates points; normals are only rotated.
    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        let points = cloud.points().iter().map(|p| self.apply_point(p)).collect();
        let normals = cloud.normals().map(|n| {
            n.iter()
                .map(|v| {
                    let r = self.apply_vector(v);
                    // re-normalize to keep the unit invariant after rounding
                    if self.rotation == Matrix3::identity() {
                        r
                    } else {
                        r.normalize()
                    }
                })
                .collect()
        });
        PointCloud::with_frame(points, normals, cloud.frame_id.clone())
            .expect("rigid transforms preserve cloud invariants")
    }
}
