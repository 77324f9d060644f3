//! Points, meshes, rigid transforms, spatial indexing, oriented bounding boxes
//! and ray casting.

mod cloud;
pub mod io;
mod kdtree;
pub(crate) mod mesh;
mod obb;
mod raycast;
mod transform;

pub use cloud::{Axis, PointCloud};
pub use kdtree::SpatialIndex;
pub use mesh::{box_mesh, TriangleMesh};
pub use obb::{pca_obb, OrientedBoundingBox};
pub use raycast::{cast_ray, ray_triangle, Hit, RayCaster};
pub use transform::RigidTransform;

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;

/// Tolerance on unit-length checks for normals and ray directions.
pub const UNIT_TOL: f64 = 1e-6;
