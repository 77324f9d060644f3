//! Geometry, modality simulation, evaluation metrics and dataset assembly for
//! multi-modal (ultrasound + lateral X-ray) vertebra shape completion.
//!
//! Coordinates are millimetres in an anatomical frame: `x` is left-right,
//! `y` is anteroposterior (posterior is `+y`), `z` is craniocaudal.

pub mod dataset;
pub mod error;
pub mod geom;
pub mod joint;
pub mod metrics;
pub mod rng;
pub mod sample;
pub mod us_sim;
pub mod xray_sim;

pub use error::{Error, Result};
pub use geom::{
    Axis, Hit, OrientedBoundingBox, Point3, PointCloud, RigidTransform, SpatialIndex, TriangleMesh,
    Vector3,
};
