//! Meshes, rigid transforms, the pinhole camera and ray queries.

mod bvh;
mod camera;
mod mesh;
mod mesh_io;
mod pose;
mod ray;
pub mod shapes;

pub use bvh::Aabb;
pub use camera::CameraIntrinsics;
pub use mesh::{ray_mesh_intersect, Hit, TriangleMesh};
pub use mesh_io::{load_mesh, save_obj, to_obj_string};
pub use pose::{transform_points, Pose};
pub use ray::Ray;
