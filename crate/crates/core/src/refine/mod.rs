//! Turns a raw skeleton graph into a full-length, axis-centred polyline.

pub mod circle;
pub mod elongate;
pub mod path;
pub mod rolling;

pub use circle::{fit_circle_2d_ransac, CircleFit, Point2, RollingSphereParams};
pub use elongate::{elongate, ElongationParams};
pub use path::{longest_leaf_path, longest_path};
pub use rolling::{mean_radius, rolling_sphere_recenter, Recentered};
