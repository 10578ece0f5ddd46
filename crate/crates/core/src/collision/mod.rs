//! Geometric scenes, exact primitive collision queries, labeled surface
//! points and the collision dataset.

mod dataset;
pub mod distance;
mod points;
mod query;
mod scene;

pub use dataset::{
    gen_collision_dataset, label_config, perturb, CollisionDataConfig, CollisionDataset, CollisionRecord, COLLISION_KIND,
};
pub use points::{
    binary_collision_condition, label_collisions, link_areas, sample_link_counts, sample_surface_points,
    score_from_labels, score_steps, score_trajectory, LabeledPoint, LabeledPointCloud, PointLabel,
    DEFAULT_SCORE_POINTS,
};
pub use query::{
    capsule_capsule_clearance, capsule_obstacle_clearance, check_config, clearance_penalty, collision_cost,
    is_valid_config, min_distances, posed_capsules, CollisionReport, LinkDistances, ENV_RADIUS, SELF_RADIUS,
};
pub use scene::{generate_scene, Obstacle, Scene, SceneConfig};
