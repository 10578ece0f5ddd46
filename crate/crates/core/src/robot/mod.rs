//! Procedural manipulators: kinematic templates, compiled chains and URDF export.

mod model;
mod template;
mod urdf;

pub use model::{
    assignment_count, axis_frame_rotation, compile_robot, make_cylinder, sample_frames, sample_frames_with, Capsule,
    Cuboid, Cylinder, FrameAssignment, Link, RobotModel,
};
pub use template::{
    import_template, sample_template, sample_template_with, Axis, EndEffectorTemplate, Family, JointConstraint,
    KinematicTemplate, LinkTemplate, Pattern, SamplingConfig, Strategy, TemplateFile, TEMPLATE_ROWS,
};
pub use urdf::{export_urdf, import_template_from_urdf, rotation_to_rpy};
