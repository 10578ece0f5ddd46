//! Compiled kinematic chains with cylinder and cuboid geometry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::template::{Axis, KinematicTemplate};
use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;
use crate::se3::Pose;

/// A cylinder extruded from `start` along `direction` in its link's frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Cylinder<T> {
    pub axis: Axis,
    pub direction: Vec3<T>,
    pub start: Vec3<T>,
    pub length: T,
    pub radius: T,
    /// Frame at the axis midpoint with local z along `direction`.
    pub frame: Pose<T>,
}

impl<T: Real> Cylinder<T> {
    pub fn end(&self) -> Vec3<T> {
        self.start + self.direction.scale(self.length)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cuboid<T> {
    pub pose: Pose<T>,
    pub half_extents: Vec3<T>,
}

/// Segment swept by a sphere; the collision primitive for robot geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule<T> {
    pub a: Vec3<T>,
    pub b: Vec3<T>,
    pub radius: T,
}

impl<T: Real> Capsule<T> {
    pub fn transformed(&self, pose: &Pose<T>) -> Self {
        Self { a: pose.transform_point(&self.a), b: pose.transform_point(&self.b), radius: self.radius }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn aabb(&self) -> (Vec3<T>, Vec3<T>) {
        let r = Vec3([self.radius; 3]);
        (self.a.min(&self.b) - r, self.a.max(&self.b) + r)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link<T> {
    pub cylinders: Vec<Cylinder<T>>,
    pub cuboids: Vec<Cuboid<T>>,
    /// Origin of the next joint, in this link's frame.
    pub tip: Vec3<T>,
    /// Candidate pose-token frames in this link's frame.
    pub frames: Vec<Pose<T>>,
    pub collision: Vec<Capsule<T>>,
}

impl<T: Real> Link<T> {
    /// A link with no geometry whose only frame is its joint frame.
    pub fn fixed_base() -> Self {
        Self {
            cylinders: Vec::new(),
            cuboids: Vec::new(),
            tip: Vec3::zeros(),
            frames: vec![Pose::identity()],
            collision: Vec::new(),
        }
    }

    /// Builds a link from cylinders laid end to end; frames are the cylinder
    /// frames and the tip is the end of the last cylinder.
    pub fn from_cylinders(cylinders: Vec<Cylinder<T>>) -> Self {
        let tip = cylinders.last().map(|c| c.end()).unwrap_or_else(Vec3::zeros);
        let frames = cylinders.iter().map(|c| c.frame).collect();
        let collision = cylinders.iter().map(|c| Capsule { a: c.start, b: c.end(), radius: c.radius }).collect();
        Self { cylinders, cuboids: Vec::new(), tip, frames, collision }
    }

    pub fn has_geometry(&self) -> bool {
        !self.collision.is_empty()
    }
}

/// Rotation whose local z is `direction` (a signed coordinate axis) and local x
/// the next coordinate axis in cyclic order.
pub fn axis_frame_rotation<T: Real>(axis: Axis, direction: &Vec3<T>) -> Mat3<T> {
    let z = *direction;
    let x = Vec3::basis((axis.index() + 1) % 3);
    let y = z.cross(&x);
    Mat3::from_columns(x, y, z)
}

pub fn make_cylinder<T: Real>(axis: Axis, sign: T, start: Vec3<T>, length: T, radius: T) -> Cylinder<T> {
    let direction = Vec3::<T>::basis(axis.index()).scale(sign);
    let mid = start + direction.scale(length * T::half());
    let frame = Pose::from_parts(axis_frame_rotation(axis, &direction), mid);
    Cylinder { axis, direction, start, length, radius, frame }
}

/// Smallest capsule along the box's longest local axis that covers the box.
fn bounding_capsule<T: Real>(c: &Cuboid<T>) -> Capsule<T> {
    let h = c.half_extents;
    let long = (0..3).fold(0, |best, i| if h[i] > h[best] { i } else { best });
    let (o1, o2) = ((long + 1) % 3, (long + 2) % 3);
    let radius = (h[o1] * h[o1] + h[o2] * h[o2]).sqrt();
    let local = Vec3::<T>::basis(long).scale(h[long]);
    Capsule { a: c.pose.transform_point(&(-local)), b: c.pose.transform_point(&local), radius }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotModel<T> {
    /// Index 0 is the fixed base, the last entry the end effector.
    pub links: Vec<Link<T>>,
    pub joint_axes: Vec<Vec3<T>>,
    pub joint_limits: Vec<(T, T)>,
}

impl<T: Real> RobotModel<T> {
    pub fn new(links: Vec<Link<T>>, joint_axes: Vec<Vec3<T>>, joint_limits: Vec<(T, T)>) -> Result<Self> {
        if links.len() != joint_axes.len() + 1 {
            return Err(Error::DimensionMismatch { expected: joint_axes.len() + 1, got: links.len() });
        }
        if joint_limits.len() != joint_axes.len() {
            return Err(Error::DimensionMismatch { expected: joint_axes.len(), got: joint_limits.len() });
        }
        if links.iter().any(|l| l.frames.is_empty()) {
            return Err(Error::InvalidArgument("every link needs at least one frame".into()));
        }
        Ok(Self { links, joint_axes, joint_limits })
    }

    pub fn dof(&self) -> usize {
        self.joint_axes.len()
    }

    /// Number of pose tokens: one per rigid body including the base.
    pub fn token_count(&self) -> usize {
        self.links.len()
    }

    pub fn lower(&self) -> Vec<T> {
        self.joint_limits.iter().map(|l| l.0).collect()
    }

    pub fn upper(&self) -> Vec<T> {
        self.joint_limits.iter().map(|l| l.1).collect()
    }

    pub fn within_limits(&self, q: &[T]) -> bool {
        q.len() == self.dof() && q.iter().zip(&self.joint_limits).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn clamp(&self, q: &mut [T]) {
        for (v, (lo, hi)) in q.iter_mut().zip(&self.joint_limits) {
            *v = v.max(*lo).min(*hi);
        }
    }

    /// Links `i` and `j` share a joint.
    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        i.abs_diff(j) <= 1
    }

    pub fn cast<U: Real>(&self) -> RobotModel<U> {
        let cyl = |c: &Cylinder<T>| Cylinder {
            axis: c.axis,
            direction: c.direction.cast(),
            start: c.start.cast(),
            length: U::lit(c.length.as_f64()),
            radius: U::lit(c.radius.as_f64()),
            frame: c.frame.cast(),
        };
        let cap = |c: &Capsule<T>| Capsule { a: c.a.cast(), b: c.b.cast(), radius: U::lit(c.radius.as_f64()) };
        RobotModel {
            links: self
                .links
                .iter()
                .map(|l| Link {
                    cylinders: l.cylinders.iter().map(cyl).collect(),
                    cuboids: l
                        .cuboids
                        .iter()
                        .map(|c| Cuboid { pose: c.pose.cast(), half_extents: c.half_extents.cast() })
                        .collect(),
                    tip: l.tip.cast(),
                    frames: l.frames.iter().map(|f| f.cast()).collect(),
                    collision: l.collision.iter().map(cap).collect(),
                })
                .collect(),
            joint_axes: self.joint_axes.iter().map(|a| a.cast()).collect(),
            joint_limits: self
                .joint_limits
                .iter()
                .map(|(a, b)| (U::lit(a.as_f64()), U::lit(b.as_f64())))
                .collect(),
        }
    }
}

/// Compiles a template into a chain: cylinders of a link extrude end to end in
/// pattern order; a link's first cylinder continues in the direction of its
/// parent's last cylinder; the chiral flip reverses the last cylinder; each
/// joint sits at the end of its parent and turns about the child's first
/// extrusion direction.
pub fn compile_robot<T: Real>(template: &KinematicTemplate) -> Result<RobotModel<T>> {
    template.validate()?;
    let mut links = vec![Link::fixed_base()];
    let mut axes = Vec::with_capacity(template.dof());
    let mut incoming = T::one();
    for lt in &template.links {
        let extrusions = lt.extrusions();
        let mut cylinders = Vec::new();
        let mut cursor = Vec3::zeros();
        let mut first_dir = None;
        let mut last_sign = incoming;
        for (k, (axis, len)) in extrusions.iter().enumerate() {
            let sign = if k == 0 {
                incoming
            } else if k == 2 && lt.chiral_flip {
                -T::one()
            } else {
                T::one()
            };
            if k == 0 {
                first_dir = Some(Vec3::<T>::basis(axis.index()).scale(sign));
            }
            last_sign = sign;
            if *len > 0.0 {
                let c = make_cylinder(*axis, sign, cursor, T::lit(*len), T::lit(lt.radius));
                cursor = c.end();
                cylinders.push(c);
            }
        }
        axes.push(first_dir.expect("patterns have three entries"));
        incoming = last_sign;
        links.push(Link::from_cylinders(cylinders));
    }

    let ee = &template.end_effector;
    let ee_axis = template.links.last().map(|l| l.pattern.last()).unwrap_or(Axis::Z);
    let base = make_cylinder(ee_axis, incoming, Vec3::zeros(), T::lit(ee.base_height), T::lit(ee.base_radius));
    let dir = base.direction;
    axes.push(dir);
    let tool = Pose::from_parts(axis_frame_rotation(ee_axis, &dir), base.end());
    let s = T::lit(ee.cuboid_scale);
    let boxes = [
        // palm
        ([0.0, 0.0, 0.015], [0.02, 0.08, 0.015]),
        // fingers
        ([0.0, 0.065, 0.07], [0.012, 0.012, 0.04]),
        ([0.0, -0.065, 0.07], [0.012, 0.012, 0.04]),
    ];
    let cuboids: Vec<Cuboid<T>> = boxes
        .iter()
        .map(|(c, h)| Cuboid {
            pose: tool.compose(&Pose::from_translation(Vec3(c.map(|v| T::lit(v) * s)))),
            half_extents: Vec3(h.map(|v| T::lit(v) * s)),
        })
        .collect();
    let mut ee_link = Link::from_cylinders(vec![base]);
    ee_link.frames = vec![tool];
    ee_link.collision.extend(cuboids.iter().map(bounding_capsule));
    ee_link.cuboids = cuboids;
    links.push(ee_link);

    let limits = template.joints.iter().map(|j| (T::lit(j.lower), T::lit(j.upper))).collect();
    RobotModel::new(links, axes, limits)
}

/// Per-link choice of which candidate frame supplies the pose token.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameAssignment(pub Vec<usize>);

impl FrameAssignment {
    /// First candidate frame for every link.
    pub fn canonical<T: Real>(robot: &RobotModel<T>) -> Self {
        Self(vec![0; robot.token_count()])
    }

    pub fn validate<T: Real>(&self, robot: &RobotModel<T>) -> Result<()> {
        if self.0.len() != robot.token_count() {
            return Err(Error::DimensionMismatch { expected: robot.token_count(), got: self.0.len() });
        }
        for (i, (&k, l)) in self.0.iter().zip(&robot.links).enumerate() {
            if k >= l.frames.len() {
                return Err(Error::InvalidArgument(format!(
                    "frame index {k} out of range for link {i} with {} frames",
                    l.frames.len()
                )));
            }
        }
        Ok(())
    }
}

/// Number of distinct frame assignments of `robot`.
pub fn assignment_count<T: Real>(robot: &RobotModel<T>) -> usize {
    robot.links.iter().map(|l| l.frames.len()).product()
}

/// Uniform choice of frame per link.
pub fn sample_frames<T: Real>(robot: &RobotModel<T>, seed: u64) -> FrameAssignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_frames_with(robot, &mut rng)
}

pub fn sample_frames_with<T: Real, R: Rng + ?Sized>(robot: &RobotModel<T>, rng: &mut R) -> FrameAssignment {
    FrameAssignment(robot.links.iter().map(|l| rng.random_range(0..l.frames.len())).collect())
}
