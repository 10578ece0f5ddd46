//! SE(3) poses, the 9D pose representation and rotation distances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

/// Rigid transform stored as rotation block and translation; the homogeneous
/// bottom row is implicit and always `(0, 0, 0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Pose<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Pose<T> {
    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn from_parts(rotation: Mat3<T>, translation: Vec3<T>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vec3<T>) -> Self {
        Self { rotation: Mat3::identity(), translation }
    }

    pub fn from_rotation(rotation: Mat3<T>) -> Self {
        Self { rotation, translation: Vec3::zeros() }
    }

    /// Builds a pose from a row-major homogeneous matrix, validating the
    /// rotation block and bottom row.
    pub fn from_matrix(m: &[[T; 4]; 4]) -> Result<Self> {
        let (z, o) = (T::zero(), T::one());
        if m[3] != [z, z, z, o] {
            return Err(Error::InvalidPose("bottom row must be (0, 0, 0, 1)".into()));
        }
        let rotation = Mat3([
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ]);
        let pose = Self { rotation, translation: Vec3([m[0][3], m[1][3], m[2][3]]) };
        if !pose.is_valid(T::lit(1e-9)) {
            return Err(Error::InvalidPose("rotation block is not orthonormal with det +1".into()));
        }
        Ok(pose)
    }

    /// Row-major homogeneous matrix.
    pub fn to_matrix(&self) -> [[T; 4]; 4] {
        let r = &self.rotation.0;
        let t = &self.translation.0;
        let (z, o) = (T::zero(), T::one());
        [
            [r[0][0], r[0][1], r[0][2], t[0]],
            [r[1][0], r[1][1], r[1][2], t[1]],
            [r[2][0], r[2][1], r[2][2], t[2]],
            [z, z, z, o],
        ]
    }

    /// `self * other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn transform_point(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation * *p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3<T>) -> Vec3<T> {
        self.rotation * *v
    }

    /// `RᵀR = I` and `det R = 1` within `tol`, all entries finite.
    pub fn is_valid(&self, tol: T) -> bool {
        let finite = self.rotation.0.iter().flatten().chain(self.translation.0.iter()).all(|v| v.is_finite());
        if !finite {
            return false;
        }
        let rtr = self.rotation.transpose() * self.rotation;
        let id = Mat3::<T>::identity();
        let ortho = (0..3).all(|i| (0..3).all(|j| (rtr.0[i][j] - id.0[i][j]).abs() <= tol));
        ortho && (self.rotation.determinant() - T::one()).abs() <= tol
    }

    /// Frobenius distance between the homogeneous matrices.
    pub fn frobenius_distance(&self, o: &Self) -> T {
        let r = self.rotation.frobenius_distance(&o.rotation);
        let t = (self.translation - o.translation).norm();
        (r * r + t * t).sqrt()
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        Pose { rotation: self.rotation.cast(), translation: self.translation.cast() }
    }

    pub fn to_9d(&self) -> Pose9D<T> {
        to_9d(self)
    }

    pub fn quaternion(&self) -> Quaternion<T> {
        Quaternion::from_rotation(&self.rotation)
    }
}

/// Translation plus the first two rotation columns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Pose9D<T> {
    pub o: Vec3<T>,
    pub x: Vec3<T>,
    pub y: Vec3<T>,
}

impl<T: Real> Pose9D<T> {
    /// The all-zero vector used for masked tokens.
    pub fn zeros() -> Self {
        Self { o: Vec3::zeros(), x: Vec3::zeros(), y: Vec3::zeros() }
    }

    pub fn from_array(a: [T; 9]) -> Self {
        Self { o: Vec3::new(a[0], a[1], a[2]), x: Vec3::new(a[3], a[4], a[5]), y: Vec3::new(a[6], a[7], a[8]) }
    }

    pub fn to_array(&self) -> [T; 9] {
        let (o, x, y) = (self.o.0, self.x.0, self.y.0);
        [o[0], o[1], o[2], x[0], x[1], x[2], y[0], y[1], y[2]]
    }

    pub fn from_slice(v: &[T]) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::DimensionMismatch { expected: 9, got: v.len() });
        }
        Ok(Self {
            o: Vec3([v[0], v[1], v[2]]),
            x: Vec3([v[3], v[4], v[5]]),
            y: Vec3([v[6], v[7], v[8]]),
        })
    }

    pub fn squared_distance(&self, o: &Self) -> T {
        (self.o - o.o).norm_squared() + (self.x - o.x).norm_squared() + (self.y - o.y).norm_squared()
    }
}

pub fn to_9d<T: Real>(p: &Pose<T>) -> Pose9D<T> {
    Pose9D { o: p.translation, x: p.rotation.column(0), y: p.rotation.column(1) }
}

/// Gram–Schmidt reconstruction of a pose from its 9D representation.
pub fn from_9d<T: Real>(r: &Pose9D<T>) -> Result<Pose<T>> {
    let eps = T::lit(1e-8);
    let xn = r.x.norm();
    let yn = r.y.norm();
    if !(xn >= eps) || !(yn >= eps) {
        return Err(Error::DegenerateRotation("rotation column has near-zero norm"));
    }
    let x = r.x.scale(T::one() / xn);
    let yhat = r.y.scale(T::one() / yn);
    if x.dot(&yhat).abs() > T::one() - eps {
        return Err(Error::DegenerateRotation("rotation columns are parallel"));
    }
    let y = (r.y - x.scale(x.dot(&r.y))).normalized();
    let z = x.cross(&y);
    Ok(Pose { rotation: Mat3::from_columns(x, y, z), translation: r.o })
}

/// Unit quaternion `(w, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Quaternion<T>(pub [T; 4]);

impl<T: Real> Quaternion<T> {
    pub fn identity() -> Self {
        Self([T::one(), T::zero(), T::zero(), T::zero()])
    }

    pub fn from_axis_angle(axis: &Vec3<T>, angle: T) -> Self {
        let a = axis.normalized();
        let (s, c) = (angle * T::half()).sin_cos();
        Self([c, a[0] * s, a[1] * s, a[2] * s])
    }

    /// Shepperd's method.
    pub fn from_rotation(r: &Mat3<T>) -> Self {
        let m = &r.0;
        let one = T::one();
        let quarter = T::lit(0.25);
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace > T::zero() {
            let s = (trace + one).sqrt() * T::two();
            [quarter * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s]
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (one + m[0][0] - m[1][1] - m[2][2]).sqrt() * T::two();
            [(m[2][1] - m[1][2]) / s, quarter * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s]
        } else if m[1][1] > m[2][2] {
            let s = (one + m[1][1] - m[0][0] - m[2][2]).sqrt() * T::two();
            [(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, quarter * s, (m[1][2] + m[2][1]) / s]
        } else {
            let s = (one + m[2][2] - m[0][0] - m[1][1]).sqrt() * T::two();
            [(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, quarter * s]
        };
        Self(q)
    }

    pub fn to_rotation(&self) -> Mat3<T> {
        let [w, x, y, z] = self.normalized().unwrap_or_else(|_| Self::identity()).0;
        let one = T::one();
        let two = T::two();
        Mat3([
            [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
            [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
            [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
        ])
    }

    pub fn norm(&self) -> T {
        self.0.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > T::lit(1e-12)) {
            return Err(Error::ZeroQuaternion);
        }
        Ok(Self(self.0.map(|v| v / n)))
    }

    pub fn neg(&self) -> Self {
        Self(self.0.map(|v| -v))
    }

    pub fn conjugate(&self) -> Self {
        let [w, x, y, z] = self.0;
        Self([w, -x, -y, -z])
    }

    pub fn mul(&self, o: &Self) -> Self {
        let [a1, b1, c1, d1] = self.0;
        let [a2, b2, c2, d2] = o.0;
        Self([
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ])
    }
}

/// Rotation angle (radians, in `[0, π]`) between two orientations, invariant to
/// the sign of either quaternion.
pub fn quaternion_distance<T: Real>(q1: &Quaternion<T>, q2: &Quaternion<T>) -> Result<T> {
    let a = q1.normalized()?;
    let b = q2.normalized()?;
    let dot: T = a.0.iter().zip(&b.0).map(|(x, y)| *x * *y).sum();
    let s = if dot < T::zero() { -T::one() } else { T::one() };
    let mut diff = T::zero();
    let mut sum = T::zero();
    for (x, y) in a.0.iter().zip(&b.0) {
        diff = diff + (*x - s * *y).powi(2);
        sum = sum + (*x + s * *y).powi(2);
    }
    // half-angle between the 4-vectors, doubled twice
    Ok(T::lit(4.0) * diff.sqrt().atan2(sum.sqrt()))
}

/// Angle between two rotation matrices.
pub fn rotation_angle_between<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> T {
    quaternion_distance(&Quaternion::from_rotation(a), &Quaternion::from_rotation(b))
        .expect("rotation matrices give unit quaternions")
}

/// Euclidean norm of the difference of the 9D representations.
pub fn pose_goal_error<T: Real>(ee: &Pose<T>, goal: &Pose<T>) -> T {
    to_9d(ee).squared_distance(&to_9d(goal)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rot(axis: [f64; 3], angle: f64) -> Mat3<f64> {
        Mat3::from_axis_angle(&Vec3(axis).normalized(), angle)
    }

    #[test]
    fn identity_to_9d() {
        let r = to_9d(&Pose::<f64>::identity());
        assert_eq!(r.o, Vec3::zeros());
        assert_eq!(r.x, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(r.y, Vec3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn orthonormal_columns_are_a_fixed_point() {
        let r = Pose9D { o: Vec3::new(0.1, 0.2, 0.3), x: Vec3::new(0.0, 1.0, 0.0), y: Vec3::new(0.0, 0.0, 1.0) };
        let p = from_9d(&r).unwrap();
        assert_eq!(p.rotation.column(0), r.x);
        assert_eq!(p.rotation.column(1), r.y);
        assert_eq!(p.rotation.column(2), Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let zero = Pose9D { o: Vec3::zeros(), x: Vec3::zeros(), y: Vec3::new(0.0, 1.0, 0.0) };
        assert!(matches!(from_9d(&zero), Err(Error::DegenerateRotation(_))));
        let parallel = Pose9D { o: Vec3::zeros(), x: Vec3::new(1.0, 0.0, 0.0), y: Vec3::new(2.0, 0.0, 0.0) };
        assert!(matches!(from_9d(&parallel), Err(Error::DegenerateRotation(_))));
    }

    #[test]
    fn quaternion_distance_examples() {
        let q = Quaternion::<f64>::from_axis_angle(&Vec3::new(1.0, 2.0, 3.0), 0.7);
        assert_eq!(quaternion_distance(&q, &q).unwrap(), 0.0);
        assert!(quaternion_distance(&q, &q.neg()).unwrap().abs() < 1e-15);
        let z90 = Quaternion::from_axis_angle(&Vec3::basis(2), FRAC_PI_2);
        let d = quaternion_distance(&Quaternion::identity(), &z90).unwrap();
        assert!((d - FRAC_PI_2).abs() < 1e-15);
        assert!(matches!(quaternion_distance(&Quaternion([0.0; 4]), &q), Err(Error::ZeroQuaternion)));
    }

    #[test]
    fn pose_goal_error_examples() {
        let g = Pose::from_parts(rot([0.3, -0.2, 1.0], 1.1), Vec3::new(0.4, 0.1, 0.5));
        assert_eq!(pose_goal_error(&g, &g), 0.0);
        let shifted = Pose::from_parts(g.rotation, g.translation + Vec3::new(0.03, 0.0, -0.04));
        assert!((pose_goal_error(&shifted, &g) - 0.05).abs() < 1e-15);
        let flipped = Pose::from_rotation(rot([0.0, 0.0, 1.0], PI));
        let e = pose_goal_error(&flipped, &Pose::identity());
        assert!((e - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn matrix_round_trip_and_validation() {
        let p = Pose::from_parts(rot([1.0, 1.0, 0.0], 0.4), Vec3::new(1.0, 2.0, 3.0));
        let m = p.to_matrix();
        assert_eq!(m[3], [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(Pose::from_matrix(&m).unwrap(), p);
        let mut bad = m;
        bad[0][0] = 2.0;
        assert!(Pose::from_matrix(&bad).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let p = Pose::<f32>::from_parts(Mat3::from_axis_angle(&Vec3::basis(1), 0.3f32), Vec3::new(1.0, 0.0, 0.0));
        let back = from_9d(&to_9d(&p)).unwrap();
        assert!(back.frobenius_distance(&p) < 1e-6);
    }

    fn arb_quat() -> impl Strategy<Value = Quaternion<f64>> {
        prop::array::uniform4(-1.0f64..1.0)
            .prop_filter("non-degenerate", |q| q.iter().map(|v| v * v).sum::<f64>() > 1e-3)
            .prop_map(|q| Quaternion(q).normalized().unwrap())
    }

    proptest! {
        #[test]
        fn from_9d_is_orthonormal(o in prop::array::uniform3(-2.0f64..2.0),
                                  x in prop::array::uniform3(-1.0f64..1.0),
                                  y in prop::array::uniform3(-1.0f64..1.0)) {
            let r = Pose9D { o: Vec3(o), x: Vec3(x), y: Vec3(y) };
            if let Ok(p) = from_9d(&r) {
                prop_assert!(p.is_valid(1e-9));
                let again = to_9d(&from_9d(&to_9d(&p)).unwrap());
                prop_assert!(again.squared_distance(&to_9d(&p)).sqrt() < 1e-12);
            }
        }

        #[test]
        fn quaternion_distance_is_a_metric(a in arb_quat(), b in arb_quat(), c in arb_quat()) {
            let ab = quaternion_distance(&a, &b).unwrap();
            let ba = quaternion_distance(&b, &a).unwrap();
            let bc = quaternion_distance(&b, &c).unwrap();
            let ac = quaternion_distance(&a, &c).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ac <= ab + bc + 1e-9);
            prop_assert!((quaternion_distance(&a, &b.neg()).unwrap() - ab).abs() < 1e-12);
        }

        #[test]
        fn quaternion_matrix_round_trip(q in arb_quat()) {
            let back = Quaternion::from_rotation(&q.to_rotation());
            prop_assert!(quaternion_distance(&q, &back).unwrap() < 1e-7);
        }
    }
}
