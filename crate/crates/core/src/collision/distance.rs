//! Closed-form and convex-search distance queries between primitives.

use crate::linalg::Vec3;
use crate::scalar::Real;

/// Signed distance from a point to an axis-aligned box (negative inside).
pub fn point_box_signed_distance<T: Real>(p: &Vec3<T>, center: &Vec3<T>, half: &Vec3<T>) -> T {
    let q = (*p - *center).map(|v| v.abs()) - *half;
    let outside = q.map(|v| v.max(T::zero())).norm();
    let inside = q.x().max(q.y()).max(q.z()).min(T::zero());
    outside + inside
}

pub fn closest_point_on_segment<T: Real>(p: &Vec3<T>, a: &Vec3<T>, b: &Vec3<T>) -> (T, Vec3<T>) {
    let ab = *b - *a;
    let len2 = ab.norm_squared();
    if len2 <= T::zero() {
        return (T::zero(), *a);
    }
    let t = ((*p - *a).dot(&ab) / len2).max(T::zero()).min(T::one());
    (t, *a + ab.scale(t))
}

pub fn point_segment_distance<T: Real>(p: &Vec3<T>, a: &Vec3<T>, b: &Vec3<T>) -> T {
    let (_, c) = closest_point_on_segment(p, a, b);
    (*p - c).norm()
}

/// Minimum signed distance from a segment to a box. The box's signed distance
/// field is convex, so its restriction to the segment is a convex function of
/// the segment parameter and golden-section search finds the minimum.
pub fn segment_box_signed_distance<T: Real>(a: &Vec3<T>, b: &Vec3<T>, center: &Vec3<T>, half: &Vec3<T>) -> T {
    let f = |t: T| point_box_signed_distance(&(*a + (*b - *a).scale(t)), center, half);
    if (*b - *a).norm_squared() <= T::zero() {
        return f(T::zero());
    }
    let inv_phi = T::lit(0.618_033_988_749_894_8);
    let (mut lo, mut hi) = (T::zero(), T::one());
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let tol = T::epsilon().max(T::lit(1e-10));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
        if hi - lo <= tol {
            break;
        }
    }
    f1.min(f2).min(f(T::zero())).min(f(T::one()))
}

/// Distance between segments `p1q1` and `p2q2`.
pub fn segment_segment_distance<T: Real>(p1: &Vec3<T>, q1: &Vec3<T>, p2: &Vec3<T>, q2: &Vec3<T>) -> T {
    let zero = T::zero();
    let one = T::one();
    let eps = T::lit(1e-14);
    let d1 = *q1 - *p1;
    let d2 = *q2 - *p2;
    let r = *p1 - *p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let clamp = |v: T| v.max(zero).min(one);
    let (s, t);
    if a <= eps && e <= eps {
        return r.norm();
    }
    if a <= eps {
        s = zero;
        t = clamp(f / e);
    } else {
        let c = d1.dot(&r);
        if e <= eps {
            t = zero;
            s = clamp(-c / a);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let s0 = if denom > eps * a * e { clamp((b * f - c * e) / denom) } else { zero };
            let t0 = (b * s0 + f) / e;
            if t0 < zero {
                t = zero;
                s = clamp(-c / a);
            } else if t0 > one {
                t = one;
                s = clamp((b - c) / a);
            } else {
                t = t0;
                s = s0;
            }
        }
    }
    let c1 = *p1 + d1.scale(s);
    let c2 = *p2 + d2.scale(t);
    (c1 - c2).norm()
}

/// Axis-aligned boxes `(min, max)` overlap after growing the first by `margin`.
pub fn aabb_overlap<T: Real>(a: &(Vec3<T>, Vec3<T>), b: &(Vec3<T>, Vec3<T>), margin: T) -> bool {
    (0..3).all(|i| a.0[i] - margin <= b.1[i] && b.0[i] <= a.1[i] + margin)
}
