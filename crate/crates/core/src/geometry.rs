//! Small 3-vector type and ray intersection against faces.

use core::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Any unit vector perpendicular to `self` (which must be non-zero).
    pub fn any_perpendicular(self) -> Vec3 {
        let a = self.normalized();
        let helper = if a.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
        (helper - a * helper.dot(a)).normalized()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Orthonormal placement of a face in body coordinates.
///
/// For rectangles `center` is the face center, `u` runs along the width and
/// `v = normal × u` along the height. For cylinders `normal` is the axis
/// direction, `center` the middle of the axis and `u` the reference radial
/// direction of the zero angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub center: Vec3,
    pub normal: Vec3,
    pub u: Vec3,
    pub v: Vec3,
}

impl Frame {
    /// Builds a frame, orthogonalizing `width_axis` against `normal`.
    /// Falls back to an arbitrary perpendicular when no usable width axis is given.
    pub fn new(center: Vec3, normal: Vec3, width_axis: Option<Vec3>) -> Option<Frame> {
        if !center.is_finite() || !normal.is_finite() || normal.norm() < 1e-12 {
            return None;
        }
        let n = normal.normalized();
        let u = match width_axis {
            Some(w) if w.is_finite() => {
                let proj = w - n * w.dot(n);
                if proj.norm() < 1e-9 {
                    return None;
                }
                proj.normalized()
            }
            _ => n.any_perpendicular(),
        };
        let v = n.cross(u);
        Some(Frame {
            center,
            normal: n,
            u,
            v,
        })
    }

    pub fn to_world(&self, a: f64, b: f64) -> Vec3 {
        self.center + self.u * a + self.v * b
    }
}

/// Where a ray met a face, in face-local coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    /// Width coordinate in `[-w/2, w/2]` (rectangles) or angle in `[0, 2π)` (cylinders).
    pub a: f64,
    /// Height / axial coordinate in `[-h/2, h/2]`.
    pub b: f64,
    /// True when the ray arrived on the radiating side.
    pub front: bool,
}

/// Ray against a finite rectangle.
pub fn intersect_rect(frame: &Frame, width: f64, height: f64, origin: Vec3, dir: Vec3, t_min: f64) -> Option<Hit> {
    let denom = dir.dot(frame.normal);
    if denom.abs() < 1e-15 {
        return None;
    }
    let t = (frame.center - origin).dot(frame.normal) / denom;
    if t <= t_min {
        return None;
    }
    let p = origin + dir * t - frame.center;
    let a = p.dot(frame.u);
    let b = p.dot(frame.v);
    if a.abs() > 0.5 * width || b.abs() > 0.5 * height {
        return None;
    }
    Some(Hit {
        t,
        a,
        b,
        front: denom < 0.0,
    })
}

/// Ray against the lateral wall of a finite open cylinder.
pub fn intersect_cylinder(frame: &Frame, radius: f64, length: f64, origin: Vec3, dir: Vec3, t_min: f64) -> Option<Hit> {
    let axis = frame.normal;
    let oc = origin - frame.center;
    let d_perp = dir - axis * dir.dot(axis);
    let o_perp = oc - axis * oc.dot(axis);
    let qa = d_perp.dot(d_perp);
    if qa < 1e-30 {
        return None;
    }
    let qb = 2.0 * d_perp.dot(o_perp);
    let qc = o_perp.dot(o_perp) - radius * radius;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let sq = libm::sqrt(disc);
    for t in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
        if t <= t_min {
            continue;
        }
        let p = oc + dir * t;
        let b = p.dot(axis);
        if b.abs() > 0.5 * length {
            continue;
        }
        let radial = p - axis * b;
        let x = radial.dot(frame.u);
        let y = radial.dot(frame.v);
        let mut a = libm::atan2(y, x);
        if a < 0.0 {
            a += 2.0 * core::f64::consts::PI;
        }
        return Some(Hit {
            t,
            a,
            b,
            front: dir.dot(radial) < 0.0,
        });
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_hit_front_and_back() {
        let f = Frame::new(Vec3::new(0.0, 0.0, 1.0), Vec3::Z, Some(Vec3::X)).unwrap();
        let h = intersect_rect(&f, 1.0, 1.0, Vec3::new(0.1, 0.2, 3.0), -Vec3::Z, 0.0).unwrap();
        assert!(h.front);
        assert!((h.t - 2.0).abs() < 1e-12);
        assert!((h.a - 0.1).abs() < 1e-12 && (h.b - 0.2).abs() < 1e-12);
        let h = intersect_rect(&f, 1.0, 1.0, Vec3::new(0.1, 0.2, 0.0), Vec3::Z, 0.0).unwrap();
        assert!(!h.front);
        assert!(intersect_rect(&f, 1.0, 1.0, Vec3::new(0.6, 0.0, 0.0), Vec3::Z, 0.0).is_none());
    }

    #[test]
    fn cylinder_hit_from_outside() {
        let f = Frame::new(Vec3::default(), Vec3::Z, Some(Vec3::X)).unwrap();
        let h = intersect_cylinder(&f, 0.5, 2.0, Vec3::new(3.0, 0.0, 0.2), -Vec3::X, 0.0).unwrap();
        assert!(h.front);
        assert!((h.t - 2.5).abs() < 1e-12);
        assert!(h.a.abs() < 1e-12);
        assert!((h.b - 0.2).abs() < 1e-12);
        // axial miss
        assert!(intersect_cylinder(&f, 0.5, 2.0, Vec3::new(3.0, 0.0, 1.2), -Vec3::X, 0.0).is_none());
        // from the inside the wall is seen from its back
        let h = intersect_cylinder(&f, 0.5, 2.0, Vec3::default(), Vec3::Y, 0.0).unwrap();
        assert!(!h.front);
    }

    #[test]
    fn frame_is_right_handed() {
        let f = Frame::new(
            Vec3::default(),
            Vec3::new(0.0, 0.0, 2.0),
            Some(Vec3::new(1.0, 0.0, 0.3)),
        )
        .unwrap();
        assert!((f.u.cross(f.v).dot(f.normal) - 1.0).abs() < 1e-12);
        assert!(Frame::new(Vec3::default(), Vec3::Z, Some(Vec3::Z)).is_none());
    }
}
