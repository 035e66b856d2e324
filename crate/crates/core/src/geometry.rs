//! Oriented boxes: exact signed distances (generic over a scalar so the same code
//! yields derivatives through [`Dual`]) and separating-axis overlap tests.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::se3::Vec3;

/// Number of tangent directions carried by [`Dual`]: three position and four raw
/// quaternion coordinates.
pub const TANGENTS: usize = 7;

/// Scalar abstraction shared by the plain `f64` path and the forward-mode path.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn re(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;

    fn abs(self) -> Self {
        if self.re() < 0.0 {
            -self
        } else {
            self
        }
    }

    fn max(self, other: Self) -> Self {
        if other.re() > self.re() {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other.re() < self.re() {
            other
        } else {
            self
        }
    }

    fn sigmoid(self) -> Self {
        if self.re() >= 0.0 {
            let e = (-self).exp();
            Self::cst(1.0) / (e + 1.0)
        } else {
            let e = self.exp();
            e / (e + 1.0)
        }
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    fn softplus(self) -> Self {
        self.max(Self::cst(0.0)) + ((-self.abs()).exp() + 1.0).ln()
    }
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn re(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
}

/// Forward-mode dual number with [`TANGENTS`] directional derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: [f64; TANGENTS],
}

impl Dual {
    pub fn constant(re: f64) -> Self {
        Dual {
            re,
            eps: [0.0; TANGENTS],
        }
    }

    /// The `index`-th independent variable with value `re`.
    pub fn variable(re: f64, index: usize) -> Self {
        let mut eps = [0.0; TANGENTS];
        eps[index] = 1.0;
        Dual { re, eps }
    }

    fn chain(self, value: f64, slope: f64) -> Self {
        Dual {
            re: value,
            eps: self.eps.map(|e| e * slope),
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        let mut eps = self.eps;
        for (e, b) in eps.iter_mut().zip(o.eps) {
            *e += b;
        }
        Dual {
            re: self.re + o.re,
            eps,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        let mut eps = self.eps;
        for (e, b) in eps.iter_mut().zip(o.eps) {
            *e -= b;
        }
        Dual {
            re: self.re - o.re,
            eps,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        let mut eps = [0.0; TANGENTS];
        for (i, e) in eps.iter_mut().enumerate() {
            *e = self.eps[i] * o.re + self.re * o.eps[i];
        }
        Dual {
            re: self.re * o.re,
            eps,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.re;
        let re = self.re * inv;
        let mut eps = [0.0; TANGENTS];
        for (i, e) in eps.iter_mut().enumerate() {
            *e = (self.eps[i] - re * o.eps[i]) * inv;
        }
        Dual { re, eps }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            re: -self.re,
            eps: self.eps.map(|e| -e),
        }
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, o: f64) -> Dual {
        Dual {
            re: self.re + o,
            eps: self.eps,
        }
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(self, o: f64) -> Dual {
        Dual {
            re: self.re - o,
            eps: self.eps,
        }
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, o: f64) -> Dual {
        Dual {
            re: self.re * o,
            eps: self.eps.map(|e| e * o),
        }
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    fn div(self, o: f64) -> Dual {
        self * (1.0 / o)
    }
}

impl Real for Dual {
    fn cst(v: f64) -> Self {
        Dual::constant(v)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), 1.0 / self.re)
    }
}

/// Minimal 3-vector over a [`Real`] scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct V3<T>(pub [T; 3]);

impl<T: Real> V3<T> {
    pub fn from_f64(v: &Vec3) -> Self {
        V3([T::cst(v.x), T::cst(v.y), T::cst(v.z)])
    }

    pub fn re(&self) -> Vec3 {
        Vec3::new(self.0[0].re(), self.0[1].re(), self.0[2].re())
    }

    pub fn add(&self, o: &V3<T>) -> V3<T> {
        V3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }

    pub fn sub(&self, o: &V3<T>) -> V3<T> {
        V3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }

    pub fn sub_f64(&self, o: &Vec3) -> V3<T> {
        V3([self.0[0] - o.x, self.0[1] - o.y, self.0[2] - o.z])
    }

    pub fn scale(&self, s: T) -> V3<T> {
        V3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    pub fn dot(&self, o: &V3<T>) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    /// `m * v` for a constant matrix.
    pub fn mat_mul(m: &Matrix3<f64>, v: &V3<T>) -> V3<T> {
        let row = |r: usize| v.0[0] * m[(r, 0)] + v.0[1] * m[(r, 1)] + v.0[2] * m[(r, 2)];
        V3([row(0), row(1), row(2)])
    }

    /// `m^T * v` for a constant matrix.
    pub fn mat_tr_mul(m: &Matrix3<f64>, v: &V3<T>) -> V3<T> {
        let col = |c: usize| v.0[0] * m[(0, c)] + v.0[1] * m[(1, c)] + v.0[2] * m[(2, c)];
        V3([col(0), col(1), col(2)])
    }
}

/// Rotation matrix (row-major `[[T; 3]; 3]`) of a raw, possibly non-unit quaternion
/// `(w, x, y, z)`; the quaternion is normalized first.
pub fn rotation_from_raw<T: Real>(q: [T; 4]) -> [[T; 3]; 3] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = q.map(|c| c / n);
    let one = T::cst(1.0);
    let two = 2.0;
    [
        [
            one - (y * y + z * z) * two,
            (x * y - w * z) * two,
            (x * z + w * y) * two,
        ],
        [
            (x * y + w * z) * two,
            one - (x * x + z * z) * two,
            (y * z - w * x) * two,
        ],
        [
            (x * z - w * y) * two,
            (y * z + w * x) * two,
            one - (x * x + y * y) * two,
        ],
    ]
}

pub fn rot_apply<T: Real>(r: &[[T; 3]; 3], v: &V3<T>) -> V3<T> {
    V3([r[0][0] * v.0[0] + r[0][1] * v.0[1] + r[0][2] * v.0[2],
        r[1][0] * v.0[0] + r[1][1] * v.0[1] + r[1][2] * v.0[2],
        r[2][0] * v.0[0] + r[2][1] * v.0[1] + r[2][2] * v.0[2]])
}

pub fn rot_apply_tr<T: Real>(r: &[[T; 3]; 3], v: &V3<T>) -> V3<T> {
    V3([r[0][0] * v.0[0] + r[1][0] * v.0[1] + r[2][0] * v.0[2],
        r[0][1] * v.0[0] + r[1][1] * v.0[1] + r[2][1] * v.0[2],
        r[0][2] * v.0[0] + r[1][2] * v.0[1] + r[2][2] * v.0[2]])
}

/// Oriented box: world center, rotation (columns are the box axes) and half extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cuboid {
    pub center: Vec3,
    pub rotation: Matrix3<f64>,
    pub half: Vec3,
}

impl Cuboid {
    pub fn new(center: Vec3, orientation: &UnitQuaternion<f64>, half: Vec3) -> Self {
        Cuboid {
            center,
            rotation: *orientation.to_rotation_matrix().matrix(),
            half,
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        self.half.norm()
    }

    /// Exact signed distance and outward unit normal (gradient of the distance) at a
    /// world point.
    pub fn sdf_normal<T: Real>(&self, point: &V3<T>) -> (T, V3<T>) {
        let local = V3::mat_tr_mul(&self.rotation, &point.sub_f64(&self.center));
        let zero = T::cst(0.0);
        let q: [T; 3] = std::array::from_fn(|i| local.0[i].abs() - self.half[i]);
        let sign = |i: usize| if local.0[i].re() < 0.0 { -1.0 } else { 1.0 };
        let outside = q.iter().any(|c| c.re() > 0.0);
        let (dist, n_local) = if outside {
            let clamped: [T; 3] = std::array::from_fn(|i| q[i].max(zero));
            let len = (clamped[0] * clamped[0] + clamped[1] * clamped[1] + clamped[2] * clamped[2]).sqrt();
            let n = V3(std::array::from_fn(|i| clamped[i] * sign(i) / len));
            (len, n)
        } else {
            let mut k = 0;
            for i in 1..3 {
                if q[i].re() > q[k].re() {
                    k = i;
                }
            }
            let mut n = [zero; 3];
            n[k] = T::cst(sign(k));
            (q[k], V3(n))
        };
        (dist, V3::mat_mul(&self.rotation, &n_local))
    }

    /// Outward unit normal that varies smoothly everywhere, including across the
    /// face/edge region borders and the interior medial planes where the exact normal
    /// kinks or jumps. It agrees with the exact normal to within `~e^(-d/s)` once the
    /// point is farther than a few `s` from those borders.
    pub fn smooth_normal<T: Real>(&self, point: &V3<T>, s: f64) -> V3<T> {
        let local = V3::mat_tr_mul(&self.rotation, &point.sub_f64(&self.center));
        let n: [T; 3] = std::array::from_fn(|i| {
            let l = local.0[i];
            ((l - self.half[i]) / s).softplus() - ((-l - self.half[i]) / s).softplus()
        });
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        V3::mat_mul(&self.rotation, &V3(n.map(|c| c / len)))
    }

    pub fn sdf(&self, point: &Vec3) -> f64 {
        self.sdf_normal(&V3::<f64>::from_f64(point)).0
    }

    fn axes(&self) -> [Vec3; 3] {
        [
            self.rotation.column(0).into_owned(),
            self.rotation.column(1).into_owned(),
            self.rotation.column(2).into_owned(),
        ]
    }

    fn projected_radius(&self, axis: &Vec3) -> f64 {
        let a = self.axes();
        (0..3).map(|i| self.half[i] * a[i].dot(axis).abs()).sum()
    }

    /// Penetration depth along the best separating axis; `<= 0` means the boxes are
    /// disjoint (or touching).
    pub fn penetration(&self, other: &Cuboid) -> f64 {
        let d = other.center - self.center;
        if d.norm() > self.bounding_radius() + other.bounding_radius() {
            return -1.0;
        }
        let a = self.axes();
        let b = other.axes();
        let mut axes: Vec<Vector3<f64>> = Vec::with_capacity(15);
        axes.extend_from_slice(&a);
        axes.extend_from_slice(&b);
        for ai in &a {
            for bj in &b {
                let c = ai.cross(bj);
                let n = c.norm();
                if n > 1e-9 {
                    axes.push(c / n);
                }
            }
        }
        let mut depth = f64::INFINITY;
        for axis in &axes {
            let overlap =
                self.projected_radius(axis) + other.projected_radius(axis) - d.dot(axis).abs();
            if overlap < depth {
                depth = overlap;
            }
            if depth <= 0.0 {
                return depth;
            }
        }
        depth
    }

    pub fn intersects(&self, other: &Cuboid) -> bool {
        self.penetration(other) > 1e-9
    }
}
