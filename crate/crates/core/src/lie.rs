//! SO(3) / SE(3) primitives used by every pose computation in the crate.
//!
//! Rotations are stored as unit quaternions `(w, x, y, z)` and converted to
//! matrices on demand. Tangent vectors are ordered `(rho, phi)`: translational
//! part first, rotational part second. Pose updates use left perturbation,
//! `T <- exp(xi) * T`.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Quaternion, Vector3, Vector6};

use crate::error::{Error, Result};

/// Below this rotation angle the closed forms switch to Taylor expansions.
const SMALL_ANGLE: f64 = 1e-6;

/// Largest rotation angle accepted by [`log`].
pub const MAX_LOG_ANGLE: f64 = std::f64::consts::PI - 1e-3;

/// Skew-symmetric matrix such that `hat(v) * w == v.cross(&w)`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`] (reads the antisymmetric part).
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// A 3D rotation stored as a unit quaternion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    q: Quaternion<f64>,
}

impl Rotation {
    pub fn identity() -> Self {
        Self { q: Quaternion::new(1.0, 0.0, 0.0, 0.0) }
    }

    /// Builds a rotation from (possibly unnormalized) quaternion components.
    ///
    /// The zero quaternion maps to the identity.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self::normalized(Quaternion::new(w, x, y, z))
    }

    /// Like [`Rotation::from_wxyz`], but components already of unit norm
    /// (to 1e-12) are kept bit-for-bit, so stored rotations reload exactly.
    pub fn from_stored_wxyz(w: f64, x: f64, y: f64, z: f64) -> Self {
        let q = Quaternion::new(w, x, y, z);
        if (q.norm() - 1.0).abs() > 1e-12 {
            return Self::normalized(q);
        }
        Self { q: if w < 0.0 { -q } else { q } }
    }

    fn normalized(q: Quaternion<f64>) -> Self {
        let n = q.norm();
        if n == 0.0 || !n.is_finite() {
            return Self::identity();
        }
        let mut q = q / n;
        // Canonical hemisphere keeps log() continuous.
        if q.w < 0.0 {
            q = -q;
        }
        Self { q }
    }

    /// Rotation by `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        Self::exp(&(axis * (angle / n)))
    }

    /// Exponential map of so(3).
    pub fn exp(phi: &Vector3<f64>) -> Self {
        let theta = phi.norm();
        let (w, k) = if theta < SMALL_ANGLE {
            let t2 = theta * theta;
            // cos(t/2) and sin(t/2)/t to fourth order.
            (
                1.0 - t2 / 8.0 + t2 * t2 / 384.0,
                0.5 - t2 / 48.0 + t2 * t2 / 3840.0,
            )
        } else {
            let half = 0.5 * theta;
            (half.cos(), half.sin() / theta)
        };
        Self::normalized(Quaternion::new(w, k * phi.x, k * phi.y, k * phi.z))
    }

    /// Logarithm map, valid for angles below pi (the caller checks the bound).
    pub fn log(&self) -> Vector3<f64> {
        let v = self.q.imag();
        let n = v.norm();
        let w = self.q.w;
        let k = if n < 0.5 * SMALL_ANGLE {
            // 2 atan(n / w) / n expanded around n = 0.
            let r2 = (n / w) * (n / w);
            (2.0 / w) * (1.0 - r2 / 3.0 + r2 * r2 / 5.0)
        } else {
            2.0 * n.atan2(w) / n
        };
        v * k
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.q.imag().norm().atan2(self.q.w.abs())
    }

    pub fn quaternion(&self) -> Quaternion<f64> {
        self.q
    }

    /// Components in `(w, x, y, z)` order.
    pub fn wxyz(&self) -> [f64; 4] {
        [self.q.w, self.q.i, self.q.j, self.q.k]
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        quat_to_matrix(self.q.w, self.q.i, self.q.j, self.q.k)
    }

    /// Nearest rotation to an (approximately) orthonormal matrix.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        // Shepperd's method: pick the largest diagonal combination.
        let tr = m.trace();
        let q = if tr > m[(0, 0)] && tr > m[(1, 1)] && tr > m[(2, 2)] {
            let s = (1.0 + tr).sqrt() * 2.0;
            Quaternion::new(
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            Quaternion::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            Quaternion::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            Quaternion::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            )
        };
        Self::normalized(q)
    }

    pub fn inverse(&self) -> Self {
        Self { q: self.q.conjugate() }
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        // v' = v + 2w (u x v) + 2 u x (u x v)
        let u = self.q.imag();
        let uv = u.cross(v);
        v + (uv * self.q.w + u.cross(&uv)) * 2.0
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation::normalized(self.q * rhs.q)
    }
}

/// Rotation matrix of a unit quaternion given as `(w, x, y, z)`.
pub fn quat_to_matrix(w: f64, x: f64, y: f64, z: f64) -> Matrix3<f64> {
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// A tangent vector of SE(3): `rho` (translational, meters) then `phi`
/// (rotational, radians).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Twist {
    pub rho: Vector3<f64>,
    pub phi: Vector3<f64>,
}

impl Twist {
    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Self {
        Self { rho, phi }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            rho: Vector3::new(v[0], v[1], v[2]),
            phi: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::from_vector(&Vector6::from(a))
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.rho.x, self.rho.y, self.rho.z, self.phi.x, self.phi.y, self.phi.z)
    }

    pub fn is_finite(&self) -> bool {
        self.rho.iter().chain(self.phi.iter()).all(|x| x.is_finite())
    }
}

impl std::ops::Add for Twist {
    type Output = Twist;
    fn add(self, rhs: Twist) -> Twist {
        Twist::new(self.rho + rhs.rho, self.phi + rhs.phi)
    }
}

impl std::ops::AddAssign for Twist {
    fn add_assign(&mut self, rhs: Twist) {
        self.rho += rhs.rho;
        self.phi += rhs.phi;
    }
}

impl std::ops::Mul<f64> for Twist {
    type Output = Twist;
    fn mul(self, s: f64) -> Twist {
        Twist::new(self.rho * s, self.phi * s)
    }
}

/// Left Jacobian of SO(3); maps `rho` to the translation of `exp(xi)`.
fn left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let t2 = theta * theta;
    let (a, b) = if theta < SMALL_ANGLE {
        (
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        )
    } else {
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    let k = hat(phi);
    Matrix3::identity() + k * a + k * k * b
}

fn left_jacobian_inverse(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let t2 = theta * theta;
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        1.0 / t2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    let k = hat(phi);
    Matrix3::identity() - k * 0.5 + k * k * c
}

/// A rigid transform `x -> R x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.inverse();
        Self::new(r, -r.rotate(&self.translation))
    }

    /// Applies the transform to a point.
    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(x) + self.translation
    }

    /// Position of the frame origin expressed in the source frame,
    /// `-R^T t`. For a world-to-camera pose this is the camera center.
    pub fn center(&self) -> Vector3<f64> {
        -self.rotation.inverse().rotate(&self.translation)
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn matrix3x4(&self) -> Matrix3x4<f64> {
        self.matrix().fixed_view::<3, 4>(0, 0).into_owned()
    }

    pub fn from_matrix3x4(m: &Matrix3x4<f64>) -> Self {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        Self::new(Rotation::from_matrix(&r), m.column(3).into_owned())
    }

    /// Row-major `[R | t]` as 12 numbers (KITTI odometry layout).
    pub fn to_row_major(&self) -> [f64; 12] {
        let m = self.matrix3x4();
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    pub fn from_row_major(v: &[f64; 12]) -> Self {
        Self::from_matrix3x4(&Matrix3x4::from_row_slice(v))
    }

    /// One line of 12 whitespace-separated numbers.
    pub fn to_kitti_line(&self) -> String {
        self.to_row_major()
            .iter()
            .map(|x| format!("{x:.17e}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn from_kitti_line(line: &str) -> Result<Self> {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("pose line: {e}")))?;
        let arr: [f64; 12] = vals.try_into().map_err(|v: Vec<f64>| {
            Error::Parse(format!("pose line needs 12 numbers, got {}", v.len()))
        })?;
        if arr.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse("pose line has non-finite values".into()));
        }
        Ok(Self::from_row_major(&arr))
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        Pose::new(
            self.rotation * rhs.rotation,
            self.rotation.rotate(&rhs.translation) + self.translation,
        )
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.translation;
        let [w, x, y, z] = self.rotation.wxyz();
        write!(
            f,
            "Pose(t: [{:.4}, {:.4}, {:.4}], q: [{:.4}, {:.4}, {:.4}, {:.4}])",
            t.x, t.y, t.z, w, x, y, z
        )
    }
}

/// Exponential map of se(3).
pub fn exp(xi: &Twist) -> Pose {
    Pose::new(Rotation::exp(&xi.phi), left_jacobian(&xi.phi) * xi.rho)
}

/// Logarithm map of SE(3). Fails for rotation angles at or beyond
/// [`MAX_LOG_ANGLE`], where the rotational part is ill-conditioned.
pub fn log(p: &Pose) -> Result<Twist> {
    let angle = p.rotation.angle();
    if angle >= MAX_LOG_ANGLE {
        return Err(Error::AngleNearPi(angle));
    }
    let phi = p.rotation.log();
    Ok(Twist::new(left_jacobian_inverse(&phi) * p.translation, phi))
}

/// `x -> R x + t`.
pub fn apply_pose(p: &Pose, x: &Vector3<f64>) -> Vector3<f64> {
    p.apply(x)
}

/// Geodesic angle between two rotations, in radians.
pub fn rotation_distance(a: &Rotation, b: &Rotation) -> f64 {
    (a.inverse() * *b).angle()
}
