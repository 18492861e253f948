use serde::{Deserialize, Serialize};

use super::linalg::{Mat3, Vec3};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Rotation encoded as `angle · axis`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Real")]
pub struct AxisAngle<T>(#[serde(with = "crate::serde_real::array3")] pub [T; 3]);

impl<T: Real> AxisAngle<T> {
    pub fn cast<U: Real>(&self) -> AxisAngle<U> {
        AxisAngle(self.0.map(Real::cast))
    }

    pub fn new(x: T, y: T, z: T) -> Self {
        AxisAngle([x, y, z])
    }

    pub fn zero() -> Self {
        AxisAngle([T::zero(); 3])
    }

    pub fn vector(&self) -> Vec3<T> {
        Vec3(self.0)
    }

    pub fn angle(&self) -> T {
        self.vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Wraps the rotation angle into `[0, 2π)` while keeping the axis.
    ///
    /// The represented rotation is unchanged.
    pub fn canonical(&self) -> Self {
        let theta = self.angle();
        let two_pi = T::TAU();
        if !theta.is_finite() || theta < two_pi {
            return *self;
        }
        let wrapped = theta % two_pi;
        let v = self.vector().scale(wrapped / theta);
        AxisAngle(v.0)
    }

    pub fn to_matrix(&self) -> Result<Mat3<T>> {
        rodrigues(self)
    }
}

/// Axis-angle exponential map `R = I + a·[v]× + b·[v]×²` with
/// `a = sin θ / θ` and `b = (1 − cos θ) / θ²`.
pub fn rodrigues<T: Real>(aa: &AxisAngle<T>) -> Result<Mat3<T>> {
    if !aa.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "axis-angle has non-finite component: {:?}",
            aa.0
        )));
    }
    Ok(rodrigues_unchecked(&aa.vector()))
}

pub(crate) fn rodrigues_unchecked<T: Real>(v: &Vec3<T>) -> Mat3<T> {
    let theta_sq = v.norm_squared();
    let c = coefficients(theta_sq);
    let k = v.hat();
    let k2 = k * k;
    Mat3::identity() + k.scale(c.a) + k2.scale(c.b)
}

/// Rotation matrix together with its partial derivatives with respect to
/// the three axis-angle components.
pub(crate) fn rodrigues_with_jacobian<T: Real>(v: &Vec3<T>) -> (Mat3<T>, [Mat3<T>; 3]) {
    let theta_sq = v.norm_squared();
    let c = coefficients(theta_sq);
    let k = v.hat();
    let k2 = k * k;
    let r = Mat3::identity() + k.scale(c.a) + k2.scale(c.b);

    let mut d = [Mat3::zero(); 3];
    for (i, di) in d.iter_mut().enumerate() {
        let ei = Vec3::<T>::unit(i).hat();
        let dk2 = ei * k + k * ei;
        *di = ei.scale(c.a)
            + dk2.scale(c.b)
            + k.scale(c.da_over_theta * v.0[i])
            + k2.scale(c.db_over_theta * v.0[i]);
    }
    (r, d)
}

struct Coefficients<T> {
    a: T,
    b: T,
    /// (da/dθ) / θ
    da_over_theta: T,
    /// (db/dθ) / θ
    db_over_theta: T,
}

fn coefficients<T: Real>(theta_sq: T) -> Coefficients<T> {
    // Below this angle the closed forms lose precision; the Taylor series
    // truncated after θ⁴ is accurate to machine precision there.
    let small = T::lit(1e-3);
    if theta_sq < small * small {
        let t2 = theta_sq;
        let t4 = t2 * t2;
        Coefficients {
            a: T::one() - t2 / T::lit(6.0) + t4 / T::lit(120.0),
            b: T::lit(0.5) - t2 / T::lit(24.0) + t4 / T::lit(720.0),
            da_over_theta: -T::one() / T::lit(3.0) + t2 / T::lit(30.0) - t4 / T::lit(840.0),
            db_over_theta: -T::one() / T::lit(12.0) + t2 / T::lit(180.0) - t4 / T::lit(6720.0),
        }
    } else {
        let theta = theta_sq.sqrt();
        let (s, c) = theta.sin_cos();
        let t3 = theta_sq * theta;
        let t4 = theta_sq * theta_sq;
        Coefficients {
            a: s / theta,
            b: (T::one() - c) / theta_sq,
            da_over_theta: (theta * c - s) / t3,
            db_over_theta: (theta * s - (T::one() - c) - (T::one() - c)) / t4,
        }
    }
}

/// Rotation about the z axis by `angle` radians.
pub fn rotation_z<T: Real>(angle: T) -> Mat3<T> {
    let (s, c) = angle.sin_cos();
    let o = T::zero();
    Mat3([[c, -s, o], [s, c, o], [o, o, T::one()]])
}

/// Inverse of the exponential map for a proper rotation matrix.
pub fn log_map<T: Real>(r: &Mat3<T>) -> AxisAngle<T> {
    let m = &r.0;
    let cos_theta = ((r.trace() - T::one()) / T::lit(2.0)).max(-T::one()).min(T::one());
    let theta = cos_theta.acos();
    let w = Vec3::new(m[2][1] - m[1][2], m[0][2] - m[2][0], m[1][0] - m[0][1]);
    if theta < T::lit(1e-6) {
        let v = w.scale(T::lit(0.5));
        return AxisAngle(v.0);
    }
    if T::PI() - theta < T::lit(1e-6) {
        // Near a half turn: take the axis from the dominant column of R + I.
        let b = *r + Mat3::identity();
        let mut best = 0;
        for c in 1..3 {
            if b.column(c).norm() > b.column(best).norm() {
                best = c;
            }
        }
        let axis = b.column(best);
        let axis = axis.scale(T::one() / axis.norm());
        return AxisAngle(axis.scale(theta).0);
    }
    let v = w.scale(theta / (T::lit(2.0) * theta.sin()));
    AxisAngle(v.0)
}
