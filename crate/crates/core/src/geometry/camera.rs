use serde::{Deserialize, Serialize};

use super::linalg::Vec3;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Pinhole camera on the world z axis at `subject_depth`, looking down −z.
///
/// World frame is right-handed with y up; the subject sits near the origin.
/// A world point `(x, y, z)` has camera-frame coordinates
/// `(x, y, subject_depth − z)` and projects to
/// `u = f·x/d + cx`, `v = f·y/d + cy` with `d = subject_depth − z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera<T> {
    pub focal_length: T,
    pub principal_point: [T; 2],
    pub subject_depth: T,
}

impl<T: Real> Camera<T> {
    pub fn new(focal_length: T, principal_point: [T; 2], subject_depth: T) -> Result<Self> {
        let cam = Camera {
            focal_length,
            principal_point,
            subject_depth,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn cast<U: Real>(&self) -> Camera<U> {
        Camera {
            focal_length: self.focal_length.cast(),
            principal_point: self.principal_point.map(Real::cast),
            subject_depth: self.subject_depth.cast(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length > T::zero() && self.focal_length.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "focal length must be positive, got {}",
                self.focal_length
            )));
        }
        if !(self.subject_depth > T::zero() && self.subject_depth.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "subject depth must be positive, got {}",
                self.subject_depth
            )));
        }
        if !self.principal_point.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument("principal point must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn to_camera_frame(&self, p: &Vec3<T>) -> Vec3<T> {
        Vec3::new(p.0[0], p.0[1], self.subject_depth - p.0[2])
    }

    /// Projects a point already expressed in the camera frame (third
    /// component is the positive depth).
    pub fn project_camera_frame(&self, q: &Vec3<T>) -> Result<[T; 2]> {
        let depth = q.0[2];
        if !(depth > T::zero()) {
            return Err(Error::Projection(format!(
                "point at depth {depth} is at or behind the camera plane"
            )));
        }
        Ok([
            self.focal_length * q.0[0] / depth + self.principal_point[0],
            self.focal_length * q.0[1] / depth + self.principal_point[1],
        ])
    }

    pub fn project_point(&self, p: &Vec3<T>) -> Result<[T; 2]> {
        self.project_camera_frame(&self.to_camera_frame(p))
    }

    /// Pixel coordinates and the 2×3 Jacobian with respect to the world point.
    pub fn project_with_jacobian(&self, p: &Vec3<T>) -> Result<([T; 2], [[T; 3]; 2])> {
        let uv = self.project_point(p)?;
        let depth = self.subject_depth - p.0[2];
        let f_over_d = self.focal_length / depth;
        let f_over_d2 = f_over_d / depth;
        let jac = [
            [f_over_d, T::zero(), p.0[0] * f_over_d2],
            [T::zero(), f_over_d, p.0[1] * f_over_d2],
        ];
        Ok((uv, jac))
    }

    /// Centimeters per pixel at the subject plane.
    pub fn centimeters_per_pixel(&self) -> T {
        self.subject_depth * T::lit(100.0) / self.focal_length
    }

    /// Converts a pixel distance measured at the subject plane to centimeters.
    #[inline]
    pub fn pixels_to_centimeters(&self, pixels: T) -> T {
        pixels * (self.subject_depth * T::lit(100.0)) / self.focal_length
    }
}

/// Projects a batch of world points.
pub fn project<T: Real>(points: &[Vec3<T>], cam: &Camera<T>) -> Result<Vec<[T; 2]>> {
    points.iter().map(|p| cam.project_point(p)).collect()
}
