//! Minimal 3-vector arithmetic for the photon transport simulator.

use serde::{Deserialize, Serialize};

/// A 3-component double-precision vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    /// `self + dir * t`, the point a distance `t` along `dir`.
    pub fn advance(self, dir: Self, t: f64) -> Self {
        self + dir.scale(t)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// True when the norm is within `tol` of one.
    pub fn is_unit(self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    /// Any unit vector orthogonal to `self` (which must be unit length).
    pub fn orthonormal(self) -> Self {
        // Pick the axis least aligned with self to avoid degeneracy.
        let other = if self.z.abs() < 0.9 {
            Vec3::new(0.0, 0.0, 1.0)
        } else {
            Vec3::new(1.0, 0.0, 0.0)
        };
        let v = Vec3::new(
            other.y * self.z - other.z * self.y,
            other.z * self.x - other.x * self.z,
            other.x * self.y - other.y * self.x,
        );
        v.scale(1.0 / v.norm())
    }

    pub fn cross(self, other: Self) -> Self {
        Self::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, other: Vec3) -> Vec3 {
        Vec3::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, other: Vec3) -> Vec3 {
        Vec3::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }
}

/// Rotate the unit vector `dir` by polar angle `theta` (around an arbitrary
/// azimuth `phi`) measured from `dir` itself. Standard local-frame rotation
/// used after each scattering event.
pub fn rotate_direction(dir: Vec3, cos_theta: f64, phi: f64) -> Vec3 {
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let u = dir.orthonormal();
    let v = dir.cross(u);
    let (sin_phi, cos_phi) = phi.sin_cos();
    let out =
        dir.scale(cos_theta) + u.scale(sin_theta * cos_phi) + v.scale(sin_theta * sin_phi);
    // Renormalize to stop drift over thousands of scatters.
    out.scale(1.0 / out.norm())
}
