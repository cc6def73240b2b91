use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics plus image size. Pixel centres sit at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let cam = Self { fx, fy, cx, cy, width, height };
        cam.validate()?;
        Ok(cam)
    }

    /// 640x480 with the principal point at the image centre.
    pub fn vga(focal: f64) -> Self {
        Self { fx: focal, fy: focal, cx: 320.0, cy: 240.0, width: 640, height: 480 }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Threshold unit for projection errors: `w / 640`.
    pub fn mspd_unit(&self) -> f64 {
        self.width as f64 / 640.0
    }

    pub fn project(&self, point: &Vector3<f64>) -> Result<Vector2<f64>> {
        if point.z <= 0.0 {
            return Err(Error::NonPositiveDepth(point.z));
        }
        Ok(self.project_unchecked(point))
    }

    #[inline]
    pub(crate) fn project_unchecked(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Lifts a pixel to the 3D point at camera depth `z`.
    pub fn backproject(&self, pixel: &Vector2<f64>, z: f64) -> Result<Vector3<f64>> {
        if z <= 0.0 {
            return Err(Error::NonPositiveDepth(z));
        }
        Ok(Vector3::new(
            z * (pixel.x - self.cx) / self.fx,
            z * (pixel.y - self.cy) / self.fy,
            z,
        ))
    }

    /// Ratio of Euclidean distance from the camera centre to depth along the
    /// ray through pixel `(u, v)`.
    #[inline]
    pub(crate) fn ray_length_factor(&self, u: f64, v: f64) -> f64 {
        let a = (u - self.cx) / self.fx;
        let b = (v - self.cy) / self.fy;
        (a * a + b * b + 1.0).sqrt()
    }
}
