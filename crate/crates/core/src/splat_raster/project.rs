use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2};

use super::{GUARD_BAND, LOW_PASS_DILATION};
use crate::error::{Error, Result};
use crate::scene_io::{CameraView, GaussianCloud};

/// A gaussian projected to the image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat2D {
    pub gaussian_index: usize,
    /// Continuous pixel coordinates of the projected mean.
    pub mean2d: Vector2<f64>,
    /// Image-plane covariance in pixels², dilation included.
    pub cov2d: Matrix2<f64>,
    pub view_depth: f64,
    pub opacity: f64,
    conic: Matrix2<f64>,
}

impl Splat2D {
    /// Builds a splat; fails unless `cov2d` is symmetric positive definite.
    pub fn new(
        gaussian_index: usize,
        mean2d: Vector2<f64>,
        cov2d: Matrix2<f64>,
        view_depth: f64,
        opacity: f64,
    ) -> Result<Self> {
        let (a, b, b2, c) = (cov2d[(0, 0)], cov2d[(0, 1)], cov2d[(1, 0)], cov2d[(1, 1)]);
        if (b - b2).abs() > 1e-9 * (1.0 + b.abs()) {
            return Err(Error::Contract(format!(
                "splat {gaussian_index}: cov2d is not symmetric"
            )));
        }
        let det = a * c - b * b;
        if !(a > 0.0 && det > 0.0 && det.is_finite()) {
            return Err(Error::Contract(format!(
                "splat {gaussian_index}: cov2d is not positive definite"
            )));
        }
        let conic = Matrix2::new(c / det, -b / det, -b / det, a / det);
        Ok(Splat2D {
            gaussian_index,
            mean2d,
            cov2d,
            view_depth,
            opacity,
            conic,
        })
    }

    /// Inverse of `cov2d`.
    pub fn conic(&self) -> &Matrix2<f64> {
        &self.conic
    }

    /// Eigenvalues of `cov2d`, largest first.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let (a, b, c) = (self.cov2d[(0, 0)], self.cov2d[(0, 1)], self.cov2d[(1, 1)]);
        let mid = 0.5 * (a + c);
        let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        (mid + disc, mid - disc)
    }

    /// Radius beyond which `opacity · kernel` is certain to fall below the
    /// compositing skip threshold, so the splat cannot affect those pixels.
    /// `None` when the splat never reaches the threshold anywhere.
    pub fn influence_radius(&self, min_alpha: f64) -> Option<f64> {
        let ratio = self.opacity / min_alpha;
        if ratio < 1.0 {
            return None;
        }
        let (lambda_max, _) = self.eigenvalues();
        Some((2.0 * ratio.ln() * lambda_max).sqrt())
    }
}

/// Spatial kernel exp(−½ dᵀ Σ′⁻¹ d) with d = pixel − mean2d.
pub fn kernel_eval(splat: &Splat2D, pixel: Vector2<f64>) -> f64 {
    let d = pixel - splat.mean2d;
    let power = -0.5 * d.dot(&(splat.conic * d));
    power.exp()
}

/// Whether a camera-space point survives near/far and guard-band culling.
fn is_visible(cam: &CameraView, u: f64, v: f64, z: f64) -> bool {
    if !(z > cam.near && z < cam.far) {
        return false;
    }
    let (w, h) = (cam.width as f64, cam.height as f64);
    let half_w = 0.5 * GUARD_BAND * w;
    let half_h = 0.5 * GUARD_BAND * h;
    (u - 0.5 * w).abs() <= half_w && (v - 0.5 * h).abs() <= half_h
}

/// Projects every visible gaussian; output keeps input order.
///
/// Σ′ = J·W·Σ·Wᵀ·Jᵀ + 0.3·I, with W the world-to-camera rotation and J the
/// Jacobian of the pinhole projection at the gaussian mean.
pub fn project_splats(cloud: &GaussianCloud, cam: &CameraView) -> Vec<Splat2D> {
    let world_to_cam = cam.world_to_camera();
    let w: Matrix3<f64> = world_to_cam.rotation.to_rotation_matrix().into_inner();
    let mut out = Vec::with_capacity(cloud.len());
    for i in 0..cloud.len() {
        let t = world_to_cam * cloud.positions[i];
        if t.z <= 0.0 {
            continue;
        }
        let (u, v) = cam.project_camera_point(&t);
        if !is_visible(cam, u, v, t.z) {
            continue;
        }
        let inv_z = 1.0 / t.z;
        let j = Matrix2x3::new(
            cam.fx * inv_z,
            0.0,
            -cam.fx * t.x * inv_z * inv_z,
            0.0,
            cam.fy * inv_z,
            -cam.fy * t.y * inv_z * inv_z,
        );
        let m = j * w;
        let mut cov = m * cloud.covariance(i) * m.transpose();
        // Symmetrize to remove rounding asymmetry before dilation.
        let off = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
        cov[(0, 1)] = off;
        cov[(1, 0)] = off;
        cov[(0, 0)] += LOW_PASS_DILATION;
        cov[(1, 1)] += LOW_PASS_DILATION;
        if let Ok(s) = Splat2D::new(i, Vector2::new(u, v), cov, t.z, cloud.opacities[i]) {
            out.push(s);
        }
    }
    out
}
