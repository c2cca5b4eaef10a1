//! On-disk formats and the scene-level domain types.
//!
//! Coordinate conventions: cameras use x right, y down, z forward (the camera
//! looks along +z), and `camera_to_world` maps camera coordinates into the
//! world. Pixel `(px, py)` has its center at continuous image coordinate
//! `(px, py)`, so a point on the optical axis lands exactly on the pixel at
//! `(cx, cy)`.

mod cameras;
mod images;
mod labels;
mod ply;
mod state_file;

use nalgebra::{Isometry3, Matrix3, Point3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub use cameras::{
    cameras_to_json, load_camera_records, load_cameras, parse_cameras, CameraRecord,
};
pub use images::{
    category_palette, read_pfm, read_rgb_png, write_gray_png, write_pfm, write_rgb_png, PfmImage,
    CATEGORY_PALETTE,
};
pub use labels::{load_label_image, save_label_image};
pub use ply::{load_gaussian_ply, read_gaussian_ply, save_gaussian_ply, write_gaussian_ply};
pub use state_file::{
    load_semantic_state, read_semantic_state, save_semantic_state, write_semantic_state,
};

/// Label value marking pixels that take part in neither fusion nor metrics.
pub const IGNORE: u8 = 255;

/// Real spherical harmonic Y_0^0; maps the DC coefficient to linear color.
pub const SH_C0: f64 = 0.282_094_791_8;

/// Activated scales below this are treated as degenerate.
pub const MIN_SCALE: f64 = 1e-12;

/// A pre-trained splat scene with all parameters post-activation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    pub positions: Vec<Point3<f64>>,
    pub rotations: Vec<UnitQuaternion<f64>>,
    pub scales: Vec<Vector3<f64>>,
    pub opacities: Vec<f64>,
    pub base_colors: Vec<[f64; 3]>,
}

impl GaussianCloud {
    /// Builds a cloud and checks its invariants.
    pub fn new(
        positions: Vec<Point3<f64>>,
        rotations: Vec<UnitQuaternion<f64>>,
        scales: Vec<Vector3<f64>>,
        opacities: Vec<f64>,
        base_colors: Vec<[f64; 3]>,
    ) -> Result<Self> {
        let cloud = GaussianCloud {
            positions,
            rotations,
            scales,
            opacities,
            base_colors,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    /// An empty cloud. Only useful as a rendering input; loaders reject it.
    pub fn empty() -> Self {
        GaussianCloud {
            positions: Vec::new(),
            rotations: Vec::new(),
            scales: Vec::new(),
            opacities: Vec::new(),
            base_colors: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 {
            return Err(Error::EmptyScene);
        }
        if self.rotations.len() != n
            || self.scales.len() != n
            || self.opacities.len() != n
            || self.base_colors.len() != n
        {
            return Err(Error::Dimension(format!(
                "gaussian attribute arrays disagree in length (positions {n}, rotations {}, scales {}, opacities {}, colors {})",
                self.rotations.len(),
                self.scales.len(),
                self.opacities.len(),
                self.base_colors.len()
            )));
        }
        for i in 0..n {
            let p = &self.positions[i];
            if !p.coords.iter().all(|v| v.is_finite()) {
                return Err(data(i, "non-finite position"));
            }
            if (self.rotations[i].norm() - 1.0).abs() > 1e-6 {
                return Err(data(i, "rotation quaternion is not unit length"));
            }
            if !self.scales[i]
                .iter()
                .all(|s| s.is_finite() && *s > MIN_SCALE)
            {
                return Err(data(i, "scale must be finite and positive"));
            }
            let o = self.opacities[i];
            if !(o > 0.0 && o < 1.0) {
                return Err(data(i, "opacity must lie strictly inside (0, 1)"));
            }
            if !self.base_colors[i].iter().all(|c| (0.0..=1.0).contains(c)) {
                return Err(data(i, "color must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// World-space covariance R·diag(S²)·Rᵀ of gaussian `i`.
    pub fn covariance(&self, i: usize) -> Matrix3<f64> {
        let r = self.rotations[i].to_rotation_matrix().into_inner();
        let s2 = self.scales[i].component_mul(&self.scales[i]);
        r * Matrix3::from_diagonal(&s2) * r.transpose()
    }

    /// Keeps only the gaussians for which `keep` returns true, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(usize) -> bool) -> GaussianCloud {
        let mut out = GaussianCloud::empty();
        for i in 0..self.len() {
            if keep(i) {
                out.positions.push(self.positions[i]);
                out.rotations.push(self.rotations[i]);
                out.scales.push(self.scales[i]);
                out.opacities.push(self.opacities[i]);
                out.base_colors.push(self.base_colors[i]);
            }
        }
        out
    }

    /// Applies a rigid transform to every gaussian.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> GaussianCloud {
        let mut out = self.clone();
        for i in 0..self.len() {
            out.positions[i] = iso * self.positions[i];
            out.rotations[i] = iso.rotation * self.rotations[i];
        }
        out
    }
}

fn data(index: usize, message: &str) -> Error {
    Error::Data {
        index,
        message: message.to_string(),
    }
}

/// Pinhole camera with a rigid camera-to-world pose.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub camera_to_world: Isometry3<f64>,
    pub near: f64,
    pub far: f64,
}

impl CameraView {
    pub fn new(
        width: u32,
        height: u32,
        [fx, fy, cx, cy]: [f64; 4],
        camera_to_world: Isometry3<f64>,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let cam = CameraView {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            camera_to_world,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`; `up` is the world up direction
    /// (the camera's y axis points opposite to it).
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        width: u32,
        height: u32,
        intrinsics: [f64; 4],
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::InvalidArgument(
                "look_at target coincides with eye".into(),
            ));
        }
        let z = forward.normalize();
        let up_perp = up - z * up.dot(&z);
        if up_perp.norm() < 1e-9 {
            return Err(Error::InvalidArgument(
                "look_at up vector is parallel to view direction".into(),
            ));
        }
        let y = -up_perp.normalize();
        let x = y.cross(&z);
        let rot = nalgebra::Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
        let iso = Isometry3::from_parts(
            eye.coords.into(),
            UnitQuaternion::from_rotation_matrix(&rot),
        );
        CameraView::new(width, height, intrinsics, iso, near, far)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument(
                "camera width and height must be at least 1".into(),
            ));
        }
        if !(self.fx > 0.0 && self.fy > 0.0 && self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::InvalidArgument(
                "focal lengths must be positive and finite".into(),
            ));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::InvalidArgument(
                "clip depths must satisfy 0 < near < far".into(),
            ));
        }
        let r = self.rotation_matrix();
        let drift = (r.transpose() * r - Matrix3::identity()).abs().max();
        if drift > 1e-6 {
            return Err(Error::InvalidArgument(
                "camera rotation is not orthonormal".into(),
            ));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Camera-to-world rotation block.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.camera_to_world
            .rotation
            .to_rotation_matrix()
            .into_inner()
    }

    pub fn world_to_camera(&self) -> Isometry3<f64> {
        self.camera_to_world.inverse()
    }

    pub fn center(&self) -> Point3<f64> {
        self.camera_to_world.translation.vector.into()
    }

    /// Projects a camera-space point to continuous pixel coordinates.
    pub fn project_camera_point(&self, p: &Point3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Applies a rigid transform to the camera pose.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> CameraView {
        CameraView {
            camera_to_world: iso * self.camera_to_world,
            ..self.clone()
        }
    }
}

/// Per-pixel category ids, row-major; [`IGNORE`] marks unlabeled pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    pub width: u32,
    pub height: u32,
    pub category_ids: Vec<u8>,
}

impl LabelImage {
    pub fn new(width: u32, height: u32, category_ids: Vec<u8>, num_classes: usize) -> Result<Self> {
        if category_ids.len() != width as usize * height as usize {
            return Err(Error::Dimension(format!(
                "label buffer holds {} values for a {width}x{height} image",
                category_ids.len()
            )));
        }
        if let Some((i, v)) = category_ids
            .iter()
            .enumerate()
            .find(|(_, &v)| v != IGNORE && v as usize >= num_classes)
        {
            return Err(Error::Data {
                index: i,
                message: format!("label {v} is out of range for {num_classes} classes"),
            });
        }
        Ok(LabelImage {
            width,
            height,
            category_ids,
        })
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.category_ids[(y * self.width + x) as usize]
    }

    /// Errors unless the label image is sized for `cam`.
    pub fn check_matches(&self, cam: &CameraView) -> Result<()> {
        if self.width != cam.width || self.height != cam.height {
            return Err(Error::Dimension(format!(
                "label image is {}x{} but camera is {}x{}",
                self.width, self.height, cam.width, cam.height
            )));
        }
        Ok(())
    }
}
