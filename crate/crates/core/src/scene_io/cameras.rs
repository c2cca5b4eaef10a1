//! Cameras JSON: a top-level array of pinhole views with camera-to-world poses.

use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Matrix3, Matrix4, Rotation3, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::CameraView;
use crate::error::{Error, Result};

const DEFAULT_NEAR: f64 = 0.01;
const DEFAULT_FAR: f64 = 1000.0;

/// Largest element-wise deviation from orthonormality that is silently corrected.
const MAX_ROTATION_DRIFT: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct CameraJson {
    pub w: u32,
    pub h: u32,
    pub fl_x: f64,
    pub fl_y: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default = "default_near")]
    pub near: f64,
    #[serde(default = "default_far")]
    pub far: f64,
    pub transform: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
}

fn default_near() -> f64 {
    DEFAULT_NEAR
}

fn default_far() -> f64 {
    DEFAULT_FAR
}

/// One cameras-file entry: the view plus its associated files, with paths
/// resolved against the directory holding the JSON.
#[derive(Debug, Clone)]
pub struct CameraRecord {
    pub view: CameraView,
    pub label_path: Option<PathBuf>,
    pub image_path: Option<PathBuf>,
}

fn pose_from_transform(index: usize, t: &[f64]) -> Result<Isometry3<f64>> {
    let bad = |message: String| Error::Data { index, message };
    if t.len() != 16 {
        return Err(Error::Format(format!(
            "camera {index}: transform has {} numbers, expected 16",
            t.len()
        )));
    }
    if !t.iter().all(|v| v.is_finite()) {
        return Err(bad("transform contains non-finite values".into()));
    }
    let m = Matrix4::from_row_slice(t);
    let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
    if bottom[..3].iter().any(|v| v.abs() > 1e-9) || (bottom[3] - 1.0).abs() > 1e-9 {
        return Err(bad(format!(
            "transform bottom row {bottom:?} is not [0, 0, 0, 1]"
        )));
    }
    let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let det = r.determinant();
    if det.abs() < 1e-9 {
        return Err(bad("camera pose is not invertible".into()));
    }
    if det < 0.0 {
        return Err(bad("camera pose contains a reflection".into()));
    }
    // Nearest rotation: polar factor of the SVD.
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let polar = u * v_t;
    let drift = (polar - r).abs().max();
    if drift >= MAX_ROTATION_DRIFT {
        return Err(bad(format!(
            "rotation block deviates from orthonormal by {drift:.3e}"
        )));
    }
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(polar));
    let translation = Translation3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
    Ok(Isometry3::from_parts(translation, rotation))
}

/// Parses a cameras JSON document. Relative file paths resolve against `base_dir`.
pub fn parse_cameras(json: &str, base_dir: &Path) -> Result<Vec<CameraRecord>> {
    let entries: Vec<CameraJson> =
        serde_json::from_str(json).map_err(|e| Error::Format(format!("cameras JSON: {e}")))?;
    entries
        .into_iter()
        .enumerate()
        .map(|(index, e)| {
            let pose = pose_from_transform(index, &e.transform)?;
            let view = CameraView::new(e.w, e.h, [e.fl_x, e.fl_y, e.cx, e.cy], pose, e.near, e.far)
                .map_err(|err| Error::Data {
                    index,
                    message: err.to_string(),
                })?;
            Ok(CameraRecord {
                view,
                label_path: e.label_path.map(|p| base_dir.join(p)),
                image_path: e.image_path.map(|p| base_dir.join(p)),
            })
        })
        .collect()
}

/// Loads camera entries with their label and image paths.
pub fn load_camera_records(path: impl AsRef<Path>) -> Result<Vec<CameraRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cameras(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Loads the views of a cameras JSON, preserving file order.
pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraView>> {
    Ok(load_camera_records(path)?
        .into_iter()
        .map(|r| r.view)
        .collect())
}

pub(crate) fn camera_to_json(
    cam: &CameraView,
    label_path: Option<String>,
    image_path: Option<String>,
) -> CameraJson {
    let m = cam.camera_to_world.to_homogeneous();
    let mut transform = Vec::with_capacity(16);
    for r in 0..4 {
        for c in 0..4 {
            transform.push(m[(r, c)]);
        }
    }
    CameraJson {
        w: cam.width,
        h: cam.height,
        fl_x: cam.fx,
        fl_y: cam.fy,
        cx: cam.cx,
        cy: cam.cy,
        near: cam.near,
        far: cam.far,
        transform,
        label_path,
        image_path,
    }
}

/// Serializes records as a cameras JSON document; paths are written verbatim.
pub fn cameras_to_json(entries: &[(CameraView, Option<String>, Option<String>)]) -> String {
    let list: Vec<CameraJson> = entries
        .iter()
        .map(|(c, l, i)| camera_to_json(c, l.clone(), i.clone()))
        .collect();
    serde_json::to_string_pretty(&list).expect("camera JSON serialization cannot fail")
}
