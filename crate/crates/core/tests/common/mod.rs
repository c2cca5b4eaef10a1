#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{Isometry3, Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatsem::scene_io::{CameraView, GaussianCloud};
use splatsem::semantic_fusion::SemanticState;
use splatsem::synthetic_oracle::{generate_scene_with, SceneConfig, SyntheticScene};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// A synthetic scene whose ring cameras render `size`×`size` images.
pub fn scene(
    seed: u64,
    num_gaussians: usize,
    num_classes: usize,
    size: u32,
    num_cameras: usize,
) -> SyntheticScene {
    let mut cfg = SceneConfig::new(num_gaussians, num_classes, 2.0);
    cfg.width = size;
    cfg.height = size;
    cfg.num_cameras = num_cameras;
    generate_scene_with(seed, &cfg).unwrap()
}

/// Identity-pose camera at the origin looking down +z.
pub fn axis_camera(width: u32, height: u32, f: f64) -> CameraView {
    let intr = [
        f,
        f,
        (width as f64 - 1.0) / 2.0,
        (height as f64 - 1.0) / 2.0,
    ];
    CameraView::new(width, height, intr, Isometry3::identity(), 0.01, 100.0).unwrap()
}

/// Isotropic gaussians at the given points.
pub fn blobs(points: &[([f64; 3], f64, f64)]) -> GaussianCloud {
    let n = points.len();
    GaussianCloud::new(
        points
            .iter()
            .map(|(p, _, _)| Point3::new(p[0], p[1], p[2]))
            .collect(),
        vec![UnitQuaternion::identity(); n],
        points.iter().map(|(_, s, _)| Vector3::repeat(*s)).collect(),
        points.iter().map(|(_, _, o)| *o).collect(),
        vec![[0.5, 0.5, 0.5]; n],
    )
    .unwrap()
}

/// A state with random positive observations on every gaussian.
pub fn random_state(seed: u64, num_gaussians: usize, num_classes: usize) -> SemanticState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SemanticState::init(num_gaussians, num_classes, 0.001).unwrap();
    for n in 0..num_gaussians {
        for c in 0..num_classes {
            let amount = if rng.random_bool(0.5) {
                rng.random_range(0.0..20.0)
            } else {
                0.0
            };
            s.add_observation(n, c, amount).unwrap();
        }
    }
    s
}
