//! Synthetic scenes with known per-gaussian categories, and literal
//! brute-force implementations of projection, compositing, fusion and
//! semantic rasterization used as references by the test suites.
//!
//! The reference code here is deliberately naive: no tiling, no extent
//! culling, every visible gaussian evaluated at every pixel, single-threaded.
//! It shares only the compositing constants and the data types with the
//! optimized paths.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Point3, UnitQuaternion, Vector2, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::prob_render::PixelDistributionMaps;
use crate::scene_io::{category_palette, CameraView, GaussianCloud, LabelImage, IGNORE};
use crate::semantic_fusion::{dirichlet_moments, SemanticState};
use crate::splat_raster::{
    ColorImage, PixelContribution, GUARD_BAND, LOW_PASS_DILATION, MAX_ALPHA, MIN_ALPHA,
    TRANSMITTANCE_CUTOFF,
};

/// Largest scene the brute-force references accept.
pub const MAX_ORACLE_GAUSSIANS: usize = 500;

/// Pixels whose background weight exceeds this are labeled IGNORE.
pub const BACKGROUND_DOMINANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub cloud: GaussianCloud,
    pub gaussian_categories: Vec<u8>,
    pub cameras: Vec<CameraView>,
    pub num_classes: usize,
    pub seed: u64,
}

/// Knobs for [`generate_scene_with`]. Lengths are multiples of `extent`
/// where noted.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub num_gaussians: usize,
    pub num_classes: usize,
    /// Side of the cube, centered on the origin, holding the gaussian means.
    pub extent: f64,
    pub num_cameras: usize,
    pub width: u32,
    pub height: u32,
    /// Horizontal field of view in degrees.
    pub fov_degrees: f64,
    /// Ring radius as a multiple of `extent`.
    pub ring_radius: f64,
    /// Mean camera height above the box center, as a multiple of `extent`.
    pub ring_height: f64,
    /// Per-axis scales are drawn log-uniformly from this range times `extent`.
    pub scale_range: (f64, f64),
}

impl SceneConfig {
    pub fn new(num_gaussians: usize, num_classes: usize, extent: f64) -> Self {
        SceneConfig {
            num_gaussians,
            num_classes,
            extent,
            num_cameras: 20,
            width: 64,
            height: 64,
            fov_degrees: 60.0,
            ring_radius: 1.8,
            ring_height: 0.5,
            scale_range: (0.02, 0.3),
        }
    }
}

/// Scene with the default camera ring (20 views, 64×64).
pub fn generate_scene(
    seed: u64,
    num_gaussians: usize,
    num_classes: usize,
    extent: f64,
) -> Result<SyntheticScene> {
    generate_scene_with(seed, &SceneConfig::new(num_gaussians, num_classes, extent))
}

pub fn generate_scene_with(seed: u64, cfg: &SceneConfig) -> Result<SyntheticScene> {
    if cfg.num_gaussians == 0 {
        return Err(Error::EmptyScene);
    }
    if !(2..=255).contains(&cfg.num_classes) {
        return Err(Error::InvalidArgument(format!(
            "class count {} outside 2..=255",
            cfg.num_classes
        )));
    }
    if !(cfg.extent > 0.0 && cfg.extent.is_finite()) {
        return Err(Error::InvalidArgument("extent must be positive".into()));
    }
    let (s0, s1) = cfg.scale_range;
    if !(s0 > 0.0 && s0 < s1 && s1.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "scale range ({s0}, {s1}) must be positive and increasing"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = cfg.extent;
    let (lo, hi) = ((cfg.scale_range.0 * e).ln(), (cfg.scale_range.1 * e).ln());

    let mut cloud = GaussianCloud::empty();
    let mut categories = Vec::with_capacity(cfg.num_gaussians);
    for _ in 0..cfg.num_gaussians {
        let pos = if cfg.num_gaussians == 1 {
            Point3::origin()
        } else {
            Point3::new(
                rng.random_range(-0.5..0.5) * e,
                rng.random_range(-0.5..0.5) * e,
                rng.random_range(-0.5..0.5) * e,
            )
        };
        let scale = Vector3::from_fn(|_, _| rng.random_range(lo..hi).exp());
        let q = loop {
            let v = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            if v.norm() > 1e-6 {
                break UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(v));
            }
        };
        let opacity = rng.random_range(0.5..0.95);
        let category = rng.random_range(0..cfg.num_classes) as u8;
        let rgb = category_palette(category);
        cloud.positions.push(pos);
        cloud.rotations.push(q);
        cloud.scales.push(scale);
        cloud.opacities.push(opacity);
        cloud.base_colors.push(rgb.map(|v| v as f64 / 255.0));
        categories.push(category);
    }
    cloud.validate()?;

    let fx = 0.5 * cfg.width as f64 / (0.5 * cfg.fov_degrees.to_radians()).tan();
    let intrinsics = [
        fx,
        fx,
        0.5 * (cfg.width as f64 - 1.0),
        0.5 * (cfg.height as f64 - 1.0),
    ];
    let mut cameras = Vec::with_capacity(cfg.num_cameras);
    for k in 0..cfg.num_cameras {
        let theta = std::f64::consts::TAU * k as f64 / cfg.num_cameras as f64;
        let height = e * (cfg.ring_height + 0.25 * (3.0 * theta).sin());
        let eye = Point3::new(
            cfg.ring_radius * e * theta.cos(),
            cfg.ring_radius * e * theta.sin(),
            height,
        );
        cameras.push(CameraView::look_at(
            cfg.width,
            cfg.height,
            intrinsics,
            eye,
            Point3::origin(),
            Vector3::z(),
            0.01 * e,
            100.0 * e,
        )?);
    }

    Ok(SyntheticScene {
        cloud,
        gaussian_categories: categories,
        cameras,
        num_classes: cfg.num_classes,
        seed,
    })
}

/// Ground-truth labels for `cam`: each pixel takes the category of its
/// largest-weight gaussian (IGNORE where the background dominates), then
/// with probability `noise_rate` is replaced by a uniformly drawn other
/// category.
pub fn render_labels_oracle(
    scene: &SyntheticScene,
    cam: &CameraView,
    noise_rate: f64,
    seed: u64,
) -> Result<LabelImage> {
    if !(0.0..1.0).contains(&noise_rate) {
        return Err(Error::InvalidArgument(format!(
            "noise rate {noise_rate} outside [0, 1)"
        )));
    }
    let reference = brute_force_contributions(&scene.cloud, cam)?;
    let c = scene.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = Vec::with_capacity(reference.lists.len());
    for (list, &bg) in reference.lists.iter().zip(&reference.background) {
        if bg > BACKGROUND_DOMINANCE || list.is_empty() {
            ids.push(IGNORE);
            continue;
        }
        let mut best = list[0];
        for pc in &list[1..] {
            if pc.kappa > best.kappa {
                best = *pc;
            }
        }
        let mut label = scene.gaussian_categories[best.gaussian_index];
        if noise_rate > 0.0 && rng.random::<f64>() < noise_rate {
            let other = rng.random_range(0..c - 1) as u8;
            label = if other >= label { other + 1 } else { other };
        }
        ids.push(label);
    }
    LabelImage::new(cam.width, cam.height, ids, c)
}

/// A splat as computed by the reference projection.
struct RefSplat {
    index: usize,
    depth: f64,
    mean: Vector2<f64>,
    inv_cov: Matrix2<f64>,
    opacity: f64,
}

fn reference_splats(cloud: &GaussianCloud, cam: &CameraView) -> Result<Vec<RefSplat>> {
    if cloud.len() > MAX_ORACLE_GAUSSIANS {
        return Err(Error::InvalidArgument(format!(
            "brute-force references accept at most {MAX_ORACLE_GAUSSIANS} gaussians, got {}",
            cloud.len()
        )));
    }
    let r_c2w: Matrix3<f64> = cam.rotation_matrix();
    let eye = cam.center();
    let mut out = Vec::new();
    for n in 0..cloud.len() {
        // Camera-space mean: Rᵀ (μ − eye).
        let t = r_c2w.transpose() * (cloud.positions[n] - eye);
        if t.z <= cam.near || t.z >= cam.far {
            continue;
        }
        let u = cam.fx * t.x / t.z + cam.cx;
        let v = cam.fy * t.y / t.z + cam.cy;
        let (w, h) = (cam.width as f64, cam.height as f64);
        if (u - w / 2.0).abs() > GUARD_BAND * w / 2.0 || (v - h / 2.0).abs() > GUARD_BAND * h / 2.0
        {
            continue;
        }
        let rot = cloud.rotations[n].to_rotation_matrix().into_inner();
        let s = cloud.scales[n];
        let sigma = rot
            * Matrix3::from_diagonal(&Vector3::new(s.x * s.x, s.y * s.y, s.z * s.z))
            * rot.transpose();
        let jac = Matrix2x3::new(
            cam.fx / t.z,
            0.0,
            -cam.fx * t.x / (t.z * t.z),
            0.0,
            cam.fy / t.z,
            -cam.fy * t.y / (t.z * t.z),
        );
        let cov = jac * r_c2w.transpose() * sigma * r_c2w * jac.transpose()
            + Matrix2::from_diagonal_element(LOW_PASS_DILATION);
        let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
        if det <= 0.0 || det.is_nan() {
            continue;
        }
        let inv_cov = Matrix2::new(cov[(1, 1)], -cov[(0, 1)], -cov[(1, 0)], cov[(0, 0)]) / det;
        out.push(RefSplat {
            index: n,
            depth: t.z,
            mean: Vector2::new(u, v),
            inv_cov,
            opacity: cloud.opacities[n],
        });
    }
    out.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    Ok(out)
}

/// Per-pixel reference compositing output, row-major.
#[derive(Debug, Clone)]
pub struct ReferenceContributions {
    pub width: u32,
    pub height: u32,
    pub lists: Vec<Vec<PixelContribution>>,
    pub background: Vec<f64>,
}

pub fn brute_force_contributions(
    cloud: &GaussianCloud,
    cam: &CameraView,
) -> Result<ReferenceContributions> {
    let splats = reference_splats(cloud, cam)?;
    let mut lists = Vec::with_capacity(cam.pixel_count());
    let mut background = Vec::with_capacity(cam.pixel_count());
    for py in 0..cam.height {
        for px in 0..cam.width {
            let x = Vector2::new(px as f64, py as f64);
            let mut list = Vec::new();
            let mut transmittance = 1.0;
            for s in &splats {
                let d = x - s.mean;
                let k = (-0.5 * (d.transpose() * s.inv_cov * d)[(0, 0)]).exp();
                let alpha = (s.opacity * k).min(MAX_ALPHA);
                if alpha < MIN_ALPHA {
                    continue;
                }
                list.push(PixelContribution {
                    gaussian_index: s.index,
                    kappa: alpha * transmittance,
                });
                transmittance *= 1.0 - alpha;
                if transmittance < TRANSMITTANCE_CUTOFF {
                    break;
                }
            }
            lists.push(list);
            background.push(transmittance);
        }
    }
    Ok(ReferenceContributions {
        width: cam.width,
        height: cam.height,
        lists,
        background,
    })
}

/// Reference color render: C = Σ cₙ κₙ + background_color · κ_b.
pub fn brute_force_render(
    cloud: &GaussianCloud,
    cam: &CameraView,
    background_color: [f64; 3],
) -> Result<(ColorImage, ReferenceContributions)> {
    let reference = brute_force_contributions(cloud, cam)?;
    let mut data = Vec::with_capacity(3 * cam.pixel_count());
    for (list, &bg) in reference.lists.iter().zip(&reference.background) {
        for (ch, &bg_color) in background_color.iter().enumerate() {
            let mut v = bg_color * bg;
            for pc in list {
                v += cloud.base_colors[pc.gaussian_index][ch] * pc.kappa;
            }
            data.push(v);
        }
    }
    let img = ColorImage {
        width: cam.width,
        height: cam.height,
        data,
    };
    Ok((img, reference))
}

/// Literal concentration update: for every gaussian, every pixel, every
/// class, α_n^c += κ(pixel, n) · [label == c].
pub fn brute_force_fuse(
    state: &SemanticState,
    cloud: &GaussianCloud,
    cam: &CameraView,
    labels: &LabelImage,
) -> Result<SemanticState> {
    labels.check_matches(cam)?;
    let reference = brute_force_contributions(cloud, cam)?;
    let (n_g, n_c) = (state.num_gaussians(), state.num_classes());
    let mut conc = state.concentrations().to_vec();
    for n in 0..n_g {
        for (i, list) in reference.lists.iter().enumerate() {
            let kappa: f64 = list
                .iter()
                .filter(|pc| pc.gaussian_index == n)
                .map(|pc| pc.kappa)
                .sum();
            for c in 0..n_c {
                let y = if labels.category_ids[i] as usize == c {
                    1.0
                } else {
                    0.0
                };
                conc[n * n_c + c] += kappa * y;
            }
        }
    }
    SemanticState::from_parts(
        n_g,
        n_c,
        state.prior_value(),
        state.background().to_vec(),
        conc,
    )
}

/// Literal per-pixel expectation/variance sums, background included.
pub fn brute_force_rasterize(
    state: &SemanticState,
    cloud: &GaussianCloud,
    cam: &CameraView,
) -> Result<PixelDistributionMaps> {
    let reference = brute_force_contributions(cloud, cam)?;
    let c = state.num_classes();
    let bg = dirichlet_moments(state.background())?;
    let mut pixels = Vec::with_capacity(reference.lists.len());
    for (list, &kb) in reference.lists.iter().zip(&reference.background) {
        let mut e = vec![0.0; c];
        let mut v = vec![0.0; c];
        for pc in list {
            let m = dirichlet_moments(state.row(pc.gaussian_index))?;
            for j in 0..c {
                e[j] += pc.kappa * m.expectation[j];
                v[j] += pc.kappa * pc.kappa * m.variance[j];
            }
        }
        for j in 0..c {
            e[j] += kb * bg.expectation[j];
            v[j] += kb * kb * bg.variance[j];
        }
        pixels.push((e, v, kb));
    }
    Ok(PixelDistributionMaps::from_pixels(
        cam.width, cam.height, c, pixels,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let a = generate_scene(7, 30, 4, 2.0).unwrap();
        let b = generate_scene(7, 30, 4, 2.0).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(8, 30, 4, 2.0).unwrap();
        assert_ne!(a.cloud, c.cloud);
    }

    #[test]
    fn parameters_respect_ranges() {
        let s = generate_scene(1, 200, 5, 2.0).unwrap();
        for i in 0..200 {
            assert!(s.cloud.positions[i].coords.iter().all(|v| v.abs() <= 1.0));
            assert!(s.cloud.scales[i].iter().all(|v| (0.04..=0.6).contains(v)));
            assert!((0.5..0.95).contains(&s.cloud.opacities[i]));
            assert!(s.gaussian_categories[i] < 5);
        }
        assert_eq!(s.cameras.len(), 20);
    }

    #[test]
    fn single_gaussian_sits_at_center() {
        let s = generate_scene(3, 1, 2, 1.0).unwrap();
        assert_eq!(s.cloud.positions[0], Point3::origin());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(generate_scene(0, 0, 3, 1.0).is_err());
        assert!(generate_scene(0, 3, 1, 1.0).is_err());
        let s = generate_scene(0, 3, 2, 1.0).unwrap();
        assert!(render_labels_oracle(&s, &s.cameras[0], 1.0, 0).is_err());
    }

    #[test]
    fn cameras_see_the_scene_center() {
        let s = generate_scene(0, 10, 3, 2.0).unwrap();
        for cam in &s.cameras {
            let t = cam.world_to_camera() * Point3::origin();
            let (u, v) = cam.project_camera_point(&t);
            assert!(t.z > 0.0);
            assert!((u - cam.cx).abs() < 1e-9 && (v - cam.cy).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_labels_follow_dominant_weight() {
        let s = generate_scene(0, 40, 4, 2.0).unwrap();
        let cam = &s.cameras[3];
        let labels = render_labels_oracle(&s, cam, 0.0, 0).unwrap();
        let reference = brute_force_contributions(&s.cloud, cam).unwrap();
        for (i, list) in reference.lists.iter().enumerate() {
            let l = labels.category_ids[i];
            if reference.background[i] > BACKGROUND_DOMINANCE {
                assert_eq!(l, IGNORE);
            } else {
                let max = list.iter().map(|p| p.kappa).fold(0.0, f64::max);
                assert!(list
                    .iter()
                    .any(|p| p.kappa == max && s.gaussian_categories[p.gaussian_index] == l));
            }
        }
    }

    #[test]
    fn noisy_labels_are_reproducible_and_differ() {
        let s = generate_scene(0, 40, 4, 2.0).unwrap();
        let cam = &s.cameras[0];
        let a = render_labels_oracle(&s, cam, 0.2, 11).unwrap();
        let b = render_labels_oracle(&s, cam, 0.2, 11).unwrap();
        assert_eq!(a, b);
        let clean = render_labels_oracle(&s, cam, 0.0, 11).unwrap();
        let labeled = clean.category_ids.iter().filter(|&&l| l != IGNORE).count();
        let flipped = a
            .category_ids
            .iter()
            .zip(&clean.category_ids)
            .filter(|(x, y)| x != y)
            .count();
        let rate = flipped as f64 / labeled as f64;
        assert!(rate > 0.1 && rate < 0.3, "flip rate {rate}");
        // Noise never touches ignored pixels.
        for (x, y) in a.category_ids.iter().zip(&clean.category_ids) {
            assert_eq!(*x == IGNORE, *y == IGNORE);
        }
    }

    #[test]
    fn oracle_rejects_large_scenes() {
        let s = generate_scene(0, MAX_ORACLE_GAUSSIANS + 1, 3, 1.0).unwrap();
        assert!(brute_force_contributions(&s.cloud, &s.cameras[0]).is_err());
    }

    #[test]
    fn empty_scene_is_background() {
        let cam = generate_scene(0, 1, 2, 1.0).unwrap().cameras[0].clone();
        let (img, r) = brute_force_render(&GaussianCloud::empty(), &cam, [0.1, 0.2, 0.3]).unwrap();
        assert!(r.background.iter().all(|&b| b == 1.0));
        assert_eq!(&img.data[..3], &[0.1, 0.2, 0.3]);
    }
}
