//! Rasterization of the fused Dirichlet belief into per-pixel expectation and
//! variance, treating the background as one more (Dirichlet-distributed)
//! contributor, plus image-level uncertainty summaries.

use crate::error::{Error, Result};
use crate::scene_io::{CameraView, GaussianCloud};
use crate::semantic_fusion::{argmax, SemanticState};
use crate::splat_raster::Rasterizer;

/// Regularizer inside the logarithm of the variance-based image uncertainty.
pub const LOG_EPSILON: f64 = 1e-12;

/// Per-pixel rendered distribution. Multi-channel maps are H × W × C,
/// interleaved by class.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelDistributionMaps {
    pub width: u32,
    pub height: u32,
    pub num_classes: usize,
    pub expectation: Vec<f64>,
    pub variance: Vec<f64>,
    pub background_weight: Vec<f64>,
    pub argmax_category: Vec<u8>,
    /// Expectation at the predicted category.
    pub top_expectation: Vec<f64>,
    /// Variance at the predicted category.
    pub top_variance: Vec<f64>,
}

impl PixelDistributionMaps {
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn expectation_at(&self, x: u32, y: u32) -> &[f64] {
        let i = (y * self.width + x) as usize * self.num_classes;
        &self.expectation[i..i + self.num_classes]
    }

    pub fn variance_at(&self, x: u32, y: u32) -> &[f64] {
        let i = (y * self.width + x) as usize * self.num_classes;
        &self.variance[i..i + self.num_classes]
    }

    /// Channel `c` of a multi-channel map as its own H × W plane.
    pub fn channel(map: &[f64], num_classes: usize, c: usize) -> Vec<f64> {
        map.iter().skip(c).step_by(num_classes).copied().collect()
    }

    /// Builds the maps from per-pixel expectation/variance vectors, filling
    /// in argmax and top-category fields.
    pub fn from_pixels(
        width: u32,
        height: u32,
        num_classes: usize,
        pixels: Vec<(Vec<f64>, Vec<f64>, f64)>,
    ) -> Self {
        let n = pixels.len();
        let mut maps = PixelDistributionMaps {
            width,
            height,
            num_classes,
            expectation: Vec::with_capacity(n * num_classes),
            variance: Vec::with_capacity(n * num_classes),
            background_weight: Vec::with_capacity(n),
            argmax_category: Vec::with_capacity(n),
            top_expectation: Vec::with_capacity(n),
            top_variance: Vec::with_capacity(n),
        };
        for (e, v, bg) in pixels {
            let best = argmax(&e);
            maps.argmax_category.push(best as u8);
            maps.top_expectation.push(e[best]);
            maps.top_variance.push(v[best]);
            maps.background_weight.push(bg);
            maps.expectation.extend(e);
            maps.variance.extend(v);
        }
        maps
    }
}

/// Image-level uncertainty from the variance map and from the expectation map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageUncertainty {
    pub u_var: f64,
    pub u_exp: f64,
}

/// Per-gaussian moments laid out N × C, computed once per render.
struct MomentTable {
    expectation: Vec<f64>,
    variance: Vec<f64>,
}

fn moment_table(state: &SemanticState) -> MomentTable {
    let n = state.num_gaussians();
    let c = state.num_classes();
    let mut expectation = Vec::with_capacity(n * c);
    let mut variance = Vec::with_capacity(n * c);
    for i in 0..n {
        let m = state.moments(i);
        expectation.extend(m.expectation);
        variance.extend(m.variance);
    }
    MomentTable {
        expectation,
        variance,
    }
}

fn check_dims(state: &SemanticState, cloud: &GaussianCloud) -> Result<()> {
    if state.num_gaussians() != cloud.len() {
        return Err(Error::Dimension(format!(
            "state has {} gaussians but scene has {}",
            state.num_gaussians(),
            cloud.len()
        )));
    }
    if state.num_classes() > 255 {
        return Err(Error::InvalidArgument(
            "at most 255 classes fit an 8-bit segmentation".into(),
        ));
    }
    Ok(())
}

/// E(θᵢ) = Σ κₙ E(θₙ) + κ_b E(θ_b) and Var(θᵢ) = Σ κₙ² Var(θₙ) + κ_b² Var(θ_b).
pub fn rasterize_semantics(
    state: &SemanticState,
    cloud: &GaussianCloud,
    cam: &CameraView,
) -> Result<PixelDistributionMaps> {
    check_dims(state, cloud)?;
    Ok(rasterize_semantics_with(
        state,
        &Rasterizer::new(cloud, cam),
    ))
}

pub fn rasterize_semantics_with(
    state: &SemanticState,
    raster: &Rasterizer,
) -> PixelDistributionMaps {
    let c = state.num_classes();
    let table = moment_table(state);
    let bg = state.background_moments();
    let pixels = raster.map_pixels(|x, y| {
        let mut e = vec![0.0; c];
        let mut v = vec![0.0; c];
        let kb = raster.composite_pixel(x, y, |pc| {
            let row = pc.gaussian_index * c;
            let k2 = pc.kappa * pc.kappa;
            for j in 0..c {
                e[j] += pc.kappa * table.expectation[row + j];
                v[j] += k2 * table.variance[row + j];
            }
        });
        for j in 0..c {
            e[j] += kb * bg.expectation[j];
            v[j] += kb * kb * bg.variance[j];
        }
        (e, v, kb)
    });
    PixelDistributionMaps::from_pixels(raster.width(), raster.height(), c, pixels)
}

/// exp(mean(log(Var(θ̂ᵢ) + ε))): geometric mean of the top-category variance.
pub fn image_uncertainty_from_variance(maps: &PixelDistributionMaps) -> Result<f64> {
    if maps.top_variance.is_empty() {
        return Err(Error::InvalidArgument("image has no pixels".into()));
    }
    let n = maps.top_variance.len() as f64;
    let mean_log = maps
        .top_variance
        .iter()
        .map(|v| (v + LOG_EPSILON).ln())
        .sum::<f64>()
        / n;
    Ok(mean_log.exp())
}

/// 1 − mean(E(θ̂ᵢ)).
pub fn image_uncertainty_from_expectation(maps: &PixelDistributionMaps) -> Result<f64> {
    if maps.top_expectation.is_empty() {
        return Err(Error::InvalidArgument("image has no pixels".into()));
    }
    let n = maps.top_expectation.len() as f64;
    Ok(1.0 - maps.top_expectation.iter().sum::<f64>() / n)
}

pub fn image_uncertainty(maps: &PixelDistributionMaps) -> Result<ImageUncertainty> {
    Ok(ImageUncertainty {
        u_var: image_uncertainty_from_variance(maps)?,
        u_exp: image_uncertainty_from_expectation(maps)?,
    })
}

/// Observation-count confidence: Σ κₙ Sₙ / Σ κₙ with Sₙ the observation
/// mass of gaussian n; 0 where no gaussian contributes.
pub fn pixel_confidence_heuristic(
    state: &SemanticState,
    cloud: &GaussianCloud,
    cam: &CameraView,
) -> Result<Vec<f64>> {
    check_dims(state, cloud)?;
    Ok(pixel_confidence_heuristic_with(
        state,
        &Rasterizer::new(cloud, cam),
    ))
}

pub fn pixel_confidence_heuristic_with(state: &SemanticState, raster: &Rasterizer) -> Vec<f64> {
    let mass: Vec<f64> = (0..state.num_gaussians())
        .map(|n| state.observation_mass(n))
        .collect();
    raster.map_pixels(|x, y| {
        let (mut num, mut den) = (0.0, 0.0);
        raster.composite_pixel(x, y, |pc| {
            num += pc.kappa * mass[pc.gaussian_index];
            den += pc.kappa;
        });
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    })
}
