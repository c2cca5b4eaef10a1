//! Projection of 3D gaussians to image-plane splats, kernel evaluation,
//! depth-ordered alpha compositing and the tiled CPU rasterizer.
//!
//! Every renderer in the crate (color, fusion, semantic rasterization) goes
//! through [`Rasterizer::composite_pixel`], so all of them agree on which
//! gaussians touch a pixel and with what weight κ.

mod composite;
mod project;

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::scene_io::{CameraView, GaussianCloud};

pub(crate) use composite::Compositor;
pub use composite::{composite_weights, DepthSample, PixelContribution};
pub use project::{kernel_eval, project_splats, Splat2D};

/// Added to the diagonal of every projected covariance (pixels²).
pub const LOW_PASS_DILATION: f64 = 0.3;
/// Upper clamp on α′.
pub const MAX_ALPHA: f64 = 0.99;
/// Splats with α′ below this are skipped at a pixel.
pub const MIN_ALPHA: f64 = 1.0 / 255.0;
/// Compositing stops once transmittance drops below this.
pub const TRANSMITTANCE_CUTOFF: f64 = 1e-4;
/// Screen bounds are inflated by this factor before culling projected means.
pub const GUARD_BAND: f64 = 1.3;
pub const DEFAULT_TILE_SIZE: u32 = 16;

/// Slack added to influence radii so boundary pixels are never lost to rounding.
const RADIUS_SLACK: f64 = 1e-6;

/// Per-view rasterization state: depth-sorted splats binned into tiles.
#[derive(Debug, Clone)]
pub struct Rasterizer {
    width: u32,
    height: u32,
    tile_size: u32,
    tiles_x: u32,
    /// Visible splats sorted by (view depth, gaussian index).
    splats: Vec<Splat2D>,
    /// CSR layout: splats overlapping tile `t` are
    /// `tile_entries[tile_offsets[t]..tile_offsets[t + 1]]`, in depth order.
    tile_offsets: Vec<usize>,
    tile_entries: Vec<u32>,
}

impl Rasterizer {
    pub fn new(cloud: &GaussianCloud, cam: &CameraView) -> Self {
        Self::with_tile_size(cloud, cam, DEFAULT_TILE_SIZE)
    }

    pub fn with_tile_size(cloud: &GaussianCloud, cam: &CameraView, tile_size: u32) -> Self {
        let tile_size = tile_size.max(1);
        let mut splats = project_splats(cloud, cam);
        splats.sort_by(|a, b| {
            a.view_depth
                .total_cmp(&b.view_depth)
                .then(a.gaussian_index.cmp(&b.gaussian_index))
        });

        let (w, h) = (cam.width, cam.height);
        let tiles_x = w.div_ceil(tile_size);
        let tiles_y = h.div_ceil(tile_size);
        let num_tiles = (tiles_x * tiles_y) as usize;

        // Tile rectangle touched by each splat, or None when it cannot reach
        // any pixel.
        let rects: Vec<Option<[u32; 4]>> = splats
            .iter()
            .map(|s| {
                let r = s.influence_radius(MIN_ALPHA)? + RADIUS_SLACK;
                let x0 = (s.mean2d.x - r).ceil().max(0.0);
                let y0 = (s.mean2d.y - r).ceil().max(0.0);
                let x1 = (s.mean2d.x + r).floor().min(w as f64 - 1.0);
                let y1 = (s.mean2d.y + r).floor().min(h as f64 - 1.0);
                if x0 > x1 || y0 > y1 {
                    return None;
                }
                Some([
                    x0 as u32 / tile_size,
                    y0 as u32 / tile_size,
                    x1 as u32 / tile_size,
                    y1 as u32 / tile_size,
                ])
            })
            .collect();

        let mut counts = vec![0usize; num_tiles + 1];
        for rect in rects.iter().flatten() {
            for ty in rect[1]..=rect[3] {
                for tx in rect[0]..=rect[2] {
                    counts[(ty * tiles_x + tx) as usize + 1] += 1;
                }
            }
        }
        for t in 0..num_tiles {
            counts[t + 1] += counts[t];
        }
        let tile_offsets = counts;
        let mut cursor = tile_offsets.clone();
        let mut tile_entries = vec![0u32; tile_offsets[num_tiles]];
        for (k, rect) in rects.iter().enumerate() {
            let Some(rect) = rect else { continue };
            for ty in rect[1]..=rect[3] {
                for tx in rect[0]..=rect[2] {
                    let t = (ty * tiles_x + tx) as usize;
                    tile_entries[cursor[t]] = k as u32;
                    cursor[t] += 1;
                }
            }
        }

        Rasterizer {
            width: w,
            height: h,
            tile_size,
            tiles_x,
            splats,
            tile_offsets,
            tile_entries,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Visible splats in compositing order.
    pub fn splats(&self) -> &[Splat2D] {
        &self.splats
    }

    fn tile_splats(&self, x: u32, y: u32) -> &[u32] {
        let t = ((y / self.tile_size) * self.tiles_x + x / self.tile_size) as usize;
        &self.tile_entries[self.tile_offsets[t]..self.tile_offsets[t + 1]]
    }

    /// Composites pixel `(x, y)`, calling `visit` once per contributing
    /// gaussian in depth order. Returns the background weight.
    #[inline]
    pub fn composite_pixel(&self, x: u32, y: u32, mut visit: impl FnMut(PixelContribution)) -> f64 {
        let p = Vector2::new(x as f64, y as f64);
        let mut comp = Compositor::new();
        for &k in self.tile_splats(x, y) {
            let s = &self.splats[k as usize];
            if let Some(kappa) = comp.push(s.opacity * kernel_eval(s, p)) {
                visit(PixelContribution {
                    gaussian_index: s.gaussian_index,
                    kappa,
                });
                if comp.is_saturated() {
                    break;
                }
            }
        }
        comp.background()
    }

    /// Evaluates `shade` for every pixel in parallel and returns the results
    /// row-major. `shade` must be a pure function of its pixel.
    pub fn map_pixels<T, F>(&self, shade: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u32, u32) -> T + Sync,
    {
        let w = self.width;
        (0..self.pixel_count())
            .into_par_iter()
            .with_min_len(256)
            .map(|i| shade(i as u32 % w, i as u32 / w))
            .collect()
    }
}

/// Per-pixel contribution lists in CSR layout, row-major pixel order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionMap {
    pub width: u32,
    pub height: u32,
    offsets: Vec<usize>,
    entries: Vec<PixelContribution>,
    pub background: Vec<f64>,
}

impl ContributionMap {
    pub fn pixel(&self, x: u32, y: u32) -> &[PixelContribution] {
        let i = (y * self.width + x) as usize;
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn background_at(&self, x: u32, y: u32) -> f64 {
        self.background[(y * self.width + x) as usize]
    }

    pub fn total_entries(&self) -> usize {
        self.entries.len()
    }
}

/// Compositing weights for every pixel of the view.
pub fn pixel_contributions(cloud: &GaussianCloud, cam: &CameraView) -> ContributionMap {
    contributions_with(&Rasterizer::new(cloud, cam))
}

pub fn contributions_with(raster: &Rasterizer) -> ContributionMap {
    let per_pixel: Vec<(Vec<PixelContribution>, f64)> = raster.map_pixels(|x, y| {
        let mut list = Vec::new();
        let bg = raster.composite_pixel(x, y, |c| list.push(c));
        (list, bg)
    });
    let mut offsets = Vec::with_capacity(per_pixel.len() + 1);
    let mut entries = Vec::new();
    let mut background = Vec::with_capacity(per_pixel.len());
    offsets.push(0);
    for (list, bg) in per_pixel {
        entries.extend(list);
        offsets.push(entries.len());
        background.push(bg);
    }
    ContributionMap {
        width: raster.width,
        height: raster.height,
        offsets,
        entries,
        background,
    }
}

/// Interleaved RGB float image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl ColorImage {
    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        let i = 3 * (y * self.width + x) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// C = Σ cₙ κₙ + background_color · κ_background.
pub fn render_color(
    cloud: &GaussianCloud,
    cam: &CameraView,
    background_color: [f64; 3],
) -> ColorImage {
    render_color_with(&Rasterizer::new(cloud, cam), cloud, background_color)
}

pub fn render_color_with(
    raster: &Rasterizer,
    cloud: &GaussianCloud,
    background_color: [f64; 3],
) -> ColorImage {
    let pixels: Vec<[f64; 3]> = raster.map_pixels(|x, y| {
        let mut rgb = [0.0; 3];
        let bg = raster.composite_pixel(x, y, |c| {
            let col = cloud.base_colors[c.gaussian_index];
            for k in 0..3 {
                rgb[k] += col[k] * c.kappa;
            }
        });
        for k in 0..3 {
            rgb[k] += background_color[k] * bg;
        }
        rgb
    });
    ColorImage {
        width: raster.width,
        height: raster.height,
        data: pixels.into_iter().flatten().collect(),
    }
}
