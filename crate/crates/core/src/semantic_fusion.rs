//! Per-gaussian Dirichlet belief over categories and its kernel-weighted
//! update from labeled views.
//!
//! Each pixel with category `c` adds its compositing weight κ to
//! concentration `c` of every gaussian that contributes to it. The update is
//! un-normalized and additive, so views can be fused in any order.

use crate::error::{Error, Result};
use crate::scene_io::{CameraView, GaussianCloud, LabelImage, IGNORE};
use crate::splat_raster::{PixelContribution, Rasterizer};

/// Uninformative prior concentration applied to every gaussian and class.
pub const DEFAULT_PRIOR: f64 = 0.001;
/// Per-class concentration of the background distribution.
pub const DEFAULT_BACKGROUND: f64 = 0.001;

/// Rows of this many pixels are composited in parallel before their
/// increments are applied; the value only bounds memory.
const FUSION_BAND_ROWS: u32 = 16;

/// Fused Dirichlet concentrations, N × C row-major, plus the prior value and
/// the background distribution's concentrations.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticState {
    num_gaussians: usize,
    num_classes: usize,
    prior_value: f64,
    background: Vec<f64>,
    concentrations: Vec<f64>,
}

/// Mean and per-class variance of a Dirichlet distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletMoments {
    pub expectation: Vec<f64>,
    pub variance: Vec<f64>,
}

/// E_c = α_c / Σα and Var_c = E_c (1 − E_c) / (1 + Σα).
///
/// The variance is evaluated as α_c (Σα − α_c) / ((Σα)² (1 + Σα)), which is
/// the same expression with a single rounding for integer concentrations.
pub fn dirichlet_moments(concentration: &[f64]) -> Result<DirichletMoments> {
    if let Some((i, a)) = concentration
        .iter()
        .enumerate()
        .find(|(_, a)| !(**a > 0.0 && a.is_finite()))
    {
        return Err(Error::InvalidArgument(format!(
            "Dirichlet concentration {i} must be positive and finite, got {a}"
        )));
    }
    Ok(moments_unchecked(concentration))
}

fn moments_unchecked(concentration: &[f64]) -> DirichletMoments {
    let total: f64 = concentration.iter().sum();
    let expectation: Vec<f64> = concentration.iter().map(|a| a / total).collect();
    let scale = total * total * (1.0 + total);
    let variance = concentration
        .iter()
        .map(|a| a * (total - a) / scale)
        .collect();
    DirichletMoments {
        expectation,
        variance,
    }
}

impl SemanticState {
    /// Every concentration, including the background's, set to `prior_value`.
    pub fn init(num_gaussians: usize, num_classes: usize, prior_value: f64) -> Result<Self> {
        Self::init_with_background(num_gaussians, num_classes, prior_value, prior_value)
    }

    pub fn init_with_background(
        num_gaussians: usize,
        num_classes: usize,
        prior_value: f64,
        background_value: f64,
    ) -> Result<Self> {
        if num_gaussians == 0 {
            return Err(Error::EmptyScene);
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if !(prior_value > 0.0 && prior_value.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "prior must be positive, got {prior_value}"
            )));
        }
        if !(background_value > 0.0 && background_value.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "background concentration must be positive, got {background_value}"
            )));
        }
        Ok(SemanticState {
            num_gaussians,
            num_classes,
            prior_value,
            background: vec![background_value; num_classes],
            concentrations: vec![prior_value; num_gaussians * num_classes],
        })
    }

    /// Assembles a state from raw parts and checks its invariants.
    pub fn from_parts(
        num_gaussians: usize,
        num_classes: usize,
        prior_value: f64,
        background: Vec<f64>,
        concentrations: Vec<f64>,
    ) -> Result<Self> {
        let state = SemanticState {
            num_gaussians,
            num_classes,
            prior_value,
            background,
            concentrations,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_gaussians == 0 {
            return Err(Error::EmptyScene);
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if !(self.prior_value > 0.0 && self.prior_value.is_finite()) {
            return Err(Error::Format(format!(
                "prior {} is not positive",
                self.prior_value
            )));
        }
        if self.background.len() != self.num_classes
            || self.concentrations.len() != self.num_gaussians * self.num_classes
        {
            return Err(Error::Dimension(format!(
                "state buffers do not match {} x {}",
                self.num_gaussians, self.num_classes
            )));
        }
        if let Some(c) = self
            .background
            .iter()
            .position(|b| !(*b > 0.0 && b.is_finite()))
        {
            return Err(Error::Data {
                index: c,
                message: "background concentration must be positive and finite".into(),
            });
        }
        if let Some(i) = self
            .concentrations
            .iter()
            .position(|a| !(a.is_finite() && *a >= self.prior_value))
        {
            return Err(Error::Data {
                index: i / self.num_classes,
                message: format!(
                    "concentration {} is below the prior floor or non-finite",
                    self.concentrations[i]
                ),
            });
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn empty_for_test(num_classes: usize) -> Self {
        SemanticState {
            num_gaussians: 0,
            num_classes,
            prior_value: DEFAULT_PRIOR,
            background: vec![DEFAULT_BACKGROUND; num_classes],
            concentrations: Vec::new(),
        }
    }

    pub fn num_gaussians(&self) -> usize {
        self.num_gaussians
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn prior_value(&self) -> f64 {
        self.prior_value
    }

    pub fn background(&self) -> &[f64] {
        &self.background
    }

    pub fn concentrations(&self) -> &[f64] {
        &self.concentrations
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.concentrations[n * self.num_classes..(n + 1) * self.num_classes]
    }

    /// Σ_c α_n^c: the Dirichlet normalization constant of gaussian `n`.
    pub fn observation_mass(&self, n: usize) -> f64 {
        self.row(n).iter().sum()
    }

    pub fn moments(&self, n: usize) -> DirichletMoments {
        moments_unchecked(self.row(n))
    }

    pub fn background_moments(&self) -> DirichletMoments {
        moments_unchecked(&self.background)
    }

    /// Most likely category of gaussian `n`; ties go to the lowest index.
    pub fn argmax(&self, n: usize) -> usize {
        argmax(self.row(n))
    }

    /// Adds `amount` to α_n^c. Negative or non-finite amounts are rejected.
    pub fn add_observation(&mut self, n: usize, category: usize, amount: f64) -> Result<()> {
        if n >= self.num_gaussians || category >= self.num_classes {
            return Err(Error::Dimension(format!(
                "observation ({n}, {category}) outside {} x {}",
                self.num_gaussians, self.num_classes
            )));
        }
        if !(amount >= 0.0 && amount.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "observation weight {amount} is invalid"
            )));
        }
        self.concentrations[n * self.num_classes + category] += amount;
        Ok(())
    }

    fn check_scene(&self, cloud: &GaussianCloud) -> Result<()> {
        if cloud.len() != self.num_gaussians {
            return Err(Error::Dimension(format!(
                "state has {} gaussians but scene has {}",
                self.num_gaussians,
                cloud.len()
            )));
        }
        Ok(())
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Fuses one labeled view into `state`.
pub fn fuse_view(
    state: &mut SemanticState,
    cloud: &GaussianCloud,
    cam: &CameraView,
    labels: &LabelImage,
) -> Result<()> {
    state.check_scene(cloud)?;
    labels.check_matches(cam)?;
    fuse_view_with(state, &Rasterizer::new(cloud, cam), labels)
}

/// Fuses one view using a prepared rasterizer.
///
/// Compositing runs in parallel over row bands; the increments are then
/// applied serially in row-major pixel order, so the result is bit-identical
/// for any thread count.
pub fn fuse_view_with(
    state: &mut SemanticState,
    raster: &Rasterizer,
    labels: &LabelImage,
) -> Result<()> {
    if labels.width != raster.width() || labels.height != raster.height() {
        return Err(Error::Dimension(format!(
            "label image is {}x{} but view is {}x{}",
            labels.width,
            labels.height,
            raster.width(),
            raster.height()
        )));
    }
    if let Some(&bad) = labels
        .category_ids
        .iter()
        .find(|&&l| l != IGNORE && l as usize >= state.num_classes)
    {
        return Err(Error::Dimension(format!(
            "label {bad} exceeds the state's {} classes",
            state.num_classes
        )));
    }
    if let Some(s) = raster
        .splats()
        .iter()
        .find(|s| s.gaussian_index >= state.num_gaussians)
    {
        return Err(Error::Dimension(format!(
            "view references gaussian {} but state has {}",
            s.gaussian_index, state.num_gaussians
        )));
    }

    use rayon::prelude::*;
    let (w, h) = (raster.width(), raster.height());
    let c = state.num_classes;
    let mut y0 = 0;
    while y0 < h {
        let y1 = (y0 + FUSION_BAND_ROWS).min(h);
        let band: Vec<Vec<PixelContribution>> = (y0 * w..y1 * w)
            .into_par_iter()
            .map(|i| {
                let mut list = Vec::new();
                if labels.category_ids[i as usize] != IGNORE {
                    raster.composite_pixel(i % w, i / w, |pc| list.push(pc));
                }
                list
            })
            .collect();
        for (offset, list) in band.into_iter().enumerate() {
            let label = labels.category_ids[(y0 * w) as usize + offset];
            for pc in list {
                state.concentrations[pc.gaussian_index * c + label as usize] += pc.kappa;
            }
        }
        y0 = y1;
    }
    Ok(())
}

/// Fuses every (camera, labels) pair in order.
pub fn fuse_dataset<'a>(
    state: &mut SemanticState,
    cloud: &GaussianCloud,
    views: impl IntoIterator<Item = (&'a CameraView, &'a LabelImage)>,
) -> Result<()> {
    for (cam, labels) in views {
        fuse_view(state, cloud, cam, labels)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn init_fills_prior() {
        let s = SemanticState::init(3, 4, 0.001).unwrap();
        assert_eq!(s.concentrations(), &[0.001; 12]);
        assert_eq!(s.background(), &[0.001; 4]);
        let m = s.moments(1);
        assert!(m.expectation.iter().all(|e| (e - 0.25).abs() < 1e-15));
    }

    #[test]
    fn init_rejects_bad_arguments() {
        assert!(SemanticState::init(3, 4, 0.0).is_err());
        assert!(SemanticState::init(3, 1, 0.001).is_err());
        assert!(SemanticState::init(0, 4, 0.001).is_err());
        assert!(SemanticState::init_with_background(3, 4, 0.001, -1.0).is_err());
    }

    #[test]
    fn moments_closed_forms() {
        let m = dirichlet_moments(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(m.expectation, vec![0.25; 4]);
        assert_eq!(m.variance, vec![0.0375; 4]);

        let m = dirichlet_moments(&[2.0, 1.0]).unwrap();
        assert!((m.expectation[0] - 2.0 / 3.0).abs() < 1e-16);
        assert_eq!(m.variance, vec![1.0 / 18.0; 2]);

        let m = dirichlet_moments(&[1000.0, 1.0]).unwrap();
        assert!(m.variance[0] < 1e-3);
    }

    #[test]
    fn moments_reject_non_positive() {
        assert!(dirichlet_moments(&[1.0, 0.0]).is_err());
        assert!(dirichlet_moments(&[1.0, -2.0]).is_err());
        assert!(dirichlet_moments(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn observation_mass_accumulates() {
        let mut s = SemanticState::init(2, 4, 0.001).unwrap();
        assert!((s.observation_mass(0) - 0.004).abs() < 1e-15);
        s.add_observation(0, 2, 0.4).unwrap();
        assert!((s.observation_mass(0) - 0.404).abs() < 1e-15);
        assert!((s.row(0)[2] - 0.401).abs() < 1e-15);
        assert!(s.add_observation(0, 2, -0.1).is_err());
        assert!(s.add_observation(2, 0, 0.1).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[0.3, 0.3]), 0);
    }

    #[test]
    fn validate_enforces_prior_floor() {
        assert!(SemanticState::from_parts(1, 2, 0.5, vec![0.1, 0.1], vec![0.4, 1.0]).is_err());
        assert!(SemanticState::from_parts(1, 2, 0.5, vec![0.0, 0.1], vec![0.5, 1.0]).is_err());
        assert!(SemanticState::from_parts(1, 2, 0.5, vec![0.1, 0.1], vec![0.5, 1.0]).is_ok());
    }

    proptest! {
        #[test]
        fn moments_sum_and_bounds(alpha in proptest::collection::vec(1e-6f64..1e4, 2..30)) {
            let m = dirichlet_moments(&alpha).unwrap();
            let s: f64 = m.expectation.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            for v in &m.variance {
                prop_assert!(*v >= 0.0 && *v <= 0.25);
            }
        }
    }
}
