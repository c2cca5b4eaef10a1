//! Segmentation metrics, PSNR and sparsification curves.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scene_io::{LabelImage, IGNORE};

pub const DEFAULT_BINS: usize = 20;
/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// C × C pixel counts; rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|c| self.get(c, c)).sum()
    }

    /// Adds another matrix of the same size.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::Dimension(format!(
                "cannot merge {}-class and {}-class confusion matrices",
                self.num_classes, other.num_classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Rows as nested vectors, for reports.
    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.num_classes)
            .map(<[u64]>::to_vec)
            .collect()
    }
}

/// Accumulates predicted categories against ground truth. Ignored ground
/// truth pixels and pixels whose mask is false are skipped.
pub fn confusion(
    pred: &[u8],
    gt: &LabelImage,
    num_classes: usize,
    mask: Option<&[bool]>,
) -> Result<ConfusionMatrix> {
    let n = gt.category_ids.len();
    if pred.len() != n {
        return Err(Error::Dimension(format!(
            "prediction has {} pixels, ground truth {n}",
            pred.len()
        )));
    }
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::Dimension(format!(
                "mask has {} pixels, ground truth {n}",
                m.len()
            )));
        }
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    for i in 0..n {
        let t = gt.category_ids[i];
        if t == IGNORE || mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let p = pred[i];
        if t as usize >= num_classes || p as usize >= num_classes {
            return Err(Error::Dimension(format!(
                "pixel {i}: category {} outside {num_classes} classes",
                t.max(p)
            )));
        }
        cm.counts[t as usize * num_classes + p as usize] += 1;
    }
    Ok(cm)
}

/// Per-class IoU (`None` for classes absent from both truth and prediction),
/// their mean, and overall accuracy. All in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentationScores {
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub accuracy: f64,
}

pub fn miou_accuracy(cm: &ConfusionMatrix) -> Result<SegmentationScores> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("confusion matrix is empty".into()));
    }
    let c = cm.num_classes;
    let per_class_iou: Vec<Option<f64>> = (0..c)
        .map(|k| {
            let tp = cm.get(k, k);
            let fn_: u64 = (0..c).filter(|&j| j != k).map(|j| cm.get(k, j)).sum();
            let fp: u64 = (0..c).filter(|&j| j != k).map(|j| cm.get(j, k)).sum();
            let denom = tp + fp + fn_;
            (denom > 0).then(|| tp as f64 / denom as f64)
        })
        .collect();
    let present: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
    let miou = present.iter().sum::<f64>() / present.len() as f64;
    Ok(SegmentationScores {
        per_class_iou,
        miou,
        accuracy: cm.trace() as f64 / total as f64,
    })
}

/// 10·log10(1 / MSE) for images with values in [0, 1], capped at 99 dB.
pub fn psnr(rendered: &[f64], reference: &[f64]) -> Result<f64> {
    if rendered.len() != reference.len() {
        return Err(Error::Dimension(format!(
            "images differ in size ({} vs {} values)",
            rendered.len(),
            reference.len()
        )));
    }
    if rendered.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot compute PSNR of an empty image".into(),
        ));
    }
    let mse = rendered
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / rendered.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// What a sparsification curve removes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Ordering {
    ByVariance,
    ByExpectation,
    ByHeuristic,
    Oracle,
    Random,
}

impl Ordering {
    pub const ALL: [Ordering; 5] = [
        Ordering::ByVariance,
        Ordering::ByExpectation,
        Ordering::ByHeuristic,
        Ordering::Oracle,
        Ordering::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ordering::ByVariance => "by-variance",
            Ordering::ByExpectation => "by-expectation",
            Ordering::ByHeuristic => "by-heuristic",
            Ordering::Oracle => "oracle",
            Ordering::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.name() == s || o.name().trim_start_matches("by-") == s)
    }
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsificationCurve {
    pub ordering: Ordering,
    pub fractions_removed: Vec<f64>,
    pub metric_values: Vec<f64>,
}

impl SparsificationCurve {
    /// Trapezoidal area under the metric over the removed fraction.
    pub fn area_under_curve(&self) -> f64 {
        self.fractions_removed
            .windows(2)
            .zip(self.metric_values.windows(2))
            .map(|(f, m)| (f[1] - f[0]) * 0.5 * (m[0] + m[1]))
            .sum()
    }
}

/// Indices sorted by uncertainty descending; ties keep index order.
fn most_uncertain_first(uncertainty: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..uncertainty.len()).collect();
    order.sort_by(|&a, &b| uncertainty[b].total_cmp(&uncertainty[a]));
    order
}

/// Removes `order` front-first in `num_bins` equal-count bins (remainder in
/// the last bin) and reports the mean metric of what remains after each of
/// the first `num_bins` stages.
fn curve_from_order(
    ordering: Ordering,
    order: &[usize],
    values: &[f64],
    num_bins: usize,
) -> Result<SparsificationCurve> {
    let n = values.len();
    if num_bins == 0 {
        return Err(Error::InvalidArgument(
            "need at least one sparsification bin".into(),
        ));
    }
    if n < num_bins {
        return Err(Error::InvalidArgument(format!(
            "{n} units cannot fill {num_bins} bins"
        )));
    }
    let bin = n / num_bins;
    // Suffix sums in removal order give the remaining mean in O(1) per bin.
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + values[order[k]];
    }
    let mut fractions_removed = Vec::with_capacity(num_bins);
    let mut metric_values = Vec::with_capacity(num_bins);
    for k in 0..num_bins {
        let removed = k * bin;
        fractions_removed.push(k as f64 / num_bins as f64);
        metric_values.push(suffix[removed] / (n - removed) as f64);
    }
    Ok(SparsificationCurve {
        ordering,
        fractions_removed,
        metric_values,
    })
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{a} uncertainties for {b} units")));
    }
    Ok(())
}

/// Pixel-level curve: accuracy of the pixels left after removing the most
/// uncertain bins. `errors[i]` is true where the prediction is wrong.
pub fn sparsify_pixels(
    uncertainty: &[f64],
    errors: &[bool],
    num_bins: usize,
    ordering: Ordering,
) -> Result<SparsificationCurve> {
    check_len(uncertainty.len(), errors.len())?;
    if num_bins < 2 {
        return Err(Error::InvalidArgument(
            "pixel sparsification needs at least 2 bins".into(),
        ));
    }
    let correct: Vec<f64> = errors.iter().map(|&e| if e { 0.0 } else { 1.0 }).collect();
    curve_from_order(
        ordering,
        &most_uncertain_first(uncertainty),
        &correct,
        num_bins,
    )
}

/// The best achievable pixel curve: errors removed first.
pub fn oracle_pixel_curve(errors: &[bool], num_bins: usize) -> Result<SparsificationCurve> {
    let u: Vec<f64> = errors.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect();
    sparsify_pixels(&u, errors, num_bins, Ordering::Oracle)
}

/// Pixels removed in a seeded random order.
pub fn random_pixel_curve(
    errors: &[bool],
    num_bins: usize,
    seed: u64,
) -> Result<SparsificationCurve> {
    if num_bins < 2 {
        return Err(Error::InvalidArgument(
            "pixel sparsification needs at least 2 bins".into(),
        ));
    }
    let correct: Vec<f64> = errors.iter().map(|&e| if e { 0.0 } else { 1.0 }).collect();
    curve_from_order(
        Ordering::Random,
        &random_order(errors.len(), seed),
        &correct,
        num_bins,
    )
}

fn random_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Image-level curve: mean PSNR of the images left after removing the most
/// uncertain bins.
pub fn sparsify_images(
    uncertainty: &[f64],
    psnr: &[f64],
    num_bins: usize,
    ordering: Ordering,
) -> Result<SparsificationCurve> {
    check_len(uncertainty.len(), psnr.len())?;
    curve_from_order(ordering, &most_uncertain_first(uncertainty), psnr, num_bins)
}

/// Images removed lowest-PSNR first.
pub fn oracle_image_curve(psnr: &[f64], num_bins: usize) -> Result<SparsificationCurve> {
    let u: Vec<f64> = psnr.iter().map(|p| -p).collect();
    sparsify_images(&u, psnr, num_bins, Ordering::Oracle)
}

pub fn random_image_curve(psnr: &[f64], num_bins: usize, seed: u64) -> Result<SparsificationCurve> {
    curve_from_order(
        Ordering::Random,
        &random_order(psnr.len(), seed),
        psnr,
        num_bins,
    )
}

/// Writes curves sharing one fraction axis as CSV:
/// `fraction_removed,<ordering>,...`.
pub fn curves_to_csv(curves: &[SparsificationCurve]) -> Result<String> {
    let Some(first) = curves.first() else {
        return Err(Error::InvalidArgument("no curves to write".into()));
    };
    if curves
        .iter()
        .any(|c| c.fractions_removed != first.fractions_removed)
    {
        return Err(Error::Dimension("curves use different bin layouts".into()));
    }
    let mut out = String::from("fraction_removed");
    for c in curves {
        out.push(',');
        out.push_str(c.ordering.name());
    }
    out.push('\n');
    for (k, f) in first.fractions_removed.iter().enumerate() {
        out.push_str(&format!("{f}"));
        for c in curves {
            out.push_str(&format!(",{}", c.metric_values[k]));
        }
        out.push('\n');
    }
    Ok(out)
}
