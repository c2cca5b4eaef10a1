use super::{MAX_ALPHA, MIN_ALPHA, TRANSMITTANCE_CUTOFF};
use crate::error::{Error, Result};

/// A gaussian's total compositing weight at one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelContribution {
    pub gaussian_index: usize,
    pub kappa: f64,
}

/// One splat's opacity-modulated kernel value at a pixel, before compositing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthSample {
    pub gaussian_index: usize,
    pub view_depth: f64,
    pub alpha: f64,
}

/// Front-to-back accumulator shared by every compositing path.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Compositor {
    transmittance: f64,
}

impl Compositor {
    pub(crate) fn new() -> Self {
        Compositor { transmittance: 1.0 }
    }

    pub(crate) fn is_saturated(&self) -> bool {
        self.transmittance < TRANSMITTANCE_CUTOFF
    }

    /// Feeds the next splat's α′ and returns its weight κ, or `None` when the
    /// splat is skipped as too faint.
    #[inline]
    pub(crate) fn push(&mut self, alpha: f64) -> Option<f64> {
        let alpha = alpha.min(MAX_ALPHA);
        if alpha < MIN_ALPHA {
            return None;
        }
        let kappa = alpha * self.transmittance;
        self.transmittance *= 1.0 - alpha;
        Some(kappa)
    }

    /// Weight left for the background: the final transmittance.
    pub(crate) fn background(&self) -> f64 {
        self.transmittance
    }
}

/// Composites depth-ascending samples into per-gaussian weights and the
/// background weight. Weights plus background sum to one.
pub fn composite_weights(samples: &[DepthSample]) -> Result<(Vec<PixelContribution>, f64)> {
    if let Some(w) = samples
        .windows(2)
        .find(|w| w[1].view_depth < w[0].view_depth)
    {
        return Err(Error::Contract(format!(
            "samples not sorted by depth: {} after {}",
            w[1].view_depth, w[0].view_depth
        )));
    }
    let mut comp = Compositor::new();
    let mut out = Vec::new();
    for s in samples {
        if let Some(kappa) = comp.push(s.alpha) {
            out.push(PixelContribution {
                gaussian_index: s.gaussian_index,
                kappa,
            });
        }
        if comp.is_saturated() {
            break;
        }
    }
    Ok((out, comp.background()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn samples(alphas: &[f64]) -> Vec<DepthSample> {
        alphas
            .iter()
            .enumerate()
            .map(|(i, &alpha)| DepthSample {
                gaussian_index: i,
                view_depth: i as f64,
                alpha,
            })
            .collect()
    }

    #[test]
    fn two_halves() {
        let (c, bg) = composite_weights(&samples(&[0.5, 0.5])).unwrap();
        assert_eq!(
            c.iter().map(|c| c.kappa).collect::<Vec<_>>(),
            vec![0.5, 0.25]
        );
        assert_eq!(bg, 0.25);
    }

    #[test]
    fn empty_is_all_background() {
        let (c, bg) = composite_weights(&[]).unwrap();
        assert!(c.is_empty());
        assert_eq!(bg, 1.0);
    }

    #[test]
    fn opaque_is_clamped() {
        let (c, bg) = composite_weights(&samples(&[1.0])).unwrap();
        assert_eq!(c[0].kappa, 0.99);
        assert!((bg - 0.01).abs() < 1e-15);
    }

    #[test]
    fn faint_samples_are_skipped() {
        let (c, bg) = composite_weights(&samples(&[0.003, 0.5])).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].gaussian_index, 1);
        assert_eq!(bg, 0.5);
    }

    #[test]
    fn stops_once_transmittance_is_exhausted() {
        // After two 0.99 layers T = 1e-4 (not below the cutoff), the third
        // drives it under and nothing after it contributes.
        let (c, _) = composite_weights(&samples(&[0.99, 0.99, 0.99, 0.99, 0.5])).unwrap();
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn unsorted_input_is_contract_violation() {
        let mut s = samples(&[0.5, 0.5]);
        s[1].view_depth = -1.0;
        assert!(matches!(composite_weights(&s), Err(Error::Contract(_))));
    }

    proptest! {
        #[test]
        fn weights_and_background_sum_to_one(alphas in proptest::collection::vec(0.0f64..1.0, 0..40)) {
            let (c, bg) = composite_weights(&samples(&alphas)).unwrap();
            let total: f64 = c.iter().map(|c| c.kappa).sum::<f64>() + bg;
            prop_assert!((total - 1.0).abs() < 1e-6);
            for x in &c {
                prop_assert!(x.kappa >= 0.0 && x.kappa <= 1.0);
            }
            prop_assert!(bg >= 0.0);
        }
    }
}
