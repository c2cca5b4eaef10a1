//! Fusion, semantic rasterization and renderer invariants on concrete
//! examples and random scenes.

mod common;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use proptest::prelude::*;
use splatsem::prob_render::{pixel_confidence_heuristic, rasterize_semantics};
use splatsem::scene_io::{GaussianCloud, LabelImage, IGNORE};
use splatsem::semantic_fusion::{fuse_dataset, fuse_view, SemanticState};
use splatsem::splat_raster::{pixel_contributions, render_color};
use splatsem::synthetic_oracle::render_labels_oracle;

#[test]
fn single_observation_adds_its_weight() {
    // 1×1 image, pixel at the splat center: κ equals the opacity.
    let cloud = common::blobs(&[([0.0, 0.0, 5.0], 0.2, 0.4)]);
    let cam = common::axis_camera(1, 1, 50.0);
    let mut state = SemanticState::init(1, 3, 0.001).unwrap();
    fuse_view(
        &mut state,
        &cloud,
        &cam,
        &LabelImage::new(1, 1, vec![2], 3).unwrap(),
    )
    .unwrap();
    assert!((state.row(0)[2] - 0.401).abs() < 1e-15);
    assert_eq!(state.row(0)[0], 0.001);
    assert!((state.observation_mass(0) - 0.403).abs() < 1e-15);
}

#[test]
fn ignored_pixels_leave_state_unchanged() {
    let s = common::scene(4, 30, 3, 16, 2);
    let mut state = SemanticState::init(30, 3, 0.001).unwrap();
    let before = state.clone();
    let labels = LabelImage::new(16, 16, vec![IGNORE; 256], 3).unwrap();
    fuse_view(&mut state, &s.cloud, &s.cameras[0], &labels).unwrap();
    assert_eq!(state, before);
    fuse_dataset(&mut state, &s.cloud, std::iter::empty()).unwrap();
    assert_eq!(state, before);
}

#[test]
fn increments_add_across_pixels() {
    let cloud = common::blobs(&[([0.0, 0.0, 5.0], 0.2, 0.6)]);
    let cam = common::axis_camera(2, 1, 40.0);
    let contrib = pixel_contributions(&cloud, &cam);
    let expected: f64 = (0..2).map(|x| contrib.pixel(x, 0)[0].kappa).sum();
    let mut state = SemanticState::init(1, 2, 0.001).unwrap();
    fuse_view(
        &mut state,
        &cloud,
        &cam,
        &LabelImage::new(2, 1, vec![1, 1], 2).unwrap(),
    )
    .unwrap();
    assert!((state.row(0)[1] - 0.001 - expected).abs() < 1e-15);
}

#[test]
fn mass_is_conserved_per_view() {
    let s = common::scene(11, 80, 4, 32, 5);
    for (k, cam) in s.cameras.iter().enumerate() {
        let labels = render_labels_oracle(&s, cam, 0.2, k as u64).unwrap();
        let mut state = SemanticState::init(80, 4, 0.001).unwrap();
        let before: f64 = state.concentrations().iter().sum();
        fuse_view(&mut state, &s.cloud, cam, &labels).unwrap();
        let gained = state.concentrations().iter().sum::<f64>() - before;
        let contrib = pixel_contributions(&s.cloud, cam);
        let mut expected = 0.0;
        for y in 0..cam.height {
            for x in 0..cam.width {
                if labels.get(x, y) != IGNORE {
                    expected += 1.0 - contrib.background_at(x, y);
                }
            }
        }
        assert!(
            (gained - expected).abs() < 1e-6,
            "view {k}: {gained} vs {expected}"
        );
    }
}

#[test]
fn view_order_does_not_matter() {
    let s = common::scene(12, 60, 4, 24, 6);
    let labels: Vec<_> = s
        .cameras
        .iter()
        .enumerate()
        .map(|(k, c)| render_labels_oracle(&s, c, 0.1, k as u64).unwrap())
        .collect();
    let mut forward = SemanticState::init(60, 4, 0.001).unwrap();
    let mut backward = forward.clone();
    fuse_dataset(&mut forward, &s.cloud, s.cameras.iter().zip(&labels)).unwrap();
    fuse_dataset(&mut backward, &s.cloud, s.cameras.iter().zip(&labels).rev()).unwrap();
    for (a, b) in forward
        .concentrations()
        .iter()
        .zip(backward.concentrations())
    {
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }
}

#[test]
fn concentrations_never_decrease() {
    let s = common::scene(13, 40, 3, 20, 8);
    let mut state = SemanticState::init(40, 3, 0.001).unwrap();
    for (k, cam) in s.cameras.iter().enumerate() {
        let before = state.clone();
        let labels = render_labels_oracle(&s, cam, 0.3, k as u64).unwrap();
        fuse_view(&mut state, &s.cloud, cam, &labels).unwrap();
        for (a, b) in state.concentrations().iter().zip(before.concentrations()) {
            assert!(a >= b);
        }
        for n in 0..40 {
            assert!(state.observation_mass(n) >= before.observation_mass(n));
        }
    }
}

#[test]
fn empty_pixel_shows_background_distribution() {
    let cloud = common::blobs(&[([0.0, 0.0, 5.0], 0.05, 0.9)]);
    let cam = common::axis_camera(21, 21, 30.0);
    let state = SemanticState::init_with_background(1, 2, 0.001, 0.001).unwrap();
    let maps = rasterize_semantics(&state, &cloud, &cam).unwrap();
    // Corner pixel: no splat. Var of Dirichlet(0.001, 0.001) = 0.25 / 1.002.
    assert_eq!(maps.background_weight[0], 1.0);
    assert_eq!(maps.expectation_at(0, 0), &[0.5, 0.5]);
    for v in maps.variance_at(0, 0) {
        assert!((v - 0.25 / 1.002).abs() < 1e-15);
    }
}

#[test]
fn confident_splat_dominates_its_center_pixel() {
    // κ = 0.99 (clamped), E_n ≈ (1, 0), uniform background:
    // E = 0.99·(1, 0) + 0.01·(0.5, 0.5) = (0.995, 0.005).
    let cloud = common::blobs(&[([0.0, 0.0, 5.0], 0.2, 1.0 - 1e-9)]);
    let cam = common::axis_camera(1, 1, 50.0);
    let state =
        SemanticState::from_parts(1, 2, 1e-12, vec![0.001, 0.001], vec![1e9, 1e-12]).unwrap();
    let maps = rasterize_semantics(&state, &cloud, &cam).unwrap();
    let e = maps.expectation_at(0, 0);
    assert!(
        (e[0] - 0.995).abs() < 1e-9 && (e[1] - 0.005).abs() < 1e-9,
        "{e:?}"
    );
}

#[test]
fn heuristic_confidence_closed_forms() {
    // Two splats at one pixel: κ = 0.5 then 0.5·0.5 = 0.25, masses 10 and 4.
    let cloud = common::blobs(&[([0.0, 0.0, 4.0], 0.2, 0.5), ([0.0, 0.0, 6.0], 0.2, 0.5)]);
    let cam = common::axis_camera(1, 1, 50.0);
    let mut state = SemanticState::init(2, 2, 0.5).unwrap();
    state.add_observation(0, 0, 9.0).unwrap();
    state.add_observation(1, 1, 3.0).unwrap();
    let h = pixel_confidence_heuristic(&state, &cloud, &cam).unwrap();
    assert!((h[0] - 8.0).abs() < 1e-12);

    let one = common::blobs(&[([0.0, 0.0, 4.0], 0.2, 0.5)]);
    let mut state = SemanticState::init(1, 2, 0.5).unwrap();
    state.add_observation(0, 0, 9.0).unwrap();
    assert!((pixel_confidence_heuristic(&state, &one, &cam).unwrap()[0] - 10.0).abs() < 1e-12);

    let far = common::axis_camera(64, 64, 50.0);
    let h = pixel_confidence_heuristic(&state, &one, &far).unwrap();
    assert_eq!(h[0], 0.0);
}

#[test]
fn fresh_prior_renders_uniform_with_known_u_exp() {
    let s = common::scene(2, 50, 5, 32, 1);
    let state = SemanticState::init(50, 5, 0.001).unwrap();
    let maps = rasterize_semantics(&state, &s.cloud, &s.cameras[0]).unwrap();
    assert!(maps.expectation.iter().all(|&e| (e - 0.2).abs() < 1e-12));
    let u = splatsem::prob_render::image_uncertainty(&maps).unwrap();
    assert!((u.u_exp - 0.8).abs() < 1e-12);
}

#[test]
fn far_held_out_view_is_more_uncertain() {
    let s = common::scene(0, 150, 5, 64, 30);
    let mut state = SemanticState::init(150, 5, 0.001).unwrap();
    for k in 0..10 {
        let labels = render_labels_oracle(&s, &s.cameras[k], 0.0, 0).unwrap();
        fuse_view(&mut state, &s.cloud, &s.cameras[k], &labels).unwrap();
    }
    let u = |k: usize| {
        let maps = rasterize_semantics(&state, &s.cloud, &s.cameras[k]).unwrap();
        splatsem::prob_render::image_uncertainty(&maps)
            .unwrap()
            .u_var
    };
    assert!(u(20) > u(5), "held-out {} vs training {}", u(20), u(5));
}

fn permuted(cloud: &GaussianCloud, order: &[usize]) -> GaussianCloud {
    GaussianCloud::new(
        order.iter().map(|&i| cloud.positions[i]).collect(),
        order.iter().map(|&i| cloud.rotations[i]).collect(),
        order.iter().map(|&i| cloud.scales[i]).collect(),
        order.iter().map(|&i| cloud.opacities[i]).collect(),
        order.iter().map(|&i| cloud.base_colors[i]).collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn weights_and_background_sum_to_one(seed in 0u64..10_000, n in 1usize..120) {
        let s = common::scene(seed, n, 3, 24, 2);
        for cam in &s.cameras {
            let c = pixel_contributions(&s.cloud, cam);
            for y in 0..cam.height {
                for x in 0..cam.width {
                    let total: f64 = c.pixel(x, y).iter().map(|p| p.kappa).sum::<f64>() + c.background_at(x, y);
                    prop_assert!((total - 1.0).abs() < 1e-6);
                    prop_assert!(c.pixel(x, y).iter().all(|p| p.kappa > 0.0 && p.kappa < 1.0));
                }
            }
        }
    }

    #[test]
    fn shuffling_gaussians_changes_nothing(seed in 0u64..10_000, shuffle in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let s = common::scene(seed, 60, 3, 24, 2);
        let mut order: Vec<usize> = (0..60).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle));
        let other = permuted(&s.cloud, &order);
        for cam in &s.cameras {
            let a = render_color(&s.cloud, cam, [0.1, 0.2, 0.3]);
            let b = render_color(&other, cam, [0.1, 0.2, 0.3]);
            for (p, q) in a.data.iter().zip(&b.data) {
                prop_assert!((p - q).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn rigid_motion_of_scene_and_camera_changes_nothing(
        seed in 0u64..10_000,
        axis in prop::array::uniform3(-1.0f64..1.0),
        angle in -3.0f64..3.0,
        shift in prop::array::uniform3(-50.0f64..50.0),
    ) {
        let axis = Vector3::from(axis);
        prop_assume!(axis.norm() > 1e-3);
        let iso = Isometry3::from_parts(
            Translation3::new(shift[0], shift[1], shift[2]),
            UnitQuaternion::from_scaled_axis(axis.normalize() * angle),
        );
        let s = common::scene(seed, 60, 3, 24, 2);
        let moved = s.cloud.transformed(&iso);
        for cam in &s.cameras {
            let a = render_color(&s.cloud, cam, [0.0; 3]);
            let b = render_color(&moved, &cam.transformed(&iso), [0.0; 3]);
            for (p, q) in a.data.iter().zip(&b.data) {
                prop_assert!((p - q).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn rendered_distributions_stay_on_simplex(seed in 0u64..10_000) {
        let s = common::scene(seed, 40, 4, 16, 1);
        let state = common::random_state(seed, 40, 4);
        let maps = rasterize_semantics(&state, &s.cloud, &s.cameras[0]).unwrap();
        let max_var = (0..40)
            .map(|n| state.moments(n).variance)
            .chain(std::iter::once(state.background_moments().variance))
            .fold(vec![0.0; 4], |m, v| m.iter().zip(&v).map(|(a, b)| f64::max(*a, *b)).collect());
        for i in 0..maps.pixel_count() {
            let e = &maps.expectation[4 * i..4 * i + 4];
            let v = &maps.variance[4 * i..4 * i + 4];
            prop_assert!((e.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(e.iter().all(|&x| x >= 0.0));
            for c in 0..4 {
                prop_assert!(v[c] >= 0.0 && v[c] <= max_var[c] + 1e-15);
            }
        }
    }
}
