//! Loaders and writers against checked-in fixture files.

mod common;

use std::path::Path;

use proptest::prelude::*;
use splatsem::scene_io::{
    load_camera_records, load_cameras, load_gaussian_ply, load_label_image, load_semantic_state,
    read_gaussian_ply, read_pfm, save_label_image, save_semantic_state, write_pfm, LabelImage,
    IGNORE,
};
use splatsem::semantic_fusion::SemanticState;
use splatsem::synthetic_oracle::generate_scene;
use splatsem::Error;

#[test]
fn three_gaussian_file_loads_hand_activations() {
    let cloud = load_gaussian_ply(common::fixture("three_gaussians.ply")).unwrap();
    assert_eq!(cloud.len(), 3);
    assert_eq!(cloud.opacities[0], 0.5);
    assert!((cloud.opacities[1] - 0.880_797_077_977_882_3).abs() < 1e-12);
    assert!((cloud.opacities[2] - 0.047_425_873_177_566_78).abs() < 1e-12);
    assert!((cloud.scales[1].z - 0.367_879_441_171_442_3).abs() < 1e-12);
    assert!((cloud.scales[2].x - 0.05).abs() < 1e-8);
    assert!((cloud.base_colors[1][2] - 0.782_094_791_8).abs() < 1e-12);
    assert_eq!(cloud.base_colors[2], [0.0; 3]);
    assert_eq!(cloud.positions[2], nalgebra::Point3::new(0.0, 0.0, -2.0));
    for q in &cloud.rotations {
        assert!((q.quaternion().norm() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn loading_is_deterministic() {
    let bytes = std::fs::read(common::fixture("three_gaussians.ply")).unwrap();
    let a = read_gaussian_ply(&bytes[..], Path::new("a")).unwrap();
    let b = read_gaussian_ply(&bytes[..], Path::new("b")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn large_camera_file_keeps_order() {
    let path = common::fixture("cameras_405.json");
    let records = load_camera_records(&path).unwrap();
    assert_eq!(records.len(), 405);
    for (k, r) in records.iter().enumerate() {
        assert_eq!(r.view.fx, 50.0 + k as f64);
        assert_eq!(r.view.width, 64 + (k % 3) as u32);
        let expected = path
            .parent()
            .unwrap()
            .join(format!("labels/frame_{k:05}.png"));
        assert_eq!(r.label_path.as_deref(), Some(expected.as_path()));
        // Every camera sits on a radius-5 circle and looks at the y axis.
        let c = r.view.center();
        assert!(((c.x * c.x + c.z * c.z).sqrt() - 5.0).abs() < 1e-9);
        let forward = r.view.camera_to_world.rotation * nalgebra::Vector3::z();
        assert!((forward + nalgebra::Vector3::new(c.x, 0.0, c.z) / 5.0).norm() < 1e-9);
    }
}

#[test]
fn missing_camera_file_is_io_error() {
    let err = load_cameras(common::fixture("no_such_file.json")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn label_images_round_trip_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.png");
    let labels = LabelImage::new(4, 4, vec![0; 16], 3).unwrap();
    save_label_image(&labels, &path).unwrap();
    let back = load_label_image(&path, 3).unwrap();
    assert_eq!(back.category_ids, vec![0; 16]);

    let mut ids = vec![1u8; 16];
    ids[5] = IGNORE;
    save_label_image(
        &LabelImage {
            width: 4,
            height: 4,
            category_ids: ids.clone(),
        },
        &path,
    )
    .unwrap();
    assert_eq!(load_label_image(&path, 3).unwrap().category_ids, ids);

    ids[6] = 7;
    save_label_image(
        &LabelImage {
            width: 4,
            height: 4,
            category_ids: ids,
        },
        &path,
    )
    .unwrap();
    let err = load_label_image(&path, 5).unwrap_err();
    assert!(matches!(err, Error::Data { index: 6, .. }), "{err:?}");
}

#[test]
fn state_file_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.cssd");
    let state = common::random_state(5, 10, 4);
    save_semantic_state(&state, &path).unwrap();
    assert_eq!(load_semantic_state(&path).unwrap(), state);

    std::fs::write(&path, b"NOPE0000000000000000000000").unwrap();
    assert!(matches!(load_semantic_state(&path), Err(Error::Format(_))));
}

#[test]
fn pfm_maps_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pfm");
    let data: Vec<f32> = (0..5 * 3 * 3).map(|v| v as f32 * 0.25 - 1.0).collect();
    write_pfm(&path, 5, 3, 3, &data).unwrap();
    let back = read_pfm(&path).unwrap();
    assert_eq!((back.width, back.height, back.channels), (5, 3, 3));
    assert_eq!(back.data, data);
}

#[test]
fn checked_in_synthetic_fixture_is_reproducible() {
    let dir = common::fixture("synth_seed0");
    let cloud = load_gaussian_ply(dir.join("scene.ply")).unwrap();
    let scene = generate_scene(0, 50, 5, 2.0).unwrap();
    assert_eq!(cloud.len(), 50);
    for n in 0..50 {
        assert!((cloud.positions[n] - scene.cloud.positions[n]).norm() < 1e-6);
        assert!((cloud.opacities[n] - scene.cloud.opacities[n]).abs() < 1e-6);
    }
    let csv = std::fs::read_to_string(dir.join("categories.csv")).unwrap();
    let cats: Vec<u8> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(cats, scene.gaussian_categories);
    let cams = load_cameras(dir.join("cameras.json")).unwrap();
    assert_eq!(cams.len(), 20);
    for (a, b) in cams.iter().zip(&scene.cameras) {
        assert!((a.center() - b.center()).norm() < 1e-9);
    }
}

proptest! {
    #[test]
    fn larger_logit_means_larger_opacity(a in -20.0f32..20.0, b in -20.0f32..20.0) {
        prop_assume!(a != b);
        let mut bytes = std::fs::read(common::fixture("three_gaussians.ply")).unwrap();
        let header_end = bytes.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
        // opacity is the 11th float of each 18-float record.
        for (row, v) in [(0usize, a), (1, b)] {
            let at = header_end + (row * 18 + 10) * 4;
            bytes[at..at + 4].copy_from_slice(&v.to_le_bytes());
        }
        let cloud = read_gaussian_ply(&bytes[..], Path::new("p")).unwrap();
        prop_assert_eq!(a < b, cloud.opacities[0] < cloud.opacities[1]);
    }

    #[test]
    fn state_files_round_trip(n in 1usize..8, c in 2usize..6, seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.cssd");
        let state = common::random_state(seed, n, c);
        save_semantic_state(&state, &path).unwrap();
        prop_assert_eq!(load_semantic_state(&path).unwrap(), state);
    }
}

#[test]
fn empty_state_cannot_be_built() {
    assert!(matches!(
        SemanticState::init(0, 3, 0.001),
        Err(Error::EmptyScene)
    ));
}
