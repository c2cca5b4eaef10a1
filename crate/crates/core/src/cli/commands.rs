use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{
    Command, EvalArgs, FuseArgs, Level, Overrides, PfmLayout, RenderArgs, RunConfig, SceneArgs,
    SparsifyArgs, SynthArgs,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    confusion, curves_to_csv, miou_accuracy, oracle_image_curve, oracle_pixel_curve, psnr,
    random_image_curve, random_pixel_curve, sparsify_images, sparsify_pixels, ConfusionMatrix,
    Ordering, SparsificationCurve,
};
use crate::prob_render::{
    image_uncertainty, pixel_confidence_heuristic_with, rasterize_semantics_with,
    PixelDistributionMaps,
};
use crate::scene_io::{
    cameras_to_json, category_palette, load_camera_records, load_gaussian_ply, load_label_image,
    load_semantic_state, parse_cameras, read_gaussian_ply, read_rgb_png, save_label_image,
    save_semantic_state, write_gaussian_ply, write_gray_png, write_pfm, write_rgb_png,
    CameraRecord, GaussianCloud, LabelImage, IGNORE,
};
use crate::semantic_fusion::{fuse_view_with, SemanticState};
use crate::splat_raster::{render_color_with, Rasterizer};
use crate::synthetic_oracle::{generate_scene_with, render_labels_oracle, SceneConfig};

/// File name of view `k` inside a label directory.
pub fn label_file_name(k: usize) -> String {
    format!("view_{k:04}.png")
}

/// Layers the subcommand's flags over `base` (the global flags).
pub(super) fn overrides(command: &Command, mut o: Overrides) -> Overrides {
    let scene = |o: &mut Overrides, s: &SceneArgs| {
        o.scene = s.scene.clone();
        o.cameras = s.cameras.clone();
        o.labels = s.labels.clone();
    };
    match command {
        Command::Fuse(a) => {
            scene(&mut o, &a.input);
            o.state = a.state.clone();
            o.num_classes = a.num_classes;
            o.prior_value = a.prior;
            o.background_value = a.background;
        }
        Command::Render(a) => {
            scene(&mut o, &a.input);
            o.state = a.state.clone();
            o.output = a.output.clone();
        }
        Command::Eval(a) => {
            scene(&mut o, &a.input);
            o.state = a.state.clone();
            o.num_classes = a.num_classes;
            o.output = a.output.clone();
        }
        Command::Sparsify(a) => {
            scene(&mut o, &a.input);
            o.state = a.state.clone();
            o.sparsification_bins = a.bins;
            o.seed = a.seed;
            o.output = a.output.clone();
        }
        Command::Synth(a) => {
            o.num_classes = a.num_classes;
            o.output = a.output.clone();
        }
    }
    o
}

pub(super) fn dispatch(command: &Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Fuse(a) => cmd_fuse(a, cfg),
        Command::Render(a) => cmd_render(a, cfg),
        Command::Eval(a) => cmd_eval(a, cfg),
        Command::Sparsify(a) => cmd_sparsify(a, cfg),
        Command::Synth(a) => cmd_synth(a, cfg),
    }
}

/// Parses `0..10,12,15..20` into indices below `count`, in the given order.
pub fn parse_views(spec: &str, count: usize) -> Result<Vec<usize>> {
    let bad = |m: String| Error::InvalidArgument(m);
    let num = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| bad(format!("bad view index '{s}' in --views")))
    };
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let range = match part.split_once("..") {
            Some((a, b)) => num(a)?..num(b)?,
            None => {
                let k = num(part)?;
                k..k + 1
            }
        };
        if range.end > count {
            return Err(bad(format!("--views '{part}' exceeds the {count} cameras")));
        }
        out.extend(range);
    }
    Ok(out)
}

fn selected_views(args: &SceneArgs, count: usize) -> Result<Vec<usize>> {
    match &args.views {
        Some(spec) => parse_views(spec, count),
        None => Ok((0..count).collect()),
    }
}

fn load_scene(cfg: &RunConfig) -> Result<GaussianCloud> {
    load_gaussian_ply(RunConfig::require(&cfg.scene, "scene")?)
}

fn load_records(cfg: &RunConfig) -> Result<Vec<CameraRecord>> {
    load_camera_records(RunConfig::require(&cfg.cameras, "cameras")?)
}

fn load_state_for(cfg: &RunConfig, cloud: &GaussianCloud) -> Result<SemanticState> {
    let state = load_semantic_state(RunConfig::require(&cfg.state, "state")?)?;
    if state.num_gaussians() != cloud.len() {
        return Err(Error::Dimension(format!(
            "state has {} gaussians but scene has {}",
            state.num_gaussians(),
            cloud.len()
        )));
    }
    Ok(state)
}

fn label_path(dir: Option<&Path>, rec: &CameraRecord, k: usize) -> Result<PathBuf> {
    match dir {
        Some(d) => Ok(d.join(label_file_name(k))),
        None => rec.label_path.clone().ok_or_else(|| {
            Error::Format(format!(
                "camera {k} has no label_path and no --labels directory was given"
            ))
        }),
    }
}

fn load_labels_for(
    dir: Option<&Path>,
    rec: &CameraRecord,
    k: usize,
    num_classes: usize,
) -> Result<LabelImage> {
    let labels = load_label_image(label_path(dir, rec, k)?, num_classes)?;
    labels.check_matches(&rec.view)?;
    Ok(labels)
}

fn camera(records: &[CameraRecord], k: usize) -> Result<&CameraRecord> {
    records.get(k).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "view {k} requested but the cameras file has {}",
            records.len()
        ))
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn cmd_fuse(args: &FuseArgs, cfg: &RunConfig) -> Result<()> {
    let out = RunConfig::require(&cfg.state, "state")?;
    let cloud = load_scene(cfg)?;
    let records = load_records(cfg)?;
    let views = selected_views(&args.input, records.len())?;

    let mut state = match &args.init_state {
        Some(path) => {
            let s = load_semantic_state(path)?;
            if s.num_gaussians() != cloud.len() {
                return Err(Error::Dimension(format!(
                    "initial state has {} gaussians but scene has {}",
                    s.num_gaussians(),
                    cloud.len()
                )));
            }
            if cfg.num_classes.is_some_and(|c| c != s.num_classes()) {
                return Err(Error::Dimension(format!(
                    "initial state has {} classes, --num-classes says {}",
                    s.num_classes(),
                    cfg.num_classes.unwrap_or_default()
                )));
            }
            s
        }
        None => SemanticState::init_with_background(
            cloud.len(),
            cfg.require_num_classes()?,
            cfg.prior_value,
            cfg.background_value,
        )?,
    };

    if views.is_empty() {
        log::warn!("no views selected; writing the prior state unchanged");
    }
    for (i, &k) in views.iter().enumerate() {
        let rec = camera(&records, k)?;
        let labels = load_labels_for(cfg.labels.as_deref(), rec, k, state.num_classes())?;
        let raster = Rasterizer::with_tile_size(&cloud, &rec.view, cfg.tile_size);
        fuse_view_with(&mut state, &raster, &labels)?;
        log::info!("fused view {k} ({}/{})", i + 1, views.len());
    }
    save_semantic_state(&state, out)?;
    let mass: f64 = (0..state.num_gaussians())
        .map(|n| state.observation_mass(n))
        .sum();
    println!("views fused: {}", views.len());
    println!("accumulated mass: {mass}");
    println!("state written to {}", out.display());
    Ok(())
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Writes an H × W × C map as PFM files named `<stem>...pfm`.
fn write_class_map(
    dir: &Path,
    stem: &str,
    maps: &PixelDistributionMaps,
    data: &[f64],
    layout: PfmLayout,
) -> Result<()> {
    let (w, h, c) = (maps.width, maps.height, maps.num_classes);
    match layout {
        PfmLayout::PerChannel => {
            for k in 0..c {
                let plane = PixelDistributionMaps::channel(data, c, k);
                write_pfm(
                    dir.join(format!("{stem}_c{k:03}.pfm")),
                    w,
                    h,
                    1,
                    &to_f32(&plane),
                )?;
            }
            Ok(())
        }
        PfmLayout::Interleaved if c == 3 => {
            write_pfm(dir.join(format!("{stem}.pfm")), w, h, 3, &to_f32(data))
        }
        PfmLayout::Interleaved => write_pfm(
            dir.join(format!("{stem}.pfm")),
            w * c as u32,
            h,
            1,
            &to_f32(data),
        ),
    }
}

fn cmd_render(args: &RenderArgs, cfg: &RunConfig) -> Result<()> {
    let out = RunConfig::require(&cfg.output, "output")?;
    let cloud = load_scene(cfg)?;
    let records = load_records(cfg)?;
    let state = load_state_for(cfg, &cloud)?;
    let rec = camera(&records, args.view)?;
    let cam = &rec.view;
    create_dir(out)?;

    let raster = Rasterizer::with_tile_size(&cloud, cam, cfg.tile_size);
    let maps = rasterize_semantics_with(&state, &raster);
    let confidence = pixel_confidence_heuristic_with(&state, &raster);
    let u = image_uncertainty(&maps)?;

    write_gray_png(
        out.join("segmentation.png"),
        cam.width,
        cam.height,
        &maps.argmax_category,
    )?;
    let colored: Vec<f64> = maps
        .argmax_category
        .iter()
        .flat_map(|&k| category_palette(k))
        .map(|v| v as f64 / 255.0)
        .collect();
    write_rgb_png(
        out.join("segmentation_color.png"),
        cam.width,
        cam.height,
        &colored,
    )?;
    write_class_map(
        out,
        "expectation",
        &maps,
        &maps.expectation,
        args.pfm_layout,
    )?;
    write_class_map(out, "variance", &maps, &maps.variance, args.pfm_layout)?;
    write_pfm(
        out.join("confidence.pfm"),
        cam.width,
        cam.height,
        1,
        &to_f32(&confidence),
    )?;
    if args.color {
        let img = render_color_with(&raster, &cloud, [0.0; 3]);
        write_rgb_png(out.join("color.png"), cam.width, cam.height, &img.data)?;
    }
    log::info!("rendered view {} into {}", args.view, out.display());
    println!("u_var: {}", u.u_var);
    println!("u_exp: {}", u.u_exp);
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalReport {
    /// Percent; null for categories absent from truth and prediction.
    per_class_iou: Vec<Option<f64>>,
    miou: f64,
    accuracy: f64,
    /// Mean PSNR in dB over the evaluated views; null without images.
    psnr: Option<f64>,
    confusion: Vec<Vec<u64>>,
    pixels: u64,
    views: usize,
}

fn cmd_eval(args: &EvalArgs, cfg: &RunConfig) -> Result<()> {
    let (cm, psnr_value, views) = match (&args.pred, &args.gt) {
        (Some(pred), Some(gt)) => {
            let c = cfg.require_num_classes()?;
            let gt = load_label_image(gt, c)?;
            let pred = load_label_image(pred, c)?;
            if (pred.width, pred.height) != (gt.width, gt.height) {
                return Err(Error::Dimension(format!(
                    "prediction is {}x{} but ground truth is {}x{}",
                    pred.width, pred.height, gt.width, gt.height
                )));
            }
            let p = match (&args.image, &args.reference) {
                (Some(img), Some(reference)) => {
                    let (w0, h0, a) = read_rgb_png(img)?;
                    let (w1, h1, b) = read_rgb_png(reference)?;
                    if (w0, h0) != (w1, h1) {
                        return Err(Error::Dimension(format!(
                            "image is {w0}x{h0} but reference is {w1}x{h1}"
                        )));
                    }
                    Some(psnr(&a, &b)?)
                }
                _ => None,
            };
            (confusion(&pred.category_ids, &gt, c, None)?, p, 1)
        }
        _ => eval_views(args, cfg)?,
    };
    let scores = miou_accuracy(&cm)?;
    let report = EvalReport {
        per_class_iou: scores
            .per_class_iou
            .iter()
            .map(|v| v.map(|x| 100.0 * x))
            .collect(),
        miou: 100.0 * scores.miou,
        accuracy: 100.0 * scores.accuracy,
        psnr: psnr_value,
        confusion: cm.rows(),
        pixels: cm.total(),
        views,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serialization cannot fail");
    text.push('\n');
    write_text(cfg.output.as_deref(), &text)
}

/// Evaluates every selected camera: ground truth from the label source,
/// predictions from `--pred-labels` or from rendering the state.
fn eval_views(args: &EvalArgs, cfg: &RunConfig) -> Result<(ConfusionMatrix, Option<f64>, usize)> {
    let records = load_records(cfg)?;
    let views = selected_views(&args.input, records.len())?;
    if views.is_empty() {
        return Err(Error::InvalidArgument(
            "no views selected for evaluation".into(),
        ));
    }
    let rendered = match &args.pred_labels {
        Some(_) => None,
        None => {
            let cloud = load_scene(cfg)?;
            let state = load_state_for(cfg, &cloud)?;
            Some((cloud, state))
        }
    };
    let c = match (&rendered, cfg.num_classes) {
        (Some((_, s)), Some(c)) if c != s.num_classes() => {
            return Err(Error::Dimension(format!(
                "state has {} classes, --num-classes says {c}",
                s.num_classes()
            )))
        }
        (Some((_, s)), _) => s.num_classes(),
        (None, _) => cfg.require_num_classes()?,
    };

    let mut cm = ConfusionMatrix::new(c);
    let mut psnrs = Vec::new();
    let with_images = rendered.is_some() && views.iter().all(|&k| records[k].image_path.is_some());
    for &k in &views {
        let rec = camera(&records, k)?;
        let gt = load_labels_for(cfg.labels.as_deref(), rec, k, c)?;
        let pred = match (&rendered, &args.pred_labels) {
            (Some((cloud, state)), _) => {
                let raster = Rasterizer::with_tile_size(cloud, &rec.view, cfg.tile_size);
                if with_images {
                    psnrs.push(view_psnr(&raster, cloud, rec)?);
                }
                rasterize_semantics_with(state, &raster).argmax_category
            }
            (None, Some(dir)) => {
                let p = load_label_image(dir.join(label_file_name(k)), c)?;
                p.check_matches(&rec.view)?;
                p.category_ids
            }
            (None, None) => unreachable!("predictions come from a state or a label directory"),
        };
        cm.merge(&confusion(&pred, &gt, c, None)?)?;
        log::info!("evaluated view {k}");
    }
    let mean_psnr = (!psnrs.is_empty()).then(|| psnrs.iter().sum::<f64>() / psnrs.len() as f64);
    Ok((cm, mean_psnr, views.len()))
}

/// PSNR of the rendered color (black background) against the camera's image.
fn view_psnr(raster: &Rasterizer, cloud: &GaussianCloud, rec: &CameraRecord) -> Result<f64> {
    let Some(path) = &rec.image_path else {
        return Err(Error::Format("camera has no image_path".into()));
    };
    let (w, h, reference) = read_rgb_png(path)?;
    if (w, h) != (rec.view.width, rec.view.height) {
        return Err(Error::Dimension(format!(
            "{} is {w}x{h} but the camera is {}x{}",
            path.display(),
            rec.view.width,
            rec.view.height
        )));
    }
    let img = render_color_with(raster, cloud, [0.0; 3]);
    psnr(&img.data, &reference)
}

fn parse_orderings(spec: Option<&str>) -> Result<Vec<Ordering>> {
    match spec {
        None => Ok(Ordering::ALL.to_vec()),
        Some(s) => s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                Ordering::parse(p)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown ordering '{p}'")))
            })
            .collect(),
    }
}

fn cmd_sparsify(args: &SparsifyArgs, cfg: &RunConfig) -> Result<()> {
    let orderings = parse_orderings(args.ordering.as_deref())?;
    if orderings.is_empty() {
        return Err(Error::InvalidArgument(
            "--ordering lists no orderings".into(),
        ));
    }
    let cloud = load_scene(cfg)?;
    let records = load_records(cfg)?;
    let state = load_state_for(cfg, &cloud)?;
    let views = selected_views(&args.input, records.len())?;
    let bins = cfg.sparsification_bins;

    let curves: Vec<SparsificationCurve> = match args.level {
        Level::Pixel => {
            let (mut u_var, mut u_exp, mut u_heur, mut errors) = (vec![], vec![], vec![], vec![]);
            for &k in &views {
                let rec = camera(&records, k)?;
                let gt = load_labels_for(cfg.labels.as_deref(), rec, k, state.num_classes())?;
                let raster = Rasterizer::with_tile_size(&cloud, &rec.view, cfg.tile_size);
                let maps = rasterize_semantics_with(&state, &raster);
                let conf = pixel_confidence_heuristic_with(&state, &raster);
                for (i, &t) in gt.category_ids.iter().enumerate() {
                    if t == IGNORE {
                        continue;
                    }
                    u_var.push(maps.top_variance[i]);
                    u_exp.push(1.0 - maps.top_expectation[i]);
                    u_heur.push(-conf[i]);
                    errors.push(maps.argmax_category[i] != t);
                }
            }
            orderings
                .iter()
                .map(|&o| match o {
                    Ordering::ByVariance => sparsify_pixels(&u_var, &errors, bins, o),
                    Ordering::ByExpectation => sparsify_pixels(&u_exp, &errors, bins, o),
                    Ordering::ByHeuristic => sparsify_pixels(&u_heur, &errors, bins, o),
                    Ordering::Oracle => oracle_pixel_curve(&errors, bins),
                    Ordering::Random => random_pixel_curve(&errors, bins, cfg.seed),
                })
                .collect::<Result<_>>()?
        }
        Level::Image => {
            let (mut u_var, mut u_exp, mut u_heur, mut psnrs) = (vec![], vec![], vec![], vec![]);
            for &k in &views {
                let rec = camera(&records, k)?;
                if rec.image_path.is_none() {
                    return Err(Error::Format(format!("camera {k} has no image_path")));
                }
                let raster = Rasterizer::with_tile_size(&cloud, &rec.view, cfg.tile_size);
                let u = image_uncertainty(&rasterize_semantics_with(&state, &raster))?;
                let conf = pixel_confidence_heuristic_with(&state, &raster);
                u_var.push(u.u_var);
                u_exp.push(u.u_exp);
                u_heur.push(-conf.iter().sum::<f64>() / conf.len() as f64);
                psnrs.push(view_psnr(&raster, &cloud, rec)?);
            }
            orderings
                .iter()
                .map(|&o| match o {
                    Ordering::ByVariance => sparsify_images(&u_var, &psnrs, bins, o),
                    Ordering::ByExpectation => sparsify_images(&u_exp, &psnrs, bins, o),
                    Ordering::ByHeuristic => sparsify_images(&u_heur, &psnrs, bins, o),
                    Ordering::Oracle => oracle_image_curve(&psnrs, bins),
                    Ordering::Random => random_image_curve(&psnrs, bins, cfg.seed),
                })
                .collect::<Result<_>>()?
        }
    };
    for c in &curves {
        log::info!(
            "{}: area under curve {:.6}",
            c.ordering,
            c.area_under_curve()
        );
    }
    write_text(cfg.output.as_deref(), &curves_to_csv(&curves)?)
}

fn cmd_synth(args: &SynthArgs, cfg: &RunConfig) -> Result<()> {
    let out = RunConfig::require(&cfg.output, "output")?;
    let mut sc = SceneConfig::new(
        args.num_gaussians,
        cfg.num_classes.unwrap_or(5),
        args.extent,
    );
    sc.num_cameras = args.num_views;
    sc.width = args.width;
    sc.height = args.height;
    if args.width == 0 || args.height == 0 {
        return Err(Error::InvalidArgument("image size must be positive".into()));
    }
    if !(0.0..1.0).contains(&args.noise) {
        return Err(Error::InvalidArgument(format!(
            "--noise {} outside [0, 1)",
            args.noise
        )));
    }
    let mut scene = generate_scene_with(args.seed, &sc)?;

    // Serialize first and label the scene as read back, so the labels agree
    // with exactly what the other commands will load.
    let mut ply = Vec::new();
    write_gaussian_ply(&scene.cloud, &mut ply).map_err(|e| Error::io(out.join("scene.ply"), e))?;
    scene.cloud = read_gaussian_ply(&ply[..], &out.join("scene.ply"))?;
    let entries = |labels: &str| -> Vec<_> {
        scene
            .cameras
            .iter()
            .enumerate()
            .map(|(k, cam)| {
                (
                    cam.clone(),
                    Some(format!("{labels}/{}", label_file_name(k))),
                    Some(format!("images/{}", label_file_name(k))),
                )
            })
            .collect()
    };
    let noisy_json = cameras_to_json(&entries("labels"));
    let gt_json = cameras_to_json(&entries("gt_labels"));
    scene.cameras = parse_cameras(&noisy_json, out)?
        .into_iter()
        .map(|r| r.view)
        .collect();

    for dir in ["labels", "gt_labels", "images"] {
        create_dir(&out.join(dir))?;
    }
    let write = |name: &str, bytes: &[u8]| {
        let p = out.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(p, e))
    };
    write("scene.ply", &ply)?;
    write("cameras.json", noisy_json.as_bytes())?;
    write("cameras_gt.json", gt_json.as_bytes())?;
    let mut csv = String::from("index,category\n");
    for (i, c) in scene.gaussian_categories.iter().enumerate() {
        csv.push_str(&format!("{i},{c}\n"));
    }
    write("categories.csv", csv.as_bytes())?;

    let noise_seed = args.noise_seed.unwrap_or(args.seed);
    for (k, cam) in scene.cameras.iter().enumerate() {
        let name = label_file_name(k);
        let gt = render_labels_oracle(&scene, cam, 0.0, 0)?;
        save_label_image(&gt, out.join("gt_labels").join(&name))?;
        let noisy = if args.noise > 0.0 {
            render_labels_oracle(
                &scene,
                cam,
                args.noise,
                noise_seed.wrapping_mul(1000).wrapping_add(k as u64),
            )?
        } else {
            gt
        };
        save_label_image(&noisy, out.join("labels").join(&name))?;
        let raster = Rasterizer::with_tile_size(&scene.cloud, cam, cfg.tile_size);
        let img = render_color_with(&raster, &scene.cloud, [0.0; 3]);
        write_rgb_png(
            out.join("images").join(&name),
            cam.width,
            cam.height,
            &img.data,
        )?;
        log::info!("synthesized view {k}");
    }
    println!(
        "wrote {} gaussians, {} views, {} classes to {}",
        scene.cloud.len(),
        scene.cameras.len(),
        scene.num_classes,
        out.display()
    );
    Ok(())
}
