//! Subcommand bodies. Each returns the library error type; `main` maps it
//! to an exit code.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use splatcal::dataset::TIMESTAMP_TOLERANCE;
use splatcal::io::{
    image_metrics, load_checkpoint, load_dataset, project_points, read_json, read_rig, rig_to_text, save_gaussians,
    save_scene, write_dataset, write_json, write_loss_csv, write_npy, write_png, write_rig, SavedScene,
};
use splatcal::optim::{calibrate as run_calibration, TrainConfig};
use splatcal::raster::RenderOptions;
use splatcal::rig::{pose_errors, PoseError};
use splatcal::synth::{generate, synthetic_train_config, SynthSpec};
use splatcal::{CameraRig, Dataset, Error, Result};

use crate::{CalibrateArgs, EvaluateArgs, FrameFilter, ProjectArgs, RenderArgs, SynthArgs};

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            TrainConfig::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.3}")
    }
}

/// `rig` with every dataset camera present, or the dataset's own rig.
fn rig_for(dataset: &Dataset, path: Option<&Path>) -> Result<CameraRig> {
    let rig = match path {
        Some(p) => read_rig(p)?,
        None => return Ok(dataset.rig.clone()),
    };
    pose_errors(&rig, &dataset.rig)?;
    Ok(rig)
}

/// Indices of the frames passing `filter`.
fn select_frames(dataset: &Dataset, rig: &CameraRig, filter: &FrameFilter) -> Result<Vec<usize>> {
    for name in &filter.cameras {
        rig.index_of(name)?;
    }
    for t in &filter.timestamps {
        if !dataset.frames.iter().any(|f| (f.timestamp - t).abs() <= TIMESTAMP_TOLERANCE) {
            return Err(Error::TimestampGap(format!("no image at timestamp {t}")));
        }
    }
    Ok((0..dataset.frames.len())
        .filter(|&i| {
            let f = &dataset.frames[i];
            let name = &dataset.rig.camera(f.camera).name;
            (filter.cameras.is_empty() || filter.cameras.contains(name))
                && (filter.timestamps.is_empty() || filter.timestamps.iter().any(|t| (f.timestamp - t).abs() <= TIMESTAMP_TOLERANCE))
        })
        .collect())
}

fn frame_stem(dataset: &Dataset, frame: usize) -> String {
    format!("{}_{frame:04}", dataset.rig.camera(dataset.frames[frame].camera).name)
}

/// Renders `frame` through `rig` and returns the 8-bit-quantized image with
/// its `(PSNR, SSIM)` against the observed image.
fn render_frame(scene: &SavedScene, dataset: &Dataset, rig: &CameraRig, frame: usize) -> Result<(splatcal::ColorImage, f64, f64)> {
    let f = &dataset.frames[frame];
    let cam = rig.index_of(&dataset.rig.camera(f.camera).name)?;
    let pose = rig.world_to_camera(cam, &f.lidar_pose);
    let img = scene.render(&pose, &rig.camera(cam).intrinsics, &RenderOptions::default()).quantized();
    let (p, s) = image_metrics(&img, &f.image)?;
    Ok((img, p, s))
}

fn error_table(rows: &[(PoseError, Option<(f64, f64)>)]) -> (String, String) {
    let with_images = rows.iter().any(|(_, m)| m.is_some());
    let mut csv = String::from("camera,rot_deg,trans_m");
    let mut table = format!("{:<12} {:>10} {:>10}", "camera", "rot_deg", "trans_m");
    if with_images {
        csv.push_str(",psnr_db,ssim");
        write!(table, " {:>10} {:>8}", "psnr_db", "ssim").unwrap();
    }
    csv.push('\n');
    table.push('\n');
    let n = rows.len() as f64;
    let mut avg = (0.0, 0.0, 0.0, 0.0);
    for (e, m) in rows {
        write!(csv, "{},{},{}", e.camera, e.rotation_deg, e.translation_m).unwrap();
        write!(table, "{:<12} {:>10.4} {:>10.5}", e.camera, e.rotation_deg, e.translation_m).unwrap();
        avg.0 += e.rotation_deg / n;
        avg.1 += e.translation_m / n;
        if let Some((p, s)) = m {
            write!(csv, ",{p},{s}").unwrap();
            write!(table, " {:>10} {:>8.4}", fmt_db(*p), s).unwrap();
            avg.2 += p / n;
            avg.3 += s / n;
        }
        csv.push('\n');
        table.push('\n');
    }
    write!(csv, "average,{},{}", avg.0, avg.1).unwrap();
    write!(table, "{:<12} {:>10.4} {:>10.5}", "average", avg.0, avg.1).unwrap();
    if with_images {
        write!(csv, ",{},{}", avg.2, avg.3).unwrap();
        write!(table, " {:>10} {:>8.4}", fmt_db(avg.2), avg.3).unwrap();
    }
    csv.push('\n');
    table.push('\n');
    (table, csv)
}

pub fn calibrate(a: CalibrateArgs) -> Result<()> {
    let mut config = load_config(a.config.as_deref())?;
    if let Some(n) = a.iters {
        config.total_iters = n;
    }
    if let Some(s) = a.seed {
        config.seed = s;
        config.network_seed = s;
    }
    config.validate()?;
    let dataset = load_dataset(&a.dataset)?;
    let ckpt_dir = a.out.join("checkpoints");
    create_dir(&ckpt_dir)?;
    write_json(&a.out.join("config.json"), &config)?;

    let final_scene = a.out.join("scene.ckpt");
    let result = run_calibration(&dataset, &config, &mut |c| {
        if c.is_final {
            save_scene(&final_scene, c.scene)
        } else {
            save_scene(&ckpt_dir.join(format!("iter_{:06}.ckpt", c.iteration)), c.scene)?;
            write_rig(&ckpt_dir.join(format!("iter_{:06}_rig.json", c.iteration)), c.rig)
        }
    })?;

    write_rig(&a.out.join("rig.json"), &result.rig)?;
    write_text(&a.out.join("extrinsics.txt"), &rig_to_text(&result.rig))?;
    write_loss_csv(&a.out.join("loss.csv"), &result.rig, &result.history)?;

    let mut report = String::new();
    if let Some(gt) = &dataset.ground_truth {
        let before: Vec<_> = pose_errors(&dataset.rig, gt)?.into_iter().map(|e| (e, None)).collect();
        let after: Vec<_> = pose_errors(&result.rig, gt)?.into_iter().map(|e| (e, None)).collect();
        let (t0, c0) = error_table(&before);
        let (t1, c1) = error_table(&after);
        writeln!(report, "initial rig vs ground truth\n{t0}\ncalibrated rig vs ground truth\n{t1}").unwrap();
        write_text(&a.out.join("errors_initial.csv"), &c0)?;
        write_text(&a.out.join("errors_final.csv"), &c1)?;
    } else {
        writeln!(report, "calibrated extrinsics (row-major [R | t])\n{}", rig_to_text(&result.rig)).unwrap();
    }
    write_text(&a.out.join("report.txt"), &report)?;
    print!("{report}");
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn render(a: RenderArgs) -> Result<()> {
    let dataset = load_dataset(&a.dataset)?;
    let rig = rig_for(&dataset, a.rig.as_deref())?;
    let frames = select_frames(&dataset, &rig, &a.filter)?;
    let scene = load_checkpoint(&a.checkpoint)?;
    create_dir(&a.out)?;
    println!("{:<12} {:>10} {:>10} {:>8}", "camera", "timestamp", "psnr_db", "ssim");
    for i in frames {
        let (img, p, s) = render_frame(&scene, &dataset, &rig, i)?;
        let stem = frame_stem(&dataset, i);
        write_png(&a.out.join(format!("{stem}.png")), &img)?;
        write_npy(&a.out.join(format!("{stem}.npy")), &img)?;
        let f = &dataset.frames[i];
        println!("{:<12} {:>10.4} {:>10} {:>8.4}", dataset.rig.camera(f.camera).name, f.timestamp, fmt_db(p), s);
    }
    Ok(())
}

pub fn project(a: ProjectArgs) -> Result<()> {
    let dataset = load_dataset(&a.dataset)?;
    let rig = rig_for(&dataset, a.rig.as_deref())?;
    let frames = select_frames(&dataset, &rig, &a.filter)?;
    let world = dataset.aggregated_cloud()?;
    create_dir(&a.out)?;
    println!("{:<12} {:>10} {:>8} {:>8}", "camera", "timestamp", "points", "skipped");
    for i in frames {
        let f = &dataset.frames[i];
        let name = &dataset.rig.camera(f.camera).name;
        let local = world.transformed(&f.lidar_pose.inverse());
        let out = project_points(&local, &rig, name, &f.image)?;
        let stem = frame_stem(&dataset, i);
        write_png(&a.out.join(format!("{stem}_overlay.png")), &out.overlay)?;
        let mut csv = String::from("index,u,v,depth\n");
        for p in &out.points {
            writeln!(csv, "{},{},{},{}", p.index, p.pixel.x, p.pixel.y, p.depth).unwrap();
        }
        write_text(&a.out.join(format!("{stem}_points.csv")), &csv)?;
        println!("{:<12} {:>10.4} {:>8} {:>8}", name, f.timestamp, out.points.len(), out.skipped);
    }
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let estimated = read_rig(&a.rig)?;
    let dataset = a.dataset.as_deref().map(load_dataset).transpose()?;
    let reference = match (&a.reference, &dataset) {
        (Some(p), _) => read_rig(p)?,
        (None, Some(d)) => d
            .ground_truth
            .clone()
            .ok_or_else(|| Error::Config("dataset has no ground-truth rig; pass --reference".into()))?,
        (None, None) => return Err(Error::Config("pass --reference or a --dataset with a ground-truth rig".into())),
    };
    let errors = pose_errors(&estimated, &reference)?;
    let metrics: Vec<Option<(f64, f64)>> = match (&a.checkpoint, &dataset) {
        (Some(c), Some(d)) => {
            let scene = load_checkpoint(c)?;
            errors
                .iter()
                .map(|e| {
                    let frames: Vec<usize> = (0..d.frames.len()).filter(|&i| d.rig.camera(d.frames[i].camera).name == e.camera).collect();
                    if frames.is_empty() {
                        return Ok(None);
                    }
                    let mut sum = (0.0, 0.0);
                    for &i in &frames {
                        let (_, p, s) = render_frame(&scene, d, &estimated, i)?;
                        sum.0 += p;
                        sum.1 += s;
                    }
                    Ok(Some((sum.0 / frames.len() as f64, sum.1 / frames.len() as f64)))
                })
                .collect::<Result<_>>()?
        }
        _ => vec![None; errors.len()],
    };
    let rows: Vec<_> = errors.into_iter().zip(metrics).collect();
    let (table, csv) = error_table(&rows);
    print!("{table}");
    if let Some(p) = &a.csv {
        write_text(p, &csv)?;
    }
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = match (&a.preset, &a.spec) {
        (Some(name), _) => SynthSpec::preset(name)?,
        (None, Some(p)) => read_json::<SynthSpec>(p)?,
        (None, None) => unreachable!("clap requires one of --preset and --spec"),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let scene = generate(&spec)?;
    create_dir(&a.out)?;
    let manifest: PathBuf = write_dataset(&a.out, &scene.dataset)?;
    save_gaussians(&a.out.join("gt_scene.ckpt"), &scene.gaussians)?;
    write_json(&a.out.join("synth_spec.json"), &spec)?;
    write_json(&a.out.join("train_config.json"), &synthetic_train_config())?;
    let gt = scene.dataset.ground_truth.as_ref().expect("synthetic datasets carry ground truth");
    let rows: Vec<_> = pose_errors(&scene.dataset.rig, gt)?.into_iter().map(|e| (e, None)).collect();
    println!("wrote {} ({} scans, {} images)", manifest.display(), scene.dataset.scans.len(), scene.dataset.frames.len());
    print!("injected error\n{}", error_table(&rows).0);
    Ok(())
}
