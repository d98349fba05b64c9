//! Joint optimization of the anchor scene and the rig extrinsics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{pose_update, AdamParams, AdamW, PoseAdam};
use super::config::TrainConfig;
use super::frame::{backward_frame, forward_frame, frame_loss, FrameGradients};
use super::schedule::{schedule, Hyper, ViewSampler};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::lie::Pose;
use crate::raster::{PoseGradient, RenderOptions};
use crate::rig::{extrinsic_error, CameraRig};
use crate::scene::{prune_floaters_with_mask, GaussianScene, Head};

/// Optimizer moments, counters and the sampler.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub iteration: u64,
    pub features: AdamW,
    pub log_scales: AdamW,
    pub heads: [AdamW; 4],
    pub poses: Vec<PoseAdam>,
    pub visits: Vec<u32>,
    pub sampler: ViewSampler,
}

impl TrainState {
    pub fn new(scene: &GaussianScene, cameras: usize, frames: usize, seed: u64) -> Self {
        Self {
            iteration: 0,
            features: AdamW::new(scene.features().len()),
            log_scales: AdamW::new(scene.len()),
            heads: Head::ALL.map(|h| AdamW::new(scene.nets().head(h).num_params())),
            poses: vec![PoseAdam::default(); cameras],
            visits: vec![0; frames],
            sampler: ViewSampler::new(frames, seed),
        }
    }
}

/// What one iteration did.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: u64,
    pub frame: usize,
    pub camera: usize,
    pub total: f64,
    pub photo: f64,
    pub scale_reg: f64,
    pub pose_enabled: bool,
    pub weight_decay: f64,
    pub visible: usize,
    pub pruned: usize,
    pub pose_gradient: PoseGradient,
    /// Per camera, rotation (degrees) and translation (meters) away from the
    /// initial extrinsic after this step.
    pub pose_deltas: Vec<(f64, f64)>,
}

/// Snapshot passed to checkpoint observers.
#[derive(Clone, Copy, Debug)]
pub struct Checkpoint<'a> {
    /// Iterations completed so far.
    pub iteration: u64,
    pub scene: &'a GaussianScene,
    pub rig: &'a CameraRig,
    pub is_final: bool,
}

pub struct Trainer<'a> {
    dataset: &'a Dataset,
    config: TrainConfig,
    hp: AdamParams,
    render_opts: RenderOptions,
    scene: GaussianScene,
    rig: CameraRig,
    initial_rig: CameraRig,
    state: TrainState,
}

impl<'a> Trainer<'a> {
    /// Builds the anchor scene from the dataset's aggregated scans.
    pub fn new(dataset: &'a Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let cloud = dataset.aggregated_cloud()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.network_seed);
        let scene = GaussianScene::from_cloud(&cloud, config.voxel_constant, config.offspring, &mut rng)?;
        log::info!("scene: {} points aggregated into {} anchors (voxel {:.4})", cloud.len(), scene.len(), scene.voxel_size());
        Self::with_scene(dataset, config, scene)
    }

    pub fn with_scene(dataset: &'a Dataset, config: TrainConfig, scene: GaussianScene) -> Result<Self> {
        config.validate()?;
        let state = TrainState::new(&scene, dataset.rig.len(), dataset.frames.len(), config.seed);
        let render_opts = RenderOptions {
            background: config.background.into(),
            early_exit: config.early_exit,
            keep_cache: true,
        };
        let hp = AdamParams { beta1: config.adam_beta1, beta2: config.adam_beta2, eps: config.adam_eps };
        Ok(Self {
            dataset,
            hp,
            render_opts,
            scene,
            rig: dataset.rig.clone(),
            initial_rig: dataset.rig.clone(),
            state,
            config,
        })
    }

    pub fn scene(&self) -> &GaussianScene {
        &self.scene
    }

    pub fn rig(&self) -> &CameraRig {
        &self.rig
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut TrainState {
        &mut self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn into_parts(self) -> (GaussianScene, CameraRig) {
        (self.scene, self.rig)
    }

    /// One iteration on the next sampled image.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let frame = self.state.sampler.next_view();
        self.step_on(frame)
    }

    /// One iteration on a chosen image.
    pub fn step_on(&mut self, frame: usize) -> Result<IterationRecord> {
        let it = self.state.iteration;
        self.state.visits[frame] += 1;
        let hyper = schedule(it, &self.state.visits, &self.config);
        let f = &self.dataset.frames[frame];
        let cam = self.rig.camera(f.camera).intrinsics;
        let cam_pose = self.dataset.camera_pose(&self.rig, frame);

        let fwd = forward_frame(&self.scene, &cam_pose, &cam, &self.render_opts);
        let (report, reg_grads) = frame_loss(&fwd, &f.image, self.config.lambda_dssim, self.config.scale_ratio)?;
        if !report.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: it,
                detail: format!(
                    "frame {frame} (camera {}): photo={} scale_reg={} visible={}",
                    self.rig.camera(f.camera).name,
                    report.photo,
                    report.scale_reg,
                    fwd.visible_count()
                ),
            });
        }
        let grads = backward_frame(&self.scene, &fwd, &report.d_image, &reg_grads)?;
        if !grads.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: it,
                detail: format!("frame {frame}: non-finite gradient, pose gradient {:?}", grads.pose.total()),
            });
        }

        for (a, m) in fwd.anchor_max_opacity() {
            self.scene.record_opacity(a, m);
        }
        self.scene.finish_observation();
        self.apply(&grads, &hyper, f.camera);

        let pruned = match prune_floaters_with_mask(&mut self.scene, self.config.prune_opacity, self.config.prune_window) {
            Some(keep) => {
                self.state.features.retain_blocks(&keep, self.scene.nets().feature_dim());
                self.state.log_scales.retain_blocks(&keep, 1);
                keep.iter().filter(|k| !**k).count()
            }
            None => 0,
        };
        if pruned > 0 {
            log::info!("iter {it}: pruned {pruned} floater anchors, {} remain", self.scene.len());
        }

        self.state.iteration += 1;
        Ok(IterationRecord {
            iteration: it,
            frame,
            camera: f.camera,
            total: report.total,
            photo: report.photo,
            scale_reg: report.scale_reg,
            pose_enabled: hyper.pose_enabled,
            weight_decay: hyper.weight_decay,
            visible: fwd.visible_count(),
            pruned,
            pose_gradient: grads.pose,
            pose_deltas: self.pose_deltas(),
        })
    }

    fn apply(&mut self, grads: &FrameGradients, hyper: &Hyper, camera: usize) {
        let c = &self.config;
        let wd = hyper.weight_decay;
        self.state.features.update(self.scene.features_mut(), &grads.features, c.lr_features, wd, &self.hp);
        self.state.log_scales.update(self.scene.log_scales_mut(), &grads.log_scales, c.lr_anchor_scale, wd, &self.hp);
        for h in Head::ALL {
            let i = h.index();
            self.state.heads[i].update(self.scene.nets_mut().head_mut(h).params_mut(), grads.nets.head(h), c.lr_mlp, wd, &self.hp);
        }
        if hyper.pose_enabled {
            let updated = pose_update(
                self.rig.extrinsic(camera),
                &grads.pose.total(),
                c.lr_pose_rotation,
                c.lr_pose_translation,
                &mut self.state.poses[camera],
                &self.hp,
            );
            self.rig.set_extrinsic(camera, updated);
        }
    }

    pub fn pose_deltas(&self) -> Vec<(f64, f64)> {
        (0..self.rig.len())
            .map(|i| extrinsic_error(self.rig.extrinsic(i), self.initial_rig.extrinsic(i)))
            .collect()
    }
}

/// Outcome of [`calibrate`].
#[derive(Clone, Debug)]
pub struct Calibration {
    pub rig: CameraRig,
    pub scene: GaussianScene,
    pub history: Vec<IterationRecord>,
    /// One track per camera; entry 0 is the initial extrinsic and entry
    /// `i + 1` the extrinsic after iteration `i`.
    pub trajectory: Vec<Vec<Pose>>,
}

/// Runs the full optimization, calling `on_checkpoint` every
/// `checkpoint_every` iterations and once at the end.
pub fn calibrate(
    dataset: &Dataset,
    config: &TrainConfig,
    on_checkpoint: &mut dyn FnMut(&Checkpoint<'_>) -> Result<()>,
) -> Result<Calibration> {
    let mut trainer = Trainer::new(dataset, config.clone())?;
    let mut history = Vec::with_capacity(config.total_iters as usize);
    let mut trajectory: Vec<Vec<Pose>> = (0..dataset.rig.len()).map(|i| vec![*dataset.rig.extrinsic(i)]).collect();
    for _ in 0..config.total_iters {
        let rec = trainer.step()?;
        for (i, track) in trajectory.iter_mut().enumerate() {
            track.push(*trainer.rig().extrinsic(i));
        }
        let done = rec.iteration + 1;
        if config.log_every > 0 && done % config.log_every == 0 {
            let deltas: Vec<String> = trainer
                .rig()
                .cameras()
                .iter()
                .zip(&rec.pose_deltas)
                .map(|(c, (r, t))| format!("{}: {:.4}deg {:.5}m", c.name, r, t))
                .collect();
            log::info!(
                "iter={} total={:.6} photo={:.6} scale_reg={:.6} anchors={} pose_gate={} deltas [{}]",
                done,
                rec.total,
                rec.photo,
                rec.scale_reg,
                trainer.scene().len(),
                if rec.pose_enabled { "open" } else { "closed" },
                deltas.join(", ")
            );
        }
        history.push(rec);
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.total_iters {
            on_checkpoint(&Checkpoint { iteration: done, scene: trainer.scene(), rig: trainer.rig(), is_final: false })?;
        }
    }
    on_checkpoint(&Checkpoint {
        iteration: trainer.state().iteration,
        scene: trainer.scene(),
        rig: trainer.rig(),
        is_final: true,
    })?;
    let (scene, rig) = trainer.into_parts();
    Ok(Calibration { rig, scene, history, trajectory })
}
