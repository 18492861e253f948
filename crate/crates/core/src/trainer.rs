//! Distillation from curated pseudo labels, and EMA teacher-student training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_model::{FullBodyParams, SkeletonTemplate};
use crate::curation::{fuse, CuratedSample, PartFeatures, SelectionConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricReport, DEFAULT_F_THRESHOLDS_MM};
use crate::geometry::{log_map, rodrigues, rotation_z, Camera, Vec3};
use crate::learn::{
    adam_step, ema_consistency_loss, encode_observation, output_loss, AdamConfig, AdamState, KeypointTarget,
    LossBreakdown, LossConfig, ModelState, Target,
};
use crate::synth::{derive_seed, KeypointObservation, SceneRecord};

const SHUFFLE_STREAM: u64 = 5;
const AUGMENT_STREAM: u64 = 6;

/// One training example. Samples without label or features only supervise
/// the 2D keypoint terms.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub subject_id: u64,
    pub keypoints: KeypointObservation,
    pub camera: Camera<f64>,
    pub label: Option<FullBodyParams<f64>>,
    pub features: Option<PartFeatures>,
}

impl From<CuratedSample> for TrainSample {
    fn from(s: CuratedSample) -> Self {
        TrainSample {
            subject_id: s.subject_id,
            keypoints: s.keypoints,
            camera: s.camera,
            label: Some(s.label),
            features: Some(s.features),
        }
    }
}

impl TrainSample {
    /// Keypoints only.
    pub fn keypoints_only(record: &SceneRecord) -> Self {
        TrainSample {
            subject_id: record.scene.subject_id,
            keypoints: record.observation.clone(),
            camera: record.scene.camera,
            label: None,
            features: None,
        }
    }

    /// Fused expert output with no selection applied. `None` when the experts
    /// cannot be fused or the fused label is not finite.
    pub fn unselected(record: &SceneRecord, tpl: &SkeletonTemplate<f64>) -> Option<Self> {
        let label = fuse(&record.predictions, tpl).ok()?;
        let features = PartFeatures::from_predictions(&record.predictions).ok()?;
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !label.is_finite()
            || ![&features.body, &features.face, &features.left_hand, &features.right_hand]
                .iter()
                .all(|f| finite(f))
        {
            return None;
        }
        Some(TrainSample {
            subject_id: record.scene.subject_id,
            keypoints: record.observation.clone(),
            camera: record.scene.camera,
            label: Some(label),
            features: Some(features),
        })
    }
}

/// Builds the loss target from (possibly augmented) keypoints and label.
pub fn build_target(
    sample: &TrainSample,
    obs: &KeypointObservation,
    label: Option<FullBodyParams<f64>>,
    visibility: &SelectionConfig,
) -> Target<f64> {
    let cam = &sample.camera;
    Target {
        input: encode_observation(obs, cam.focal_length, cam.principal_point),
        keypoints: obs
            .keypoints
            .iter()
            .map(|k| KeypointTarget {
                position: k.position,
                visible: visibility.visible(k.tag, k.confidence),
                tag: k.tag,
            })
            .collect(),
        camera: *cam,
        label,
        features: sample
            .features
            .as_ref()
            .map(|f| [f.body.clone(), f.face.clone(), f.left_hand.clone(), f.right_hand.clone()]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: LossConfig,
    /// Thresholds that binarize keypoint visibility for the 2D terms.
    pub visibility: SelectionConfig,
    /// Evaluate after every epoch instead of only after the last.
    #[serde(default)]
    pub eval_each_epoch: bool,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            epochs: 30,
            batch_size: 32,
            adam: AdamConfig::default(),
            loss: LossConfig::desk(),
            visibility: SelectionConfig::default(),
            eval_each_epoch: false,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Configuration("batch_size must be at least 1".into()));
        }
        self.adam.validate()?;
        self.loss.validate()?;
        self.visibility.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmaDirection {
    /// The teacher takes gradient steps; the student tracks it by EMA.
    TeacherTrained,
    /// The student takes gradient steps; the teacher tracks it by EMA.
    StudentTrained,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmaConfig {
    pub decay: f64,
    pub direction: EmaDirection,
    pub enabled: bool,
    /// Epochs before this one train the gradient-updated network without
    /// the consistency terms.
    #[serde(default)]
    pub ema_start_epoch: usize,
}

impl Default for EmaConfig {
    fn default() -> Self {
        EmaConfig {
            decay: 0.99,
            direction: EmaDirection::TeacherTrained,
            enabled: true,
            ema_start_epoch: 0,
        }
    }
}

impl EmaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.decay) {
            return Err(Error::Configuration(format!("EMA decay {} outside [0, 1]", self.decay)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationConfig {
    /// Per-axis Gaussian jitter (pixels).
    pub jitter: f64,
    /// Rotation angle drawn uniformly from `[-rotation, rotation]` radians.
    pub rotation: f64,
    pub dropout: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            jitter: 2.0,
            rotation: 0.2,
            dropout: 0.05,
        }
    }
}

impl AugmentationConfig {
    pub fn none() -> Self {
        AugmentationConfig {
            jitter: 0.0,
            rotation: 0.0,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x >= 0.0 && x.is_finite();
        if !(ok(self.jitter) && ok(self.rotation) && ok(self.dropout) && self.dropout <= 1.0) {
            return Err(Error::Configuration(
                "augmentation magnitudes must be non-negative and dropout at most 1".into(),
            ));
        }
        Ok(())
    }
}

/// Rotates every keypoint position by `angle` about `center`.
pub fn rotate_about(obs: &KeypointObservation, center: [f64; 2], angle: f64) -> KeypointObservation {
    let (s, c) = angle.sin_cos();
    let mut out = obs.clone();
    for k in &mut out.keypoints {
        let (x, y) = (k.position[0] - center[0], k.position[1] - center[1]);
        k.position = [center[0] + c * x - s * y, center[1] + s * x + c * y];
    }
    out
}

/// Rotation about `center`, then jitter, then dropout. Returns the
/// augmented keypoints and the rotation angle.
pub fn augment(
    obs: &KeypointObservation,
    center: [f64; 2],
    aug: &AugmentationConfig,
    seed: u64,
) -> Result<(KeypointObservation, f64)> {
    aug.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = if aug.rotation > 0.0 {
        Uniform::new_inclusive(-aug.rotation, aug.rotation)
            .map_err(|e| Error::Configuration(e.to_string()))?
            .sample(&mut rng)
    } else {
        0.0
    };
    let mut out = rotate_about(obs, center, angle);
    let jitter = Normal::new(0.0, aug.jitter).map_err(|e| Error::Configuration(e.to_string()))?;
    let drop = Bernoulli::new(aug.dropout).map_err(|e| Error::Configuration(e.to_string()))?;
    for k in &mut out.keypoints {
        if aug.jitter > 0.0 {
            k.position[0] += jitter.sample(&mut rng);
            k.position[1] += jitter.sample(&mut rng);
        }
        if drop.sample(&mut rng) {
            k.confidence = 0.0;
        }
    }
    Ok((out, angle))
}

/// The label seen by a camera rolled by `angle` about its optical axis: the
/// global rotation is premultiplied by `Rz(angle)` and the translation moved
/// so that the pelvis lands at its rotated position.
pub fn rotate_label(label: &FullBodyParams<f64>, tpl: &SkeletonTemplate<f64>, angle: f64) -> Result<FullBodyParams<f64>> {
    if angle == 0.0 {
        return Ok(label.clone());
    }
    let rz = rotation_z(angle);
    let root = &tpl.joints[0];
    let mut o0 = Vec3(root.rest_offset);
    for (b, dir) in label.body.shape.iter().zip(&root.shape_basis) {
        o0 += Vec3(*dir).scale(*b);
    }
    let mut out = label.clone();
    out.body.pose[0] = log_map(&(rz * rodrigues(&label.body.pose[0])?));
    let t = rz.mul_vec(&(Vec3(label.root_translation) + o0)) - o0;
    out.root_translation = t.0;
    Ok(out)
}

/// `receiver ← τ·receiver + (1 − τ)·source`, coordinate-wise.
pub fn ema_update(receiver: &mut ModelState<f64>, source: &ModelState<f64>, tau: f64) -> Result<()> {
    if receiver.arch != source.arch {
        return Err(Error::InvalidArgument("EMA update between differently shaped networks".into()));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("EMA decay {tau} outside [0, 1]")));
    }
    for (r, s) in receiver.flatten_mut().iter_mut().zip(source.flatten()) {
        *r = tau * *r + (1.0 - tau) * s;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean over the epoch's samples, at the weights each batch started from.
    pub loss: LossBreakdown<f64>,
    /// Mean of `L_{o→t} + L_{t→o}` (zero without EMA).
    pub consistency: f64,
    pub metrics: Option<MetricReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub hyper: TrainHyper,
    pub ema: Option<EmaConfig>,
    pub augmentation: Option<AugmentationConfig>,
    pub master_seed: u64,
    pub samples: usize,
    pub epochs: Vec<EpochRecord>,
    /// Paths written by the caller after training.
    #[serde(default)]
    pub checkpoints: Vec<String>,
}

impl TrainRun {
    pub fn final_metrics(&self) -> Option<&MetricReport> {
        self.epochs.last().and_then(|e| e.metrics.as_ref())
    }
}

/// Training inputs that stay fixed over a run.
pub struct TrainContext<'a> {
    pub tpl: &'a SkeletonTemplate<f64>,
    /// Scored with the inference network when present.
    pub eval: Option<&'a [SceneRecord]>,
    pub master_seed: u64,
}

fn epoch_order(n: usize, master: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(master, SHUFFLE_STREAM, epoch as u64)));
    order
}

fn metrics_for(
    state: &ModelState<f64>,
    ctx: &TrainContext,
    hyper: &TrainHyper,
    epoch: usize,
) -> Result<Option<MetricReport>> {
    match ctx.eval {
        Some(records) if hyper.eval_each_epoch || epoch + 1 == hyper.epochs => {
            evaluate(state, records, ctx.tpl, &DEFAULT_F_THRESHOLDS_MM).map(Some)
        }
        _ => Ok(None),
    }
}

fn check_inputs(dataset: &[TrainSample], state: &ModelState<f64>, hyper: &TrainHyper, tpl: &SkeletonTemplate<f64>) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Configuration("training dataset is empty".into()));
    }
    hyper.validate()?;
    if state.arch.params != tpl.dims.param_count() {
        return Err(Error::Configuration(format!(
            "network emits {} parameters, model needs {}",
            state.arch.params,
            tpl.dims.param_count()
        )));
    }
    Ok(())
}

/// Sums per-sample gradients in batch order, then divides by the batch size.
fn mean_gradient(parts: Vec<(LossBreakdown<f64>, f64, Vec<f64>)>, n_weights: usize) -> (Vec<LossBreakdown<f64>>, f64, Vec<f64>) {
    let n = parts.len() as f64;
    let mut grad = vec![0.0; n_weights];
    let mut losses = Vec::with_capacity(parts.len());
    let mut consistency = 0.0;
    for (l, c, g) in parts {
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        losses.push(l);
        consistency += c;
    }
    grad.iter_mut().for_each(|g| *g /= n);
    (losses, consistency, grad)
}

/// Mini-batch Adam on the supervised loss.
pub fn train_distill(
    dataset: &[TrainSample],
    state: &mut ModelState<f64>,
    hyper: &TrainHyper,
    ctx: &TrainContext,
) -> Result<TrainRun> {
    check_inputs(dataset, state, hyper, ctx.tpl)?;
    let targets: Vec<Target<f64>> = dataset
        .iter()
        .map(|s| build_target(s, &s.keypoints, s.label.clone(), &hyper.visibility))
        .collect();
    let mut moments = AdamState::new(state.flatten().len());
    let mut epochs = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let lr = hyper.adam.learning_rate_at(epoch);
        let mut losses = Vec::with_capacity(dataset.len());
        for batch in epoch_order(dataset.len(), ctx.master_seed, epoch).chunks(hyper.batch_size) {
            let parts = batch
                .par_iter()
                .map(|&i| {
                    let (out, cache) = state.forward_cached(&targets[i].input)?;
                    let l = output_loss(&out, &targets[i], ctx.tpl, &hyper.loss)?;
                    Ok((l.breakdown, 0.0, state.backward(&cache, &l.grad_params, &l.grad_features)))
                })
                .collect::<Result<Vec<_>>>()?;
            let (l, _, grad) = mean_gradient(parts, state.flatten().len());
            losses.extend(l);
            adam_step(state.flatten_mut(), &grad, &mut moments, &hyper.adam, lr)?;
        }
        epochs.push(EpochRecord {
            epoch,
            learning_rate: lr,
            loss: LossBreakdown::mean(&losses),
            consistency: 0.0,
            metrics: metrics_for(state, ctx, hyper, epoch)?,
        });
    }
    Ok(TrainRun {
        hyper: hyper.clone(),
        ema: None,
        augmentation: None,
        master_seed: ctx.master_seed,
        samples: dataset.len(),
        epochs,
        checkpoints: Vec::new(),
    })
}

/// Teacher-student training with two augmentations per sample. The
/// gradient-updated network (per `ema.direction`) minimizes the supervised
/// loss on its own augmented view plus `L_{o→t} + L_{t→o}` against the other
/// network's output, which receives no gradient; the other network then
/// tracks it by EMA once per optimizer step. Metrics are those of the
/// student. With `ema.enabled == false` this is [`train_distill`] on the
/// student.
pub fn train_ema(
    dataset: &[TrainSample],
    student: &mut ModelState<f64>,
    teacher: &mut ModelState<f64>,
    hyper: &TrainHyper,
    ema: &EmaConfig,
    aug: &AugmentationConfig,
    ctx: &TrainContext,
) -> Result<TrainRun> {
    if !ema.enabled {
        return train_distill(dataset, student, hyper, ctx);
    }
    check_inputs(dataset, student, hyper, ctx.tpl)?;
    ema.validate()?;
    aug.validate()?;
    if student.arch != teacher.arch {
        return Err(Error::Configuration("student and teacher architectures differ".into()));
    }
    let mask: Vec<usize> = ctx
        .tpl
        .dims
        .layout()
        .articulation_mask()
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.then_some(i))
        .collect();
    let wc = hyper.loss.weights.consistency;
    let n_weights = student.flatten().len();
    let mut moments = AdamState::new(n_weights);
    let mut epochs = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        let lr = hyper.adam.learning_rate_at(epoch);
        let with_consistency = epoch >= ema.ema_start_epoch;
        let aug_seed = derive_seed(ctx.master_seed, AUGMENT_STREAM, epoch as u64);
        let mut losses = Vec::with_capacity(dataset.len());
        let mut consistency = 0.0;
        for batch in epoch_order(dataset.len(), ctx.master_seed, epoch).chunks(hyper.batch_size) {
            let (updated, other): (&ModelState<f64>, &ModelState<f64>) = match ema.direction {
                EmaDirection::TeacherTrained => (teacher, student),
                EmaDirection::StudentTrained => (student, teacher),
            };
            let parts = batch
                .par_iter()
                .map(|&i| {
                    let s = &dataset[i];
                    let pp = s.camera.principal_point;
                    // view a feeds the teacher, view b the student
                    let (obs_a, ang_a) = augment(&s.keypoints, pp, aug, derive_seed(aug_seed, 2 * i as u64, 0))?;
                    let (obs_b, ang_b) = augment(&s.keypoints, pp, aug, derive_seed(aug_seed, 2 * i as u64 + 1, 0))?;
                    let ((obs_u, ang_u), obs_o) = match ema.direction {
                        EmaDirection::TeacherTrained => ((obs_a, ang_a), obs_b),
                        EmaDirection::StudentTrained => ((obs_b, ang_b), obs_a),
                    };
                    let label = s.label.as_ref().map(|l| rotate_label(l, ctx.tpl, ang_u)).transpose()?;
                    let target = build_target(s, &obs_u, label, &hyper.visibility);
                    let (out, cache) = updated.forward_cached(&target.input)?;
                    let mut l = output_loss(&out, &target, ctx.tpl, &hyper.loss)?;
                    let mut c_value = 0.0;
                    if with_consistency {
                        let cam = &s.camera;
                        let other_out = other.forward(&encode_observation(&obs_o, cam.focal_length, cam.principal_point))?;
                        let z_u: Vec<f64> = mask.iter().map(|&k| out.params[k]).collect();
                        let z_o: Vec<f64> = mask.iter().map(|&k| other_out.params[k]).collect();
                        let forward = ema_consistency_loss(&z_u, &z_o)?;
                        let backward = ema_consistency_loss(&z_o, &z_u)?;
                        c_value = forward.value + backward.value;
                        for (j, &k) in mask.iter().enumerate() {
                            l.grad_params[k] += wc * (forward.grad_a[j] + backward.grad_b[j]);
                        }
                    }
                    let grad = updated.backward(&cache, &l.grad_params, &l.grad_features);
                    Ok((l.breakdown, c_value, grad))
                })
                .collect::<Result<Vec<_>>>()?;
            let (l, c, grad) = mean_gradient(parts, n_weights);
            losses.extend(l);
            consistency += c;
            let (updated, other) = match ema.direction {
                EmaDirection::TeacherTrained => (&mut *teacher, &mut *student),
                EmaDirection::StudentTrained => (&mut *student, &mut *teacher),
            };
            adam_step(updated.flatten_mut(), &grad, &mut moments, &hyper.adam, lr)?;
            ema_update(other, updated, ema.decay)?;
        }
        epochs.push(EpochRecord {
            epoch,
            learning_rate: lr,
            loss: LossBreakdown::mean(&losses),
            consistency: consistency / dataset.len() as f64,
            metrics: metrics_for(student, ctx, hyper, epoch)?,
        });
    }
    Ok(TrainRun {
        hyper: hyper.clone(),
        ema: Some(*ema),
        augmentation: Some(*aug),
        master_seed: ctx.master_seed,
        samples: dataset.len(),
        epochs,
        checkpoints: Vec::new(),
    })
}
