//! Synthetic scenes, a simulated 2D keypoint detector and simulated part
//! experts with controllable noise and failure modes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_model::{
    forward_kinematics, BodyParams, FaceParams, FullBodyParams, HandParams, ModelDims, Part, PartTag,
    SkeletonTemplate,
};
use crate::error::{Error, Result};
use crate::geometry::{AxisAngle, Camera};

/// Validity bounds that the invalid-output simulator deliberately violates.
const AXIS_ANGLE_LIMIT: f64 = std::f64::consts::TAU;
const SHAPE_LIMIT: f64 = 5.0;
const EXPRESSION_LIMIT: f64 = 3.0;

/// SplitMix64 finalizer; derives independent stream seeds from a master seed.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

mod stream {
    pub const SCENE: u64 = 1;
    pub const DETECT: u64 = 2;
    pub const EXPERT: u64 = 3;
    pub const HARD: u64 = 4;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub subject_id: u64,
    pub truth: FullBodyParams<f64>,
    pub camera: Camera<f64>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub position: [f64; 2],
    pub confidence: f64,
    pub part: Part,
    pub tag: PartTag,
}

/// Detected keypoints of one scene, in template keypoint order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeypointObservation {
    pub subject_id: u64,
    pub keypoints: Vec<Keypoint>,
}

impl KeypointObservation {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartParamsValue {
    Body(BodyParams<f64>),
    Face(FaceParams<f64>),
    Hand(HandParams<f64>),
}

/// One expert's output for one scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartPrediction {
    pub subject_id: u64,
    pub part: Part,
    pub params: PartParamsValue,
    /// Body expert only: camera-frame placement of the pelvis.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_array3")]
    pub root_translation: Option<[f64; 3]>,
    #[serde(with = "crate::serde_real::vec")]
    pub feature: Vec<f64>,
    /// Simulator ground truth about whether the output was corrupted.
    /// Curation never reads this flag; it inspects the values.
    pub valid: bool,
}

mod opt_array3 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<[f64; 3]>, s: S) -> Result<S::Ok, S::Error> {
        v.map(|a| a.map(|x| if x.is_finite() { Some(x) } else { None })).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<[f64; 3]>, D::Error> {
        let raw: Option<[Option<f64>; 3]> = Option::deserialize(d)?;
        Ok(raw.map(|a| a.map(|x| x.unwrap_or(f64::NAN))))
    }
}

/// Expert feature widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDims {
    pub body: usize,
    pub face: usize,
    pub hand: usize,
}

impl FeatureDims {
    pub fn paper() -> Self {
        FeatureDims {
            body: 2048,
            face: 512,
            hand: 512,
        }
    }

    pub fn toy() -> Self {
        FeatureDims {
            body: 32,
            face: 16,
            hand: 16,
        }
    }

    pub fn for_part(&self, part: Part) -> usize {
        match part {
            Part::Body => self.body,
            Part::Face => self.face,
            Part::LeftHand | Part::RightHand => self.hand,
        }
    }
}

/// Per-part Gaussian noise on expert outputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamNoise {
    /// Radians per axis-angle component.
    pub body_pose: f64,
    pub face_pose: f64,
    pub hand_pose: f64,
    pub shape: f64,
    pub expression: f64,
    /// Meters.
    pub translation: f64,
    pub feature: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseProfile {
    /// Pixels per axis.
    pub keypoint_jitter: f64,
    pub keypoint_dropout: f64,
    pub param_noise: ParamNoise,
    pub invalid_output_probability: f64,
    pub gross_error_probability: f64,
    /// Rotation angle (radians) of every joint of the fallback pose a
    /// grossly wrong expert emits.
    pub gross_error_magnitude: f64,
    /// Fraction of scenes that are heavily occluded: the detector drops
    /// `hard_scene_dropout` of their keypoints and the experts' noise is
    /// multiplied by `hard_scene_noise_scale`.
    pub hard_scene_probability: f64,
    pub hard_scene_dropout: f64,
    pub hard_scene_noise_scale: f64,
}

impl NoiseProfile {
    pub fn none() -> Self {
        NoiseProfile {
            keypoint_jitter: 0.0,
            keypoint_dropout: 0.0,
            param_noise: ParamNoise {
                body_pose: 0.0,
                face_pose: 0.0,
                hand_pose: 0.0,
                shape: 0.0,
                expression: 0.0,
                translation: 0.0,
                feature: 0.0,
            },
            invalid_output_probability: 0.0,
            gross_error_probability: 0.0,
            gross_error_magnitude: 0.0,
            hard_scene_probability: 0.0,
            hard_scene_dropout: 0.0,
            hard_scene_noise_scale: 1.0,
        }
    }

    /// The benchmark setting used by the demo and the ablation suites.
    pub fn moderate() -> Self {
        NoiseProfile {
            keypoint_jitter: 1.0,
            keypoint_dropout: 0.05,
            param_noise: ParamNoise {
                body_pose: 0.008,
                face_pose: 0.01,
                hand_pose: 0.015,
                shape: 0.05,
                expression: 0.05,
                translation: 0.002,
                feature: 0.05,
            },
            invalid_output_probability: 0.05,
            gross_error_probability: 0.15,
            gross_error_magnitude: 1.0,
            hard_scene_probability: 0.1,
            hard_scene_dropout: 0.8,
            hard_scene_noise_scale: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("keypoint_dropout", self.keypoint_dropout),
            ("invalid_output_probability", self.invalid_output_probability),
            ("gross_error_probability", self.gross_error_probability),
            ("hard_scene_probability", self.hard_scene_probability),
            ("hard_scene_dropout", self.hard_scene_dropout),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Configuration(format!("{name} = {p} is not a probability")));
            }
        }
        let n = &self.param_noise;
        let sigmas = [
            ("keypoint_jitter", self.keypoint_jitter),
            ("gross_error_magnitude", self.gross_error_magnitude),
            ("hard_scene_noise_scale", self.hard_scene_noise_scale),
            ("param_noise.body_pose", n.body_pose),
            ("param_noise.face_pose", n.face_pose),
            ("param_noise.hand_pose", n.hand_pose),
            ("param_noise.shape", n.shape),
            ("param_noise.expression", n.expression),
            ("param_noise.translation", n.translation),
            ("param_noise.feature", n.feature),
        ];
        for (name, s) in sigmas {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Configuration(format!("{name} = {s} must be a finite non-negative number")));
            }
        }
        Ok(())
    }

    fn is_hard(&self, scene: &Scene) -> bool {
        if self.hard_scene_probability <= 0.0 {
            return false;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(scene.seed, stream::HARD, 0));
        rng.random::<f64>() < self.hard_scene_probability
    }
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("non-negative finite sigma")
}

/// Draws a subject: every parameter is a zero-mean Gaussian whose spread is
/// proportional to `pose_prior_scale` (pose components have exactly that
/// standard deviation). Seam entries copy the body's neck and wrist
/// rotations so that the truth is self-consistent.
pub fn generate_scene(seed: u64, dims: &ModelDims, pose_prior_scale: f64) -> Result<Scene> {
    if !(pose_prior_scale >= 0.0 && pose_prior_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "pose prior scale must be non-negative, got {pose_prior_scale}"
        )));
    }
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::SCENE, 0));
    let pose = normal(pose_prior_scale);
    let shape = normal(3.0 * pose_prior_scale);
    let expr = normal(3.0 * pose_prior_scale);
    let trans = normal(0.25 * pose_prior_scale);

    let layout = dims.layout();
    let mut flat = vec![0.0; layout.len()];
    for r in [
        layout.body_pose.clone(),
        layout.jaw_pose.clone(),
        layout.face_other_poses.clone(),
        layout.left_hand_pose.clone(),
        layout.right_hand_pose.clone(),
    ] {
        for x in &mut flat[r] {
            *x = pose.sample(&mut rng);
        }
    }
    for r in [
        layout.body_shape.clone(),
        layout.left_hand_shape.clone(),
        layout.right_hand_shape.clone(),
    ] {
        for x in &mut flat[r] {
            *x = shape.sample(&mut rng).clamp(-SHAPE_LIMIT, SHAPE_LIMIT);
        }
    }
    for x in &mut flat[layout.expression.clone()] {
        *x = expr.sample(&mut rng).clamp(-EXPRESSION_LIMIT, EXPRESSION_LIMIT);
    }
    for x in &mut flat[layout.root_translation.clone()] {
        *x = trans.sample(&mut rng);
    }
    let mut truth = FullBodyParams::from_flat(dims, &flat)?;
    truth.canonicalize();

    let tpl_seams = seam_joints(dims);
    sync_seams(&mut truth, tpl_seams);

    let depth = 2.5 + rng.random::<f64>();
    let camera = Camera::new(1000.0, [500.0, 500.0], depth)?;
    Ok(Scene {
        subject_id: seed,
        truth,
        camera,
        seed,
    })
}

/// Neck and wrist body-joint indices; identical for every template built
/// from the same dims.
pub fn seam_joints(dims: &ModelDims) -> (usize, usize, usize) {
    let counts = crate::body_model::template::split_evenly(dims.body_joints - 1, 5);
    let neck = counts[0];
    let left_wrist = neck + counts[1];
    let right_wrist = left_wrist + counts[2];
    (neck, left_wrist, right_wrist)
}

/// Copies the body's neck and wrist rotations into the face/hand seam slots.
pub fn sync_seams(params: &mut FullBodyParams<f64>, (neck, lw, rw): (usize, usize, usize)) {
    if let Some(slot) = params.face.other_poses.first_mut() {
        *slot = params.body.pose[neck];
    }
    params.left_hand.pose[0] = params.body.pose[lw];
    params.right_hand.pose[0] = params.body.pose[rw];
}

/// Simulated detector: projects the true keypoints, adds Gaussian jitter
/// and drops keypoints. Confidence is `clamp(1 − |jitter| / (4σ + ε), 0, 1)`
/// for surviving keypoints and 0 for dropped ones.
pub fn detect_keypoints(
    scene: &Scene,
    tpl: &SkeletonTemplate<f64>,
    noise: &NoiseProfile,
    seed: u64,
) -> Result<KeypointObservation> {
    noise.validate()?;
    let fk = forward_kinematics(&scene.truth, tpl)?;
    let points = fk.keypoints(tpl);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream::DETECT, scene.seed));
    let sigma = noise.keypoint_jitter;
    let jitter = normal(sigma);
    let dropout = if noise.is_hard(scene) {
        noise.hard_scene_dropout.max(noise.keypoint_dropout)
    } else {
        noise.keypoint_dropout
    };

    let mut keypoints = Vec::with_capacity(points.len());
    for (src, p) in tpl.keypoints.iter().zip(&points) {
        let exact = scene.camera.project_point(p)?;
        let dx = jitter.sample(&mut rng);
        let dy = jitter.sample(&mut rng);
        let dropped = rng.random::<f64>() < dropout;
        let magnitude = (dx * dx + dy * dy).sqrt();
        let confidence = if dropped {
            0.0
        } else {
            (1.0 - magnitude / (4.0 * sigma + 1e-12)).clamp(0.0, 1.0)
        };
        keypoints.push(Keypoint {
            position: [exact[0] + dx, exact[1] + dy],
            confidence,
            part: src.part,
            tag: src.tag,
        });
    }
    Ok(KeypointObservation {
        subject_id: scene.subject_id,
        keypoints,
    })
}

/// Fixed random `tanh(W·x + b)` maps from part parameters to expert features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertFeatureMap {
    pub dims: FeatureDims,
    body: AffineMap,
    face: AffineMap,
    hand: AffineMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AffineMap {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl AffineMap {
    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = normal(1.5 / (cols as f64).sqrt());
        let b = normal(0.1);
        AffineMap {
            rows,
            cols,
            weights: (0..rows * cols).map(|_| w.sample(rng)).collect(),
            bias: (0..rows).map(|_| b.sample(rng)).collect(),
        }
    }

    fn apply_tanh(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let row = &self.weights[r * self.cols..(r + 1) * self.cols];
                let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[r];
                z.tanh()
            })
            .collect()
    }
}

/// Parameters an expert of `part` is responsible for, flattened.
pub fn part_param_vector(value: &PartParamsValue) -> Vec<f64> {
    let mut out = Vec::new();
    match value {
        PartParamsValue::Body(b) => {
            b.pose.iter().for_each(|p| out.extend_from_slice(&p.0));
            out.extend_from_slice(&b.shape);
        }
        PartParamsValue::Face(f) => {
            out.extend_from_slice(&f.jaw_pose.0);
            f.other_poses.iter().for_each(|p| out.extend_from_slice(&p.0));
            out.extend_from_slice(&f.expression);
        }
        PartParamsValue::Hand(h) => {
            h.pose.iter().for_each(|p| out.extend_from_slice(&p.0));
            out.extend_from_slice(&h.shape);
        }
    }
    out
}

fn part_value(truth: &FullBodyParams<f64>, part: Part) -> PartParamsValue {
    match part {
        Part::Body => PartParamsValue::Body(truth.body.clone()),
        Part::Face => PartParamsValue::Face(truth.face.clone()),
        Part::LeftHand => PartParamsValue::Hand(truth.left_hand.clone()),
        Part::RightHand => PartParamsValue::Hand(truth.right_hand.clone()),
    }
}

impl ExpertFeatureMap {
    pub fn generate(model: &ModelDims, dims: FeatureDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let body_in = 3 * model.body_joints + model.body_shape;
        let face_in = 3 * model.face_joints + model.expression_dims;
        let hand_in = 3 * model.hand_joints + model.hand_shape;
        ExpertFeatureMap {
            dims,
            body: AffineMap::random(dims.body, body_in, &mut rng),
            face: AffineMap::random(dims.face, face_in, &mut rng),
            hand: AffineMap::random(dims.hand, hand_in, &mut rng),
        }
    }

    /// Noise-free feature of a part parameter block.
    pub fn feature(&self, value: &PartParamsValue) -> Vec<f64> {
        let x = part_param_vector(value);
        match value {
            PartParamsValue::Body(_) => self.body.apply_tanh(&x),
            PartParamsValue::Face(_) => self.face.apply_tanh(&x),
            PartParamsValue::Hand(_) => self.hand.apply_tanh(&x),
        }
    }
}

fn perturb_poses(poses: &mut [AxisAngle<f64>], sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    let n = normal(sigma);
    for p in poses.iter_mut() {
        for c in p.0.iter_mut() {
            *c += n.sample(rng);
        }
    }
}

fn perturb(values: &mut [f64], sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    let n = normal(sigma);
    for v in values.iter_mut() {
        *v += n.sample(rng);
    }
}

/// Simulated part expert.
///
/// The prediction is the true part block plus Gaussian noise; with
/// `gross_error_probability` the expert collapses to its own fixed
/// [`fallback_pose`] for every articulated joint, and with `invalid_output_probability` the output
/// is corrupted (NaN, an axis-angle component beyond 2π, or a shape
/// coefficient beyond 5). The feature is the fixed map applied to the true
/// block plus Gaussian noise.
pub fn run_expert(
    part: &str,
    scene: &Scene,
    noise: &NoiseProfile,
    features: &ExpertFeatureMap,
    seed: u64,
) -> Result<PartPrediction> {
    let part: Part = part.parse()?;
    run_part_expert(part, scene, noise, features, seed)
}

pub fn run_part_expert(
    part: Part,
    scene: &Scene,
    noise: &NoiseProfile,
    features: &ExpertFeatureMap,
    seed: u64,
) -> Result<PartPrediction> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        derive_seed(seed, stream::EXPERT, scene.seed),
        part.index() as u64,
        0,
    ));
    let scale = if noise.is_hard(scene) {
        noise.hard_scene_noise_scale
    } else {
        1.0
    };
    let n = &noise.param_noise;
    let truth_value = part_value(&scene.truth, part);
    let mut feature = features.feature(&truth_value);
    perturb(&mut feature, n.feature, &mut rng);

    let mut value = truth_value;
    let mut root_translation = None;
    match &mut value {
        PartParamsValue::Body(b) => {
            perturb_poses(&mut b.pose, n.body_pose * scale, &mut rng);
            perturb(&mut b.shape, n.shape * scale, &mut rng);
            let mut t = scene.truth.root_translation;
            perturb(&mut t, n.translation * scale, &mut rng);
            root_translation = Some(t);
        }
        PartParamsValue::Face(f) => {
            perturb_poses(std::slice::from_mut(&mut f.jaw_pose), n.face_pose * scale, &mut rng);
            perturb_poses(&mut f.other_poses, n.face_pose * scale, &mut rng);
            perturb(&mut f.expression, n.expression * scale, &mut rng);
        }
        PartParamsValue::Hand(h) => {
            perturb_poses(&mut h.pose, n.hand_pose * scale, &mut rng);
            perturb(&mut h.shape, n.shape * scale, &mut rng);
        }
    }

    if rng.random::<f64>() < noise.gross_error_probability {
        let (poses, first): (&mut [AxisAngle<f64>], usize) = match &mut value {
            // the root rotation stays; hand joint 0 is the wrist seam
            PartParamsValue::Body(b) => (&mut b.pose, 1),
            PartParamsValue::Face(f) => (std::slice::from_mut(&mut f.jaw_pose), 0),
            PartParamsValue::Hand(h) => (&mut h.pose, 1),
        };
        for (j, p) in poses.iter_mut().enumerate().skip(first) {
            *p = fallback_pose(part, j, noise.gross_error_magnitude);
        }
    }

    let mut valid = true;
    if rng.random::<f64>() < noise.invalid_output_probability {
        valid = false;
        corrupt(&mut value, &mut rng);
    }

    Ok(PartPrediction {
        subject_id: scene.subject_id,
        part,
        params: value,
        root_translation,
        feature,
        valid,
    })
}

/// Joint `joint` of the pose a failing `part` expert falls back to: a fixed
/// direction per joint, rotated by `magnitude`. The same for every scene, so
/// these failures bias a regressor instead of averaging out.
pub fn fallback_pose(part: Part, joint: usize, magnitude: f64) -> AxisAngle<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0xFA11_BAC0, part.index() as u64, joint as u64));
    let n = normal(1.0);
    let dir = [n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng)];
    let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt().max(1e-12);
    AxisAngle::new(magnitude * dir[0] / norm, magnitude * dir[1] / norm, magnitude * dir[2] / norm)
}

fn corrupt(value: &mut PartParamsValue, rng: &mut ChaCha8Rng) {
    let (poses, coeffs, coeff_limit): (&mut [AxisAngle<f64>], &mut Vec<f64>, f64) = match value {
        PartParamsValue::Body(b) => (&mut b.pose, &mut b.shape, SHAPE_LIMIT),
        PartParamsValue::Face(f) => (std::slice::from_mut(&mut f.jaw_pose), &mut f.expression, SHAPE_LIMIT),
        PartParamsValue::Hand(h) => (&mut h.pose, &mut h.shape, SHAPE_LIMIT),
    };
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let excess = rng.random_range(0.5..3.0);
    match rng.random_range(0..3u8) {
        0 => {
            let j = rng.random_range(0..poses.len());
            poses[j].0[rng.random_range(0..3)] = f64::NAN;
        }
        1 => {
            let j = rng.random_range(0..poses.len());
            poses[j].0[rng.random_range(0..3)] = sign * (AXIS_ANGLE_LIMIT + excess);
        }
        _ => {
            let k = rng.random_range(0..coeffs.len());
            coeffs[k] = sign * (coeff_limit + excess);
        }
    }
}

/// Everything the simulator produces for one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRecord {
    pub scene: Scene,
    pub observation: KeypointObservation,
    /// Body, face, left hand, right hand.
    pub predictions: Vec<PartPrediction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub dims: ModelDims,
    pub feature_dims: FeatureDims,
    pub noise: NoiseProfile,
    pub pose_prior_scale: f64,
    pub template_seed: u64,
    pub feature_seed: u64,
}

impl SynthConfig {
    pub fn toy() -> Self {
        SynthConfig {
            dims: ModelDims::toy(),
            feature_dims: FeatureDims::toy(),
            noise: NoiseProfile::moderate(),
            pose_prior_scale: 0.3,
            template_seed: 17,
            feature_seed: 23,
        }
    }

    pub fn template(&self) -> Result<SkeletonTemplate<f64>> {
        SkeletonTemplate::generate(&self.dims, self.template_seed)
    }

    pub fn feature_map(&self) -> ExpertFeatureMap {
        ExpertFeatureMap::generate(&self.dims, self.feature_dims, self.feature_seed)
    }
}

/// Scene `index` of the dataset drawn from `master_seed`.
pub fn synthesize_record(
    cfg: &SynthConfig,
    tpl: &SkeletonTemplate<f64>,
    features: &ExpertFeatureMap,
    master_seed: u64,
    index: u64,
) -> Result<SceneRecord> {
    let scene_seed = derive_seed(master_seed, stream::SCENE, index);
    let mut scene = generate_scene(scene_seed, &cfg.dims, cfg.pose_prior_scale)?;
    scene.subject_id = index;
    let observation = detect_keypoints(&scene, tpl, &cfg.noise, master_seed)?;
    let predictions = Part::ALL
        .iter()
        .map(|&p| run_part_expert(p, &scene, &cfg.noise, features, master_seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneRecord {
        scene,
        observation,
        predictions,
    })
}

/// `count` records with subject ids `first_index..first_index + count`.
pub fn synthesize_dataset(cfg: &SynthConfig, master_seed: u64, first_index: u64, count: usize) -> Result<Vec<SceneRecord>> {
    let tpl = cfg.template()?;
    let features = cfg.feature_map();
    (0..count as u64)
        .into_par_iter()
        .map(|i| synthesize_record(cfg, &tpl, &features, master_seed, first_index + i))
        .collect()
}
