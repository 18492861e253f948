//! Pseudo-label selection (keypoint-confidence count, output validity,
//! reprojection gate) and fusion of part predictions into full-body labels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_model::{
    forward_kinematics, merge, BodyParams, FaceParams, FullBodyParams, HandParams, Part, PartTag, Side,
    SkeletonTemplate,
};
use crate::error::{Error, Result};
use crate::geometry::{AxisAngle, Camera};
use crate::synth::{KeypointObservation, PartParamsValue, PartPrediction, SceneRecord};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    pub body_threshold: f64,
    pub hand_threshold: f64,
    pub face_threshold: f64,
    pub min_keypoints: usize,
    /// RMSE in centimeters at the subject plane.
    pub reprojection_gate_cm: f64,
    pub axis_angle_bound: f64,
    /// Applies to shape and expression coefficients.
    pub shape_bound: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            body_threshold: 0.1,
            hand_threshold: 0.2,
            face_threshold: 0.4,
            min_keypoints: 12,
            reprojection_gate_cm: 1.5,
            axis_angle_bound: std::f64::consts::TAU,
            shape_bound: 5.0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("body_threshold", self.body_threshold),
            ("hand_threshold", self.hand_threshold),
            ("face_threshold", self.face_threshold),
        ] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Configuration(format!("{name} = {t} must lie in (0, 1)")));
            }
        }
        for (name, v) in [
            ("reprojection_gate_cm", self.reprojection_gate_cm),
            ("axis_angle_bound", self.axis_angle_bound),
            ("shape_bound", self.shape_bound),
        ] {
            if !(v > 0.0) {
                return Err(Error::Configuration(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    pub fn threshold(&self, tag: PartTag) -> f64 {
        match tag {
            PartTag::Body => self.body_threshold,
            PartTag::Hand => self.hand_threshold,
            PartTag::Face => self.face_threshold,
        }
    }

    /// Whether a keypoint counts as confidently detected.
    pub fn visible(&self, tag: PartTag, confidence: f64) -> bool {
        confidence > self.threshold(tag)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step1Outcome {
    pub passed: bool,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step2Outcome {
    pub passed: bool,
    /// Parts whose prediction is missing, non-finite or out of range.
    pub offending: Vec<Part>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step3Outcome {
    pub passed: bool,
    pub rmse_cm: f64,
    pub keypoints_used: usize,
}

/// Pooled count of keypoints whose confidence strictly exceeds their part's
/// threshold; passes when the count reaches `min_keypoints`.
pub fn step1_confidence_gate(obs: &KeypointObservation, cfg: &SelectionConfig) -> Step1Outcome {
    let count = obs
        .keypoints
        .iter()
        .filter(|k| cfg.visible(k.tag, k.confidence))
        .count();
    Step1Outcome {
        passed: count >= cfg.min_keypoints,
        count,
    }
}

fn poses_ok(poses: &[AxisAngle<f64>], bound: f64) -> bool {
    poses.iter().all(|p| p.0.iter().all(|c| c.is_finite() && c.abs() <= bound))
}

fn coeffs_ok(values: &[f64], bound: f64) -> bool {
    values.iter().all(|c| c.is_finite() && c.abs() <= bound)
}

/// Whether one prediction is finite and inside the configured bounds.
pub fn prediction_is_valid(pred: &PartPrediction, cfg: &SelectionConfig) -> bool {
    let params_ok = match &pred.params {
        PartParamsValue::Body(b) => poses_ok(&b.pose, cfg.axis_angle_bound) && coeffs_ok(&b.shape, cfg.shape_bound),
        PartParamsValue::Face(f) => {
            poses_ok(std::slice::from_ref(&f.jaw_pose), cfg.axis_angle_bound)
                && poses_ok(&f.other_poses, cfg.axis_angle_bound)
                && coeffs_ok(&f.expression, cfg.shape_bound)
        }
        PartParamsValue::Hand(h) => poses_ok(&h.pose, cfg.axis_angle_bound) && coeffs_ok(&h.shape, cfg.shape_bound),
    };
    params_ok
        && pred.root_translation.is_none_or(|t| t.iter().all(|x| x.is_finite()))
        && pred.feature.iter().all(|x| x.is_finite())
}

/// Every part needs exactly one prediction that is finite and in range.
pub fn step2_validity_gate(preds: &[PartPrediction], cfg: &SelectionConfig) -> Step2Outcome {
    let mut offending = Vec::new();
    for part in Part::ALL {
        let mut mine = preds.iter().filter(|p| p.part == part);
        let ok = match (mine.next(), mine.next()) {
            (Some(p), None) => prediction_is_valid(p, cfg),
            _ => false,
        };
        if !ok {
            offending.push(part);
        }
    }
    Step2Outcome {
        passed: offending.is_empty(),
        offending,
    }
}

/// Reprojection RMSE (cm at the subject plane) of the fused label against
/// the confidently detected keypoints.
pub fn step3_reprojection_gate(
    fused: &FullBodyParams<f64>,
    obs: &KeypointObservation,
    camera: &Camera<f64>,
    tpl: &SkeletonTemplate<f64>,
    cfg: &SelectionConfig,
) -> Result<Step3Outcome> {
    if obs.keypoints.len() != tpl.keypoints.len() {
        return Err(Error::Configuration(format!(
            "observation has {} keypoints, template defines {}",
            obs.keypoints.len(),
            tpl.keypoints.len()
        )));
    }
    let fk = forward_kinematics(fused, tpl)?;
    let mut sum_sq = 0.0;
    let mut used = 0usize;
    for (kp, point) in obs.keypoints.iter().zip(fk.keypoints(tpl)) {
        if !cfg.visible(kp.tag, kp.confidence) {
            continue;
        }
        let proj = camera.project_point(&point)?;
        let du = camera.pixels_to_centimeters(kp.position[0] - proj[0]);
        let dv = camera.pixels_to_centimeters(kp.position[1] - proj[1]);
        sum_sq += du * du + dv * dv;
        used += 1;
    }
    if used == 0 {
        return Err(Error::GateUndefined);
    }
    let rmse_cm = (sum_sq / used as f64).sqrt();
    Ok(Step3Outcome {
        passed: rmse_cm <= cfg.reprojection_gate_cm,
        rmse_cm,
        keypoints_used: used,
    })
}

fn take_part(preds: &[PartPrediction], part: Part) -> Result<&PartPrediction> {
    let mut mine = preds.iter().filter(|p| p.part == part);
    match (mine.next(), mine.next()) {
        (Some(p), None) => Ok(p),
        (None, _) => Err(Error::Fusion(format!("missing {} prediction", part.name()))),
        _ => Err(Error::Fusion(format!("duplicate {} prediction", part.name()))),
    }
}

/// Assembles the part predictions into one full-body label. Each block comes
/// from its own expert; the neck and wrist seam slots take the body expert's
/// rotation of those joints.
pub fn fuse(preds: &[PartPrediction], tpl: &SkeletonTemplate<f64>) -> Result<FullBodyParams<f64>> {
    let body_pred = take_part(preds, Part::Body)?;
    let body: BodyParams<f64> = match &body_pred.params {
        PartParamsValue::Body(b) => b.clone(),
        _ => return Err(Error::Fusion("body expert returned non-body parameters".into())),
    };
    let mut face: FaceParams<f64> = match &take_part(preds, Part::Face)?.params {
        PartParamsValue::Face(f) => f.clone(),
        _ => return Err(Error::Fusion("face expert returned non-face parameters".into())),
    };
    let hand = |part: Part, side: Side| -> Result<HandParams<f64>> {
        match &take_part(preds, part)?.params {
            PartParamsValue::Hand(h) if h.side == side => Ok(h.clone()),
            _ => Err(Error::Fusion(format!("{} expert returned wrong parameters", part.name()))),
        }
    };
    let mut left = hand(Part::LeftHand, Side::Left)?;
    let mut right = hand(Part::RightHand, Side::Right)?;
    let translation = body_pred
        .root_translation
        .ok_or_else(|| Error::Fusion("body prediction carries no root translation".into()))?;

    let seam = |idx: usize| {
        body.pose
            .get(idx)
            .copied()
            .ok_or_else(|| Error::Fusion(format!("body pose has no joint {idx}")))
    };
    if let Some(slot) = face.other_poses.first_mut() {
        *slot = seam(tpl.neck_joint)?;
    }
    if let Some(slot) = left.pose.first_mut() {
        *slot = seam(tpl.left_wrist)?;
    }
    if let Some(slot) = right.pose.first_mut() {
        *slot = seam(tpl.right_wrist)?;
    }
    let fused = merge(body, face, left, right, translation)?;
    fused
        .check_dims(&tpl.dims)
        .map_err(|e| Error::Fusion(e.to_string()))?;
    Ok(fused)
}

/// Expert features carried along as distillation targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartFeatures {
    #[serde(with = "crate::serde_real::vec")]
    pub body: Vec<f64>,
    #[serde(with = "crate::serde_real::vec")]
    pub face: Vec<f64>,
    #[serde(with = "crate::serde_real::vec")]
    pub left_hand: Vec<f64>,
    #[serde(with = "crate::serde_real::vec")]
    pub right_hand: Vec<f64>,
}

impl PartFeatures {
    pub fn from_predictions(preds: &[PartPrediction]) -> Result<Self> {
        let get = |part| take_part(preds, part).map(|p| p.feature.clone());
        Ok(PartFeatures {
            body: get(Part::Body)?,
            face: get(Part::Face)?,
            left_hand: get(Part::LeftHand)?,
            right_hand: get(Part::RightHand)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub step1_count: usize,
    pub step3_rmse_cm: f64,
    pub step3_keypoints: usize,
}

/// A scene whose pseudo label survived all three steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuratedSample {
    pub subject_id: u64,
    pub camera: Camera<f64>,
    pub label: FullBodyParams<f64>,
    pub features: PartFeatures,
    pub keypoints: KeypointObservation,
    pub provenance: Provenance,
}

/// Fixed-bin histogram; the last bin collects everything at or above the
/// last edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(edges: Vec<f64>) -> Self {
        let counts = vec![0; edges.len()];
        Histogram { edges, counts }
    }

    pub fn add(&mut self, x: f64) {
        let bin = self.edges.iter().rposition(|e| x >= *e).unwrap_or(0);
        self.counts[bin] += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        assert_eq!(self.edges, other.edges, "merging histograms with different bins");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub input: u64,
    pub discarded_step1: u64,
    pub discarded_step2: u64,
    pub discarded_step3: u64,
    /// Discarded because no keypoint qualified for the reprojection gate.
    pub gate_undefined: u64,
    pub kept: u64,
    /// Step-2 failures per part, in body, face, left hand, right hand order.
    pub offending_parts: [u64; 4],
    pub step1_counts: Histogram,
    pub step3_rmse_cm: Histogram,
}

impl CurationReport {
    pub fn empty() -> Self {
        CurationReport {
            input: 0,
            discarded_step1: 0,
            discarded_step2: 0,
            discarded_step3: 0,
            gate_undefined: 0,
            kept: 0,
            offending_parts: [0; 4],
            step1_counts: Histogram::new((0..=16).map(|i| (4 * i) as f64).collect()),
            step3_rmse_cm: Histogram::new((0..=20).map(|i| 0.25 * i as f64).collect()),
        }
    }

    pub fn merge(mut self, other: &CurationReport) -> Self {
        self.input += other.input;
        self.discarded_step1 += other.discarded_step1;
        self.discarded_step2 += other.discarded_step2;
        self.discarded_step3 += other.discarded_step3;
        self.gate_undefined += other.gate_undefined;
        self.kept += other.kept;
        for (a, b) in self.offending_parts.iter_mut().zip(&other.offending_parts) {
            *a += b;
        }
        self.step1_counts.merge(&other.step1_counts);
        self.step3_rmse_cm.merge(&other.step3_rmse_cm);
        self
    }

    pub fn is_consistent(&self) -> bool {
        self.discarded_step1 + self.discarded_step2 + self.discarded_step3 + self.gate_undefined + self.kept
            == self.input
    }
}

/// What happened to one record.
#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Step1(Step1Outcome),
    Step2(Step1Outcome, Step2Outcome),
    Step3(Step1Outcome, Step3Outcome),
    GateUndefined(Step1Outcome),
    Kept(Box<CuratedSample>),
}

/// Runs the three steps in order on one record, stopping at the first
/// failure. Only the camera, observation and predictions are read.
pub fn curate_one(record: &SceneRecord, tpl: &SkeletonTemplate<f64>, cfg: &SelectionConfig) -> Result<Verdict> {
    let s1 = step1_confidence_gate(&record.observation, cfg);
    if !s1.passed {
        return Ok(Verdict::Step1(s1));
    }
    let s2 = step2_validity_gate(&record.predictions, cfg);
    if !s2.passed {
        return Ok(Verdict::Step2(s1, s2));
    }
    let label = fuse(&record.predictions, tpl)?;
    let camera = record.scene.camera;
    let s3 = match step3_reprojection_gate(&label, &record.observation, &camera, tpl, cfg) {
        Ok(s3) => s3,
        Err(Error::GateUndefined) => return Ok(Verdict::GateUndefined(s1)),
        Err(e) => return Err(e),
    };
    if !s3.passed {
        return Ok(Verdict::Step3(s1, s3));
    }
    Ok(Verdict::Kept(Box::new(CuratedSample {
        subject_id: record.scene.subject_id,
        camera,
        label,
        features: PartFeatures::from_predictions(&record.predictions)?,
        keypoints: record.observation.clone(),
        provenance: Provenance {
            step1_count: s1.count,
            step3_rmse_cm: s3.rmse_cm,
            step3_keypoints: s3.keypoints_used,
        },
    })))
}

fn report_for(verdict: &Verdict) -> CurationReport {
    let mut r = CurationReport::empty();
    r.input = 1;
    let s1 = match verdict {
        Verdict::Step1(s1) | Verdict::Step2(s1, _) | Verdict::Step3(s1, _) | Verdict::GateUndefined(s1) => *s1,
        Verdict::Kept(s) => Step1Outcome {
            passed: true,
            count: s.provenance.step1_count,
        },
    };
    r.step1_counts.add(s1.count as f64);
    match verdict {
        Verdict::Step1(_) => r.discarded_step1 = 1,
        Verdict::Step2(_, s2) => {
            r.discarded_step2 = 1;
            for p in &s2.offending {
                r.offending_parts[p.index()] += 1;
            }
        }
        Verdict::Step3(_, s3) => {
            r.discarded_step3 = 1;
            r.step3_rmse_cm.add(s3.rmse_cm);
        }
        Verdict::GateUndefined(_) => r.gate_undefined = 1,
        Verdict::Kept(s) => {
            r.kept = 1;
            r.step3_rmse_cm.add(s.provenance.step3_rmse_cm);
        }
    }
    r
}

/// Curates a dataset. Records are processed independently; the kept samples
/// come back sorted by subject id so the result does not depend on input
/// order.
pub fn curate(
    records: &[SceneRecord],
    tpl: &SkeletonTemplate<f64>,
    cfg: &SelectionConfig,
) -> Result<(Vec<CuratedSample>, CurationReport)> {
    cfg.validate()?;
    let verdicts = records
        .par_iter()
        .map(|r| curate_one(r, tpl, cfg))
        .collect::<Result<Vec<_>>>()?;
    let report = verdicts
        .iter()
        .map(report_for)
        .fold(CurationReport::empty(), |acc, r| acc.merge(&r));
    let mut kept: Vec<CuratedSample> = verdicts
        .into_iter()
        .filter_map(|v| match v {
            Verdict::Kept(s) => Some(*s),
            _ => None,
        })
        .collect();
    kept.sort_by_key(|s| s.subject_id);
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::split;
    use crate::synth::{
        detect_keypoints, generate_scene, run_part_expert, synthesize_dataset, ExpertFeatureMap, Keypoint,
        NoiseProfile, SynthConfig,
    };

    fn setup() -> (SynthConfig, SkeletonTemplate<f64>, ExpertFeatureMap) {
        let mut cfg = SynthConfig::toy();
        cfg.noise = NoiseProfile::none();
        let tpl = cfg.template().unwrap();
        let fm = cfg.feature_map();
        (cfg, tpl, fm)
    }

    fn clean_record(seed: u64) -> SceneRecord {
        let (cfg, tpl, fm) = setup();
        let scene = generate_scene(seed, &cfg.dims, 0.3).unwrap();
        let observation = detect_keypoints(&scene, &tpl, &cfg.noise, seed).unwrap();
        let predictions = Part::ALL
            .iter()
            .map(|&p| run_part_expert(p, &scene, &cfg.noise, &fm, seed).unwrap())
            .collect();
        SceneRecord {
            scene,
            observation,
            predictions,
        }
    }

    fn obs_with(confidences: &[(PartTag, f64)]) -> KeypointObservation {
        KeypointObservation {
            subject_id: 0,
            keypoints: confidences
                .iter()
                .map(|&(tag, c)| Keypoint {
                    position: [0.0, 0.0],
                    confidence: c,
                    part: match tag {
                        PartTag::Body => Part::Body,
                        PartTag::Face => Part::Face,
                        PartTag::Hand => Part::LeftHand,
                    },
                    tag,
                })
                .collect(),
        }
    }

    #[test]
    fn step1_boundaries() {
        let cfg = SelectionConfig::default();
        let twelve = obs_with(&[(PartTag::Body, 0.11); 12]);
        assert_eq!(step1_confidence_gate(&twelve, &cfg), Step1Outcome { passed: true, count: 12 });
        let eleven = obs_with(&[(PartTag::Body, 0.11); 11]);
        assert!(!step1_confidence_gate(&eleven, &cfg).passed);
        let zeros = obs_with(&[(PartTag::Face, 0.0); 30]);
        assert_eq!(step1_confidence_gate(&zeros, &cfg), Step1Outcome { passed: false, count: 0 });
        // Exactly at the threshold does not qualify; thresholds are per tag.
        let mut mixed = vec![(PartTag::Body, 0.1); 4];
        mixed.extend([(PartTag::Hand, 0.15); 4]);
        mixed.extend([(PartTag::Face, 0.39); 4]);
        assert_eq!(step1_confidence_gate(&obs_with(&mixed), &cfg).count, 0);
        let mut mixed = vec![(PartTag::Body, 0.15); 4];
        mixed.extend([(PartTag::Hand, 0.25); 4]);
        mixed.extend([(PartTag::Face, 0.41); 4]);
        assert_eq!(step1_confidence_gate(&obs_with(&mixed), &cfg).count, 12);
    }

    #[test]
    fn step2_flags_offending_parts() {
        let cfg = SelectionConfig::default();
        let rec = clean_record(3);
        assert!(step2_validity_gate(&rec.predictions, &cfg).passed);

        let mut preds = rec.predictions.clone();
        if let PartParamsValue::Hand(h) = &mut preds[2].params {
            h.pose[1].0[0] = f64::NAN;
        }
        let out = step2_validity_gate(&preds, &cfg);
        assert_eq!(out.offending, vec![Part::LeftHand]);

        let mut preds = rec.predictions.clone();
        if let PartParamsValue::Body(b) = &mut preds[0].params {
            b.shape[0] = 5.01;
        }
        assert_eq!(step2_validity_gate(&preds, &cfg).offending, vec![Part::Body]);
        if let PartParamsValue::Body(b) = &mut preds[0].params {
            b.shape[0] = 5.0;
        }
        assert!(step2_validity_gate(&preds, &cfg).passed);

        let missing: Vec<_> = rec.predictions[..3].to_vec();
        assert_eq!(step2_validity_gate(&missing, &cfg).offending, vec![Part::RightHand]);
    }

    #[test]
    fn noise_free_fuse_is_truth() {
        let (_, tpl, _) = setup();
        let rec = clean_record(9);
        assert_eq!(fuse(&rec.predictions, &tpl).unwrap(), rec.scene.truth);
    }

    #[test]
    fn fuse_of_split_is_identity() {
        let (cfg, tpl, _) = setup();
        let truth = generate_scene(4, &cfg.dims, 0.3).unwrap().truth;
        let parts = split(&truth);
        let mk = |part, params| PartPrediction {
            subject_id: 0,
            part,
            params,
            root_translation: (part == Part::Body).then_some(parts.root_translation),
            feature: vec![],
            valid: true,
        };
        let preds = vec![
            mk(Part::Body, PartParamsValue::Body(parts.body.clone())),
            mk(Part::Face, PartParamsValue::Face(parts.face.clone())),
            mk(Part::LeftHand, PartParamsValue::Hand(parts.left_hand.clone())),
            mk(Part::RightHand, PartParamsValue::Hand(parts.right_hand.clone())),
        ];
        assert_eq!(fuse(&preds, &tpl).unwrap(), truth);
        assert!(matches!(fuse(&preds[1..], &tpl), Err(Error::Fusion(_))));
    }

    #[test]
    fn body_expert_wins_at_wrist() {
        let (_, tpl, _) = setup();
        let mut rec = clean_record(2);
        if let PartParamsValue::Hand(h) = &mut rec.predictions[2].params {
            h.pose[0] = AxisAngle([0.7, -0.2, 0.1]);
        }
        let fused = fuse(&rec.predictions, &tpl).unwrap();
        assert_eq!(fused.left_hand.pose[0], rec.scene.truth.body.pose[tpl.left_wrist]);
        assert_eq!(fused.left_hand.pose[1..], rec.scene.truth.left_hand.pose[1..]);
    }

    #[test]
    fn noise_free_reprojection_is_zero() {
        let (_, tpl, _) = setup();
        let rec = clean_record(5);
        let out = step3_reprojection_gate(
            &rec.scene.truth,
            &rec.observation,
            &rec.scene.camera,
            &tpl,
            &SelectionConfig::default(),
        )
        .unwrap();
        assert_eq!(out.rmse_cm, 0.0);
        assert!(out.passed);
    }

    /// Keypoints are shifted by a fixed pixel offset. The principal point is
    /// placed so that every coordinate stays within [1024, 2048), where the
    /// shift and its subtraction are exact.
    fn offset_case(shift_px: f64) -> Step3Outcome {
        let (cfg, tpl, _) = setup();
        let truth = generate_scene(6, &cfg.dims, 0.2).unwrap().truth;
        let camera = Camera::new(1000.0, [1536.0, 1536.0], 2.0).unwrap();
        let fk = forward_kinematics(&truth, &tpl).unwrap();
        let keypoints = tpl
            .keypoints
            .iter()
            .zip(fk.keypoints(&tpl))
            .map(|(src, p)| {
                let q = camera.project_point(&p).unwrap();
                assert!(q.iter().all(|c| (1024.0..2048.0 - shift_px).contains(c)));
                Keypoint {
                    position: [q[0] + shift_px, q[1]],
                    confidence: 1.0,
                    part: src.part,
                    tag: src.tag,
                }
            })
            .collect();
        let obs = KeypointObservation {
            subject_id: 0,
            keypoints,
        };
        step3_reprojection_gate(&truth, &obs, &camera, &tpl, &SelectionConfig::default()).unwrap()
    }

    #[test]
    fn gate_is_inclusive_at_one_and_a_half_cm() {
        let at = offset_case(7.5);
        assert_eq!(at.rmse_cm, 1.5);
        assert!(at.passed);
        let above = offset_case(10.0);
        assert_eq!(above.rmse_cm, 2.0);
        assert!(!above.passed);
    }

    #[test]
    fn no_qualifying_keypoint_is_gate_undefined() {
        let (_, tpl, _) = setup();
        let mut rec = clean_record(5);
        rec.observation.keypoints.iter_mut().for_each(|k| k.confidence = 0.0);
        let err = step3_reprojection_gate(
            &rec.scene.truth,
            &rec.observation,
            &rec.scene.camera,
            &tpl,
            &SelectionConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::GateUndefined));
    }

    #[test]
    fn noise_free_dataset_is_kept_whole() {
        let (cfg, tpl, _) = setup();
        let data = synthesize_dataset(&cfg, 3, 0, 40).unwrap();
        let (kept, report) = curate(&data, &tpl, &SelectionConfig::default()).unwrap();
        assert_eq!(report.kept, 40);
        assert_eq!(kept.len(), 40);
        assert!(report.is_consistent());
        for (s, r) in kept.iter().zip(&data) {
            assert_eq!(s.label, r.scene.truth);
        }
    }

    #[test]
    fn all_invalid_stops_at_step2() {
        let (mut cfg, tpl, _) = setup();
        cfg.noise.invalid_output_probability = 1.0;
        let data = synthesize_dataset(&cfg, 3, 0, 30).unwrap();
        let (kept, report) = curate(&data, &tpl, &SelectionConfig::default()).unwrap();
        assert!(kept.is_empty());
        assert_eq!(report.discarded_step2, 30);
        assert_eq!(report.step3_rmse_cm.total(), 0);
    }

    #[test]
    fn report_merge_is_associative() {
        let (mut cfg, tpl, _) = setup();
        cfg.noise = NoiseProfile::moderate();
        let data = synthesize_dataset(&cfg, 5, 0, 60).unwrap();
        let sel = SelectionConfig::default();
        let (_, whole) = curate(&data, &tpl, &sel).unwrap();
        let (_, a) = curate(&data[..20], &tpl, &sel).unwrap();
        let (_, b) = curate(&data[20..45], &tpl, &sel).unwrap();
        let (_, c) = curate(&data[45..], &tpl, &sel).unwrap();
        assert_eq!(a.clone().merge(&b).merge(&c), whole);
        assert_eq!(a.merge(&b.merge(&c)), whole);
        assert!(whole.is_consistent());
    }

    #[test]
    fn kept_set_ignores_record_order() {
        let (mut cfg, tpl, _) = setup();
        cfg.noise = NoiseProfile::moderate();
        let mut data = synthesize_dataset(&cfg, 5, 0, 50).unwrap();
        let sel = SelectionConfig::default();
        let (kept, _) = curate(&data, &tpl, &sel).unwrap();
        data.reverse();
        let (kept_rev, _) = curate(&data, &tpl, &sel).unwrap();
        assert_eq!(kept, kept_rev);
    }
}
