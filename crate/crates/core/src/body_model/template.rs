use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dims::{ModelDims, Part, PartTag};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const TEMPLATE_SCHEMA_VERSION: u32 = 1;

/// Parameter entry that drives a joint's local rotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseSource {
    Body(usize),
    Jaw,
    /// Index into `FaceParams::other_poses`.
    FaceOther(usize),
    LeftHand(usize),
    RightHand(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct JointSpec<T> {
    pub name: String,
    pub parent: Option<usize>,
    pub part: Part,
    pub pose_source: PoseSource,
    /// Offset from the parent joint in the rest pose (meters).
    pub rest_offset: [T; 3],
    /// One direction per shape coefficient of the driving sub-model.
    pub shape_basis: Vec<[T; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct Attachment<T> {
    pub joint: usize,
    pub weight: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct MarkerSpec<T> {
    pub part: Part,
    /// One or two skinning attachments; weights sum to one.
    pub attachments: Vec<Attachment<T>>,
    /// Rest position relative to the first attachment's rest position.
    pub offset: [T; 3],
    /// One displacement per expression coefficient (face markers only).
    pub expression_basis: Vec<[T; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypointAnchor {
    Joint(usize),
    Marker(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointSource {
    pub anchor: KeypointAnchor,
    pub part: Part,
    pub tag: PartTag,
}

/// Skeleton, shape/expression bases, skinned markers and the detector's
/// keypoint layout of the layered model.
///
/// Joints are stored parents-first: `parent[i] < i`, with the pelvis root at
/// index 0. Face joints hang off the body's neck joint and hand joints off
/// the wrists; the neck and wrists themselves are body joints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct SkeletonTemplate<T> {
    pub schema_version: u32,
    pub dims: ModelDims,
    pub joints: Vec<JointSpec<T>>,
    pub markers: Vec<MarkerSpec<T>>,
    pub keypoints: Vec<KeypointSource>,
    pub neck_joint: usize,
    pub left_wrist: usize,
    pub right_wrist: usize,
}

struct Builder {
    joints: Vec<JointSpec<f64>>,
}

impl Builder {
    fn push(
        &mut self,
        name: String,
        parent: Option<usize>,
        part: Part,
        pose_source: PoseSource,
        offset: [f64; 3],
    ) -> usize {
        self.joints.push(JointSpec {
            name,
            parent,
            part,
            pose_source,
            rest_offset: offset,
            shape_basis: Vec::new(),
        });
        self.joints.len() - 1
    }
}

pub(crate) fn split_evenly(total: usize, buckets: usize) -> Vec<usize> {
    (0..buckets)
        .map(|b| total / buckets + usize::from(b < total % buckets))
        .collect()
}

impl<T: Real> SkeletonTemplate<T> {
    /// Builds a deterministic humanoid template for `dims`.
    ///
    /// The body is a T-pose with five chains (spine ending at the neck, two
    /// arms ending at the wrists, two legs); bases, marker placement and
    /// small out-of-plane jitter come from `seed`.
    pub fn generate(dims: &ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jitter = |scale: f64, rng: &mut ChaCha8Rng| rng.random_range(-scale..scale);

        let mut b = Builder { joints: Vec::new() };
        b.push("pelvis".into(), None, Part::Body, PoseSource::Body(0), [0.0; 3]);

        // Spine, left arm and right arm need at least one joint each.
        let counts = split_evenly(dims.body_joints - 1, 5);
        let mut body_index = 1;
        let mut chain = |b: &mut Builder,
                         rng: &mut ChaCha8Rng,
                         name: &str,
                         root: usize,
                         n: usize,
                         first: [f64; 3],
                         step: [f64; 3]|
         -> Vec<usize> {
            let mut parent = root;
            let mut ids = Vec::with_capacity(n);
            for k in 0..n {
                let base = if k == 0 { first } else { step };
                let off = [base[0], base[1], base[2] + jitter(0.02, rng)];
                let id = b.push(
                    format!("{name}_{k}"),
                    Some(parent),
                    Part::Body,
                    PoseSource::Body(body_index),
                    off,
                );
                body_index += 1;
                ids.push(id);
                parent = id;
            }
            ids
        };

        let ns = counts[0] as f64;
        let spine = chain(&mut b, &mut rng, "spine", 0, counts[0], [0.0, 0.6 / ns, 0.0], [0.0, 0.6 / ns, 0.0]);
        let neck = *spine.last().expect("spine has at least one joint");
        let shoulder_root = if spine.len() >= 2 { spine[spine.len() - 2] } else { neck };
        let na = counts[1] as f64;
        let left_arm = chain(&mut b, &mut rng, "left_arm", shoulder_root, counts[1], [0.18, 0.0, 0.0], [0.6 / na, 0.0, 0.0]);
        let na = counts[2] as f64;
        let right_arm = chain(&mut b, &mut rng, "right_arm", shoulder_root, counts[2], [-0.18, 0.0, 0.0], [-0.6 / na, 0.0, 0.0]);
        let nl = counts[3].max(1) as f64;
        chain(&mut b, &mut rng, "left_leg", 0, counts[3], [0.1, -0.9 / nl, 0.0], [0.0, -0.9 / nl, 0.0]);
        let nl = counts[4].max(1) as f64;
        chain(&mut b, &mut rng, "right_leg", 0, counts[4], [-0.1, -0.9 / nl, 0.0], [0.0, -0.9 / nl, 0.0]);
        let left_wrist = *left_arm.last().expect("left arm non-empty");
        let right_wrist = *right_arm.last().expect("right arm non-empty");
        debug_assert_eq!(b.joints.len(), dims.body_joints);

        // Face: jaw first, then eyes; `other_poses[0]` is the neck seam.
        b.push("jaw".into(), Some(neck), Part::Face, PoseSource::Jaw, [0.0, 0.08, 0.05]);
        for k in 1..dims.face_joints - 1 {
            let side = if k % 2 == 1 { 1.0 } else { -1.0 };
            b.push(
                format!("eye_{k}"),
                Some(neck),
                Part::Face,
                PoseSource::FaceOther(k),
                [side * 0.03, 0.15, 0.08 + jitter(0.005, &mut rng)],
            );
        }

        // Hands: fingers as chains from the wrist; hand joint 0 is the wrist.
        let hand_chains = |b: &mut Builder, rng: &mut ChaCha8Rng, part: Part, wrist: usize| {
            let sign = if part == Part::LeftHand { 1.0 } else { -1.0 };
            let per_finger = split_evenly(dims.hand_joints - 1, 5);
            let mut hand_index = 1;
            for (f, &n) in per_finger.iter().enumerate() {
                let spread = (f as f64 - 2.0) * 0.02;
                let mut parent = wrist;
                for k in 0..n {
                    let len = if k == 0 { 0.08 } else { 0.03 };
                    let source = if part == Part::LeftHand {
                        PoseSource::LeftHand(hand_index)
                    } else {
                        PoseSource::RightHand(hand_index)
                    };
                    parent = b.push(
                        format!("{}_finger{f}_{k}", part.name()),
                        Some(parent),
                        part,
                        source,
                        [sign * len, jitter(0.005, rng), spread],
                    );
                    hand_index += 1;
                }
            }
        };
        hand_chains(&mut b, &mut rng, Part::LeftHand, left_wrist);
        hand_chains(&mut b, &mut rng, Part::RightHand, right_wrist);

        let shape_normal = Normal::new(0.0, 0.01).expect("valid std");
        for j in b.joints.iter_mut() {
            let n_shape = match j.part {
                Part::Body | Part::Face => dims.body_shape,
                Part::LeftHand | Part::RightHand => dims.hand_shape,
            };
            let scale = if j.part == Part::Body { 1.0 } else { 0.2 };
            j.shape_basis = (0..n_shape)
                .map(|_| {
                    if j.parent.is_none() {
                        [0.0; 3]
                    } else {
                        [
                            scale * shape_normal.sample(&mut rng),
                            scale * shape_normal.sample(&mut rng),
                            scale * shape_normal.sample(&mut rng),
                        ]
                    }
                })
                .collect();
        }

        let joints = b.joints;
        let rest = rest_positions_f64(&joints);
        let part_joints = |part: Part| -> Vec<usize> {
            joints
                .iter()
                .enumerate()
                .filter(|(_, j)| j.part == part)
                .map(|(i, _)| i)
                .collect()
        };

        let mut markers = Vec::new();
        let expr_normal = Normal::new(0.0, 0.005).expect("valid std");
        let skin = |rng: &mut ChaCha8Rng, primary: usize, secondary: Option<usize>| {
            let mut att = vec![Attachment {
                joint: primary,
                weight: 1.0,
            }];
            if let Some(s) = secondary {
                let w: f64 = rng.random_range(0.5..1.0);
                att[0].weight = w;
                att.push(Attachment {
                    joint: s,
                    weight: 1.0 - w,
                });
            }
            att
        };

        let body_joints: Vec<usize> = part_joints(Part::Body);
        for m in 0..dims.markers_per_part.body {
            let j = body_joints[(m * 7 + 3) % body_joints.len()];
            let att = skin(&mut rng, j, joints[j].parent);
            let offset = [jitter(0.06, &mut rng), jitter(0.06, &mut rng), jitter(0.06, &mut rng)];
            markers.push(MarkerSpec {
                part: Part::Body,
                attachments: att,
                offset,
                expression_basis: Vec::new(),
            });
        }

        let mut face_anchor = part_joints(Part::Face);
        face_anchor.push(neck);
        let head_center = [rest[neck][0], rest[neck][1] + 0.12, rest[neck][2] + 0.06];
        for m in 0..dims.markers_per_part.face {
            let j = face_anchor[m % face_anchor.len()];
            let secondary = if j == neck { None } else { Some(neck) };
            let att = skin(&mut rng, j, secondary);
            let p = [
                head_center[0] + jitter(0.07, &mut rng),
                head_center[1] + jitter(0.08, &mut rng),
                head_center[2] + jitter(0.05, &mut rng),
            ];
            let offset = [p[0] - rest[j][0], p[1] - rest[j][1], p[2] - rest[j][2]];
            let basis = (0..dims.expression_dims)
                .map(|_| {
                    [
                        expr_normal.sample(&mut rng),
                        expr_normal.sample(&mut rng),
                        expr_normal.sample(&mut rng),
                    ]
                })
                .collect();
            markers.push(MarkerSpec {
                part: Part::Face,
                attachments: att,
                offset,
                expression_basis: basis,
            });
        }

        for (part, wrist) in [(Part::LeftHand, left_wrist), (Part::RightHand, right_wrist)] {
            let mut hj = vec![wrist];
            hj.extend(part_joints(part));
            for m in 0..dims.markers_per_part.hand {
                let j = hj[(m * 3 + 1) % hj.len()];
                let secondary = if j == wrist { None } else { joints[j].parent };
                let att = skin(&mut rng, j, secondary);
                let offset = [jitter(0.012, &mut rng), jitter(0.012, &mut rng), jitter(0.012, &mut rng)];
                markers.push(MarkerSpec {
                    part,
                    attachments: att,
                    offset,
                    expression_basis: Vec::new(),
                });
            }
        }

        let keypoints = build_keypoints(dims, &joints, &markers, neck, left_wrist, right_wrist)?;

        let tpl = SkeletonTemplate {
            schema_version: TEMPLATE_SCHEMA_VERSION,
            dims: *dims,
            joints,
            markers,
            keypoints,
            neck_joint: neck,
            left_wrist,
            right_wrist,
        };
        let tpl = tpl.cast();
        tpl.validate()?;
        Ok(tpl)
    }
}

fn rest_positions_f64(joints: &[JointSpec<f64>]) -> Vec<[f64; 3]> {
    let mut out: Vec<[f64; 3]> = Vec::with_capacity(joints.len());
    for j in joints {
        let base = j.parent.map(|p| out[p]).unwrap_or([0.0; 3]);
        out.push([
            base[0] + j.rest_offset[0],
            base[1] + j.rest_offset[1],
            base[2] + j.rest_offset[2],
        ]);
    }
    out
}

/// Per part: joints first, then markers, truncated to the configured count.
fn build_keypoints<T>(
    dims: &ModelDims,
    joints: &[JointSpec<T>],
    markers: &[MarkerSpec<T>],
    neck: usize,
    left_wrist: usize,
    right_wrist: usize,
) -> Result<Vec<KeypointSource>> {
    let mut out = Vec::new();
    let k = &dims.keypoints_per_part;
    for (part, want) in [
        (Part::Body, k.body),
        (Part::LeftHand, k.hand),
        (Part::RightHand, k.hand),
        (Part::Face, k.face),
    ] {
        let mut anchors: Vec<KeypointAnchor> = Vec::new();
        let marker_anchors = markers
            .iter()
            .enumerate()
            .filter(|(_, m)| m.part == part)
            .map(|(i, _)| KeypointAnchor::Marker(i));
        let joint_anchors = joints
            .iter()
            .enumerate()
            .filter(|(_, j)| j.part == part)
            .map(|(i, _)| KeypointAnchor::Joint(i));
        match part {
            Part::Face => {
                anchors.extend(marker_anchors);
                anchors.push(KeypointAnchor::Joint(neck));
                anchors.extend(joint_anchors);
            }
            Part::LeftHand | Part::RightHand => {
                let wrist = if part == Part::LeftHand { left_wrist } else { right_wrist };
                anchors.push(KeypointAnchor::Joint(wrist));
                anchors.extend(joint_anchors);
                anchors.extend(marker_anchors);
            }
            Part::Body => {
                anchors.extend(joint_anchors);
                anchors.extend(marker_anchors);
            }
        }
        if anchors.len() < want {
            return Err(Error::Configuration(format!(
                "{} keypoints requested for {} but the model only has {} joints and markers there",
                want,
                part.name(),
                anchors.len()
            )));
        }
        out.extend(anchors.into_iter().take(want).map(|anchor| KeypointSource {
            anchor,
            part,
            tag: part.tag(),
        }));
    }
    Ok(out)
}

impl<T: Real> SkeletonTemplate<T> {
    pub fn cast<U: Real>(&self) -> SkeletonTemplate<U> {
        let dirs = |v: &[[T; 3]]| v.iter().map(|d| d.map(Real::cast)).collect::<Vec<[U; 3]>>();
        SkeletonTemplate {
            schema_version: self.schema_version,
            dims: self.dims,
            joints: self
                .joints
                .iter()
                .map(|j| JointSpec {
                    name: j.name.clone(),
                    parent: j.parent,
                    part: j.part,
                    pose_source: j.pose_source,
                    rest_offset: j.rest_offset.map(Real::cast),
                    shape_basis: dirs(&j.shape_basis),
                })
                .collect(),
            markers: self
                .markers
                .iter()
                .map(|m| MarkerSpec {
                    part: m.part,
                    attachments: m
                        .attachments
                        .iter()
                        .map(|a| Attachment {
                            joint: a.joint,
                            weight: a.weight.cast(),
                        })
                        .collect(),
                    offset: m.offset.map(Real::cast),
                    expression_basis: dirs(&m.expression_basis),
                })
                .collect(),
            keypoints: self.keypoints.clone(),
            neck_joint: self.neck_joint,
            left_wrist: self.left_wrist,
            right_wrist: self.right_wrist,
        }
    }
}

impl<T: Real> SkeletonTemplate<T> {
    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn marker_count(&self) -> usize {
        self.markers.len()
    }

    /// Indices of markers belonging to `part`.
    pub fn part_markers(&self, part: Part) -> Vec<usize> {
        self.markers
            .iter()
            .enumerate()
            .filter(|(_, m)| m.part == part)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn body_joint_indices(&self) -> Vec<usize> {
        (0..self.dims.body_joints).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Configuration(msg));
        if self.schema_version != TEMPLATE_SCHEMA_VERSION {
            return bad(format!(
                "template schema version {} unsupported (expected {TEMPLATE_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.dims.validate()?;
        let d = &self.dims;
        // The neck and wrist seams are body joints, so each part adds one
        // joint fewer than its pose count.
        let expected_joints = d.body_joints + (d.face_joints - 1) + 2 * (d.hand_joints - 1);
        if self.joints.len() != expected_joints {
            return bad(format!(
                "template has {} joints, dims imply {expected_joints}",
                self.joints.len()
            ));
        }
        for (i, j) in self.joints.iter().enumerate() {
            match (i, j.parent) {
                (0, None) => {}
                (0, Some(_)) => return bad("root joint must not have a parent".into()),
                (_, None) => return bad(format!("joint {i} has no parent")),
                (_, Some(p)) if p >= i => {
                    return bad(format!("joint {i} has parent {p}; parents must precede children"))
                }
                _ => {}
            }
            let want = match j.part {
                Part::Body | Part::Face => d.body_shape,
                _ => d.hand_shape,
            };
            if j.shape_basis.len() != want {
                return bad(format!("joint {i} shape basis has {} directions, expected {want}", j.shape_basis.len()));
            }
            let src_ok = match j.pose_source {
                PoseSource::Body(k) => j.part == Part::Body && k < d.body_joints,
                PoseSource::Jaw => j.part == Part::Face,
                PoseSource::FaceOther(k) => j.part == Part::Face && k >= 1 && k < d.face_joints - 1,
                PoseSource::LeftHand(k) => j.part == Part::LeftHand && k >= 1 && k < d.hand_joints,
                PoseSource::RightHand(k) => j.part == Part::RightHand && k >= 1 && k < d.hand_joints,
            };
            if !src_ok {
                return bad(format!("joint {i} has inconsistent pose source {:?}", j.pose_source));
            }
            if !j.rest_offset.iter().all(|x| x.is_finite()) {
                return bad(format!("joint {i} rest offset is not finite"));
            }
        }
        for idx in [self.neck_joint, self.left_wrist, self.right_wrist] {
            if idx >= d.body_joints {
                return bad(format!("seam joint {idx} is not a body joint"));
            }
        }
        let tol = T::lit(1e-9);
        for (i, m) in self.markers.iter().enumerate() {
            if m.attachments.is_empty() || m.attachments.len() > 2 {
                return bad(format!("marker {i} must have one or two attachments"));
            }
            let mut sum = T::zero();
            for a in &m.attachments {
                if a.joint >= self.joints.len() {
                    return bad(format!("marker {i} attaches to missing joint {}", a.joint));
                }
                if !(a.weight >= T::zero() && a.weight <= T::one()) {
                    return bad(format!("marker {i} weight {} outside [0, 1]", a.weight));
                }
                sum += a.weight;
            }
            if (sum - T::one()).abs() > tol {
                return bad(format!("marker {i} weights sum to {sum}"));
            }
            let want = if m.part == Part::Face { d.expression_dims } else { 0 };
            if m.expression_basis.len() != want {
                return bad(format!("marker {i} expression basis has {} entries, expected {want}", m.expression_basis.len()));
            }
        }
        let counts = [
            (Part::Body, d.markers_per_part.body),
            (Part::Face, d.markers_per_part.face),
            (Part::LeftHand, d.markers_per_part.hand),
            (Part::RightHand, d.markers_per_part.hand),
        ];
        for (part, n) in counts {
            if self.part_markers(part).len() != n {
                return bad(format!("{} marker count does not match dims", part.name()));
            }
        }
        if self.keypoints.len() != d.keypoint_count() {
            return bad(format!(
                "template lists {} keypoints, dims imply {}",
                self.keypoints.len(),
                d.keypoint_count()
            ));
        }
        for k in &self.keypoints {
            let ok = match k.anchor {
                KeypointAnchor::Joint(j) => j < self.joints.len(),
                KeypointAnchor::Marker(m) => m < self.markers.len(),
            };
            if !ok || k.tag != k.part.tag() {
                return bad(format!("invalid keypoint source {k:?}"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Configuration(format!("template serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            schema_version: u32,
        }
        let probe: Probe = serde_json::from_str(text)
            .map_err(|e| Error::Configuration(format!("template is not valid JSON: {e}")))?;
        if probe.schema_version != TEMPLATE_SCHEMA_VERSION {
            return Err(Error::Configuration(format!(
                "template schema version {} unsupported (expected {TEMPLATE_SCHEMA_VERSION})",
                probe.schema_version
            )));
        }
        let tpl: Self = serde_json::from_str(text)
            .map_err(|e| Error::Configuration(format!("template does not match schema: {e}")))?;
        tpl.validate()?;
        Ok(tpl)
    }
}
