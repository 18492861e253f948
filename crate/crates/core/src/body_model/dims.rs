use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which sub-model a joint, marker or parameter block belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Body,
    Face,
    LeftHand,
    RightHand,
}

impl Part {
    pub const ALL: [Part; 4] = [Part::Body, Part::Face, Part::LeftHand, Part::RightHand];

    pub fn tag(self) -> PartTag {
        match self {
            Part::Body => PartTag::Body,
            Part::Face => PartTag::Face,
            Part::LeftHand | Part::RightHand => PartTag::Hand,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Part::Body => "body",
            Part::Face => "face",
            Part::LeftHand => "left_hand",
            Part::RightHand => "right_hand",
        }
    }
}

impl std::str::FromStr for Part {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "body" => Ok(Part::Body),
            "face" => Ok(Part::Face),
            "left_hand" => Ok(Part::LeftHand),
            "right_hand" => Ok(Part::RightHand),
            other => Err(Error::InvalidArgument(format!("unknown part tag {other:?}"))),
        }
    }
}

/// Keypoint category; both hands share the hand confidence threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartTag {
    Body,
    Hand,
    Face,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartCounts {
    pub body: usize,
    pub face: usize,
    /// Per hand.
    pub hand: usize,
}

/// Sizes of every parameter block of the layered model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    /// Body joints including the pelvis root.
    pub body_joints: usize,
    pub body_shape: usize,
    /// Jaw plus neck/eye joints.
    pub face_joints: usize,
    pub expression_dims: usize,
    /// Hand joints including the wrist.
    pub hand_joints: usize,
    pub hand_shape: usize,
    pub markers_per_part: PartCounts,
    /// Detected 2D keypoints per part.
    pub keypoints_per_part: PartCounts,
}

impl ModelDims {
    /// Full-size layout: 24 body joints (θ ∈ R⁷²), β ∈ R¹⁰, 4 face joints,
    /// ψ ∈ R¹⁰⁰, 21 hand joints and 10 hand shape coefficients, with the
    /// detector emitting 25 body, 21 per-hand and 70 face keypoints.
    pub fn paper() -> Self {
        ModelDims {
            body_joints: 24,
            body_shape: 10,
            face_joints: 4,
            expression_dims: 100,
            hand_joints: 21,
            hand_shape: 10,
            markers_per_part: PartCounts {
                body: 64,
                face: 70,
                hand: 32,
            },
            keypoints_per_part: PartCounts {
                body: 25,
                face: 70,
                hand: 21,
            },
        }
    }

    /// Desk-scale layout used by tests and the demo.
    pub fn toy() -> Self {
        ModelDims {
            body_joints: 12,
            body_shape: 4,
            face_joints: 2,
            expression_dims: 6,
            hand_joints: 5,
            hand_shape: 2,
            markers_per_part: PartCounts {
                body: 16,
                face: 12,
                hand: 8,
            },
            keypoints_per_part: PartCounts {
                body: 14,
                face: 10,
                hand: 6,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("body_joints", self.body_joints),
            ("body_shape", self.body_shape),
            ("face_joints", self.face_joints),
            ("expression_dims", self.expression_dims),
            ("hand_joints", self.hand_joints),
            ("hand_shape", self.hand_shape),
            ("markers_per_part.body", self.markers_per_part.body),
            ("markers_per_part.face", self.markers_per_part.face),
            ("markers_per_part.hand", self.markers_per_part.hand),
            ("keypoints_per_part.body", self.keypoints_per_part.body),
            ("keypoints_per_part.face", self.keypoints_per_part.face),
            ("keypoints_per_part.hand", self.keypoints_per_part.hand),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(Error::Configuration(format!("{name} must be at least 1")));
            }
        }
        if self.body_joints < 4 {
            return Err(Error::Configuration(
                "body_joints must be at least 4 (pelvis, neck and both wrists)".into(),
            ));
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }

    pub fn param_count(&self) -> usize {
        self.layout().len()
    }

    pub fn keypoint_count(&self) -> usize {
        let k = &self.keypoints_per_part;
        k.body + k.face + 2 * k.hand
    }
}

/// Index ranges of each parameter block inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub body_pose: std::ops::Range<usize>,
    pub body_shape: std::ops::Range<usize>,
    pub jaw_pose: std::ops::Range<usize>,
    pub face_other_poses: std::ops::Range<usize>,
    pub expression: std::ops::Range<usize>,
    pub left_hand_pose: std::ops::Range<usize>,
    pub left_hand_shape: std::ops::Range<usize>,
    pub right_hand_pose: std::ops::Range<usize>,
    pub right_hand_shape: std::ops::Range<usize>,
    pub root_translation: std::ops::Range<usize>,
}

impl ParamLayout {
    fn new(d: &ModelDims) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        ParamLayout {
            body_pose: take(3 * d.body_joints),
            body_shape: take(d.body_shape),
            jaw_pose: take(3),
            face_other_poses: take(3 * (d.face_joints - 1)),
            expression: take(d.expression_dims),
            left_hand_pose: take(3 * d.hand_joints),
            left_hand_shape: take(d.hand_shape),
            right_hand_pose: take(3 * d.hand_joints),
            right_hand_shape: take(d.hand_shape),
            root_translation: take(3),
        }
    }

    pub fn len(&self) -> usize {
        self.root_translation.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The entries excluding global orientation and translation, i.e. the
    /// part of the parameter vector that an in-plane image rotation leaves
    /// unchanged.
    pub fn articulation_mask(&self) -> Vec<bool> {
        let mut mask = vec![true; self.len()];
        let root = self.body_pose.start;
        mask[root..root + 3].fill(false);
        mask[self.root_translation.clone()].fill(false);
        mask
    }

    pub fn hand_pose(&self, part: Part) -> std::ops::Range<usize> {
        match part {
            Part::LeftHand => self.left_hand_pose.clone(),
            Part::RightHand => self.right_hand_pose.clone(),
            _ => panic!("{part:?} has no hand pose block"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_size_preset_counts() {
        let d = ModelDims::paper();
        let l = d.layout();
        assert_eq!(l.body_pose.len(), 72);
        assert_eq!(l.body_shape.len(), 10);
        // jaw + neck + two eyes: 3k + 3 with k = 4 minus the global term
        // that the body already carries.
        assert_eq!(l.jaw_pose.len() + l.face_other_poses.len(), 12);
        assert_eq!(l.expression.len(), 100);
        assert_eq!(l.left_hand_pose.len(), 63);
        assert_eq!(d.keypoint_count(), 25 + 70 + 42);
        d.validate().unwrap();
    }

    #[test]
    fn toy_preset() {
        let d = ModelDims::toy();
        d.validate().unwrap();
        assert_eq!(d.param_count(), 36 + 4 + 3 + 3 + 6 + 15 + 2 + 15 + 2 + 3);
        assert_eq!(d.keypoint_count(), 36);
    }

    #[test]
    fn zero_counts_rejected() {
        let mut d = ModelDims::toy();
        d.hand_shape = 0;
        assert!(d.validate().is_err());
        let mut d = ModelDims::toy();
        d.body_joints = 3;
        assert!(d.validate().is_err());
    }

    #[test]
    fn layout_is_contiguous() {
        let l = ModelDims::paper().layout();
        let ranges = [
            &l.body_pose,
            &l.body_shape,
            &l.jaw_pose,
            &l.face_other_poses,
            &l.expression,
            &l.left_hand_pose,
            &l.left_hand_shape,
            &l.right_hand_pose,
            &l.right_hand_shape,
            &l.root_translation,
        ];
        for w in ranges.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        assert_eq!(l.articulation_mask().iter().filter(|m| !**m).count(), 6);
    }
}
