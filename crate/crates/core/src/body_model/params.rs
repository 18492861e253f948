use serde::{Deserialize, Serialize};

use super::dims::{ModelDims, Part};
use crate::error::{Error, Result};
use crate::geometry::AxisAngle;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Body pose (joint 0 is the global root rotation) and shape coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BodyParams<T> {
    pub pose: Vec<AxisAngle<T>>,
    #[serde(with = "crate::serde_real::vec")]
    pub shape: Vec<T>,
}

/// Jaw pose, the remaining face joints (index 0 is the neck seam, the rest
/// are eyes) and expression coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FaceParams<T> {
    pub jaw_pose: AxisAngle<T>,
    pub other_poses: Vec<AxisAngle<T>>,
    #[serde(with = "crate::serde_real::vec")]
    pub expression: Vec<T>,
}

/// Hand pose (joint 0 is the wrist seam) and shape coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HandParams<T> {
    pub pose: Vec<AxisAngle<T>>,
    #[serde(with = "crate::serde_real::vec")]
    pub shape: Vec<T>,
    pub side: Side,
}

/// Complete parameter set of one subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FullBodyParams<T> {
    pub body: BodyParams<T>,
    pub face: FaceParams<T>,
    pub left_hand: HandParams<T>,
    pub right_hand: HandParams<T>,
    #[serde(with = "crate::serde_real::array3")]
    pub root_translation: [T; 3],
}

/// The four part blocks plus the global translation, as produced by [`split`].
#[derive(Clone, Debug, PartialEq)]
pub struct PartParams<T> {
    pub body: BodyParams<T>,
    pub face: FaceParams<T>,
    pub left_hand: HandParams<T>,
    pub right_hand: HandParams<T>,
    pub root_translation: [T; 3],
}

fn zero_poses<T: Real>(n: usize) -> Vec<AxisAngle<T>> {
    vec![AxisAngle::zero(); n]
}

impl<T: Real> BodyParams<T> {
    pub fn zeros(dims: &ModelDims) -> Self {
        BodyParams {
            pose: zero_poses(dims.body_joints),
            shape: vec![T::zero(); dims.body_shape],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pose.iter().all(|p| p.is_finite()) && self.shape.iter().all(|x| x.is_finite())
    }
}

impl<T: Real> FaceParams<T> {
    pub fn zeros(dims: &ModelDims) -> Self {
        FaceParams {
            jaw_pose: AxisAngle::zero(),
            other_poses: zero_poses(dims.face_joints - 1),
            expression: vec![T::zero(); dims.expression_dims],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.jaw_pose.is_finite()
            && self.other_poses.iter().all(|p| p.is_finite())
            && self.expression.iter().all(|x| x.is_finite())
    }
}

impl<T: Real> HandParams<T> {
    pub fn zeros(dims: &ModelDims, side: Side) -> Self {
        HandParams {
            pose: zero_poses(dims.hand_joints),
            shape: vec![T::zero(); dims.hand_shape],
            side,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pose.iter().all(|p| p.is_finite()) && self.shape.iter().all(|x| x.is_finite())
    }
}

impl<T: Real> FullBodyParams<T> {
    /// Rest pose: every block zero.
    pub fn zeros(dims: &ModelDims) -> Self {
        FullBodyParams {
            body: BodyParams::zeros(dims),
            face: FaceParams::zeros(dims),
            left_hand: HandParams::zeros(dims, Side::Left),
            right_hand: HandParams::zeros(dims, Side::Right),
            root_translation: [T::zero(); 3],
        }
    }

    pub fn cast<U: Real>(&self) -> FullBodyParams<U> {
        let poses = |v: &[AxisAngle<T>]| v.iter().map(AxisAngle::cast).collect::<Vec<_>>();
        let vals = |v: &[T]| v.iter().map(|x| x.cast()).collect::<Vec<U>>();
        FullBodyParams {
            body: BodyParams {
                pose: poses(&self.body.pose),
                shape: vals(&self.body.shape),
            },
            face: FaceParams {
                jaw_pose: self.face.jaw_pose.cast(),
                other_poses: poses(&self.face.other_poses),
                expression: vals(&self.face.expression),
            },
            left_hand: HandParams {
                pose: poses(&self.left_hand.pose),
                shape: vals(&self.left_hand.shape),
                side: self.left_hand.side,
            },
            right_hand: HandParams {
                pose: poses(&self.right_hand.pose),
                shape: vals(&self.right_hand.shape),
                side: self.right_hand.side,
            },
            root_translation: self.root_translation.map(Real::cast),
        }
    }

    pub fn check_dims(&self, dims: &ModelDims) -> Result<()> {
        let checks = [
            ("body pose", self.body.pose.len(), dims.body_joints),
            ("body shape", self.body.shape.len(), dims.body_shape),
            ("face poses", self.face.other_poses.len(), dims.face_joints - 1),
            ("expression", self.face.expression.len(), dims.expression_dims),
            ("left hand pose", self.left_hand.pose.len(), dims.hand_joints),
            ("left hand shape", self.left_hand.shape.len(), dims.hand_shape),
            ("right hand pose", self.right_hand.pose.len(), dims.hand_joints),
            ("right hand shape", self.right_hand.shape.len(), dims.hand_shape),
        ];
        for (what, got, want) in checks {
            if got != want {
                return Err(Error::Configuration(format!(
                    "{what} has {got} entries, model expects {want}"
                )));
            }
        }
        if self.left_hand.side != Side::Left || self.right_hand.side != Side::Right {
            return Err(Error::Configuration("hand sides are swapped".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.body.is_finite()
            && self.face.is_finite()
            && self.left_hand.is_finite()
            && self.right_hand.is_finite()
            && self.root_translation.iter().all(|x| x.is_finite())
    }

    pub fn hand(&self, part: Part) -> &HandParams<T> {
        match part {
            Part::LeftHand => &self.left_hand,
            Part::RightHand => &self.right_hand,
            _ => panic!("{part:?} is not a hand"),
        }
    }

    /// Flat vector in [`ParamLayout`](super::ParamLayout) order.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        push_poses(&mut out, &self.body.pose);
        out.extend_from_slice(&self.body.shape);
        out.extend_from_slice(&self.face.jaw_pose.0);
        push_poses(&mut out, &self.face.other_poses);
        out.extend_from_slice(&self.face.expression);
        push_poses(&mut out, &self.left_hand.pose);
        out.extend_from_slice(&self.left_hand.shape);
        push_poses(&mut out, &self.right_hand.pose);
        out.extend_from_slice(&self.right_hand.shape);
        out.extend_from_slice(&self.root_translation);
        out
    }

    pub fn from_flat(dims: &ModelDims, flat: &[T]) -> Result<Self> {
        let l = dims.layout();
        if flat.len() != l.len() {
            return Err(Error::Configuration(format!(
                "flat parameter vector has {} entries, model expects {}",
                flat.len(),
                l.len()
            )));
        }
        Ok(FullBodyParams {
            body: BodyParams {
                pose: read_poses(&flat[l.body_pose]),
                shape: flat[l.body_shape].to_vec(),
            },
            face: FaceParams {
                jaw_pose: read_poses(&flat[l.jaw_pose])[0],
                other_poses: read_poses(&flat[l.face_other_poses]),
                expression: flat[l.expression].to_vec(),
            },
            left_hand: HandParams {
                pose: read_poses(&flat[l.left_hand_pose]),
                shape: flat[l.left_hand_shape].to_vec(),
                side: Side::Left,
            },
            right_hand: HandParams {
                pose: read_poses(&flat[l.right_hand_pose]),
                shape: flat[l.right_hand_shape].to_vec(),
                side: Side::Right,
            },
            root_translation: [
                flat[l.root_translation.start],
                flat[l.root_translation.start + 1],
                flat[l.root_translation.start + 2],
            ],
        })
    }

    /// Canonicalizes every axis-angle in place.
    pub fn canonicalize(&mut self) {
        let all = self
            .body
            .pose
            .iter_mut()
            .chain(std::iter::once(&mut self.face.jaw_pose))
            .chain(self.face.other_poses.iter_mut())
            .chain(self.left_hand.pose.iter_mut())
            .chain(self.right_hand.pose.iter_mut());
        for aa in all {
            *aa = aa.canonical();
        }
    }
}

fn push_poses<T: Real>(out: &mut Vec<T>, poses: &[AxisAngle<T>]) {
    for p in poses {
        out.extend_from_slice(&p.0);
    }
}

fn read_poses<T: Real>(flat: &[T]) -> Vec<AxisAngle<T>> {
    flat.chunks_exact(3)
        .map(|c| AxisAngle([c[0], c[1], c[2]]))
        .collect()
}

/// Partitions the full parameter set into its part blocks.
pub fn split<T: Real>(full: &FullBodyParams<T>) -> PartParams<T> {
    PartParams {
        body: full.body.clone(),
        face: full.face.clone(),
        left_hand: full.left_hand.clone(),
        right_hand: full.right_hand.clone(),
        root_translation: full.root_translation,
    }
}

/// Reassembles part blocks into a full parameter set.
pub fn merge<T: Real>(
    body: BodyParams<T>,
    face: FaceParams<T>,
    left_hand: HandParams<T>,
    right_hand: HandParams<T>,
    root_translation: [T; 3],
) -> Result<FullBodyParams<T>> {
    if left_hand.side != Side::Left || right_hand.side != Side::Right {
        return Err(Error::InvalidArgument(format!(
            "expected left and right hands, got {:?} and {:?}",
            left_hand.side, right_hand.side
        )));
    }
    Ok(FullBodyParams {
        body,
        face,
        left_hand,
        right_hand,
        root_translation,
    })
}

impl<T: Real> From<PartParams<T>> for FullBodyParams<T> {
    fn from(p: PartParams<T>) -> Self {
        FullBodyParams {
            body: p.body,
            face: p.face,
            left_hand: p.left_hand,
            right_hand: p.right_hand,
            root_translation: p.root_translation,
        }
    }
}
