use super::dims::{ParamLayout, Part};
use super::params::FullBodyParams;
use super::template::{KeypointAnchor, PoseSource, SkeletonTemplate};
use crate::error::{Error, Result};
use crate::geometry::{rodrigues_unchecked, rodrigues_with_jacobian, Mat3, Vec3};
use crate::scalar::Real;

/// Posed joints and markers plus the intermediates needed by
/// [`FkResult::backward`].
#[derive(Clone, Debug)]
pub struct FkResult<T> {
    pub joints: Vec<Vec3<T>>,
    pub markers: Vec<Vec3<T>>,
    globals: Vec<Mat3<T>>,
    offsets: Vec<Vec3<T>>,
    rest_joints: Vec<Vec3<T>>,
    marker_rest: Vec<Vec3<T>>,
}

fn pose_of<T: Real>(params: &FullBodyParams<T>, src: PoseSource) -> Vec3<T> {
    match src {
        PoseSource::Body(k) => params.body.pose[k].vector(),
        PoseSource::Jaw => params.face.jaw_pose.vector(),
        PoseSource::FaceOther(k) => params.face.other_poses[k].vector(),
        PoseSource::LeftHand(k) => params.left_hand.pose[k].vector(),
        PoseSource::RightHand(k) => params.right_hand.pose[k].vector(),
    }
}

fn pose_slot(layout: &ParamLayout, src: PoseSource) -> usize {
    match src {
        PoseSource::Body(k) => layout.body_pose.start + 3 * k,
        PoseSource::Jaw => layout.jaw_pose.start,
        PoseSource::FaceOther(k) => layout.face_other_poses.start + 3 * k,
        PoseSource::LeftHand(k) => layout.left_hand_pose.start + 3 * k,
        PoseSource::RightHand(k) => layout.right_hand_pose.start + 3 * k,
    }
}

fn shape_of<T: Real>(params: &FullBodyParams<T>, part: Part) -> &[T] {
    match part {
        Part::Body | Part::Face => &params.body.shape,
        Part::LeftHand => &params.left_hand.shape,
        Part::RightHand => &params.right_hand.shape,
    }
}

fn shape_slot(layout: &ParamLayout, part: Part) -> usize {
    match part {
        Part::Body | Part::Face => layout.body_shape.start,
        Part::LeftHand => layout.left_hand_shape.start,
        Part::RightHand => layout.right_hand_shape.start,
    }
}

/// Poses the template.
///
/// Joint `i` sits at `J_parent + G_parent · offset_i(β)` with
/// `G_i = G_parent · R(θ_i)`; the root sits at `root_translation + offset_0`.
/// Markers are linear-blend skinned from at most two joints. The seam
/// entries `face.other_poses[0]` and `hand.pose[0]` are not read: the neck
/// and wrists are driven by the body pose.
pub fn forward_kinematics<T: Real>(
    params: &FullBodyParams<T>,
    tpl: &SkeletonTemplate<T>,
) -> Result<FkResult<T>> {
    params.check_dims(&tpl.dims)?;
    let n = tpl.joints.len();
    let mut globals = Vec::with_capacity(n);
    let mut joints = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    let mut rest_joints = Vec::with_capacity(n);

    for spec in &tpl.joints {
        let beta = shape_of(params, spec.part);
        let mut off = Vec3(spec.rest_offset);
        for (b, dir) in beta.iter().zip(&spec.shape_basis) {
            off += Vec3(*dir).scale(*b);
        }
        let local = rodrigues_unchecked(&pose_of(params, spec.pose_source));
        match spec.parent {
            None => {
                let t = Vec3(params.root_translation);
                globals.push(local);
                joints.push(t + off);
                rest_joints.push(off);
            }
            Some(p) => {
                let gp = globals[p];
                joints.push(joints[p] + gp.mul_vec(&off));
                globals.push(gp * local);
                rest_joints.push(rest_joints[p] + off);
            }
        }
        offsets.push(off);
    }

    let mut markers = Vec::with_capacity(tpl.markers.len());
    let mut marker_rest = Vec::with_capacity(tpl.markers.len());
    for m in &tpl.markers {
        let mut rest = rest_joints[m.attachments[0].joint] + Vec3(m.offset);
        for (psi, dir) in params.face.expression.iter().zip(&m.expression_basis) {
            rest += Vec3(*dir).scale(*psi);
        }
        let mut pos = Vec3::zero();
        for a in &m.attachments {
            let local = rest - rest_joints[a.joint];
            pos += (globals[a.joint].mul_vec(&local) + joints[a.joint]).scale(a.weight);
        }
        markers.push(pos);
        marker_rest.push(rest);
    }

    if !joints.iter().chain(&markers).all(|p| p.is_finite()) {
        return Err(Error::Numerical("forward kinematics produced non-finite positions".into()));
    }

    Ok(FkResult {
        joints,
        markers,
        globals,
        offsets,
        rest_joints,
        marker_rest,
    })
}

impl<T: Real> FkResult<T> {
    pub fn keypoint(&self, anchor: KeypointAnchor) -> Vec3<T> {
        match anchor {
            KeypointAnchor::Joint(j) => self.joints[j],
            KeypointAnchor::Marker(m) => self.markers[m],
        }
    }

    /// Positions of the template's detector keypoints.
    pub fn keypoints(&self, tpl: &SkeletonTemplate<T>) -> Vec<Vec3<T>> {
        tpl.keypoints.iter().map(|k| self.keypoint(k.anchor)).collect()
    }

    /// Pulls gradients with respect to keypoint positions back onto the
    /// flat parameter vector.
    pub fn backward_keypoints(
        &self,
        params: &FullBodyParams<T>,
        tpl: &SkeletonTemplate<T>,
        grad_keypoints: &[Vec3<T>],
    ) -> Vec<T> {
        let mut gj = vec![Vec3::zero(); self.joints.len()];
        let mut gm = vec![Vec3::zero(); self.markers.len()];
        for (k, g) in tpl.keypoints.iter().zip(grad_keypoints) {
            match k.anchor {
                KeypointAnchor::Joint(j) => gj[j] += *g,
                KeypointAnchor::Marker(m) => gm[m] += *g,
            }
        }
        self.backward(params, tpl, &gj, &gm)
    }

    /// Reverse-mode pass: given `∂L/∂joint` and `∂L/∂marker`, returns
    /// `∂L/∂params` in flat layout order.
    pub fn backward(
        &self,
        params: &FullBodyParams<T>,
        tpl: &SkeletonTemplate<T>,
        grad_joints: &[Vec3<T>],
        grad_markers: &[Vec3<T>],
    ) -> Vec<T> {
        let layout = tpl.dims.layout();
        let mut out = vec![T::zero(); layout.len()];
        let n = self.joints.len();
        let mut g_pos: Vec<Vec3<T>> = grad_joints.to_vec();
        let mut g_rot = vec![Mat3::zero(); n];
        let mut g_rest = vec![Vec3::zero(); n];

        for (mi, m) in tpl.markers.iter().enumerate() {
            let gm = grad_markers[mi];
            if gm == Vec3::zero() {
                continue;
            }
            let rest = self.marker_rest[mi];
            let mut g_marker_rest = Vec3::zero();
            for a in &m.attachments {
                let j = a.joint;
                let local = rest - self.rest_joints[j];
                let wg = gm.scale(a.weight);
                g_rot[j] += wg.outer(&local);
                g_pos[j] += wg;
                let back = self.globals[j].tr_mul_vec(&wg);
                g_marker_rest += back;
                g_rest[j] -= back;
            }
            g_rest[m.attachments[0].joint] += g_marker_rest;
            for (k, dir) in m.expression_basis.iter().enumerate() {
                out[layout.expression.start + k] += g_marker_rest.dot(&Vec3(*dir));
            }
        }

        for i in (0..n).rev() {
            let spec = &tpl.joints[i];
            let theta = pose_of(params, spec.pose_source);
            let (local, d_local) = rodrigues_with_jacobian(&theta);
            let mut g_off = g_rest[i];
            let g_local = match spec.parent {
                None => {
                    for (k, slot) in layout.root_translation.clone().enumerate() {
                        out[slot] += g_pos[i].0[k];
                    }
                    g_off += g_pos[i];
                    g_rot[i]
                }
                Some(p) => {
                    let gp = self.globals[p];
                    let gj = g_pos[i];
                    g_pos[p] += gj;
                    g_rot[p] += gj.outer(&self.offsets[i]);
                    g_off += gp.tr_mul_vec(&gj);
                    let gg = g_rot[i];
                    g_rot[p] += gg * local.transpose();
                    let rest_i = g_rest[i];
                    g_rest[p] += rest_i;
                    gp.transpose() * gg
                }
            };
            let slot = pose_slot(&layout, spec.pose_source);
            for (k, dk) in d_local.iter().enumerate() {
                out[slot + k] += g_local.frobenius_dot(dk);
            }
            let sslot = shape_slot(&layout, spec.part);
            for (k, dir) in spec.shape_basis.iter().enumerate() {
                out[sslot + k] += g_off.dot(&Vec3(*dir));
            }
        }
        out
    }
}
