use serde::{Deserialize, Serialize};

use super::network::{ModelState, Output, FEATURE_BODY, FEATURE_FACE, FEATURE_LEFT_HAND, FEATURE_RIGHT_HAND};
use crate::body_model::{forward_kinematics, FullBodyParams, PartTag, SkeletonTemplate};
use crate::error::{Error, Result};
use crate::geometry::{Camera, Vec3};
use crate::scalar::Real;
use crate::synth::FeatureDims;

/// Multipliers applied to each loss term before summation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub body_2d: f64,
    pub pose: f64,
    pub face_2d: f64,
    pub expression: f64,
    pub jaw_pose: f64,
    pub hand_2d: f64,
    pub hand_pose: f64,
    pub feature_body: f64,
    pub feature_face: f64,
    pub feature_hand: f64,
    pub consistency: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            body_2d: 1.0,
            pose: 1.0,
            face_2d: 1.0,
            expression: 1.0,
            jaw_pose: 1.0,
            hand_2d: 1.0,
            hand_pose: 1.0,
            feature_body: 1.0,
            feature_face: 1.0,
            feature_hand: 1.0,
            consistency: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Multiplier of the feature KL terms.
    pub amplification: f64,
    pub temperature: f64,
    pub feature_dims: FeatureDims,
    pub weights: LossWeights,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            amplification: 5f64.exp(),
            temperature: 1.0,
            feature_dims: FeatureDims::paper(),
            weights: LossWeights::default(),
        }
    }
}

impl LossWeights {
    /// Rebalanced for the toy model: L1 pixel residuals are scaled down to
    /// the order of the squared-radian label terms, the amplified KL terms
    /// are damped so they do not swamp the shared layers, and the
    /// consistency pair is down-weighted.
    pub fn desk() -> Self {
        LossWeights {
            body_2d: 1e-3,
            face_2d: 1e-3,
            hand_2d: 1e-3,
            feature_body: 0.01,
            feature_face: 0.01,
            feature_hand: 0.01,
            consistency: 0.3,
            ..Self::default()
        }
    }
}

impl LossConfig {
    /// Toy feature widths with the [`LossWeights::desk`] balance.
    pub fn desk() -> Self {
        LossConfig {
            feature_dims: FeatureDims::toy(),
            weights: LossWeights::desk(),
            ..Self::default()
        }
    }

    pub fn toy() -> Self {
        LossConfig {
            feature_dims: FeatureDims::toy(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplification > 0.0 && self.amplification.is_finite()) {
            return Err(Error::Configuration(format!("amplification = {} must be positive", self.amplification)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Configuration(format!("temperature = {} must be positive", self.temperature)));
        }
        let d = self.feature_dims;
        if d.body == 0 || d.face == 0 || d.hand == 0 {
            return Err(Error::Configuration("feature dims must be at least 1".into()));
        }
        let w = self.weights;
        let all = [
            w.body_2d,
            w.pose,
            w.face_2d,
            w.expression,
            w.jaw_pose,
            w.hand_2d,
            w.hand_pose,
            w.feature_body,
            w.feature_face,
            w.feature_hand,
            w.consistency,
        ];
        if all.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::Configuration("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Weighted value of every loss term and their part sums.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub body_2d: T,
    pub pose: T,
    pub face_2d: T,
    pub expression: T,
    pub jaw_pose: T,
    pub hand_2d: T,
    pub hand_pose: T,
    pub feature_body: T,
    pub feature_face: T,
    pub feature_hand: T,
    pub body: T,
    pub face: T,
    pub hand: T,
    pub total: T,
}

impl<T: Real> LossBreakdown<T> {
    pub fn from_terms(terms: [T; 10]) -> Self {
        let [body_2d, pose, face_2d, expression, jaw_pose, hand_2d, hand_pose, feature_body, feature_face, feature_hand] =
            terms;
        let body = body_2d + pose + feature_body;
        let face = face_2d + expression + jaw_pose + feature_face;
        let hand = hand_2d + hand_pose + feature_hand;
        LossBreakdown {
            body_2d,
            pose,
            face_2d,
            expression,
            jaw_pose,
            hand_2d,
            hand_pose,
            feature_body,
            feature_face,
            feature_hand,
            body,
            face,
            hand,
            total: body + face + hand,
        }
    }

    pub fn terms(&self) -> [T; 10] {
        [
            self.body_2d,
            self.pose,
            self.face_2d,
            self.expression,
            self.jaw_pose,
            self.hand_2d,
            self.hand_pose,
            self.feature_body,
            self.feature_face,
            self.feature_hand,
        ]
    }

    pub const TERM_NAMES: [&'static str; 10] = [
        "body_2d",
        "pose",
        "face_2d",
        "expression",
        "jaw_pose",
        "hand_2d",
        "hand_pose",
        "feature_body",
        "feature_face",
        "feature_hand",
    ];

    /// Term-wise mean of several breakdowns; totals are re-summed.
    pub fn mean(items: &[Self]) -> Self {
        let mut acc = [T::zero(); 10];
        for it in items {
            for (a, t) in acc.iter_mut().zip(it.terms()) {
                *a += t;
            }
        }
        let n = T::from_usize_lossy(items.len().max(1));
        Self::from_terms(acc.map(|a| a / n))
    }
}

/// One detected keypoint as a 2D training target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeypointTarget<T> {
    pub position: [T; 2],
    /// Binary visibility: the confidence passed its part threshold.
    pub visible: bool,
    pub tag: PartTag,
}

/// Everything one training sample supervises.
#[derive(Clone, Debug, PartialEq)]
pub struct Target<T> {
    pub input: Vec<T>,
    pub keypoints: Vec<KeypointTarget<T>>,
    pub camera: Camera<T>,
    pub label: Option<FullBodyParams<T>>,
    /// Body, face, left hand, right hand.
    pub features: Option<[Vec<T>; 4]>,
}

fn tag_slot(tag: PartTag) -> usize {
    match tag {
        PartTag::Body => 0,
        PartTag::Face => 1,
        PartTag::Hand => 2,
    }
}

fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Per-tag L1 reprojection losses (body, face, hand) and the gradient of
/// `Σ weight[tag] · loss[tag]` with respect to the flat parameters.
pub fn reprojection_terms<T: Real>(
    params: &FullBodyParams<T>,
    tpl: &SkeletonTemplate<T>,
    camera: &Camera<T>,
    keypoints: &[KeypointTarget<T>],
    weights: [T; 3],
) -> Result<([T; 3], Vec<T>)> {
    if keypoints.len() != tpl.keypoints.len() {
        return Err(Error::Configuration(format!(
            "{} keypoint targets for a template with {} keypoints",
            keypoints.len(),
            tpl.keypoints.len()
        )));
    }
    let fk = forward_kinematics(params, tpl)?;
    let points = fk.keypoints(tpl);
    let mut values = [T::zero(); 3];
    let mut grad_kp = vec![Vec3::zero(); points.len()];
    for (i, (kp, p)) in keypoints.iter().zip(&points).enumerate() {
        if !kp.visible {
            continue;
        }
        let slot = tag_slot(kp.tag);
        let (uv, jac) = camera.project_with_jacobian(p)?;
        let ru = uv[0] - kp.position[0];
        let rv = uv[1] - kp.position[1];
        values[slot] += ru.abs() + rv.abs();
        let (su, sv) = (sign(ru) * weights[slot], sign(rv) * weights[slot]);
        grad_kp[i] = Vec3([
            su * jac[0][0] + sv * jac[1][0],
            su * jac[0][1] + sv * jac[1][1],
            su * jac[0][2] + sv * jac[1][2],
        ]);
    }
    let grad = fk.backward_keypoints(params, tpl, &grad_kp);
    Ok((values, grad))
}

/// `Σ v_j ‖x̂_j − x_j‖₁` over all keypoints and its gradient.
pub fn loss_2d_joint<T: Real>(
    params: &FullBodyParams<T>,
    tpl: &SkeletonTemplate<T>,
    camera: &Camera<T>,
    keypoints: &[KeypointTarget<T>],
) -> Result<(T, Vec<T>)> {
    let (v, g) = reprojection_terms(params, tpl, camera, keypoints, [T::one(); 3])?;
    Ok((v[0] + v[1] + v[2], g))
}

/// `‖pred − pseudo‖²` and its gradient `2(pred − pseudo)`.
pub fn loss_pose<T: Real>(pred: &[T], pseudo: &[T]) -> Result<(T, Vec<T>)> {
    if pred.len() != pseudo.len() {
        return Err(Error::InvalidArgument(format!(
            "prediction has {} entries, label has {}",
            pred.len(),
            pseudo.len()
        )));
    }
    let two = T::lit(2.0);
    let mut value = T::zero();
    let grad = pred
        .iter()
        .zip(pseudo)
        .map(|(p, q)| {
            let d = *p - *q;
            value += d * d;
            two * d
        })
        .collect();
    Ok((value, grad))
}

/// Same squared L2 form on the expression coefficients.
pub fn loss_expression<T: Real>(pred: &[T], pseudo: &[T]) -> Result<(T, Vec<T>)> {
    loss_pose(pred, pseudo)
}

/// Log-softmax of `x / temperature`.
pub fn log_softmax<T: Real>(x: &[T], temperature: T) -> Vec<T> {
    let scaled: Vec<T> = x.iter().map(|v| *v / temperature).collect();
    let max = scaled.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + scaled.iter().map(|v| (*v - max).exp()).sum::<T>().ln();
    scaled.iter().map(|v| *v - lse).collect()
}

/// `A · KL(softmax(pseudo/τ) ‖ softmax(pred/τ))` and its gradient with
/// respect to `pred`, `A (p − p̂) / τ`.
pub fn loss_feature<T: Real>(pred: &[T], pseudo: &[T], cfg: &LossConfig) -> Result<(T, Vec<T>)> {
    if pred.len() != pseudo.len() || pred.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "feature lengths differ or are empty: predicted {}, expert {}",
            pred.len(),
            pseudo.len()
        )));
    }
    let tau = T::lit(cfg.temperature);
    let amp = T::lit(cfg.amplification);
    let log_p = log_softmax(pred, tau);
    let log_q = log_softmax(pseudo, tau);
    let mut kl = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (lp, lq) in log_p.iter().zip(&log_q) {
        let q = lq.exp();
        kl += q * (*lq - *lp);
        grad.push(amp * (lp.exp() - q) / tau);
    }
    Ok((amp * kl.max(T::zero()), grad))
}

/// Value and gradients of `2 − 2⟨a, b⟩ / (‖a‖‖b‖)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Consistency<T> {
    pub value: T,
    pub grad_a: Vec<T>,
    pub grad_b: Vec<T>,
}

/// `‖a/‖a‖ − b/‖b‖‖²`, the second algebraic form of the consistency loss.
pub fn normalized_difference<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    let (na, nb) = norms(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x / na - *y / nb;
            d * d
        })
        .sum())
}

fn norms<T: Real>(a: &[T], b: &[T]) -> Result<(T, T)> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let na = a.iter().map(|x| *x * *x).sum::<T>().sqrt();
    let nb = b.iter().map(|x| *x * *x).sum::<T>().sqrt();
    if !(na > T::zero() && nb > T::zero()) {
        return Err(Error::DegenerateInput("consistency loss of a zero-norm vector".into()));
    }
    Ok((na, nb))
}

pub fn ema_consistency_loss<T: Real>(a: &[T], b: &[T]) -> Result<Consistency<T>> {
    let (na, nb) = norms(a, b)?;
    let dot: T = a.iter().zip(b).map(|(x, y)| *x * *y).sum();
    let cos = dot / (na * nb);
    let two = T::lit(2.0);
    let k = -two / (na * nb);
    let grad_a = a.iter().zip(b).map(|(x, y)| k * (*y - dot / (na * na) * *x)).collect();
    let grad_b = a.iter().zip(b).map(|(x, y)| k * (*x - dot / (nb * nb) * *y)).collect();
    Ok(Consistency {
        value: two - two * cos,
        grad_a,
        grad_b,
    })
}

/// Loss of one network output and its gradient with respect to that output.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputLoss<T> {
    pub breakdown: LossBreakdown<T>,
    pub grad_params: Vec<T>,
    pub grad_features: [Vec<T>; 4],
}

/// Every supervised term for one sample. Label and feature terms are zero
/// when the sample carries no label or no features.
pub fn output_loss<T: Real>(
    out: &Output<T>,
    target: &Target<T>,
    tpl: &SkeletonTemplate<T>,
    cfg: &LossConfig,
) -> Result<OutputLoss<T>> {
    let w = cfg.weights;
    let lit = T::lit;
    let params = FullBodyParams::from_flat(&tpl.dims, &out.params)?;
    let (kp, mut grad_params) = reprojection_terms(
        &params,
        tpl,
        &target.camera,
        &target.keypoints,
        [lit(w.body_2d), lit(w.face_2d), lit(w.hand_2d)],
    )?;
    let mut terms = [T::zero(); 10];
    terms[0] = lit(w.body_2d) * kp[0];
    terms[2] = lit(w.face_2d) * kp[1];
    terms[5] = lit(w.hand_2d) * kp[2];

    if let Some(label) = &target.label {
        let layout = tpl.dims.layout();
        let truth = label.to_flat();
        let blocks = [
            (1, w.pose, layout.body_pose.clone()),
            (3, w.expression, layout.expression.clone()),
            (4, w.jaw_pose, layout.jaw_pose.clone()),
            (6, w.hand_pose, layout.left_hand_pose.clone()),
            (6, w.hand_pose, layout.right_hand_pose.clone()),
        ];
        for (term, weight, range) in blocks {
            let (v, g) = loss_pose(&out.params[range.clone()], &truth[range.clone()])?;
            let weight = lit(weight);
            terms[term] += weight * v;
            for (a, b) in grad_params[range].iter_mut().zip(g) {
                *a += weight * b;
            }
        }
    }

    let mut grad_features: [Vec<T>; 4] = Default::default();
    if let Some(feats) = &target.features {
        let blocks = [
            (7, w.feature_body, FEATURE_BODY),
            (8, w.feature_face, FEATURE_FACE),
            (9, w.feature_hand, FEATURE_LEFT_HAND),
            (9, w.feature_hand, FEATURE_RIGHT_HAND),
        ];
        for (term, weight, block) in blocks {
            let (v, g) = loss_feature(&out.features[block], &feats[block], cfg)?;
            let weight = lit(weight);
            terms[term] += weight * v;
            grad_features[block] = g.into_iter().map(|x| x * weight).collect();
        }
    }

    Ok(OutputLoss {
        breakdown: LossBreakdown::from_terms(terms),
        grad_params,
        grad_features,
    })
}

/// Forward pass, every loss term, and backpropagation to the weights.
pub fn loss_total<T: Real>(
    state: &ModelState<T>,
    target: &Target<T>,
    tpl: &SkeletonTemplate<T>,
    cfg: &LossConfig,
) -> Result<(LossBreakdown<T>, Vec<T>)> {
    let (out, cache) = state.forward_cached(&target.input)?;
    let l = output_loss(&out, target, tpl, cfg)?;
    let grad = state.backward(&cache, &l.grad_params, &l.grad_features);
    Ok((l.breakdown, grad))
}
