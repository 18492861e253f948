use bodyfuse::body_model::{forward_kinematics, FullBodyParams, ModelDims, SkeletonTemplate};
use bodyfuse::curation::{curate, SelectionConfig};
use bodyfuse::eval::{f_score, mpjpe, pa_p2s, v2v, Alignment};
use bodyfuse::geometry::{log_map, rodrigues, umeyama_align, AxisAngle, Mat3, SimilarityTransform, Vec3};
use bodyfuse::learn::{ema_consistency_loss, loss_feature, Architecture, LossBreakdown, LossConfig, ModelState};
use bodyfuse::synth::{synthesize_dataset, SceneRecord, SynthConfig};
use bodyfuse::trainer::{ema_update, rotate_about};
use proptest::prelude::*;
use std::sync::OnceLock;

fn tpl() -> &'static SkeletonTemplate<f64> {
    static T: OnceLock<SkeletonTemplate<f64>> = OnceLock::new();
    T.get_or_init(|| SynthConfig::toy().template().unwrap())
}

fn dims() -> ModelDims {
    ModelDims::toy()
}

fn vec3(r: f64) -> impl Strategy<Value = Vec3<f64>> {
    [-r..r, -r..r, -r..r].prop_map(Vec3)
}

fn axis_angle(max_angle: f64) -> impl Strategy<Value = AxisAngle<f64>> {
    let m = max_angle / 3f64.sqrt();
    [-m..m, -m..m, -m..m].prop_map(AxisAngle)
}

fn params(scale: f64) -> impl Strategy<Value = FullBodyParams<f64>> {
    prop::collection::vec(-scale..scale, dims().param_count())
        .prop_map(|v| FullBodyParams::from_flat(&ModelDims::toy(), &v).unwrap())
}

fn similarity() -> impl Strategy<Value = SimilarityTransform<f64>> {
    (axis_angle(3.0), 0.3..3.0f64, vec3(5.0)).prop_map(|(aa, scale, translation)| SimilarityTransform {
        rotation: rodrigues(&aa).unwrap(),
        scale,
        translation,
    })
}

fn max_dist(a: &[Vec3<f64>], b: &[Vec3<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x - *y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rodrigues_is_a_rotation(aa in axis_angle(20.0)) {
        let r = rodrigues(&aa).unwrap();
        let rtr = r.transpose() * r;
        prop_assert!(rtr.max_abs_diff(&Mat3::identity()) < 1e-9);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn log_map_inverts_rodrigues_below_pi(aa in axis_angle(3.0)) {
        let back = log_map(&rodrigues(&aa).unwrap());
        for k in 0..3 {
            prop_assert!((back.0[k] - aa.0[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn umeyama_beats_random_similarities(
        pts in prop::collection::vec(vec3(1.0), 4..20),
        xf in similarity(),
        noise in prop::collection::vec(vec3(0.05), 20),
        others in prop::collection::vec(similarity(), 50),
    ) {
        let target: Vec<_> = pts.iter().zip(&noise).map(|(p, n)| xf.apply(p) + *n).collect();
        let best = umeyama_align(&pts, &target, true).unwrap();
        let r = best.residual(&pts, &target);
        for o in others.iter().chain(std::iter::once(&xf)) {
            prop_assert!(r <= o.residual(&pts, &target) + 1e-12);
        }
    }

    #[test]
    fn fk_translation_equivariance(p in params(0.5), d in vec3(2.0)) {
        let a = forward_kinematics(&p, tpl()).unwrap();
        let mut q = p.clone();
        for k in 0..3 {
            q.root_translation[k] += d.0[k];
        }
        let b = forward_kinematics(&q, tpl()).unwrap();
        let shifted: Vec<_> = a.joints.iter().map(|j| *j + d).collect();
        prop_assert!(max_dist(&shifted, &b.joints) < 1e-10);
    }

    #[test]
    fn fk_rotation_equivariance(p in params(0.3), g in axis_angle(1.0)) {
        let tpl = tpl();
        let rg = rodrigues(&g).unwrap();
        let a = forward_kinematics(&p, tpl).unwrap();
        // the root joint sits at root_translation + its offset
        let root = a.joints[0];
        let offset = root - Vec3(p.root_translation);
        let mut q = p.clone();
        q.body.pose[0] = log_map(&(rg * rodrigues(&p.body.pose[0]).unwrap()));
        q.root_translation = (rg.mul_vec(&root) - offset).0;
        let b = forward_kinematics(&q, tpl).unwrap();
        let rotated: Vec<_> = a.joints.iter().map(|j| rg.mul_vec(j)).collect();
        prop_assert!(max_dist(&rotated, &b.joints) < 1e-10);
        let rotated: Vec<_> = a.markers.iter().map(|m| rg.mul_vec(m)).collect();
        prop_assert!(max_dist(&rotated, &b.markers) < 1e-10);
    }

    #[test]
    fn posing_a_joint_leaves_non_descendants_fixed(p in params(0.5), j in 1usize..12, delta in axis_angle(1.0)) {
        let tpl = tpl();
        let mut q = p.clone();
        for k in 0..3 {
            q.body.pose[j].0[k] += delta.0[k];
        }
        let a = forward_kinematics(&p, tpl).unwrap();
        let b = forward_kinematics(&q, tpl).unwrap();
        let descends = |mut k: usize| loop {
            match tpl.joints[k].parent {
                Some(parent) if parent == j => return true,
                Some(parent) => k = parent,
                None => return false,
            }
        };
        for k in 0..a.joints.len() {
            if !descends(k) {
                prop_assert!((a.joints[k] - b.joints[k]).norm() < 1e-12, "joint {k}");
            }
        }
    }

    #[test]
    fn consistency_is_bounded_and_scale_invariant(
        a in prop::collection::vec(-3.0..3.0f64, 1..40),
        seed in prop::collection::vec(-3.0..3.0f64, 40),
        la in 1e-3..1e3f64,
        lb in 1e-3..1e3f64,
    ) {
        prop_assume!(a.iter().any(|x| x.abs() > 1e-6));
        let b: Vec<f64> = seed[..a.len()].to_vec();
        prop_assume!(b.iter().any(|x| x.abs() > 1e-6));
        let c = ema_consistency_loss(&a, &b).unwrap().value;
        prop_assert!((-1e-12..=4.0 + 1e-12).contains(&c));
        let sa: Vec<f64> = a.iter().map(|x| x * la).collect();
        let sb: Vec<f64> = b.iter().map(|x| x * lb).collect();
        prop_assert!((ema_consistency_loss(&sa, &sb).unwrap().value - c).abs() < 1e-10);
        prop_assert!((ema_consistency_loss(&b, &a).unwrap().value - c).abs() < 1e-12);
    }

    #[test]
    fn feature_loss_is_nonnegative_and_zero_on_shift(
        f in prop::collection::vec(-4.0..4.0f64, 1..24),
        g in prop::collection::vec(-4.0..4.0f64, 24),
        shift in -5.0..5.0f64,
    ) {
        let cfg = LossConfig::toy();
        let g = &g[..f.len()];
        prop_assert!(loss_feature(&f, g, &cfg).unwrap().0 >= 0.0);
        // softmax ignores a constant shift, so the distributions are equal
        let shifted: Vec<f64> = f.iter().map(|x| x + shift).collect();
        prop_assert!(loss_feature(&f, &shifted, &cfg).unwrap().0 < 1e-9);
    }

    #[test]
    fn breakdown_totals_are_exact_sums(terms in prop::array::uniform10(0.0..100.0f64)) {
        let b = LossBreakdown::from_terms(terms);
        prop_assert!((b.body + b.face + b.hand - b.total).abs() < 1e-12 * b.total.max(1.0));
        prop_assert!((terms.iter().sum::<f64>() - b.total).abs() < 1e-12 * b.total.max(1.0));
    }

    #[test]
    fn ema_update_contracts_by_tau(tau in 0.0..=1.0f64, s1 in 0u64..1000, s2 in 0u64..1000) {
        let arch = Architecture::new(&dims(), LossConfig::toy().feature_dims, vec![5], [3, 2, 2]);
        let old = ModelState::<f64>::init(arch.clone(), s1).unwrap();
        let sigma = ModelState::<f64>::init(arch, s2 + 1000).unwrap();
        let mut new = old.clone();
        ema_update(&mut new, &sigma, tau).unwrap();
        for ((n, o), s) in new.flatten().iter().zip(old.flatten()).zip(sigma.flatten()) {
            prop_assert!(((n - s).abs() - tau * (o - s).abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_about_a_center_keeps_distances(
        seed in 0u64..500,
        angle in -3.0..3.0f64,
        cx in 0.0..1000.0f64,
        cy in 0.0..1000.0f64,
    ) {
        let rec = &synthesize_dataset(&SynthConfig::toy(), seed, 0, 1).unwrap()[0];
        let rot = rotate_about(&rec.observation, [cx, cy], angle);
        for (a, b) in rec.observation.keypoints.iter().zip(&rot.keypoints) {
            let da = (a.position[0] - cx).hypot(a.position[1] - cy);
            let db = (b.position[0] - cx).hypot(b.position[1] - cy);
            prop_assert!((da - db).abs() < 1e-9 * da.max(1.0));
            prop_assert_eq!(a.confidence, b.confidence);
        }
    }

    #[test]
    fn pa_metrics_ignore_similarity_transforms(p in params(0.4), t in params(0.4), xf in similarity()) {
        let tpl = tpl();
        let a = forward_kinematics(&p, tpl).unwrap();
        let g = forward_kinematics(&t, tpl).unwrap();
        let moved = xf.apply_all(&a.markers);
        let before = mpjpe(&a.joints, &g.joints, Alignment::Procrustes).unwrap();
        let after = mpjpe(&xf.apply_all(&a.joints), &g.joints, Alignment::Procrustes).unwrap();
        prop_assert!((before - after).abs() < 1e-9);
        let before = v2v(&a.markers, &g.markers, Alignment::Procrustes, None).unwrap();
        let after = v2v(&moved, &g.markers, Alignment::Procrustes, None).unwrap();
        prop_assert!((before - after).abs() < 1e-9);
        let before = pa_p2s(&a.markers, &g.markers).unwrap();
        let after = pa_p2s(&moved, &g.markers).unwrap();
        prop_assert!((before.mean - after.mean).abs() < 1e-9);
    }

    #[test]
    fn pelvis_alignment_ignores_translation_only(p in params(0.4), t in params(0.4), d in vec3(3.0)) {
        let tpl = tpl();
        let a = forward_kinematics(&p, tpl).unwrap();
        let g = forward_kinematics(&t, tpl).unwrap();
        let shifted: Vec<_> = a.joints.iter().map(|j| *j + d).collect();
        let before = mpjpe(&a.joints, &g.joints, Alignment::Pelvis).unwrap();
        prop_assert!((before - mpjpe(&shifted, &g.joints, Alignment::Pelvis).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn alignment_only_lowers_v2v(p in params(0.4), t in params(0.4)) {
        let tpl = tpl();
        let a = forward_kinematics(&p, tpl).unwrap();
        let g = forward_kinematics(&t, tpl).unwrap();
        let raw = v2v(&a.markers, &g.markers, Alignment::None, None).unwrap();
        prop_assert!(v2v(&a.markers, &g.markers, Alignment::Procrustes, None).unwrap() <= raw + 1e-9);
    }

    #[test]
    fn f_score_grows_with_threshold(p in params(0.2), t in params(0.2), lo in 0.0..50.0f64, extra in 0.0..50.0f64) {
        let tpl = tpl();
        let a = forward_kinematics(&p, tpl).unwrap();
        let g = forward_kinematics(&t, tpl).unwrap();
        let f_lo = f_score(&a.markers, &g.markers, lo).unwrap();
        let f_hi = f_score(&a.markers, &g.markers, lo + extra).unwrap();
        prop_assert!(f_lo <= f_hi);
        prop_assert!((0.0..=1.0).contains(&f_lo));
    }
}

fn moderate_data() -> &'static [SceneRecord] {
    static D: OnceLock<Vec<SceneRecord>> = OnceLock::new();
    D.get_or_init(|| synthesize_dataset(&SynthConfig::toy(), 11, 0, 120).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn loosening_count_or_gate_never_drops_samples(fewer in 0usize..12, wider in 0.0..3.0f64) {
        let tight = SelectionConfig::default();
        let loose = SelectionConfig {
            min_keypoints: tight.min_keypoints - fewer,
            reprojection_gate_cm: tight.reprojection_gate_cm + wider,
            ..tight
        };
        let data = moderate_data();
        let (_, a) = curate(data, tpl(), &tight).unwrap();
        let (_, b) = curate(data, tpl(), &loose).unwrap();
        prop_assert!(b.kept >= a.kept, "{} < {}", b.kept, a.kept);
    }
}

/// Lower confidence thresholds admit more keypoints into step 3, and those
/// are the noisier ones, so a sample can fail a gate it used to pass.
#[test]
fn lower_confidence_thresholds_are_not_monotone() {
    let tight = SelectionConfig::default();
    let loose = SelectionConfig {
        body_threshold: tight.body_threshold * 0.01,
        face_threshold: tight.face_threshold * 0.01,
        hand_threshold: tight.hand_threshold * 0.01,
        ..tight
    };
    let (a, _) = curate(moderate_data(), tpl(), &tight).unwrap();
    let (b, _) = curate(moderate_data(), tpl(), &loose).unwrap();
    let lost = a.iter().filter(|s| !b.iter().any(|t| t.subject_id == s.subject_id)).count();
    assert!(lost > 0);
}

#[test]
fn stored_rmse_matches_recomputation() {
    let (kept, _) = curate(moderate_data(), tpl(), &SelectionConfig::default()).unwrap();
    assert!(!kept.is_empty());
    for s in &kept {
        let out = bodyfuse::curation::step3_reprojection_gate(
            &s.label,
            &s.keypoints,
            &s.camera,
            tpl(),
            &SelectionConfig::default(),
        )
        .unwrap();
        assert!((out.rmse_cm - s.provenance.step3_rmse_cm).abs() < 1e-9);
    }
}
