//! Joint and marker error metrics in millimeters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_model::{forward_kinematics, FullBodyParams, Part, SkeletonTemplate};
use crate::error::{Error, Result};
use crate::geometry::{umeyama_align, Vec3};
use crate::learn::{encode_observation, ModelState};
use crate::scalar::Real;
use crate::synth::SceneRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    None,
    /// Subtract the first point (the pelvis) from both sets.
    Pelvis,
    /// Similarity (Umeyama with scale) alignment of prediction onto truth.
    Procrustes,
}

fn meters_to_mm<T: Real>(x: T) -> T {
    x * T::lit(1000.0)
}

type PointPair<T> = (Vec<Vec3<T>>, Vec<Vec3<T>>);

fn aligned<T: Real>(pred: &[Vec3<T>], gt: &[Vec3<T>], alignment: Alignment) -> Result<PointPair<T>> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predicted points vs {} ground-truth points",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("no points to compare".into()));
    }
    Ok(match alignment {
        Alignment::None => (pred.to_vec(), gt.to_vec()),
        Alignment::Pelvis => {
            let (p0, g0) = (pred[0], gt[0]);
            (pred.iter().map(|p| *p - p0).collect(), gt.iter().map(|g| *g - g0).collect())
        }
        Alignment::Procrustes => {
            let t = umeyama_align(pred, gt, true)?;
            (t.apply_all(pred), gt.to_vec())
        }
    })
}

fn mean_distance<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> T {
    let sum: T = a.iter().zip(b).map(|(p, q)| (*p - *q).norm()).sum();
    sum / T::from_usize_lossy(a.len())
}

/// Mean per-joint position error in millimeters (inputs in meters).
pub fn mpjpe<T: Real>(pred: &[Vec3<T>], gt: &[Vec3<T>], alignment: Alignment) -> Result<T> {
    let (p, g) = aligned(pred, gt, alignment)?;
    Ok(meters_to_mm(mean_distance(&p, &g)))
}

/// Mean marker error in millimeters over the markers in `mask` (all when
/// `None`); any alignment is computed on those markers only.
pub fn v2v<T: Real>(pred: &[Vec3<T>], gt: &[Vec3<T>], alignment: Alignment, mask: Option<&[usize]>) -> Result<T> {
    match mask {
        None => mpjpe(pred, gt, alignment),
        Some([]) => Err(Error::InvalidArgument("empty marker mask".into())),
        Some(idx) => {
            if pred.len() != gt.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} predicted markers vs {} ground-truth markers",
                    pred.len(),
                    gt.len()
                )));
            }
            if let Some(bad) = idx.iter().find(|i| **i >= pred.len()) {
                return Err(Error::InvalidArgument(format!("mask index {bad} out of range")));
            }
            let p: Vec<_> = idx.iter().map(|i| pred[*i]).collect();
            let g: Vec<_> = idx.iter().map(|i| gt[*i]).collect();
            mpjpe(&p, &g, alignment)
        }
    }
}

/// Distance (mm) from each Procrustes-aligned predicted point to its
/// nearest ground-truth point.
pub fn p2s_distances<T: Real>(pred: &[Vec3<T>], gt: &[Vec3<T>]) -> Result<Vec<T>> {
    if pred.len() < 3 || gt.len() != pred.len() {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 corresponded face markers, got {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    let t = umeyama_align(pred, gt, true)?;
    Ok(t
        .apply_all(pred)
        .iter()
        .map(|p| {
            let d2 = gt
                .iter()
                .map(|g| (*p - *g).norm_squared())
                .fold(T::infinity(), T::min);
            meters_to_mm(d2.sqrt())
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Median (mean of the middle pair for even counts), mean and population
    /// standard deviation.
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        Summary {
            median,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Procrustes-aligned nearest-marker distance statistics for one face.
pub fn pa_p2s<T: Real>(pred: &[Vec3<T>], gt: &[Vec3<T>]) -> Result<Summary> {
    let d: Vec<f64> = p2s_distances(pred, gt)?.into_iter().map(Real::as_f64).collect();
    Ok(Summary::of(&d))
}

/// Fraction of corresponded pairs within `threshold_mm` (inclusive). Under a
/// fixed one-to-one correspondence precision equals recall, so this is the
/// F-score. Points are expected to be aligned already.
pub fn f_score<T: Real>(pred: &[Vec3<T>], gt: &[Vec3<T>], threshold_mm: T) -> Result<T> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} predicted vs {} ground-truth points",
            pred.len(),
            gt.len()
        )));
    }
    let hits = pred
        .iter()
        .zip(gt)
        .filter(|(p, g)| meters_to_mm((**p - **g).norm()) <= threshold_mm)
        .count();
    Ok(T::from_usize_lossy(hits) / T::from_usize_lossy(pred.len()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartErrors {
    pub body: f64,
    pub left_hand: f64,
    pub right_hand: f64,
    pub face: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FScore {
    pub threshold_mm: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mpjpe: f64,
    pub pelvis_mpjpe: f64,
    pub pa_mpjpe: f64,
    pub v2v: f64,
    pub pa_v2v: PartErrors,
    pub pa_p2s: Summary,
    /// Hand markers, each hand aligned on its own.
    pub f_at: Vec<FScore>,
    pub samples: usize,
}

pub const DEFAULT_F_THRESHOLDS_MM: [f64; 2] = [5.0, 15.0];

/// Per-sample values that [`MetricReport`] averages.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMetrics {
    pub mpjpe: f64,
    pub pelvis_mpjpe: f64,
    pub pa_mpjpe: f64,
    pub v2v: f64,
    pub pa_v2v: PartErrors,
    pub p2s_distances: Vec<f64>,
    pub f_at: Vec<f64>,
}

/// All metrics for one predicted/true parameter pair.
pub fn sample_metrics(
    pred: &FullBodyParams<f64>,
    truth: &FullBodyParams<f64>,
    tpl: &SkeletonTemplate<f64>,
    thresholds_mm: &[f64],
) -> Result<SampleMetrics> {
    let p = forward_kinematics(pred, tpl)?;
    let g = forward_kinematics(truth, tpl)?;
    let body = tpl.body_joint_indices();
    let pj: Vec<_> = body.iter().map(|i| p.joints[*i]).collect();
    let gj: Vec<_> = body.iter().map(|i| g.joints[*i]).collect();
    let part_pa = |part| v2v(&p.markers, &g.markers, Alignment::Procrustes, Some(&tpl.part_markers(part)));

    let face = tpl.part_markers(Part::Face);
    let pf: Vec<_> = face.iter().map(|i| p.markers[*i]).collect();
    let gf: Vec<_> = face.iter().map(|i| g.markers[*i]).collect();

    let mut f_at = vec![0.0; thresholds_mm.len()];
    for hand in [Part::LeftHand, Part::RightHand] {
        let idx = tpl.part_markers(hand);
        let ph: Vec<_> = idx.iter().map(|i| p.markers[*i]).collect();
        let gh: Vec<_> = idx.iter().map(|i| g.markers[*i]).collect();
        let aligned = umeyama_align(&ph, &gh, true)?.apply_all(&ph);
        for (acc, t) in f_at.iter_mut().zip(thresholds_mm) {
            *acc += 0.5 * f_score(&aligned, &gh, *t)?;
        }
    }

    Ok(SampleMetrics {
        mpjpe: mpjpe(&pj, &gj, Alignment::None)?,
        pelvis_mpjpe: mpjpe(&pj, &gj, Alignment::Pelvis)?,
        pa_mpjpe: mpjpe(&pj, &gj, Alignment::Procrustes)?,
        v2v: v2v(&p.markers, &g.markers, Alignment::None, None)?,
        pa_v2v: PartErrors {
            body: part_pa(Part::Body)?,
            left_hand: part_pa(Part::LeftHand)?,
            right_hand: part_pa(Part::RightHand)?,
            face: part_pa(Part::Face)?,
        },
        p2s_distances: p2s_distances(&pf, &gf)?,
        f_at,
    })
}

impl MetricReport {
    /// Means of the per-sample values; P2S statistics pool every marker of
    /// every sample.
    pub fn aggregate(items: &[SampleMetrics], thresholds_mm: &[f64]) -> MetricReport {
        let n = items.len().max(1) as f64;
        let mean = |f: &dyn Fn(&SampleMetrics) -> f64| items.iter().map(f).sum::<f64>() / n;
        let pooled: Vec<f64> = items.iter().flat_map(|s| s.p2s_distances.iter().copied()).collect();
        MetricReport {
            mpjpe: mean(&|s| s.mpjpe),
            pelvis_mpjpe: mean(&|s| s.pelvis_mpjpe),
            pa_mpjpe: mean(&|s| s.pa_mpjpe),
            v2v: mean(&|s| s.v2v),
            pa_v2v: PartErrors {
                body: mean(&|s| s.pa_v2v.body),
                left_hand: mean(&|s| s.pa_v2v.left_hand),
                right_hand: mean(&|s| s.pa_v2v.right_hand),
                face: mean(&|s| s.pa_v2v.face),
            },
            pa_p2s: Summary::of(&pooled),
            f_at: thresholds_mm
                .iter()
                .enumerate()
                .map(|(k, t)| FScore {
                    threshold_mm: *t,
                    value: mean(&|s| s.f_at[k]),
                })
                .collect(),
            samples: items.len(),
        }
    }

    /// Aligned-column text rendering.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, f64)> = vec![
            ("MPJPE (mm)".into(), self.mpjpe),
            ("Pelvis MPJPE (mm)".into(), self.pelvis_mpjpe),
            ("PA-MPJPE (mm)".into(), self.pa_mpjpe),
            ("V2V (mm)".into(), self.v2v),
            ("PA-V2V body (mm)".into(), self.pa_v2v.body),
            ("PA-V2V left hand (mm)".into(), self.pa_v2v.left_hand),
            ("PA-V2V right hand (mm)".into(), self.pa_v2v.right_hand),
            ("PA-V2V face (mm)".into(), self.pa_v2v.face),
            ("PA-P2S median (mm)".into(), self.pa_p2s.median),
            ("PA-P2S mean (mm)".into(), self.pa_p2s.mean),
            ("PA-P2S std (mm)".into(), self.pa_p2s.std),
        ];
        for f in &self.f_at {
            rows.push((format!("F@{}mm", f.threshold_mm), f.value));
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = format!("{:<width$}  {:>10}\n", "metric", "value");
        for (name, v) in rows {
            out.push_str(&format!("{name:<width$}  {v:>10.4}\n"));
        }
        out.push_str(&format!("{:<width$}  {:>10}\n", "samples", self.samples));
        out
    }
}

/// Metrics of explicit predictions against truths.
pub fn evaluate_params(
    preds: &[FullBodyParams<f64>],
    truths: &[FullBodyParams<f64>],
    tpl: &SkeletonTemplate<f64>,
    thresholds_mm: &[f64],
) -> Result<MetricReport> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let per: Vec<SampleMetrics> = preds
        .par_iter()
        .zip(truths)
        .map(|(p, t)| sample_metrics(p, t, tpl, thresholds_mm))
        .collect::<Result<_>>()?;
    Ok(MetricReport::aggregate(&per, thresholds_mm))
}

/// Runs the network on every record's keypoints and scores the result
/// against the scene truth.
pub fn evaluate(
    state: &ModelState<f64>,
    records: &[SceneRecord],
    tpl: &SkeletonTemplate<f64>,
    thresholds_mm: &[f64],
) -> Result<MetricReport> {
    let dims = &tpl.dims;
    if state.arch.params != dims.param_count() || state.arch.input != crate::learn::input_len(dims) {
        return Err(Error::Configuration(format!(
            "checkpoint expects {} inputs and {} parameters, dataset model has {} and {}",
            state.arch.input,
            state.arch.params,
            crate::learn::input_len(dims),
            dims.param_count()
        )));
    }
    let preds = predict(state, records, dims)?;
    let truths: Vec<_> = records.iter().map(|r| r.scene.truth.clone()).collect();
    evaluate_params(&preds, &truths, tpl, thresholds_mm)
}

/// Network predictions for each record.
pub fn predict(
    state: &ModelState<f64>,
    records: &[SceneRecord],
    dims: &crate::body_model::ModelDims,
) -> Result<Vec<FullBodyParams<f64>>> {
    records
        .par_iter()
        .map(|r| {
            let cam = &r.scene.camera;
            let x = encode_observation(&r.observation, cam.focal_length, cam.principal_point);
            let out = state.forward(&x)?;
            FullBodyParams::from_flat(dims, &out.params)
        })
        .collect()
}
