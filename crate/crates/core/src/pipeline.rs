//! Versioned configuration, JSON-lines datasets and the end-to-end steps the
//! command-line driver runs.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::body_model::{ModelDims, SkeletonTemplate};
use crate::curation::{curate, CuratedSample, CurationReport, SelectionConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricReport, DEFAULT_F_THRESHOLDS_MM};
use crate::learn::{Architecture, ModelState, LossBreakdown};
use crate::synth::{
    derive_seed, synthesize_dataset, FeatureDims, KeypointObservation, NoiseProfile, PartPrediction, Scene,
    SceneRecord, SynthConfig,
};
use crate::trainer::{train_distill, train_ema, AugmentationConfig, EmaConfig, TrainContext, TrainHyper, TrainRun, TrainSample};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const DATA_SCHEMA_VERSION: u32 = 1;
/// Scene index of the first evaluation scene; training scenes count up
/// from zero.
pub const EVAL_FIRST_INDEX: u64 = 1 << 32;

const INIT_STREAM: u64 = 7;
const TRAIN_STREAM: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimsPreset {
    Toy,
    Paper,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub preset: DimsPreset,
    /// Required with `preset = "custom"`, rejected otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<ModelDims>,
    pub feature_dims: FeatureDims,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub train_scenes: usize,
    pub eval_scenes: usize,
    pub pose_prior_scale: f64,
    pub template_seed: u64,
    pub feature_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
    pub feature_internal: [usize; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// Everything a run depends on. Loaded from TOML; unknown keys are errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub model: ModelSection,
    pub synth: SynthSection,
    pub noise: NoiseProfile,
    pub selection: SelectionConfig,
    pub network: NetworkSection,
    pub train: TrainHyper,
    pub ema: EmaConfig,
    pub augmentation: AugmentationConfig,
    #[serde(default)]
    pub paths: PathsSection,
}

impl PipelineConfig {
    /// The bundled demo: toy model, moderate noise, 2000/200 scenes.
    pub fn demo() -> Self {
        let synth = SynthConfig::toy();
        PipelineConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 1,
            model: ModelSection {
                preset: DimsPreset::Toy,
                custom: None,
                feature_dims: synth.feature_dims,
            },
            synth: SynthSection {
                train_scenes: 2000,
                eval_scenes: 200,
                pose_prior_scale: synth.pose_prior_scale,
                template_seed: synth.template_seed,
                feature_seed: synth.feature_seed,
            },
            noise: synth.noise,
            selection: SelectionConfig::default(),
            network: NetworkSection {
                hidden: vec![64, 64],
                feature_internal: [16, 8, 8],
            },
            train: TrainHyper::default(),
            ema: EmaConfig::default(),
            augmentation: AugmentationConfig {
                jitter: 0.5,
                rotation: 0.1,
                dropout: 0.0,
            },
            paths: PathsSection::default(),
        }
    }

    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let value: toml::Value = toml::from_str(text).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        match value.get("schema_version") {
            None => {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    message: "missing mandatory field `schema_version`".into(),
                })
            }
            Some(toml::Value::Integer(v)) if *v != CONFIG_SCHEMA_VERSION as i64 => {
                return Err(Error::SchemaVersion {
                    path: path.to_path_buf(),
                    found: u32::try_from(*v).unwrap_or(u32::MAX),
                    expected: CONFIG_SCHEMA_VERSION,
                })
            }
            _ => {}
        }
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Configuration(format!("config does not serialize: {e}")))
    }

    pub fn dims(&self) -> Result<ModelDims> {
        match (self.model.preset, self.model.custom) {
            (DimsPreset::Toy, None) => Ok(ModelDims::toy()),
            (DimsPreset::Paper, None) => Ok(ModelDims::paper()),
            (DimsPreset::Custom, Some(d)) => Ok(d),
            (DimsPreset::Custom, None) => Err(Error::Configuration("preset \"custom\" needs a [model.custom] table".into())),
            (_, Some(_)) => Err(Error::Configuration("[model.custom] is only allowed with preset \"custom\"".into())),
        }
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        Ok(SynthConfig {
            dims: self.dims()?,
            feature_dims: self.model.feature_dims,
            noise: self.noise,
            pose_prior_scale: self.synth.pose_prior_scale,
            template_seed: self.synth.template_seed,
            feature_seed: self.synth.feature_seed,
        })
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let arch = Architecture::new(
            &self.dims()?,
            self.model.feature_dims,
            self.network.hidden.clone(),
            self.network.feature_internal,
        );
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Configuration(format!(
                "config schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        // TOML integers are signed
        for (name, v) in [
            ("seed", self.seed),
            ("synth.template_seed", self.synth.template_seed),
            ("synth.feature_seed", self.synth.feature_seed),
        ] {
            if v > i64::MAX as u64 {
                return Err(Error::Configuration(format!("{name} = {v} exceeds {}", i64::MAX)));
            }
        }
        self.dims()?.validate()?;
        if !(self.synth.pose_prior_scale >= 0.0 && self.synth.pose_prior_scale.is_finite()) {
            return Err(Error::Configuration("synth.pose_prior_scale must be non-negative".into()));
        }
        if self.train.loss.feature_dims != self.model.feature_dims {
            return Err(Error::Configuration(
                "train.loss.feature_dims must equal model.feature_dims".into(),
            ));
        }
        self.noise.validate()?;
        self.selection.validate()?;
        self.train.validate()?;
        self.ema.validate()?;
        self.augmentation.validate()?;
        self.architecture()?;
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
enum Record {
    Scene(Scene),
    Observation(KeypointObservation),
    Prediction(PartPrediction),
    Curated(CuratedSample),
}

fn write_lines(path: &Path, records: impl Iterator<Item = Record>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let mut v = serde_json::to_value(&r).map_err(|e| Error::Configuration(e.to_string()))?;
        let obj = v.as_object_mut().expect("records serialize to objects");
        let mut line = serde_json::Map::new();
        line.insert("schema_version".into(), DATA_SCHEMA_VERSION.into());
        line.append(obj);
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Six lines per scene: the scene, its keypoints and one line per expert.
pub fn write_scenes(path: &Path, records: &[SceneRecord]) -> Result<()> {
    write_lines(
        path,
        records.iter().flat_map(|r| {
            std::iter::once(Record::Scene(r.scene.clone()))
                .chain(std::iter::once(Record::Observation(r.observation.clone())))
                .chain(r.predictions.iter().cloned().map(Record::Prediction))
        }),
    )
}

pub fn write_curated(path: &Path, samples: &[CuratedSample]) -> Result<()> {
    write_lines(path, samples.iter().cloned().map(Record::Curated))
}

/// Contents of a dataset file.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Scenes(Vec<SceneRecord>),
    Curated(Vec<CuratedSample>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Scenes(v) => v.len(),
            Dataset::Curated(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn invalid(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Validation {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

type OpenScene = Option<(Scene, Vec<PartPrediction>, usize)>;

fn close_scene(
    path: &Path,
    scenes: &mut Vec<SceneRecord>,
    open: &mut OpenScene,
    obs: &mut Option<KeypointObservation>,
) -> Result<()> {
    if let Some((scene, predictions, line)) = open.take() {
        let observation = obs
            .take()
            .ok_or_else(|| invalid(path, line, format!("scene {} has no observation line", scene.subject_id)))?;
        scenes.push(SceneRecord {
            scene,
            observation,
            predictions,
        });
    }
    Ok(())
}

/// Reads a dataset; an empty file is an empty scene set.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut scenes: Vec<SceneRecord> = Vec::new();
    let mut pending_obs: Option<KeypointObservation> = None;
    let mut curated = Vec::new();
    let mut open: OpenScene = None;

    for (i, line) in BufReader::new(file).lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| invalid(path, n, format!("not JSON: {e}")))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| invalid(path, n, "expected a JSON object"))?;
        match obj.remove("schema_version") {
            None => return Err(invalid(path, n, "missing schema_version")),
            Some(v) => match v.as_u64() {
                Some(v) if v == DATA_SCHEMA_VERSION as u64 => {}
                Some(v) => {
                    return Err(Error::SchemaVersion {
                        path: path.to_path_buf(),
                        found: u32::try_from(v).unwrap_or(u32::MAX),
                        expected: DATA_SCHEMA_VERSION,
                    })
                }
                None => return Err(invalid(path, n, "schema_version must be an unsigned integer")),
            },
        }
        let record: Record = serde_json::from_value(value).map_err(|e| invalid(path, n, e.to_string()))?;
        let mixed = || invalid(path, n, "scene and curated records cannot share a file");
        match record {
            Record::Curated(c) => {
                if open.is_some() || !scenes.is_empty() {
                    return Err(mixed());
                }
                curated.push(c);
            }
            Record::Scene(s) => {
                if !curated.is_empty() {
                    return Err(mixed());
                }
                close_scene(path, &mut scenes, &mut open, &mut pending_obs)?;
                open = Some((s, Vec::new(), n));
            }
            Record::Observation(o) => match &open {
                Some((s, _, _)) if s.subject_id == o.subject_id && pending_obs.is_none() => pending_obs = Some(o),
                Some((s, _, _)) if s.subject_id == o.subject_id => {
                    return Err(invalid(path, n, format!("second observation for scene {}", s.subject_id)))
                }
                _ => return Err(invalid(path, n, format!("observation for subject {} follows no matching scene", o.subject_id))),
            },
            Record::Prediction(p) => match &mut open {
                Some((s, preds, _)) if s.subject_id == p.subject_id => preds.push(p),
                _ => return Err(invalid(path, n, format!("prediction for subject {} follows no matching scene", p.subject_id))),
            },
        }
    }
    close_scene(path, &mut scenes, &mut open, &mut pending_obs)?;
    if !curated.is_empty() {
        Ok(Dataset::Curated(curated))
    } else {
        Ok(Dataset::Scenes(scenes))
    }
}

pub fn read_scenes(path: &Path) -> Result<Vec<SceneRecord>> {
    match read_dataset(path)? {
        Dataset::Scenes(s) => Ok(s),
        Dataset::Curated(_) => Err(invalid(path, 1, "expected scene records, found curated samples")),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Configuration(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes the resolved configuration next to a command's outputs.
pub fn write_snapshot(dir: &Path, cfg: &PipelineConfig) -> Result<PathBuf> {
    let path = dir.join("config.snapshot.toml");
    write_text(&path, &cfg.to_toml()?)?;
    Ok(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn first_index(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Eval => EVAL_FIRST_INDEX,
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.jsonl",
            Split::Eval => "eval.jsonl",
        }
    }
}

/// Generates `count` scenes of `split` into `dir`. Returns the file path.
pub fn synth_to_dir(cfg: &PipelineConfig, split: Split, count: usize, dir: &Path) -> Result<PathBuf> {
    if count == 0 {
        return Err(Error::InvalidArgument("scene count must be at least 1".into()));
    }
    ensure_dir(dir)?;
    let records = synthesize_dataset(&cfg.synth_config()?, cfg.seed, split.first_index(), count)?;
    let path = dir.join(split.file_name());
    write_scenes(&path, &records)?;
    write_snapshot(dir, cfg)?;
    Ok(path)
}

/// Curates `input` into `dir/curated.jsonl` and `dir/curation_report.json`.
pub fn curate_to_dir(cfg: &PipelineConfig, input: &Path, dir: &Path) -> Result<CurationReport> {
    let records = read_scenes(input)?;
    let tpl = cfg.synth_config()?.template()?;
    let (kept, report) = curate(&records, &tpl, &cfg.selection)?;
    ensure_dir(dir)?;
    write_curated(&dir.join("curated.jsonl"), &kept)?;
    write_json(&dir.join("curation_report.json"), &report)?;
    write_snapshot(dir, cfg)?;
    Ok(report)
}

/// The four training set-ups compared by the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// 2D keypoint terms only.
    Baseline,
    /// Fused expert labels and features of every scene, no selection.
    PseudoGt,
    /// Curated samples only.
    Selection,
    /// Curated samples with EMA teacher-student training.
    Ema,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::PseudoGt, Variant::Selection, Variant::Ema];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::PseudoGt => "pseudo_gt",
            Variant::Selection => "selection",
            Variant::Ema => "ema",
        }
    }
}

/// Training samples of `variant` built from raw scenes.
pub fn training_set(
    variant: Variant,
    records: &[SceneRecord],
    tpl: &SkeletonTemplate<f64>,
    selection: &SelectionConfig,
) -> Result<Vec<TrainSample>> {
    Ok(match variant {
        Variant::Baseline => records.iter().map(TrainSample::keypoints_only).collect(),
        Variant::PseudoGt => records.iter().filter_map(|r| TrainSample::unselected(r, tpl)).collect(),
        Variant::Selection | Variant::Ema => curate(records, tpl, selection)?
            .0
            .into_iter()
            .map(TrainSample::from)
            .collect(),
    })
}

/// Trains a freshly initialized network. Returns the run and the inference
/// network (the student under EMA).
pub fn train_samples(
    cfg: &PipelineConfig,
    samples: &[TrainSample],
    use_ema: bool,
    eval: Option<&[SceneRecord]>,
    tpl: &SkeletonTemplate<f64>,
) -> Result<(TrainRun, ModelState<f64>)> {
    let arch = cfg.architecture()?;
    let mut student = ModelState::init(arch, derive_seed(cfg.seed, INIT_STREAM, 0))?;
    let ctx = TrainContext {
        tpl,
        eval,
        master_seed: derive_seed(cfg.seed, TRAIN_STREAM, 0),
    };
    let run = if use_ema {
        let mut teacher = student.clone();
        let ema = EmaConfig {
            enabled: true,
            ..cfg.ema
        };
        train_ema(samples, &mut student, &mut teacher, &cfg.train, &ema, &cfg.augmentation, &ctx)?
    } else {
        train_distill(samples, &mut student, &cfg.train, &ctx)?
    };
    Ok((run, student))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub seed: u64,
    pub variant: Variant,
    pub train_scenes: usize,
    pub samples: usize,
    pub pa_mpjpe: f64,
}

/// Synthesizes `train_scenes` + `synth.eval_scenes` scenes for `cfg.seed`
/// and trains every requested variant on them.
pub fn run_ablation(cfg: &PipelineConfig, train_scenes: usize, variants: &[Variant]) -> Result<Vec<BenchmarkRow>> {
    let synth = cfg.synth_config()?;
    let tpl = synth.template()?;
    let train = synthesize_dataset(&synth, cfg.seed, 0, train_scenes)?;
    let eval = synthesize_dataset(&synth, cfg.seed, EVAL_FIRST_INDEX, cfg.synth.eval_scenes)?;
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let samples = training_set(variant, &train, &tpl, &cfg.selection)?;
        let (run, _) = train_samples(cfg, &samples, variant == Variant::Ema, Some(&eval), &tpl)?;
        let pa = run
            .final_metrics()
            .map(|m| m.pa_mpjpe)
            .ok_or_else(|| Error::Configuration("training ran zero epochs".into()))?;
        log::info!("seed {} {}: {} samples, PA-MPJPE {pa:.3} mm", cfg.seed, variant.name(), samples.len());
        rows.push(BenchmarkRow {
            seed: cfg.seed,
            variant,
            train_scenes,
            samples: samples.len(),
            pa_mpjpe: pa,
        });
    }
    Ok(rows)
}

/// Median; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> f64 {
    crate::eval::Summary::of(values).median
}

fn loss_columns() -> String {
    LossBreakdown::<f64>::TERM_NAMES
        .iter()
        .chain(["body", "face", "hand", "total"].iter())
        .map(|n| format!("loss_{n}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn loss_values(l: &LossBreakdown<f64>) -> String {
    l.terms()
        .iter()
        .chain([l.body, l.face, l.hand, l.total].iter())
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

const METRIC_COLUMNS: &str = "mpjpe,pelvis_mpjpe,pa_mpjpe,v2v,pa_v2v_body,pa_v2v_left_hand,pa_v2v_right_hand,pa_v2v_face,pa_p2s_median,pa_p2s_mean,pa_p2s_std";

fn metric_values(m: Option<&MetricReport>) -> String {
    match m {
        None => vec![""; METRIC_COLUMNS.split(',').count()].join(","),
        Some(m) => [
            m.mpjpe,
            m.pelvis_mpjpe,
            m.pa_mpjpe,
            m.v2v,
            m.pa_v2v.body,
            m.pa_v2v.left_hand,
            m.pa_v2v.right_hand,
            m.pa_v2v.face,
            m.pa_p2s.median,
            m.pa_p2s.mean,
            m.pa_p2s.std,
        ]
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(","),
    }
}

/// One line per epoch: loss terms, consistency and any metrics.
pub fn epochs_csv(run: &TrainRun) -> String {
    let mut out = format!("epoch,learning_rate,{},consistency,{METRIC_COLUMNS}\n", loss_columns());
    for e in &run.epochs {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.epoch,
            e.learning_rate,
            loss_values(&e.loss),
            e.consistency,
            metric_values(e.metrics.as_ref())
        );
    }
    out
}

/// Which labels a raw scene file supplies to `train`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawLabels {
    None,
    Unselected,
}

/// Trains from `input` (curated samples, or raw scenes with `raw_labels`)
/// and writes `model.bin` (+ sidecar), `train_run.json`, `epochs.csv` and
/// the config snapshot into `dir`.
pub fn train_to_dir(
    cfg: &PipelineConfig,
    input: &Path,
    raw_labels: RawLabels,
    eval_input: Option<&Path>,
    dir: &Path,
) -> Result<TrainRun> {
    let tpl = cfg.synth_config()?.template()?;
    let samples: Vec<TrainSample> = match read_dataset(input)? {
        Dataset::Curated(c) => c.into_iter().map(TrainSample::from).collect(),
        Dataset::Scenes(s) => match raw_labels {
            RawLabels::None => s.iter().map(TrainSample::keypoints_only).collect(),
            RawLabels::Unselected => s.iter().filter_map(|r| TrainSample::unselected(r, &tpl)).collect(),
        },
    };
    let eval = eval_input.map(read_scenes).transpose()?;
    let (mut run, state) = train_samples(cfg, &samples, cfg.ema.enabled, eval.as_deref(), &tpl)?;
    ensure_dir(dir)?;
    let ckpt = dir.join("model.bin");
    let hyper = serde_json::to_value(cfg).map_err(|e| Error::Configuration(e.to_string()))?;
    crate::learn::save_checkpoint(&ckpt, &state, hyper)?;
    run.checkpoints.push("model.bin".into());
    write_json(&dir.join("train_run.json"), &run)?;
    write_text(&dir.join("epochs.csv"), &epochs_csv(&run))?;
    write_snapshot(dir, cfg)?;
    Ok(run)
}

/// Scores `checkpoint` on `input`; writes `metrics.json` and `metrics.txt`.
pub fn eval_to_dir(cfg: &PipelineConfig, checkpoint: &Path, input: &Path, dir: &Path) -> Result<MetricReport> {
    let state: ModelState<f64> = crate::learn::load_checkpoint(checkpoint)?;
    let records = read_scenes(input)?;
    if records.is_empty() {
        return Err(invalid(input, 1, "evaluation set is empty"));
    }
    let tpl = cfg.synth_config()?.template()?;
    let report = evaluate(&state, &records, &tpl, &DEFAULT_F_THRESHOLDS_MM)?;
    ensure_dir(dir)?;
    write_json(&dir.join("metrics.json"), &report)?;
    write_text(&dir.join("metrics.txt"), &report.to_table())?;
    write_snapshot(dir, cfg)?;
    Ok(report)
}

/// Merges the `train_run.json` of several run directories into one CSV with
/// a leading `run` column. Runs are labelled by directory name.
pub fn report_csv(run_dirs: &[PathBuf]) -> Result<String> {
    if run_dirs.is_empty() {
        return Err(Error::InvalidArgument("report needs at least one run directory".into()));
    }
    let mut out = String::new();
    for (k, dir) in run_dirs.iter().enumerate() {
        let path = dir.join("train_run.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let run: TrainRun = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let ema = if run.ema.is_some() { "on" } else { "off" };
        let csv = epochs_csv(&run);
        let mut lines = csv.lines();
        let header = lines.next().unwrap_or_default();
        if k == 0 {
            let _ = writeln!(out, "run,ema,{header}");
        }
        for l in lines {
            let _ = writeln!(out, "{name},{ema},{l}");
        }
    }
    Ok(out)
}
