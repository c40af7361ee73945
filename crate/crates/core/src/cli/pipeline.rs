//! Dataset loading, training and evaluation shared by the `train` and
//! `eval` commands.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assembly::DesignSpace;
use crate::datastore::{case_dir, read_bundle, CaseBundle, CaseStatus};
use crate::evalstats::{case_metrics, CaseMetrics, ModelMetrics};
use crate::surrogate::{
    displacement_rms, sample_from_bundle, tau_median, train, vocabulary_from_bundle, ComponentTable, CrashSolverConfig,
    FeatureStats, LearningSample, Mat, PartVocabulary, SurrogateModel, TrainHistory, TrainSchedule,
};

use super::CliError;

/// Model and optimizer settings read from JSON. `config` holds overrides
/// applied on top of the preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    /// `tiny` or `full`.
    pub preset: String,
    pub config: serde_json::Map<String, serde_json::Value>,
    pub schedule: TrainSchedule,
    /// Initialization seed.
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            preset: "tiny".into(),
            config: serde_json::Map::new(),
            schedule: TrainSchedule { epochs: 150, learning_rate: 3e-3, ..TrainSchedule::default() },
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn model_config(&self, frames: usize, components: usize, parts: usize, design_dim: usize) -> Result<CrashSolverConfig, CliError> {
        let base = match self.preset.as_str() {
            "tiny" => CrashSolverConfig::tiny(frames, components, parts, design_dim),
            "full" => CrashSolverConfig::full(frames, components, parts, design_dim),
            other => return Err(CliError::Usage(format!("unknown model preset {other:?} (tiny, full)"))),
        };
        let mut v = serde_json::to_value(base).expect("config serializes");
        for (k, val) in &self.config {
            let obj = v.as_object_mut().expect("config is an object");
            if !obj.contains_key(k) {
                return Err(CliError::Usage(format!("unknown model field {k:?}")));
            }
            obj.insert(k.clone(), val.clone());
        }
        serde_json::from_value(v).map_err(|e| CliError::Usage(format!("model config: {e}")))
    }
}

/// Everything needed besides the weights to featurize new cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub vocabulary: PartVocabulary,
    pub components: ComponentTable,
    pub space: DesignSpace,
    pub dt_anim_ms: f64,
    pub train_cases: Vec<String>,
    pub best_epoch: usize,
}

pub fn load_bundles(root: &Path, ids: &[String]) -> Result<Vec<CaseBundle>, CliError> {
    ids.iter()
        .map(|id| read_bundle(&case_dir(root, id, CaseStatus::Passed)).map_err(CliError::from))
        .collect()
}

pub fn to_samples(bundles: &[CaseBundle], meta: &CheckpointMeta) -> Result<Vec<LearningSample>, CliError> {
    bundles
        .iter()
        .map(|b| sample_from_bundle(b, &meta.space, &meta.components, &meta.vocabulary).map_err(CliError::from))
        .collect()
}

pub struct Trained {
    pub model: SurrogateModel,
    pub history: TrainHistory,
    pub meta: CheckpointMeta,
}

/// Trains on `train_ids`, selecting the best epoch on `val_ids`.
pub fn train_surrogate(
    root: &Path,
    train_ids: &[String],
    val_ids: &[String],
    space: &DesignSpace,
    spec: &ModelSpec,
) -> Result<Trained, CliError> {
    if train_ids.is_empty() {
        return Err(CliError::Empty("training split is empty".into()));
    }
    let train_b = load_bundles(root, train_ids)?;
    let val_b = load_bundles(root, val_ids)?;
    let (vocabulary, components) = vocabulary_from_bundle(&train_b[0])?;
    let meta = CheckpointMeta {
        vocabulary,
        components,
        space: space.clone(),
        dt_anim_ms: train_b[0].fields.dt_anim,
        train_cases: train_ids.to_vec(),
        best_epoch: 0,
    };
    let train_s = to_samples(&train_b, &meta)?;
    let val_s = to_samples(&val_b, &meta)?;
    let frames = train_s[0].n_frames();
    if let Some(bad) = train_s.iter().chain(&val_s).find(|s| s.n_frames() != frames) {
        return Err(CliError::Failed(format!("case {} has {} frames, expected {frames}", bad.case_id, bad.n_frames())));
    }
    let cfg = spec.model_config(frames, meta.components.len(), meta.vocabulary.part_ids.len(), space.dim())?;
    let stats = FeatureStats { tau_median: tau_median(&train_s), output_scale: displacement_rms(&train_s).max(1e-12) };
    let mut model = SurrogateModel::new(cfg, stats, spec.seed)?;
    let history = train(&mut model, &train_s, &val_s, &spec.schedule)?;
    let meta = CheckpointMeta { best_epoch: history.best_epoch, ..meta };
    Ok(Trained { model, history, meta })
}

/// A model under evaluation; `Zero` predicts no displacement.
pub enum Predictor {
    Surrogate(Box<SurrogateModel>, CheckpointMeta),
    Zero,
}

impl Predictor {
    fn predict(&self, bundle: &CaseBundle) -> Result<(Vec<Mat>, Vec<Mat>, Mat), CliError> {
        let f = &bundle.fields;
        let n = f.n_nodes();
        let target: Vec<Mat> = f.frames[1..]
            .iter()
            .map(|fr| Mat::from_vec(n, 3, fr.u.iter().flat_map(|u| u.iter().copied()).collect()))
            .collect();
        let x0 = Mat::from_vec(n, 3, f.x0.iter().flat_map(|x| x.iter().copied()).collect());
        let pred = match self {
            Predictor::Zero => target.iter().map(|_| Mat::zeros(n, 3)).collect(),
            Predictor::Surrogate(model, meta) => {
                let s = sample_from_bundle(bundle, &meta.space, &meta.components, &meta.vocabulary)?;
                model.forward(&s)?
            }
        };
        Ok((pred, target, x0))
    }
}

/// Per-case metrics of one predictor over `bundles`, in the given order.
pub fn evaluate(name: &str, predictor: &Predictor, bundles: &[CaseBundle], probe_ms: Option<f64>) -> Result<ModelMetrics, CliError> {
    let mut cases = Vec::with_capacity(bundles.len());
    for b in bundles {
        let (pred, target, x0) = predictor.predict(b)?;
        let dt = b.fields.dt_anim;
        let probe = probe_ms.unwrap_or_else(|| mid_probe(target.len(), dt));
        let m: CaseMetrics = case_metrics(&pred, &target, &x0, dt, probe)?;
        cases.push((b.manifest.case_id.clone(), m));
    }
    Ok(ModelMetrics { model: name.to_string(), cases })
}

/// Time of the middle target frame.
pub fn mid_probe(frames: usize, dt_anim: f64) -> f64 {
    frames.div_ceil(2).max(1) as f64 * dt_anim
}
