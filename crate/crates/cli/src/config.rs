//! The declarative run config shared by every subcommand.

use std::path::{Path, PathBuf};

use crownscale_core::metrics::EvalMode;
use crownscale_core::synthetic::SceneConfig;
use crownscale_core::{Ratios, ViewKind};
use crownscale_nn::distill::PairingConfig;
use crownscale_nn::{Arch, BackboneRegistry, BackboneSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root of every artifact the commands write.
    pub work_dir: PathBuf,
    pub synth: SceneConfig,
    pub tile: TileSection,
    pub split: SplitSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub distill: DistillSection,
    pub evaluate: EvaluateSection,
    pub report: ReportSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            work_dir: PathBuf::from("run"),
            synth: SceneConfig::default(),
            tile: TileSection::default(),
            split: SplitSection::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            distill: DistillSection::default(),
            evaluate: EvaluateSection::default(),
            report: ReportSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterEntry {
    pub date_id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TileSection {
    /// Scene summary written by `synth`; supplies rasters, polygons and
    /// close-ups when those are not listed explicitly.
    pub scene: Option<PathBuf>,
    pub rasters: Vec<RasterEntry>,
    pub polygons: Option<PathBuf>,
    /// Overrides the CRS declared in the polygon file.
    pub crs: Option<String>,
    /// CSV with `tree_id,date_id,image_path`.
    pub close_up_listing: Option<PathBuf>,
    /// Base directory of close-up image paths; defaults to the listing's directory.
    pub close_up_dir: Option<PathBuf>,
    pub tile_size: u32,
}

impl Default for TileSection {
    fn default() -> Self {
        TileSection {
            scene: None,
            rasters: Vec::new(),
            polygons: None,
            crs: None,
            close_up_listing: None,
            close_up_dir: None,
            tile_size: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct SplitSection {
    pub ratios: Ratios,
    pub seed: u64,
    /// When set, `train` first runs k-fold cross-validation on train + val.
    pub crossval_folds: Option<usize>,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub backbone: String,
    /// Which tiles the model is trained on.
    pub view: ViewKind,
    /// Pretrained weights; defaults to `$CROWNSCALE_WEIGHTS_DIR/<backbone>.safetensors`.
    pub weights: Option<PathBuf>,
    pub init_seed: u64,
    /// Optional restatement of the backbone hyperparameters. Values given
    /// here replace the registered defaults and are then validated, so a
    /// published backbone rejects any deviation.
    pub input_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub classifier_dropout: Option<f64>,
    pub frozen_components: Option<Vec<String>>,
    /// Architecture override, for desk-scale runs of `tiny_reference`.
    pub arch: Option<Arch>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            backbone: "tiny_reference".into(),
            view: ViewKind::CrownView,
            weights: None,
            init_seed: 0,
            input_size: None,
            learning_rate: None,
            weight_decay: None,
            classifier_dropout: None,
            frozen_components: None,
            arch: None,
        }
    }
}

impl ModelSection {
    pub fn backbone_spec(&self, registry: &BackboneRegistry) -> Result<BackboneSpec> {
        let mut spec = registry
            .spec(&self.backbone)
            .map_err(|e| CliError::config("model.backbone", e))?;
        if let Some(arch) = &self.arch {
            spec = spec.with_arch(arch.clone());
        }
        if let Some(v) = self.input_size {
            spec.input_size = v;
        }
        if let Some(v) = self.learning_rate {
            spec.learning_rate = v;
        }
        if let Some(v) = self.weight_decay {
            spec.weight_decay = v;
        }
        if let Some(v) = self.classifier_dropout {
            spec.classifier_dropout = v;
        }
        if let Some(v) = &self.frozen_components {
            spec.frozen_components = v.clone();
        }
        spec.validate(registry).map_err(|e| CliError::config("model", e))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillSection {
    /// Checkpoint directory of the frozen teacher; defaults to the close-up
    /// model trained in this work directory.
    pub teacher_checkpoint: Option<PathBuf>,
    /// Weight of the cosine term; cross-entropy gets the remainder.
    pub loss_weight_distill: f64,
    pub pairing: PairingConfig,
}

impl Default for DistillSection {
    fn default() -> Self {
        DistillSection {
            teacher_checkpoint: None,
            loss_weight_distill: 0.5,
            pairing: PairingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    /// Checkpoint to evaluate; defaults to the `train` output for `model.view`.
    pub checkpoint: Option<PathBuf>,
    /// Output subdirectory under `eval/`; defaults to `model.view`.
    pub name: Option<String>,
    pub views: Vec<ViewKind>,
    pub modes: Vec<EvalMode>,
    pub batch_size: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            checkpoint: None,
            name: None,
            views: vec![ViewKind::CrownView],
            modes: EvalMode::ALL.to_vec(),
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Evaluation directories to combine; defaults to every directory under
    /// this run's `eval/`.
    pub inputs: Vec<PathBuf>,
    /// Aggregation applied to crown-view predictions in the long-tail breakdown.
    pub crown_view_mode: EvalMode,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            inputs: Vec::new(),
            crown_view_mode: EvalMode::SoftVoting,
        }
    }
}

impl RunConfig {
    /// Parses TOML, or JSON when the file ends in `.json`. Errors carry the
    /// dotted path of the offending field.
    pub fn parse(text: &str, json: bool) -> Result<Self> {
        if json {
            let de = &mut serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(de).map_err(|e| {
                let field = e.path().to_string();
                CliError::config(field, e.into_inner())
            })
        } else {
            let de = toml::de::Deserializer::parse(text).map_err(|e| CliError::config(".", e.message()))?;
            serde_path_to_error::deserialize(de).map_err(|e| {
                let field = e.path().to_string();
                CliError::config(field, e.into_inner().message())
            })
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::config("--config", format!("`{}` does not exist", path.display()))
            } else {
                CliError::io(path, e)
            }
        })?;
        let json = path.extension().is_some_and(|e| e == "json");
        let cfg = Self::parse(&text, json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Checks everything that does not touch the filesystem.
    pub fn validate(&self) -> Result<()> {
        if self.work_dir.as_os_str().is_empty() {
            return Err(CliError::config("work_dir", "must not be empty"));
        }
        self.synth.validate().map_err(|e| CliError::config("synth", e))?;
        if self.tile.tile_size < 16 {
            return Err(CliError::config("tile.tile_size", "must be at least 16"));
        }
        let mut dates = std::collections::BTreeSet::new();
        for (i, r) in self.tile.rasters.iter().enumerate() {
            if r.date_id.trim().is_empty() {
                return Err(CliError::config(format!("tile.rasters[{i}].date_id"), "must not be empty"));
            }
            if !dates.insert(&r.date_id) {
                return Err(CliError::config(format!("tile.rasters[{i}].date_id"), "listed twice"));
            }
        }
        self.split.ratios.validate().map_err(|e| CliError::config("split.ratios", e))?;
        if let Some(k) = self.split.crossval_folds {
            if k < 2 {
                return Err(CliError::config("split.crossval_folds", "must be at least 2"));
            }
        }
        self.model.backbone_spec(&BackboneRegistry::default())?;
        self.train.validate().map_err(|e| CliError::config("train", e))?;
        if !(0.0..=1.0).contains(&self.distill.loss_weight_distill) {
            return Err(CliError::config("distill.loss_weight_distill", "must lie in [0, 1]"));
        }
        if self.distill.pairing.max_pairs_per_tree == Some(0) {
            return Err(CliError::config("distill.pairing.max_pairs_per_tree", "must be at least 1"));
        }
        let ev = &self.evaluate;
        if ev.views.is_empty() {
            return Err(CliError::config("evaluate.views", "must not be empty"));
        }
        if ev.modes.is_empty() {
            return Err(CliError::config("evaluate.modes", "must not be empty"));
        }
        if let Some(name) = &ev.name {
            if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
                return Err(CliError::config("evaluate.name", "must be a plain directory name"));
            }
        }
        if ev.batch_size == 0 {
            return Err(CliError::config("evaluate.batch_size", "must be at least 1"));
        }
        for view in &ev.views {
            for mode in &ev.modes {
                if !mode.strategy().supports(*view) {
                    return Err(CliError::config(
                        "evaluate.modes",
                        format!("{mode} evaluation is not defined for the {view} view"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }
}

/// Resolves config-relative paths against the config file's directory.
#[derive(Debug, Clone)]
pub struct Paths {
    base: PathBuf,
    work: PathBuf,
}

impl Paths {
    pub fn new(config_path: &Path, cfg: &RunConfig) -> Self {
        let base = config_path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let work = if cfg.work_dir.is_absolute() {
            cfg.work_dir.clone()
        } else {
            base.join(&cfg.work_dir)
        };
        Paths { base, work }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn work(&self) -> &Path {
        &self.work
    }

    pub fn scene(&self) -> PathBuf {
        self.work.join("scene")
    }

    pub fn tiles(&self) -> PathBuf {
        self.work.join("tiles")
    }

    pub fn split(&self) -> PathBuf {
        self.work.join("split")
    }

    /// Training output for models of `view`.
    pub fn train(&self, view: ViewKind) -> PathBuf {
        self.work.join("train").join(view.as_str())
    }

    pub fn distill(&self) -> PathBuf {
        self.work.join("distill")
    }

    pub fn eval_root(&self) -> PathBuf {
        self.work.join("eval")
    }

    pub fn eval(&self, name: &str) -> PathBuf {
        self.eval_root().join(name)
    }

    pub fn report(&self) -> PathBuf {
        self.work.join("report")
    }
}
