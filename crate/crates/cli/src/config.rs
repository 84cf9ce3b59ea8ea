//! Flat `key = value` run configuration.
//!
//! Keys carry a section prefix (`context.epochs`, `pipeline.emit_on`).
//! Values are layered: built-in defaults, then the config file, then
//! command-line flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use misswrite_core::classifier::augment::EdaConfig;
use misswrite_core::eval::SyntheticSpec;
use misswrite_core::features::OrderTrackScope;
use misswrite_core::pipeline::{EmitOn, PipelineConfig};
use misswrite_core::relation::SiblingScope;
use misswrite_core::workflow::{ContextSettings, RelationSettings};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{origin}:{line}: expected `key = value`")]
    Syntax { origin: String, line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
}

/// Optional replacements for the built-in data files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataPaths {
    pub diseases: Option<PathBuf>,
    pub negation: Option<PathBuf>,
    pub enumerators: Option<PathBuf>,
    pub exclusion: Option<PathBuf>,
    pub icd: Option<PathBuf>,
    pub drg_groups: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub paraphrases: Option<PathBuf>,
    pub coded: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub parallelism: usize,
    pub data: DataPaths,
    pub synth: SyntheticSpec,
    pub context: ContextSettings,
    pub pairs_n_random: usize,
    pub pairs_sibling_scope: SiblingScope,
    pub relation: RelationSettings,
    pub relation_identity_pairs: bool,
    pub pipeline: PipelineConfig,
    pub drg_precision: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            parallelism: 1,
            data: DataPaths::default(),
            synth: SyntheticSpec::default(),
            context: ContextSettings::default(),
            pairs_n_random: 1000,
            pairs_sibling_scope: SiblingScope::default(),
            relation: RelationSettings::default(),
            relation_identity_pairs: true,
            pipeline: PipelineConfig::default(),
            drg_precision: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue { key: key.into(), value: value.into(), reason: e.to_string() })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::BadValue { key: key.into(), value: value.into(), reason: "expected true or false".into() }),
    }
}

fn parse_scope(key: &str, value: &str) -> Result<OrderTrackScope, ConfigError> {
    match value {
        "whole_item" => Ok(OrderTrackScope::WholeItem),
        "enumerator_only" => Ok(OrderTrackScope::EnumeratorOnly),
        _ => Err(ConfigError::BadValue { key: key.into(), value: value.into(), reason: "expected whole_item or enumerator_only".into() }),
    }
}

impl RunConfig {
    /// Sets one key. The seed key also reseeds every stage.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let path = |v: &str| Some(PathBuf::from(v));
        match key {
            "seed" => {
                self.seed = parse(key, value)?;
                self.synth.seed = self.seed;
                self.context.train.seed = self.seed;
                self.relation.contrastive.seed = self.seed;
                self.relation.finetune.seed = self.seed;
            }
            "parallelism" => {
                self.parallelism = parse(key, value)?;
                if self.parallelism == 0 {
                    return Err(ConfigError::BadValue { key: key.into(), value: value.into(), reason: "must be at least 1".into() });
                }
            }

            "data.diseases" => self.data.diseases = path(value),
            "data.negation" => self.data.negation = path(value),
            "data.enumerators" => self.data.enumerators = path(value),
            "data.exclusion" => self.data.exclusion = path(value),
            "data.icd" => self.data.icd = path(value),
            "data.drg_groups" => self.data.drg_groups = path(value),
            "data.templates" => self.data.templates = path(value),
            "data.paraphrases" => self.data.paraphrases = path(value),
            "data.coded" => self.data.coded = path(value),

            "synth.n_records" => self.synth.n_records = parse(key, value)?,
            "synth.diseases_per_record" => self.synth.diseases_per_record = parse(key, value)?,
            "synth.miss_rate" => self.synth.miss_rate = parse(key, value)?,
            "synth.negation_rate" => self.synth.negation_rate = parse(key, value)?,
            "synth.unknown_rate" => self.synth.unknown_rate = parse(key, value)?,
            "synth.enumeration_rate" => self.synth.enumeration_rate = parse(key, value)?,
            "synth.paraphrase_rate" => self.synth.paraphrase_rate = parse(key, value)?,
            "synth.revisit_rate" => self.synth.revisit_rate = parse(key, value)?,
            "synth.with_drg" => self.synth.with_drg = parse_bool(key, value)?,

            "context.batch_size" => self.context.train.batch_size = parse(key, value)?,
            "context.learning_rate" => self.context.train.learning_rate = parse(key, value)?,
            "context.epochs" => self.context.train.epochs = parse(key, value)?,
            "context.max_context" => self.context.train.max_context = parse(key, value)?,
            "context.max_disease" => self.context.train.max_disease = parse(key, value)?,
            "context.focal_gamma" => self.context.train.focal_gamma = parse(key, value)?,
            "context.d" => self.context.dims.d = parse(key, value)?,
            "context.d_f" => self.context.dims.d_f = parse(key, value)?,
            "context.d_enc" => self.context.d_enc = parse(key, value)?,
            "context.radius" => self.context.radius = parse(key, value)?,
            "context.order_track_scope" => self.context.scope = parse_scope(key, value)?,
            "context.eda" => {
                self.context.eda = if parse_bool(key, value)? { Some(self.context.eda.unwrap_or_default()) } else { None }
            }
            "context.eda.swap_rate" => self.context.eda.get_or_insert_with(EdaConfig::default).swap_rate = parse(key, value)?,
            "context.eda.delete_rate" => self.context.eda.get_or_insert_with(EdaConfig::default).delete_rate = parse(key, value)?,
            "context.eda.synonym_rate" => self.context.eda.get_or_insert_with(EdaConfig::default).synonym_rate = parse(key, value)?,
            "context.replace_disease" => self.context.replace_disease = parse_bool(key, value)?,

            "pairs.n_random" => self.pairs_n_random = parse(key, value)?,
            "pairs.sibling_scope" => self.pairs_sibling_scope = parse(key, value)?,

            "relation.d_pair" => self.relation.d_pair = parse(key, value)?,
            "relation.tau" => self.relation.contrastive.tau = parse(key, value)?,
            "relation.pretrain_learning_rate" => self.relation.contrastive.learning_rate = parse(key, value)?,
            "relation.pretrain_batch_size" => self.relation.contrastive.batch_size = parse(key, value)?,
            "relation.pretrain_epochs" => self.relation.contrastive.epochs = parse(key, value)?,
            "relation.hard_negatives" => self.relation.contrastive.hard_negatives = parse_bool(key, value)?,
            "relation.learning_rate" => self.relation.finetune.learning_rate = parse(key, value)?,
            "relation.batch_size" => self.relation.finetune.batch_size = parse(key, value)?,
            "relation.epochs" => self.relation.finetune.epochs = parse(key, value)?,
            "relation.symmetrize" => self.relation.finetune.symmetrize = parse_bool(key, value)?,
            "relation.identity_pairs" => self.relation_identity_pairs = parse_bool(key, value)?,

            "pipeline.max_context" => self.pipeline.max_context = parse(key, value)?,
            "pipeline.emit_on" => self.pipeline.emit_on = parse::<EmitOn>(key, value)?,
            "pipeline.use_context" => self.pipeline.use_context = parse_bool(key, value)?,
            "pipeline.use_relation" => self.pipeline.use_relation = parse_bool(key, value)?,

            "drg.precision" => {
                let p: f64 = parse(key, value)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(ConfigError::BadValue { key: key.into(), value: value.into(), reason: "must lie in [0, 1]".into() });
                }
                self.drg_precision = Some(p);
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`. `#` starts a comment;
    /// a `[section]` line prefixes the keys that follow it.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { origin: origin.to_string(), line: i + 1 })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { origin: origin.to_string(), line: i + 1 });
            }
            let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            self.set(&full, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// `key=value` overrides given on the command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<(), ConfigError> {
        for p in pairs {
            let p = p.as_ref();
            let (k, v) = p.split_once('=').ok_or(ConfigError::Syntax { origin: "--set".into(), line: 0 })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_published_settings() {
        let c = RunConfig::default();
        assert_eq!(c.context.train.batch_size, 64);
        assert_eq!(c.context.train.learning_rate, 5e-5);
        assert_eq!(c.context.train.max_context, 450);
        assert_eq!(c.context.train.max_disease, 30);
        assert_eq!(c.context.train.focal_gamma, 2.0);
        assert_eq!(c.relation.finetune.batch_size, 256);
        assert_eq!(c.relation.contrastive.tau, 0.05);
        assert_eq!(c.relation.contrastive.learning_rate, 1e-6);
    }

    #[test]
    fn sections_prefix_keys() {
        let mut c = RunConfig::default();
        c.apply_text("seed = 3\n[context]\nepochs = 4 # short\n\n[pipeline]\nemit_on = irrelevance_or_other\n", "t").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.context.train.seed, 3);
        assert_eq!(c.context.train.epochs, 4);
        assert_eq!(c.pipeline.emit_on, EmitOn::IrrelevanceOrOther);
        c.apply_text("relation.epochs=2", "t").unwrap();
        assert_eq!(c.relation.finetune.epochs, 2);
    }

    #[test]
    fn errors_name_the_problem() {
        let mut c = RunConfig::default();
        assert!(matches!(c.apply_text("nonsense", "f"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(c.set("context.speed", "1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(c.set("context.epochs", "many"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(c.set("parallelism", "0"), Err(ConfigError::BadValue { .. })));
    }
}
