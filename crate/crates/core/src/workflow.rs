//! End-to-end training helpers shared by the command line and tests.

use serde::{Deserialize, Serialize};

use crate::classifier::augment::{augment_disease_replace, augment_eda, EdaConfig};
use crate::classifier::{train, ContextModel, EpochMetrics, ModelDims, TrainConfig, WindowEncoder};
use crate::error::Result;
use crate::features::{ContextSample, FeatureExtractor, LabeledContext, OrderTrackScope};
use crate::lexicon::Lexicon;
use crate::relation::contrastive::{contrastive_pretrain, ContrastiveConfig};
use crate::relation::finetune::{finetune, FinetuneConfig, FinetuneMetrics, RelationModel};
use crate::relation::pairs::{DiseasePair, Polarity};
use crate::relation::PairEncoder;
use crate::vocab::CharVocab;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSettings {
    pub train: TrainConfig,
    pub dims: ModelDims,
    pub d_enc: usize,
    pub radius: usize,
    pub scope: OrderTrackScope,
    pub eda: Option<EdaConfig>,
    pub replace_disease: bool,
}

impl Default for ContextSettings {
    fn default() -> Self {
        ContextSettings {
            train: TrainConfig::default(),
            dims: ModelDims::default(),
            d_enc: 32,
            radius: WindowEncoder::DEFAULT_RADIUS,
            scope: OrderTrackScope::default(),
            eda: None,
            replace_disease: false,
        }
    }
}

/// Builds samples, optionally augments them, and trains a context model on
/// a fresh reference encoder.
pub fn train_context_model(
    contexts: &[LabeledContext],
    extractor: &FeatureExtractor,
    settings: &ContextSettings,
    disease_pool: &Lexicon,
    exclusion: &Lexicon,
) -> Result<(ContextModel<WindowEncoder>, Vec<EpochMetrics>)> {
    let extractor = FeatureExtractor {
        scope: settings.scope,
        max_context: settings.train.max_context,
        max_disease: settings.train.max_disease,
        ..extractor.clone()
    };
    let base: Vec<ContextSample> = contexts.iter().map(|c| extractor.assemble_labeled(c)).collect::<Result<_>>()?;
    let mut samples = base.clone();
    for (i, s) in base.iter().enumerate() {
        let seed = settings.train.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        if let Some(eda) = &settings.eda {
            samples.extend(augment_eda(s, &extractor, eda, None, seed)?);
        }
        if settings.replace_disease {
            samples.extend(augment_disease_replace(s, disease_pool, exclusion, &extractor, seed)?);
        }
    }
    let vocab = CharVocab::build(samples.iter().map(|s| s.context.as_str()));
    let encoder = WindowEncoder::new(vocab, settings.d_enc, settings.radius, settings.train.seed);
    train(&samples, &[], &settings.train, encoder, settings.dims, settings.scope)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSettings {
    pub d_pair: usize,
    pub contrastive: ContrastiveConfig,
    pub finetune: FinetuneConfig,
}

impl Default for RelationSettings {
    fn default() -> Self {
        RelationSettings { d_pair: 32, contrastive: ContrastiveConfig::default(), finetune: FinetuneConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationHistory {
    pub contrastive: Vec<f64>,
    pub finetune: Vec<FinetuneMetrics>,
}

/// Contrastive pretraining (skipped when `pretrain` has fewer than two
/// positives or zero epochs are configured) followed by fine-tuning.
pub fn train_relation_model(labeled: &[DiseasePair], pretrain: &[DiseasePair], settings: &RelationSettings) -> Result<(RelationModel, RelationHistory)> {
    let vocab = CharVocab::build(labeled.iter().chain(pretrain).flat_map(|p| [p.a.as_str(), p.b.as_str()]));
    let mut encoder = PairEncoder::new(vocab, settings.d_pair, settings.finetune.seed);
    let mut contrastive = Vec::new();
    let positives = pretrain.iter().filter(|p| p.polarity() == Polarity::Same).count();
    if positives >= 2 && settings.contrastive.epochs > 0 {
        let (enc, hist) = contrastive_pretrain(pretrain, encoder, &settings.contrastive)?;
        encoder = enc;
        contrastive = hist;
    }
    let (model, finetune_hist) = finetune(encoder, labeled, &settings.finetune)?;
    Ok((model, RelationHistory { contrastive, finetune: finetune_hist }))
}
