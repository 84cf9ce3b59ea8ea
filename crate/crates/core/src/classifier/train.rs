use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::encoder::Encoder;
use super::head::{FeatureMask, GatedFusionHead};
use super::ContextModel;
use crate::error::{Error, Result};
use crate::features::{ContextSample, OrderTrackScope, DEFAULT_MAX_DISEASE};
use crate::recall::DEFAULT_MAX_CONTEXT;
use crate::rng;
use crate::types::ContextLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_context: usize,
    pub max_disease: usize,
    pub focal_gamma: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 5e-5,
            max_context: DEFAULT_MAX_CONTEXT,
            max_disease: DEFAULT_MAX_DISEASE,
            focal_gamma: 2.0,
            epochs: 10,
            seed: 0,
        }
    }
}

/// Head widths; `d_f` is the feature-embedding width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d: usize,
    pub d_f: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims { d: 32, d_f: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean focal loss over the whole training set after the epoch.
    pub train_loss: f64,
    pub dev_accuracy: Option<f64>,
}

/// Mini-batch SGD on the mean focal loss, updating head and encoder.
/// Every class must appear in `samples`.
pub fn train<E: Encoder>(
    samples: &[ContextSample],
    dev: &[ContextSample],
    config: &TrainConfig,
    encoder: E,
    dims: ModelDims,
    scope: OrderTrackScope,
) -> Result<(ContextModel<E>, Vec<EpochMetrics>)> {
    for label in ContextLabel::ALL {
        if !samples.iter().any(|s| s.label == Some(label)) {
            return Err(Error::DegenerateData(format!("no training sample labelled {}", label.as_str())));
        }
    }
    if samples.iter().any(|s| s.label.is_none()) {
        return Err(Error::Invalid("training sample without label".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Invalid("batch_size must be positive".into()));
    }
    let head = GatedFusionHead::new(encoder.dim(), dims.d, dims.d_f, config.seed);
    let mut model = ContextModel {
        encoder,
        head,
        max_context: config.max_context,
        max_disease: config.max_disease,
        scope,
        seed: config.seed,
    };

    let mut r = rng::derived(config.seed, 41);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut r);
        for batch in order.chunks(config.batch_size) {
            let refs: Vec<&ContextSample> = batch.iter().map(|&i| &samples[i]).collect();
            let (_, g_head, g_enc) = model.loss_and_grad(&refs, config.focal_gamma, FeatureMask::default())?;
            for (p, g) in model.head.tensors_mut().into_iter().zip(g_head.tensors()) {
                p.iter_mut().zip(g).for_each(|(p, g)| *p -= config.learning_rate * g);
            }
            model.encoder.params_mut().iter_mut().zip(&g_enc).for_each(|(p, g)| *p -= config.learning_rate * g);
        }
        let train_loss = model.mean_loss(samples, config.focal_gamma)?;
        let dev_accuracy = if dev.is_empty() { None } else { Some(model.accuracy(dev)?) };
        history.push(EpochMetrics { epoch: epoch + 1, train_loss, dev_accuracy });
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::WindowEncoder;
    use crate::features::FeatureExtractor;
    use crate::vocab::CharVocab;

    fn toy() -> Vec<ContextSample> {
        let ex = FeatureExtractor::with_defaults().unwrap();
        let mut out = Vec::new();
        for (ctx, label) in [
            ("确诊为肺炎。", ContextLabel::Confirmed),
            ("否认肺炎病史。", ContextLabel::NonCurrent),
            ("肺炎待查。", ContextLabel::Unknown),
        ] {
            out.push(ex.assemble("肺炎", ctx, Some(label)).unwrap());
        }
        out
    }

    #[test]
    fn missing_class_is_degenerate() {
        let s = toy();
        let enc = WindowEncoder::new(CharVocab::build(s.iter().map(|x| x.context.as_str())), 8, 2, 0);
        let err = train(&s[..2], &[], &TrainConfig::default(), enc, ModelDims { d: 8, d_f: 8 }, OrderTrackScope::WholeItem);
        assert!(matches!(err, Err(Error::DegenerateData(_))));
    }

    #[test]
    fn defaults_match_published_settings() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.max_context, c.max_disease), (64, 450, 30));
        assert_eq!(c.learning_rate, 5e-5);
        assert_eq!(c.focal_gamma, 2.0);
    }

    #[test]
    fn memorizes_three_samples() {
        let s = toy();
        let enc = WindowEncoder::new(CharVocab::build(s.iter().map(|x| x.context.as_str())), 8, 2, 0);
        let cfg = TrainConfig { learning_rate: 0.5, epochs: 200, batch_size: 3, ..TrainConfig::default() };
        let (m, hist) = train(&s, &s, &cfg, enc, ModelDims { d: 8, d_f: 8 }, OrderTrackScope::WholeItem).unwrap();
        assert!(hist.last().unwrap().train_loss < hist[0].train_loss);
        assert_eq!(m.accuracy(&s).unwrap(), 1.0);
    }
}
