//! Stage two: (disease, context) → {non-current, confirmed, unknown}.

pub mod augment;
pub mod encoder;
pub mod head;
pub mod io;
pub mod loss;
pub mod train;

use ndarray::Array1;

pub use encoder::{Encoder, WindowEncoder};
pub use head::{FeatureMask, GatedFusionHead, NUM_LABELS};
pub use loss::{focal_loss, focal_loss_grad_logits};
pub use train::{train, EpochMetrics, ModelDims, TrainConfig};

use crate::error::Result;
use crate::features::{ContextSample, FeatureExtractor, OrderTrackScope};
use crate::types::ContextLabel;

/// Encoder plus fusion head, with the truncation limits and order-track
/// scope the model was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextModel<E: Encoder = WindowEncoder> {
    pub encoder: E,
    pub head: GatedFusionHead,
    pub max_context: usize,
    pub max_disease: usize,
    pub scope: OrderTrackScope,
    pub seed: u64,
}

impl<E: Encoder> ContextModel<E> {
    /// Applies this model's limits and scope to a feature extractor.
    pub fn configure(&self, extractor: FeatureExtractor) -> FeatureExtractor {
        FeatureExtractor { scope: self.scope, max_context: self.max_context, max_disease: self.max_disease, ..extractor }
    }

    pub fn forward(&self, sample: &ContextSample) -> Result<Array1<f64>> {
        self.forward_masked(sample, FeatureMask::default())
    }

    pub fn forward_masked(&self, sample: &ContextSample, mask: FeatureMask) -> Result<Array1<f64>> {
        let h1 = self.encoder.encode(&sample.context);
        Ok(self.head.forward_trace(h1.view(), sample, mask)?.probs)
    }

    /// The same model with the fusion branch bypassed.
    pub fn forward_encoder_only(&self, sample: &ContextSample) -> Array1<f64> {
        self.head.forward_encoder_only(self.encoder.encode(&sample.context).view())
    }

    pub fn predict(&self, sample: &ContextSample) -> Result<(ContextLabel, f64)> {
        self.predict_masked(sample, FeatureMask::default())
    }

    pub fn predict_masked(&self, sample: &ContextSample, mask: FeatureMask) -> Result<(ContextLabel, f64)> {
        Ok(argmax_label(&self.forward_masked(sample, mask)?))
    }

    /// Mean focal loss over `samples` and its gradients (head, encoder).
    pub fn loss_and_grad(&self, samples: &[&ContextSample], gamma: f64, mask: FeatureMask) -> Result<(f64, GatedFusionHead, Vec<f64>)> {
        let mut g_head = self.head.zeros_like();
        let mut g_enc = vec![0.0; self.encoder.params().len()];
        let mut total = 0.0;
        for s in samples {
            let label = s.label.ok_or_else(|| crate::Error::Invalid("training sample without label".into()))?.index();
            let h1 = self.encoder.encode(&s.context);
            let trace = self.head.forward_trace(h1.view(), s, mask)?;
            total += focal_loss(&trace.probs, label, gamma)?;
            let dlogits = focal_loss_grad_logits(&trace.probs, label, gamma);
            let dh1 = self.head.backward(&trace, s, mask, &dlogits, &mut g_head);
            self.encoder.backward(&s.context, dh1.view(), &mut g_enc);
        }
        let n = samples.len().max(1) as f64;
        for t in g_head.tensors_mut() {
            t.iter_mut().for_each(|x| *x /= n);
        }
        g_enc.iter_mut().for_each(|x| *x /= n);
        Ok((total / n, g_head, g_enc))
    }

    pub fn mean_loss(&self, samples: &[ContextSample], gamma: f64) -> Result<f64> {
        let mut total = 0.0;
        for s in samples {
            let label = s.label.ok_or_else(|| crate::Error::Invalid("sample without label".into()))?.index();
            total += focal_loss(&self.forward(s)?, label, gamma)?;
        }
        Ok(total / samples.len().max(1) as f64)
    }

    pub fn accuracy(&self, samples: &[ContextSample]) -> Result<f64> {
        let mut hit = 0usize;
        for s in samples {
            if Some(self.predict(s)?.0) == s.label {
                hit += 1;
            }
        }
        Ok(hit as f64 / samples.len().max(1) as f64)
    }
}

pub(crate) fn argmax_label(probs: &Array1<f64>) -> (ContextLabel, f64) {
    let mut best = 0;
    for i in 1..probs.len() {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    (ContextLabel::from_index(best), probs[best])
}
