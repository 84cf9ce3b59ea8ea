use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::score::{score, Scores};
use crate::classifier::{ContextModel, Encoder, FeatureMask};
use crate::error::Result;
use crate::features::FeatureExtractor;
use crate::pipeline::{batch_detect, ModelContextJudge, Models, PipelineConfig, RelationJudge};
use crate::recall::DiseaseMatcher;
use crate::types::MedicalRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub configuration: String,
    pub scores: Scores,
}

/// Scores the full pipeline, the pipeline without each module, and the
/// pipeline with each feature track zeroed at inference.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation<E: Encoder>(
    corpus: &[MedicalRecord],
    gold: &BTreeSet<(String, String)>,
    context: &ContextModel<E>,
    extractor: &FeatureExtractor,
    relation: &dyn RelationJudge,
    matcher: &DiseaseMatcher,
    config: &PipelineConfig,
    parallelism: usize,
) -> Result<Vec<AblationRow>> {
    let all = FeatureMask::default();
    let variants: [(&str, FeatureMask, bool, bool); 6] = [
        ("full", all, true, true),
        ("without_context", all, false, true),
        ("without_relation", all, true, false),
        ("minus_disease_position", FeatureMask { pos: false, ..all }, true, true),
        ("minus_negation", FeatureMask { neg: false, ..all }, true, true),
        ("minus_serial_number", FeatureMask { order: false, ..all }, true, true),
    ];
    let mut rows = Vec::with_capacity(variants.len());
    for (name, mask, use_context, use_relation) in variants {
        let judge = ModelContextJudge::new(context, extractor.clone()).with_mask(mask);
        let models = Models { context: Some(&judge), relation: Some(relation) };
        let cfg = PipelineConfig { use_context, use_relation, ..config.clone() };
        let report = batch_detect(corpus, &models, matcher, &cfg, parallelism)?;
        rows.push(AblationRow { configuration: name.to_string(), scores: score(&report.instances(), gold) });
    }
    Ok(rows)
}

/// `configuration,precision,recall,f1,tp,fp,fn` with a header line.
pub fn scores_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("configuration,precision,recall,f1,tp,fp,fn\n");
    for r in rows {
        let s = &r.scores;
        let _ = writeln!(out, "{},{:.6},{:.6},{:.6},{},{},{}", r.configuration, s.precision, s.recall, s.f1, s.tp, s.fp, s.fn_);
    }
    out
}
