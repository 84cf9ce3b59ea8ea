//! The three stages composed: recall, context judgment, relation check.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{ContextModel, Encoder, FeatureMask};
use crate::corpus::LineError;
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::normalize::normalize_disease_name;
use crate::recall::{DiseaseMatcher, DiseaseMention, Span, DEFAULT_MAX_CONTEXT};
use crate::relation::RelationModel;
use crate::types::{ContextLabel, MedicalRecord, Relation};

/// Decides whether a recalled disease is confirmed in its context.
pub trait ContextJudge: Send + Sync {
    fn judge(&self, record: &MedicalRecord, mention: &DiseaseMention) -> Result<(ContextLabel, f64)>;
}

/// Compares a candidate disease with one discharge diagnosis.
pub trait RelationJudge: Send + Sync {
    fn compare(&self, candidate: &str, diagnosis: &str) -> (Relation, f64);
}

/// A trained context model with the extractor that builds its inputs.
pub struct ModelContextJudge<'a, E: Encoder> {
    pub model: &'a ContextModel<E>,
    pub extractor: FeatureExtractor,
    pub mask: FeatureMask,
}

impl<'a, E: Encoder> ModelContextJudge<'a, E> {
    pub fn new(model: &'a ContextModel<E>, extractor: FeatureExtractor) -> Self {
        let extractor = model.configure(extractor);
        ModelContextJudge { model, extractor, mask: FeatureMask::default() }
    }

    pub fn with_mask(mut self, mask: FeatureMask) -> Self {
        self.mask = mask;
        self
    }
}

impl<E: Encoder> ContextJudge for ModelContextJudge<'_, E> {
    fn judge(&self, _record: &MedicalRecord, mention: &DiseaseMention) -> Result<(ContextLabel, f64)> {
        let sample = self.extractor.assemble(&mention.disease, &mention.context, None)?;
        self.model.predict_masked(&sample, self.mask)
    }
}

impl RelationJudge for RelationModel {
    fn compare(&self, candidate: &str, diagnosis: &str) -> (Relation, f64) {
        self.predict_relation(candidate, diagnosis)
    }
}

/// Context labels looked up by `(record_id, disease)`; anything missing is
/// `Unknown`.
#[derive(Debug, Clone, Default)]
pub struct LookupContextJudge {
    pub labels: HashMap<(String, String), ContextLabel>,
}

impl ContextJudge for LookupContextJudge {
    fn judge(&self, record: &MedicalRecord, mention: &DiseaseMention) -> Result<(ContextLabel, f64)> {
        let key = (record.record_id.clone(), mention.disease.clone());
        Ok((self.labels.get(&key).copied().unwrap_or(ContextLabel::Unknown), 1.0))
    }
}

/// Relations looked up from a pair table; equal names are `Similarity`,
/// unknown pairs `Irrelevance`.
#[derive(Debug, Clone, Default)]
pub struct LookupRelationJudge {
    pub relations: HashMap<(String, String), Relation>,
}

impl LookupRelationJudge {
    pub fn insert(&mut self, a: &str, b: &str, rel: Relation) {
        self.relations.insert((a.to_string(), b.to_string()), rel);
        if rel.is_symmetric() {
            self.relations.insert((b.to_string(), a.to_string()), rel);
        }
    }
}

impl RelationJudge for LookupRelationJudge {
    fn compare(&self, candidate: &str, diagnosis: &str) -> (Relation, f64) {
        if candidate == diagnosis {
            return (Relation::Similarity, 1.0);
        }
        let rel = self.relations.get(&(candidate.to_string(), diagnosis.to_string())).copied().unwrap_or(Relation::Irrelevance);
        (rel, 1.0)
    }
}

/// Which relations let a candidate through.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmitOn {
    #[default]
    IrrelevanceOnly,
    IrrelevanceOrOther,
}

impl EmitOn {
    pub fn allows(self, r: Relation) -> bool {
        match self {
            EmitOn::IrrelevanceOnly => r == Relation::Irrelevance,
            EmitOn::IrrelevanceOrOther => matches!(r, Relation::Irrelevance | Relation::Other),
        }
    }
}

impl FromStr for EmitOn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "irrelevance_only" => Ok(EmitOn::IrrelevanceOnly),
            "irrelevance_or_other" => Ok(EmitOn::IrrelevanceOrOther),
            other => Err(Error::Invalid(format!("unknown emit_on `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub max_context: usize,
    pub emit_on: EmitOn,
    /// When false every recalled candidate is treated as confirmed.
    pub use_context: bool,
    /// When false only exact normalized matches count as covered.
    pub use_relation: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { max_context: DEFAULT_MAX_CONTEXT, emit_on: EmitOn::default(), use_context: true, use_relation: true }
    }
}

#[derive(Clone, Copy, Default)]
pub struct Models<'a> {
    pub context: Option<&'a dyn ContextJudge>,
    pub relation: Option<&'a dyn RelationJudge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationVerdict {
    pub dx: String,
    pub relation: Relation,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WriteMissingFinding {
    pub disease: String,
    pub evidence_spans: Vec<Span>,
    pub context_label_prob: f64,
    pub relation_to_each_discharge_dx: Vec<RelationVerdict>,
}

/// Findings for one record plus the context label assigned to every
/// candidate that reached the context stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub findings: Vec<WriteMissingFinding>,
    pub labels: Vec<ContextLabel>,
}

fn check_models(models: &Models<'_>, config: &PipelineConfig) -> Result<()> {
    if config.use_context && models.context.is_none() {
        return Err(Error::ModelNotLoaded("context"));
    }
    if config.use_relation && models.relation.is_none() {
        return Err(Error::ModelNotLoaded("relation"));
    }
    Ok(())
}

pub fn detect(record: &MedicalRecord, models: &Models<'_>, matcher: &DiseaseMatcher, config: &PipelineConfig) -> Result<Detection> {
    check_models(models, config)?;
    let mut dxs: Vec<String> = Vec::new();
    for d in &record.discharge_diagnoses {
        if let Ok(n) = normalize_disease_name(d) {
            if !dxs.contains(&n) {
                dxs.push(n);
            }
        }
    }
    let covered: HashSet<&str> = dxs.iter().map(String::as_str).collect();

    let mut findings = Vec::new();
    let mut labels = Vec::new();
    for mention in matcher.recall(record, config.max_context)? {
        if covered.contains(mention.disease.as_str()) {
            continue;
        }
        let prob = match (config.use_context, models.context) {
            (true, Some(judge)) => {
                let (label, p) = judge.judge(record, &mention)?;
                labels.push(label);
                if label != ContextLabel::Confirmed {
                    continue;
                }
                p
            }
            _ => 1.0,
        };
        let verdicts: Vec<RelationVerdict> = match (config.use_relation, models.relation) {
            (true, Some(judge)) => dxs
                .iter()
                .map(|dx| {
                    let (relation, probability) = judge.compare(&mention.disease, dx);
                    RelationVerdict { dx: dx.clone(), relation, probability }
                })
                .collect(),
            _ => dxs.iter().map(|dx| RelationVerdict { dx: dx.clone(), relation: Relation::Irrelevance, probability: 1.0 }).collect(),
        };
        if verdicts.iter().all(|v| config.emit_on.allows(v.relation)) {
            findings.push(WriteMissingFinding {
                disease: mention.disease,
                evidence_spans: mention.spans,
                context_label_prob: prob,
                relation_to_each_discharge_dx: verdicts,
            });
        }
    }
    findings.sort_by(|a, b| a.evidence_spans[0].cmp(&b.evidence_spans[0]).then_with(|| a.disease.cmp(&b.disease)));
    Ok(Detection { findings, labels })
}

/// Write-missing findings for one record, ordered by first evidence span.
pub fn detect_write_missing(
    record: &MedicalRecord,
    models: &Models<'_>,
    matcher: &DiseaseMatcher,
    config: &PipelineConfig,
) -> Result<Vec<WriteMissingFinding>> {
    Ok(detect(record, models, matcher, config)?.findings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFindings {
    pub record_id: String,
    pub findings: Vec<WriteMissingFinding>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportError {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub records: usize,
    pub findings: usize,
    pub failed: usize,
    /// Findings with at least one evidence span in each section name.
    pub findings_per_section: BTreeMap<String, usize>,
    /// Context labels assigned to candidates.
    pub candidates_per_label: BTreeMap<String, usize>,
    pub errors: Vec<ReportError>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub records: Vec<RecordFindings>,
    pub summary: Summary,
}

impl BatchReport {
    /// Adds corpus lines that failed to load.
    pub fn add_load_errors(&mut self, errors: &[LineError]) {
        for e in errors {
            self.summary.errors.push(ReportError { record_id: None, line: Some(e.line), message: e.message.clone() });
        }
        self.summary.failed += errors.len();
    }

    pub fn has_errors(&self) -> bool {
        !self.summary.errors.is_empty()
    }

    pub fn findings_for(&self, record_id: &str) -> Option<&[WriteMissingFinding]> {
        self.records.iter().find(|r| r.record_id == record_id).map(|r| r.findings.as_slice())
    }

    /// `(record_id, disease)` for every finding.
    pub fn instances(&self) -> BTreeSet<(String, String)> {
        self.records
            .iter()
            .flat_map(|r| r.findings.iter().map(|f| (r.record_id.clone(), f.disease.clone())))
            .collect()
    }

    /// One `{record_id, findings}` line per record, then `{"summary": ...}`.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&serde_json::json!({ "summary": self.summary }))?);
        out.push('\n');
        Ok(out)
    }
}

/// Runs detection over a corpus on `parallelism` worker threads. Output is
/// ordered by record id and does not depend on the thread count.
pub fn batch_detect(
    corpus: &[MedicalRecord],
    models: &Models<'_>,
    matcher: &DiseaseMatcher,
    config: &PipelineConfig,
    parallelism: usize,
) -> Result<BatchReport> {
    check_models(models, config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let results: Vec<(&MedicalRecord, Result<Detection>)> =
        pool.install(|| corpus.par_iter().map(|r| (r, detect(r, models, matcher, config))).collect());

    let mut report = BatchReport::default();
    let mut rows: Vec<(&MedicalRecord, Result<Detection>)> = results;
    rows.sort_by(|a, b| a.0.record_id.cmp(&b.0.record_id));
    for (record, outcome) in rows {
        match outcome {
            Ok(det) => {
                for label in det.labels {
                    *report.summary.candidates_per_label.entry(label.as_str().to_string()).or_default() += 1;
                }
                for f in &det.findings {
                    let sections: BTreeSet<&str> = f.evidence_spans.iter().map(|s| record.sections[s.section].name.as_str()).collect();
                    for s in sections {
                        *report.summary.findings_per_section.entry(s.to_string()).or_default() += 1;
                    }
                }
                report.summary.records += 1;
                report.summary.findings += det.findings.len();
                report.records.push(RecordFindings { record_id: record.record_id.clone(), findings: det.findings });
            }
            Err(e) => {
                report.summary.failed += 1;
                report.summary.errors.push(ReportError { record_id: Some(record.record_id.clone()), line: None, message: e.to_string() });
            }
        }
    }
    Ok(report)
}

/// Reads the per-record lines of a findings file written by
/// [`BatchReport::to_jsonl`]; the trailing summary line is skipped.
pub fn read_findings(path: impl AsRef<Path>) -> Result<Vec<RecordFindings>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e))?;
        if value.get("summary").is_some() {
            continue;
        }
        out.push(serde_json::from_value(value).map_err(|e| Error::parse(path, i + 1, e))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{Lexicon, LexiconKind};
    use crate::types::Section;

    fn matcher() -> DiseaseMatcher {
        DiseaseMatcher::new(&Lexicon::from_entries(LexiconKind::DiseaseNames, ["肺炎", "高血压", "糖尿病"]).unwrap()).unwrap()
    }

    fn record(id: &str, text: &str, dx: &[&str]) -> MedicalRecord {
        MedicalRecord {
            record_id: id.into(),
            sections: vec![Section { name: "现病史".into(), text: text.into() }],
            discharge_diagnoses: dx.iter().map(|s| s.to_string()).collect(),
            drg: None,
        }
    }

    fn oracle(rec: &MedicalRecord, confirmed: &[&str]) -> LookupContextJudge {
        let mut j = LookupContextJudge::default();
        for d in confirmed {
            j.labels.insert((rec.record_id.clone(), d.to_string()), ContextLabel::Confirmed);
        }
        j
    }

    #[test]
    fn emits_confirmed_missing_disease() {
        let rec = record("r1", "否认糖尿病。确诊为肺炎。有高血压。", &["高血压"]);
        let ctx = oracle(&rec, &["肺炎", "高血压"]);
        let rel = LookupRelationJudge::default();
        let models = Models { context: Some(&ctx), relation: Some(&rel) };
        let f = detect_write_missing(&rec, &models, &matcher(), &PipelineConfig::default()).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].disease, "肺炎");
        assert_eq!(f[0].evidence_spans, vec![Span { section: 0, start: 9, end: 11 }]);
        assert_eq!(f[0].relation_to_each_discharge_dx[0].relation, Relation::Irrelevance);
    }

    #[test]
    fn related_diagnosis_suppresses() {
        let rec = record("r1", "确诊为肺炎。", &["肺部感染"]);
        let ctx = oracle(&rec, &["肺炎"]);
        let mut rel = LookupRelationJudge::default();
        rel.insert("肺炎", "肺部感染", Relation::Similarity);
        let models = Models { context: Some(&ctx), relation: Some(&rel) };
        assert!(detect_write_missing(&rec, &models, &matcher(), &PipelineConfig::default()).unwrap().is_empty());
        let no_rel = PipelineConfig { use_relation: false, ..PipelineConfig::default() };
        assert_eq!(detect_write_missing(&rec, &models, &matcher(), &no_rel).unwrap().len(), 1);
    }

    #[test]
    fn missing_model_is_reported() {
        let rec = record("r1", "确诊为肺炎。", &[]);
        let err = detect_write_missing(&rec, &Models::default(), &matcher(), &PipelineConfig::default());
        assert!(matches!(err, Err(Error::ModelNotLoaded("context"))));
        let cfg = PipelineConfig { use_context: false, use_relation: false, ..PipelineConfig::default() };
        assert_eq!(detect_write_missing(&rec, &Models::default(), &matcher(), &cfg).unwrap().len(), 1);
    }

    #[test]
    fn batch_is_sorted_and_summarized() {
        let recs = vec![record("b", "确诊为肺炎。", &[]), record("a", "确诊为糖尿病。", &["糖尿病"])];
        let cfg = PipelineConfig { use_context: false, use_relation: false, ..PipelineConfig::default() };
        let report = batch_detect(&recs, &Models::default(), &matcher(), &cfg, 4).unwrap();
        assert_eq!(report.records.iter().map(|r| r.record_id.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(report.summary.findings, 1);
        assert_eq!(report.summary.findings_per_section["现病史"], 1);
        let text = report.to_jsonl().unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().last().unwrap().starts_with("{\"summary\""));
        let empty = batch_detect(&[], &Models::default(), &matcher(), &cfg, 2).unwrap();
        assert!(empty.records.is_empty() && empty.summary.records == 0);
    }

    #[test]
    fn findings_file_reads_back() {
        let recs = vec![record("a", "确诊为肺炎。", &[])];
        let cfg = PipelineConfig { use_context: false, use_relation: false, ..PipelineConfig::default() };
        let report = batch_detect(&recs, &Models::default(), &matcher(), &cfg, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jsonl");
        std::fs::write(&path, report.to_jsonl().unwrap()).unwrap();
        assert_eq!(read_findings(&path).unwrap(), report.records);
        std::fs::write(&path, "{\"record_id\": 3}\n").unwrap();
        assert!(matches!(read_findings(&path), Err(Error::Parse { line: 1, .. })));
    }
}
