//! Template-driven synthetic corpus with planted write-missing diagnoses.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::drg::{cc_mcc_level, DrgGroupTable};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, LabeledContext};
use crate::icd::IcdIndex;
use crate::lexicon::Lexicon;
use crate::pipeline::{LookupContextJudge, LookupRelationJudge};
use crate::recall::DiseaseMatcher;
use crate::relation::pairs::{pair_key, parse_pairs, DiseasePair, PairKey};
use crate::rng;
use crate::types::{ContextLabel, DrgAssignment, MedicalRecord, Relation, Section, Tier};

const MAX_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_records: usize,
    pub diseases_per_record: usize,
    /// Fraction of confirmed diseases left off the discharge list.
    pub miss_rate: f64,
    /// Fraction of planted diseases written as non-current.
    pub negation_rate: f64,
    /// Chance that two or more same-label diseases share one enumerated list.
    pub enumeration_rate: f64,
    pub seed: u64,
    /// Fraction of planted diseases written as unknown.
    pub unknown_rate: f64,
    /// Chance that a listed diagnosis is written as a paraphrase.
    pub paraphrase_rate: f64,
    /// Chance that a confirmed disease is mentioned a second time.
    pub revisit_rate: f64,
    pub with_drg: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_records: 100,
            diseases_per_record: 4,
            miss_rate: 0.3,
            negation_rate: 0.25,
            enumeration_rate: 0.3,
            seed: 0,
            unknown_rate: 0.15,
            paraphrase_rate: 0.5,
            revisit_rate: 0.2,
            with_drg: true,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("miss_rate", self.miss_rate),
            ("negation_rate", self.negation_rate),
            ("enumeration_rate", self.enumeration_rate),
            ("unknown_rate", self.unknown_rate),
            ("paraphrase_rate", self.paraphrase_rate),
            ("revisit_rate", self.revisit_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.negation_rate + self.unknown_rate > 1.0 {
            return Err(Error::Invalid("negation_rate + unknown_rate exceeds 1".into()));
        }
        if self.diseases_per_record == 0 {
            return Err(Error::Invalid("diseases_per_record must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Disease,
    Enum,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Template {
    text: String,
    slot: Slot,
}

/// Parsed template file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    sections: Vec<String>,
    neg: Vec<String>,
    filler: Vec<String>,
    by_label: BTreeMap<ContextLabel, Vec<Template>>,
}

fn placeholders(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(i) = rest.find('{') {
        let Some(j) = rest[i..].find('}') else {
            out.push(&rest[i..]);
            break;
        };
        out.push(&rest[i..i + j + 1]);
        rest = &rest[i + j + 1..];
    }
    out
}

impl Templates {
    pub fn parse(text: &str) -> Result<Self> {
        let mut t = Templates { sections: Vec::new(), neg: Vec::new(), filler: Vec::new(), by_label: BTreeMap::new() };
        for line in text.lines() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| Error::BadTemplate { template: line.to_string(), reason: reason.to_string() };
            let (kind, body) = line.split_once('\t').ok_or_else(|| bad("expected <kind><TAB><text>"))?;
            let body = body.trim().to_string();
            if body.is_empty() {
                return Err(bad("empty text"));
            }
            let ph = placeholders(&body);
            if let Some(p) = ph.iter().find(|p| !matches!(**p, "{DISEASE}" | "{ENUM}" | "{NEG}")) {
                return Err(bad(&format!("unknown placeholder {p}")));
            }
            match kind.trim() {
                "section" | "neg" | "filler" => {
                    if !ph.is_empty() {
                        return Err(bad("placeholders are only allowed in labelled templates"));
                    }
                    match kind.trim() {
                        "section" => t.sections.push(body),
                        "neg" => t.neg.push(body),
                        _ => t.filler.push(body),
                    }
                }
                k => {
                    let label: ContextLabel = k.parse().map_err(|_| bad(&format!("unknown kind `{k}`")))?;
                    let n_d = ph.iter().filter(|p| **p == "{DISEASE}").count();
                    let n_e = ph.iter().filter(|p| **p == "{ENUM}").count();
                    let slot = match (n_d, n_e) {
                        (1, 0) => Slot::Disease,
                        (0, 1) => Slot::Enum,
                        _ => return Err(bad("needs exactly one {DISEASE} or one {ENUM}")),
                    };
                    t.by_label.entry(label).or_default().push(Template { text: body, slot });
                }
            }
        }
        if t.sections.is_empty() {
            return Err(Error::BadTemplate { template: String::new(), reason: "no section names".into() });
        }
        for label in ContextLabel::ALL {
            if !t.by_label.get(&label).is_some_and(|v| v.iter().any(|x| x.slot == Slot::Disease)) {
                return Err(Error::BadTemplate { template: String::new(), reason: format!("no {{DISEASE}} template for {}", label.as_str()) });
            }
        }
        let uses_neg = t.by_label.values().flatten().any(|x| x.text.contains("{NEG}"));
        if uses_neg && t.neg.is_empty() {
            return Err(Error::BadTemplate { template: String::new(), reason: "{NEG} used but no neg words".into() });
        }
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn builtin() -> Result<Self> {
        Self::parse(crate::data::TEMPLATES)
    }

    fn pick(&self, label: ContextLabel, slot: Slot, r: &mut rng::Rng) -> Option<&Template> {
        let v: Vec<&Template> = self.by_label.get(&label)?.iter().filter(|t| t.slot == slot).collect();
        v.choose(r).copied()
    }
}

/// Every disease the generator planted in a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldMention {
    pub record_id: String,
    pub disease: String,
    pub label: ContextLabel,
    /// Confirmed but left off the discharge list.
    pub missed: bool,
    /// How the disease was written on the discharge list, if it was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listed_as: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub records: Vec<MedicalRecord>,
    pub mentions: Vec<GoldMention>,
}

/// Related-name pairs used for discharge paraphrases and to keep related
/// diseases out of the same record.
#[derive(Debug, Clone, Default)]
pub struct Paraphrases {
    pub pairs: Vec<DiseasePair>,
    related: HashSet<PairKey>,
    substitutes: BTreeMap<String, Vec<String>>,
}

impl Paraphrases {
    /// Similarity pairs substitute in both directions; inclusion pairs
    /// only as "written `a`, listed `b`".
    pub fn new(pairs: Vec<DiseasePair>) -> Self {
        let mut related = HashSet::new();
        let mut substitutes: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for p in &pairs {
            related.insert(p.key());
            match p.relation {
                Some(Relation::Similarity) => {
                    substitutes.entry(p.a.clone()).or_default().push(p.b.clone());
                    substitutes.entry(p.b.clone()).or_default().push(p.a.clone());
                }
                Some(Relation::Inclusion) => substitutes.entry(p.a.clone()).or_default().push(p.b.clone()),
                _ => {}
            }
        }
        Paraphrases { pairs, related, substitutes }
    }

    pub fn builtin() -> Result<Self> {
        Ok(Self::new(parse_pairs(crate::data::PARAPHRASES, Path::new("<builtin paraphrases.tsv>"))?))
    }

    pub fn are_related(&self, a: &str, b: &str) -> bool {
        self.related.contains(&pair_key(a, b))
    }

    pub fn substitutes(&self, disease: &str) -> &[String] {
        self.substitutes.get(disease).map_or(&[], Vec::as_slice)
    }

    pub fn relation(&self, a: &str, b: &str) -> Option<Relation> {
        self.pairs.iter().find(|p| p.a == a && p.b == b).and_then(|p| p.relation).or_else(|| {
            self.pairs.iter().find(|p| p.a == b && p.b == a && p.relation.is_some_and(Relation::is_symmetric)).and_then(|p| p.relation)
        })
    }
}

/// Shared inputs of the generator.
pub struct SynthResources<'a> {
    pub diseases: &'a Lexicon,
    pub templates: &'a Templates,
    pub paraphrases: &'a Paraphrases,
    pub matcher: &'a DiseaseMatcher,
    pub icd: &'a IcdIndex,
    pub drg: &'a DrgGroupTable,
}

fn compatible(a: &str, b: &str, para: &Paraphrases) -> bool {
    a != b && !a.contains(b) && !b.contains(a) && !para.are_related(a, b)
}

fn enum_list(items: &[&str], r: &mut rng::Rng) -> String {
    const CIRCLED: [char; 10] = ['①', '②', '③', '④', '⑤', '⑥', '⑦', '⑧', '⑨', '⑩'];
    let style = r.gen_range(0..4);
    let parts: Vec<String> = items
        .iter()
        .enumerate()
        .map(|(i, d)| match style {
            0 => format!("{}.{d}", i + 1),
            1 => format!("{}、{d}", i + 1),
            2 => format!("({}){d}", i + 1),
            _ => format!("{}{d}", CIRCLED[i % CIRCLED.len()]),
        })
        .collect();
    let sep = match style {
        1 => " ",
        3 => "",
        _ => "，",
    };
    parts.join(sep)
}

struct Plan {
    record: MedicalRecord,
    mentions: Vec<GoldMention>,
}

fn plan_record(id: &str, spec: &SyntheticSpec, res: &SynthResources<'_>, pool: &[&str], r: &mut rng::Rng) -> Option<Plan> {
    let t = res.templates;
    let mut chosen: Vec<&str> = Vec::new();
    let mut candidates = pool.to_vec();
    candidates.shuffle(r);
    for d in candidates {
        if chosen.len() == spec.diseases_per_record {
            break;
        }
        if chosen.iter().all(|c| compatible(c, d, res.paraphrases)) {
            chosen.push(d);
        }
    }
    if chosen.is_empty() {
        return None;
    }

    let mut labelled: Vec<(&str, ContextLabel)> = Vec::new();
    for &d in &chosen {
        let x: f64 = r.gen();
        let label = if x < spec.negation_rate {
            ContextLabel::NonCurrent
        } else if x < spec.negation_rate + spec.unknown_rate {
            ContextLabel::Unknown
        } else {
            ContextLabel::Confirmed
        };
        labelled.push((d, label));
    }

    let fill = |text: &str, disease: &str, r: &mut rng::Rng| -> String {
        let mut s = text.replace("{DISEASE}", disease).replace("{ENUM}", disease);
        while s.contains("{NEG}") {
            s = s.replacen("{NEG}", t.neg.choose(r).expect("checked at parse"), 1);
        }
        s
    };

    let mut sentences: Vec<String> = Vec::new();
    for label in ContextLabel::ALL {
        let mut group: Vec<&str> = labelled.iter().filter(|(_, l)| *l == label).map(|(d, _)| *d).collect();
        if group.len() >= 2 && r.gen_bool(spec.enumeration_rate) {
            if let Some(tpl) = t.pick(label, Slot::Enum, r) {
                let n = r.gen_range(2..=group.len().min(4));
                let items: Vec<&str> = group.drain(..n).collect();
                let list = enum_list(&items, r);
                sentences.push(fill(&tpl.text, &list, r));
            }
        }
        for d in group {
            let tpl = t.pick(label, Slot::Disease, r).expect("checked at parse");
            sentences.push(fill(&tpl.text, d, r));
            if label == ContextLabel::Confirmed && r.gen_bool(spec.revisit_rate) {
                let again = t.pick(label, Slot::Disease, r).expect("checked at parse");
                sentences.push(fill(&again.text, d, r));
            }
        }
    }
    for _ in 0..r.gen_range(1..=3) {
        if let Some(f) = t.filler.choose(r) {
            sentences.push(f.clone());
        }
    }
    sentences.shuffle(r);

    let n_sections = r.gen_range(2..=4usize).min(t.sections.len()).min(sentences.len()).max(1);
    let mut names: Vec<&String> = t.sections.choose_multiple(r, n_sections).collect();
    names.sort_by_key(|n| t.sections.iter().position(|s| s == *n));
    let mut cuts: Vec<usize> = (1..sentences.len()).collect::<Vec<_>>().choose_multiple(r, n_sections - 1).copied().collect();
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(sentences.len());
    let sections: Vec<Section> = names
        .iter()
        .zip(bounds.windows(2))
        .map(|(name, w)| Section { name: (*name).clone(), text: sentences[w[0]..w[1]].concat() })
        .collect();

    let mut discharge = Vec::new();
    let mut mentions = Vec::new();
    for &(d, label) in &labelled {
        let mut m = GoldMention { record_id: id.to_string(), disease: d.to_string(), label, missed: false, listed_as: None };
        if label == ContextLabel::Confirmed {
            if r.gen_bool(spec.miss_rate) {
                m.missed = true;
            } else {
                let subs = res.paraphrases.substitutes(d);
                let listed = if !subs.is_empty() && r.gen_bool(spec.paraphrase_rate) {
                    subs.choose(r).expect("non-empty").clone()
                } else {
                    d.to_string()
                };
                discharge.push(listed.clone());
                m.listed_as = Some(listed);
            }
        }
        mentions.push(m);
    }

    let drg = if spec.with_drg {
        let adrgs: Vec<&str> = res.drg.adrgs().into_iter().collect();
        let adrg = *adrgs.choose(r)?;
        let tier = discharge
            .iter()
            .fold(Tier::NoCc, |t, dx| t.most_severe(Tier::from_level(cc_mcc_level(dx, res.icd, None))));
        let avg_cost = res.drg.get(adrg, tier)?;
        Some(DrgAssignment { adrg: adrg.to_string(), tier, avg_cost })
    } else {
        None
    };

    let record = MedicalRecord { record_id: id.to_string(), sections, discharge_diagnoses: discharge, drg };
    Some(Plan { record, mentions })
}

/// Generates `spec.n_records` records. A record is redrawn whenever lexicon
/// recall over its text would not return exactly the planted diseases, so
/// the gold standard is consistent with recall.
pub fn gen_synthetic_corpus(spec: &SyntheticSpec, res: &SynthResources<'_>) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let pool: Vec<&str> = res.diseases.iter().collect();
    if pool.is_empty() {
        return Err(Error::EmptyLexicon);
    }
    let mut r = rng::derived(spec.seed, 101);
    let mut records = Vec::with_capacity(spec.n_records);
    let mut mentions = Vec::new();
    for i in 0..spec.n_records {
        let id = format!("rec{i:05}");
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let Some(plan) = plan_record(&id, spec, res, &pool, &mut r) else { continue };
            let recalled: BTreeSet<String> = res.matcher.find_mentions(&plan.record).into_iter().map(|m| m.disease).collect();
            let planted: BTreeSet<String> = plan.mentions.iter().map(|m| m.disease.clone()).collect();
            if recalled == planted {
                accepted = Some(plan);
                break;
            }
        }
        let plan = accepted.ok_or_else(|| Error::BadTemplate {
            template: String::new(),
            reason: format!("could not produce a recall-consistent record after {MAX_ATTEMPTS} attempts"),
        })?;
        records.push(plan.record);
        mentions.extend(plan.mentions);
    }
    Ok(SyntheticCorpus { records, mentions })
}

impl SyntheticCorpus {
    /// Gold write-missing instances `(record_id, disease)`.
    pub fn gold(&self) -> BTreeSet<(String, String)> {
        self.mentions.iter().filter(|m| m.missed).map(|m| (m.record_id.clone(), m.disease.clone())).collect()
    }

    /// Splits into the first `n` records and the rest.
    pub fn split(&self, n: usize) -> (SyntheticCorpus, SyntheticCorpus) {
        let n = n.min(self.records.len());
        let ids: HashSet<&str> = self.records[..n].iter().map(|r| r.record_id.as_str()).collect();
        let (a, b): (Vec<GoldMention>, Vec<GoldMention>) = self.mentions.iter().cloned().partition(|m| ids.contains(m.record_id.as_str()));
        (
            SyntheticCorpus { records: self.records[..n].to_vec(), mentions: a },
            SyntheticCorpus { records: self.records[n..].to_vec(), mentions: b },
        )
    }

    /// Context judge that returns the planted label.
    pub fn oracle_context_judge(&self) -> LookupContextJudge {
        LookupContextJudge { labels: self.mentions.iter().map(|m| ((m.record_id.clone(), m.disease.clone()), m.label)).collect() }
    }

    /// Relation judge that knows exactly the paraphrase table.
    pub fn oracle_relation_judge(paraphrases: &Paraphrases) -> LookupRelationJudge {
        let mut j = LookupRelationJudge::default();
        for p in &paraphrases.pairs {
            if let Some(rel) = p.relation {
                j.insert(&p.a, &p.b, rel);
            }
        }
        j
    }

    /// Labelled contexts for every recalled mention, built exactly as the
    /// pipeline builds them.
    pub fn labeled_contexts(&self, matcher: &DiseaseMatcher, max_context: usize) -> Result<Vec<LabeledContext>> {
        let labels: HashMap<(&str, &str), ContextLabel> =
            self.mentions.iter().map(|m| ((m.record_id.as_str(), m.disease.as_str()), m.label)).collect();
        let mut out = Vec::new();
        for r in &self.records {
            for m in matcher.recall(r, max_context)? {
                if let Some(&label) = labels.get(&(r.record_id.as_str(), m.disease.as_str())) {
                    out.push(LabeledContext { disease: m.disease, context: m.context, label });
                }
            }
        }
        Ok(out)
    }

    /// Annotated relation pairs seen in these records: every confirmed
    /// candidate against every listed diagnosis.
    pub fn relation_pairs(&self, paraphrases: &Paraphrases) -> Result<Vec<DiseasePair>> {
        let mut by_record: BTreeMap<&str, Vec<&GoldMention>> = BTreeMap::new();
        for m in &self.mentions {
            by_record.entry(m.record_id.as_str()).or_default().push(m);
        }
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for r in &self.records {
            let ms = by_record.get(r.record_id.as_str()).map_or(&[][..], Vec::as_slice);
            for m in ms.iter().filter(|m| m.label == ContextLabel::Confirmed) {
                for dx in &r.discharge_diagnoses {
                    let rel = if *dx == m.disease {
                        Relation::Similarity
                    } else {
                        paraphrases.relation(&m.disease, dx).unwrap_or(Relation::Irrelevance)
                    };
                    if seen.insert((m.disease.clone(), dx.clone())) {
                        out.push(DiseasePair::annotated(&m.disease, dx, rel)?);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Contexts turned into samples with the given extractor.
pub fn to_samples(contexts: &[LabeledContext], extractor: &FeatureExtractor) -> Result<Vec<crate::features::ContextSample>> {
    contexts.iter().map(|c| extractor.assemble_labeled(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_errors() {
        assert!(matches!(Templates::parse("bogus\tx"), Err(Error::BadTemplate { .. })));
        assert!(matches!(Templates::parse("section\t{DISEASE}"), Err(Error::BadTemplate { .. })));
        assert!(matches!(Templates::parse("section\ta\nconfirmed\t{X}"), Err(Error::BadTemplate { .. })));
        assert!(matches!(Templates::parse("section\ta\nconfirmed\t{DISEASE}"), Err(Error::BadTemplate { .. })));
        assert!(Templates::builtin().is_ok());
    }

    #[test]
    fn enum_lists_are_marked() {
        let ex = FeatureExtractor::with_defaults().unwrap();
        let mut r = rng::seeded(0);
        for _ in 0..20 {
            let list = enum_list(&["肺炎", "高血压", "冠心病"], &mut r);
            let bits = ex.enumerators.mark(&list, crate::features::OrderTrackScope::WholeItem);
            assert!(bits.iter().all(|&b| b == 1), "{list}");
        }
    }

    #[test]
    fn paraphrase_substitution_directions() {
        let p = Paraphrases::builtin().unwrap();
        assert!(p.substitutes("头骨骨折").contains(&"头部骨折".to_string()));
        assert!(p.substitutes("电解质紊乱").contains(&"低钾血症".to_string()));
        assert!(p.substitutes("低钾血症").is_empty());
        assert_eq!(p.relation("电解质紊乱", "低钾血症"), Some(Relation::Inclusion));
        assert_eq!(p.relation("低钾血症", "电解质紊乱"), None);
        assert_eq!(p.relation("头骨骨折", "头部骨折"), Some(Relation::Similarity));
    }
}
