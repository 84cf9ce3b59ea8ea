//! Disease-name pairs: pretraining pair generators and the pair file format.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::icd::{IcdCode, IcdEntry, IcdIndex};
use crate::normalize::normalize_disease_name;
use crate::rng;
use crate::types::{MedicalRecord, Relation};

pub const DEFAULT_MAX_NAME: usize = 50;

/// Above this many codes random negatives are drawn by rejection instead of
/// enumerating the whole pair space.
const ENUMERATE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    CodingPair,
    SameList,
    IcdSibling,
    RandomNeg,
    BackTranslation,
    Annotated,
}

impl PairSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PairSource::CodingPair => "coding_pair",
            PairSource::SameList => "same_list",
            PairSource::IcdSibling => "icd_sibling",
            PairSource::RandomNeg => "random_neg",
            PairSource::BackTranslation => "back_translation",
            PairSource::Annotated => "annotated",
        }
    }
}

impl fmt::Display for PairSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "coding_pair" => PairSource::CodingPair,
            "same_list" => PairSource::SameList,
            "icd_sibling" => PairSource::IcdSibling,
            "random_neg" => PairSource::RandomNeg,
            "back_translation" => PairSource::BackTranslation,
            "annotated" => PairSource::Annotated,
            other => return Err(Error::Invalid(format!("unknown pair source `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Same,
    Dissimilar,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiseasePair {
    pub a: String,
    pub b: String,
    pub relation: Option<Relation>,
    pub source: PairSource,
}

/// Order-free identity of a pair.
pub type PairKey = (String, String);

fn truncate(s: String) -> String {
    if s.chars().count() <= DEFAULT_MAX_NAME {
        s
    } else {
        s.chars().take(DEFAULT_MAX_NAME).collect()
    }
}

impl DiseasePair {
    /// Normalizes both names and truncates them to 50 characters.
    pub fn new(a: &str, b: &str, relation: Option<Relation>, source: PairSource) -> Result<Self> {
        Ok(DiseasePair {
            a: truncate(normalize_disease_name(a)?),
            b: truncate(normalize_disease_name(b)?),
            relation,
            source,
        })
    }

    pub fn annotated(a: &str, b: &str, relation: Relation) -> Result<Self> {
        Self::new(a, b, Some(relation), PairSource::Annotated)
    }

    /// Binary pretraining polarity. Annotated pairs are `Same` only for
    /// similarity.
    pub fn polarity(&self) -> Polarity {
        match self.source {
            PairSource::CodingPair | PairSource::BackTranslation => Polarity::Same,
            PairSource::SameList | PairSource::IcdSibling | PairSource::RandomNeg => Polarity::Dissimilar,
            PairSource::Annotated => match self.relation {
                Some(Relation::Similarity) => Polarity::Same,
                _ => Polarity::Dissimilar,
            },
        }
    }

    pub fn key(&self) -> PairKey {
        pair_key(&self.a, &self.b)
    }
}

pub fn pair_key(a: &str, b: &str) -> PairKey {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

pub fn pair_keys<'a>(pairs: impl IntoIterator<Item = &'a DiseasePair>) -> BTreeSet<PairKey> {
    pairs.into_iter().map(DiseasePair::key).collect()
}

fn push_unique(out: &mut Vec<DiseasePair>, seen: &mut HashSet<PairKey>, pair: DiseasePair) {
    if seen.insert(pair.key()) {
        out.push(pair);
    }
}

/// One `(clinical_name, icd_title)` positive per input row, deduplicated
/// without regard to order.
pub fn gen_positive_coding_pairs(coded: &[(String, String)], icd: &IcdIndex) -> Result<Vec<DiseasePair>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (name, code) in coded {
        let entry = icd.get_str(code).ok_or_else(|| Error::UnknownCode(code.clone()))?;
        push_unique(&mut out, &mut seen, DiseasePair::new(name, &entry.title, None, PairSource::CodingPair)?);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct CodedRow {
    clinical_name: String,
    icd_code: String,
}

/// Reads `clinical_name,icd_code` rows.
pub fn load_coded_records(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<CodedRow>().enumerate() {
        let row = row.map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
        out.push((row.clinical_name, row.icd_code));
    }
    Ok(out)
}

pub fn parse_coded_records(text: &str) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<CodedRow>().enumerate() {
        let row = row.map_err(|e| Error::parse("<memory>", i + 2, e.to_string()))?;
        out.push((row.clinical_name, row.icd_code));
    }
    Ok(out)
}

/// All unordered pairs of distinct diagnoses within each discharge list,
/// minus anything in `exclude` (the positive pairs).
pub fn gen_negative_same_list(records: &[MedicalRecord], exclude: &BTreeSet<PairKey>) -> Vec<DiseasePair> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for r in records {
        let names: Vec<String> = r.discharge_diagnoses.iter().filter_map(|d| normalize_disease_name(d).ok()).collect();
        for i in 0..names.len() {
            for j in i + 1..names.len() {
                if names[i] == names[j] {
                    continue;
                }
                let Ok(p) = DiseasePair::new(&names[i], &names[j], None, PairSource::SameList) else { continue };
                if !exclude.contains(&p.key()) {
                    push_unique(&mut out, &mut seen, p);
                }
            }
        }
    }
    out
}

/// Which code pairs inside a 3-digit category count as siblings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiblingScope {
    /// Equal depth, differing at that depth (S05.3/S05.4, S05.301/S05.401).
    #[default]
    SameDepth,
    /// Any two codes of the category where neither is an ancestor of the
    /// other (adds S05.3/S05.401).
    CrossDepth,
}

impl FromStr for SiblingScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "same_depth" => Ok(SiblingScope::SameDepth),
            "cross_depth" => Ok(SiblingScope::CrossDepth),
            other => Err(Error::Invalid(format!("unknown sibling scope `{other}`"))),
        }
    }
}

pub fn is_sibling(a: &IcdCode, b: &IcdCode, scope: SiblingScope) -> bool {
    if a == b || a.category() != b.category() || a.is_ancestor_of(b) || b.is_ancestor_of(a) {
        return false;
    }
    match scope {
        SiblingScope::SameDepth => a.depth() == b.depth(),
        SiblingScope::CrossDepth => true,
    }
}

/// Dissimilar pairs of ICD titles from sibling codes; ancestor/descendant
/// pairs are never produced.
pub fn gen_negative_icd_siblings(icd: &IcdIndex, scope: SiblingScope, exclude: &BTreeSet<PairKey>) -> Vec<DiseasePair> {
    let mut by_category: BTreeMap<&str, Vec<&IcdEntry>> = BTreeMap::new();
    for e in icd.iter() {
        by_category.entry(e.code.category()).or_default().push(e);
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for entries in by_category.values() {
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                let (x, y) = (entries[i], entries[j]);
                if !is_sibling(&x.code, &y.code, scope) {
                    continue;
                }
                let Ok(p) = DiseasePair::new(&x.title, &y.title, None, PairSource::IcdSibling) else { continue };
                if p.a != p.b && !exclude.contains(&p.key()) {
                    push_unique(&mut out, &mut seen, p);
                }
            }
        }
    }
    out
}

/// `n` distinct dissimilar pairs of titles whose codes lie in different
/// 3-digit categories, seeded.
pub fn gen_negative_random(icd: &IcdIndex, n: usize, seed: u64, exclude: &BTreeSet<PairKey>) -> Result<Vec<DiseasePair>> {
    let entries: Vec<&IcdEntry> = icd.iter().collect();
    let categories: BTreeSet<&str> = entries.iter().map(|e| e.code.category()).collect();
    if entries.len() < 2 || categories.len() < 2 {
        return Err(Error::InsufficientCodes(format!("{} codes in {} categories", entries.len(), categories.len())));
    }
    let mut r = rng::derived(seed, 53);
    let usable = |x: &IcdEntry, y: &IcdEntry| -> Option<DiseasePair> {
        if x.code.category() == y.code.category() {
            return None;
        }
        let p = DiseasePair::new(&x.title, &y.title, None, PairSource::RandomNeg).ok()?;
        (p.a != p.b && !exclude.contains(&p.key())).then_some(p)
    };

    if entries.len() <= ENUMERATE_LIMIT {
        let mut all = Vec::new();
        let mut seen = HashSet::new();
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                if let Some(p) = usable(entries[i], entries[j]) {
                    push_unique(&mut all, &mut seen, p);
                }
            }
        }
        if all.len() < n {
            return Err(Error::InsufficientCodes(format!("only {} distinct cross-category pairs, {n} requested", all.len())));
        }
        all.shuffle(&mut r);
        all.truncate(n);
        for p in &mut all {
            if r.gen_bool(0.5) {
                std::mem::swap(&mut p.a, &mut p.b);
            }
        }
        return Ok(all);
    }

    let mut out = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    let max_attempts = n.saturating_mul(50).max(10_000);
    for _ in 0..max_attempts {
        if out.len() == n {
            break;
        }
        let x = entries[r.gen_range(0..entries.len())];
        let y = entries[r.gen_range(0..entries.len())];
        if let Some(p) = usable(x, y) {
            push_unique(&mut out, &mut seen, p);
        }
    }
    if out.len() < n {
        return Err(Error::InsufficientCodes(format!("drew only {} distinct pairs, {n} requested", out.len())));
    }
    Ok(out)
}

/// Positives from an externally produced paraphrase file (`a<TAB>b` per
/// line), e.g. back-translations. No translation happens here.
pub fn load_back_translation(path: impl AsRef<Path>) -> Result<Vec<DiseasePair>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(a), Some(b)) = (cols.next(), cols.next()) else {
            return Err(Error::parse(path, i + 1, "expected two tab-separated names"));
        };
        let p = DiseasePair::new(a, b, None, PairSource::BackTranslation).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        push_unique(&mut out, &mut seen, p);
    }
    Ok(out)
}

/// `a<TAB>b<TAB>label_or_polarity<TAB>source` per line.
pub fn write_pairs<W: Write>(w: &mut W, pairs: &[DiseasePair]) -> Result<()> {
    for p in pairs {
        let label = match p.relation {
            Some(r) => r.as_str(),
            None => match p.polarity() {
                Polarity::Same => "same",
                Polarity::Dissimilar => "dissimilar",
            },
        };
        writeln!(w, "{}\t{}\t{}\t{}", p.a, p.b, label, p.source)?;
    }
    Ok(())
}

pub fn parse_pairs(text: &str, origin: &Path) -> Result<Vec<DiseasePair>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |m: String| Error::parse(origin, i + 1, m);
        if cols.len() < 3 {
            return Err(bad(format!("expected at least 3 columns, got {}", cols.len())));
        }
        let source = match cols.get(3) {
            Some(s) => s.parse().map_err(|e: Error| bad(e.to_string()))?,
            None => PairSource::Annotated,
        };
        let relation = match cols[2].trim() {
            "same" | "dissimilar" => None,
            other => Some(other.parse::<Relation>().map_err(|e| bad(e.to_string()))?),
        };
        if relation.is_none() && source == PairSource::Annotated {
            return Err(bad("annotated pair needs a relation label".into()));
        }
        out.push(DiseasePair::new(cols[0], cols[1], relation, source).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<DiseasePair>> {
    let path = path.as_ref();
    parse_pairs(&std::fs::read_to_string(path)?, path)
}

/// The full pretraining set: coding positives first, then the three
/// negative sources with positives removed from each.
pub fn gen_pretraining_pairs(
    coded: &[(String, String)],
    records: &[MedicalRecord],
    icd: &IcdIndex,
    n_random: usize,
    scope: SiblingScope,
    seed: u64,
) -> Result<Vec<DiseasePair>> {
    let positives = gen_positive_coding_pairs(coded, icd)?;
    let exclude = pair_keys(&positives);
    let mut out = positives;
    let mut seen: HashSet<PairKey> = out.iter().map(DiseasePair::key).collect();
    let negs = gen_negative_same_list(records, &exclude)
        .into_iter()
        .chain(gen_negative_icd_siblings(icd, scope, &exclude))
        .chain(if n_random > 0 { gen_negative_random(icd, n_random, seed, &exclude)? } else { Vec::new() });
    for p in negs {
        push_unique(&mut out, &mut seen, p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Section;

    fn icd(rows: &str) -> IcdIndex {
        let text = format!("code,title,cc_level\n{rows}");
        IcdIndex::from_reader(text.as_bytes(), Path::new("t")).unwrap()
    }

    fn sclera() -> IcdIndex {
        icd("S05,眼球损伤,NONE\nS05.3,眼球裂伤,NONE\nS05.301,巩膜破裂,CC\nS05.4,眼眶穿透伤,NONE\nS05.401,眼眶异物,NONE\n")
    }

    #[test]
    fn coding_pair_from_table_title() {
        let rows = vec![("巩膜破裂伤".to_string(), "S05.301".to_string()), ("巩膜破裂伤".to_string(), "S05.301".to_string())];
        let p = gen_positive_coding_pairs(&rows, &sclera()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].a.as_str(), p[0].b.as_str()), ("巩膜破裂伤", "巩膜破裂"));
        assert_eq!(p[0].polarity(), Polarity::Same);
        let bad = vec![("x".to_string(), "S99.9".to_string())];
        assert!(matches!(gen_positive_coding_pairs(&bad, &sclera()), Err(Error::UnknownCode(_))));
    }

    fn rec(dx: &[&str]) -> MedicalRecord {
        MedicalRecord {
            record_id: "r".into(),
            sections: vec![Section { name: "s".into(), text: "t".into() }],
            discharge_diagnoses: dx.iter().map(|s| s.to_string()).collect(),
            drg: None,
        }
    }

    #[test]
    fn same_list_enumerates_and_drops_conflicts() {
        let r = rec(&["高血压", "糖尿病", "肺炎"]);
        assert_eq!(gen_negative_same_list(std::slice::from_ref(&r), &BTreeSet::new()).len(), 3);
        assert!(gen_negative_same_list(&[rec(&["肺炎"])], &BTreeSet::new()).is_empty());
        let ex: BTreeSet<PairKey> = [pair_key("肺炎", "高血压")].into();
        let out = gen_negative_same_list(&[r], &ex);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|p| p.key() != pair_key("高血压", "肺炎")));
    }

    #[test]
    fn siblings_exclude_ancestors() {
        let out = gen_negative_icd_siblings(&sclera(), SiblingScope::SameDepth, &BTreeSet::new());
        let keys = pair_keys(&out);
        assert!(keys.contains(&pair_key("眼球裂伤", "眼眶穿透伤")));
        assert!(keys.contains(&pair_key("巩膜破裂", "眼眶异物")));
        assert!(!keys.contains(&pair_key("眼球裂伤", "巩膜破裂")));
        assert_eq!(out.len(), 2);
        let cross = gen_negative_icd_siblings(&sclera(), SiblingScope::CrossDepth, &BTreeSet::new());
        assert_eq!(cross.len(), 4);
        assert!(gen_negative_icd_siblings(&icd("S05,眼球损伤,NONE\n"), SiblingScope::SameDepth, &BTreeSet::new()).is_empty());
    }

    #[test]
    fn random_negatives_cross_category_and_seeded() {
        let t = crate::data::icd_table().unwrap();
        let a = gen_negative_random(&t, 300, 5, &BTreeSet::new()).unwrap();
        let b = gen_negative_random(&t, 300, 5, &BTreeSet::new()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 300);
        assert_eq!(pair_keys(&a).len(), 300);
        for p in &a {
            let x = t.by_title(&p.a).unwrap();
            let y = t.by_title(&p.b).unwrap();
            assert_ne!(x.code.category(), y.code.category());
        }
        assert!(matches!(gen_negative_random(&icd("S05,眼球损伤,NONE\n"), 1, 0, &BTreeSet::new()), Err(Error::InsufficientCodes(_))));
    }

    #[test]
    fn pair_file_round_trip() {
        let pairs = vec![
            DiseasePair::annotated("头部骨折", "头骨骨折", Relation::Similarity).unwrap(),
            DiseasePair::new("高血压", "肺炎", None, PairSource::SameList).unwrap(),
            DiseasePair::new("巩膜破裂伤", "巩膜破裂", None, PairSource::CodingPair).unwrap(),
        ];
        let mut buf = Vec::new();
        write_pairs(&mut buf, &pairs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(parse_pairs(&text, Path::new("p")).unwrap(), pairs);
        assert!(parse_pairs("a\tb\n", Path::new("p")).is_err());
    }

    #[test]
    fn names_truncated_to_fifty() {
        let long = "病".repeat(80);
        let p = DiseasePair::new(&long, "肺炎", None, PairSource::RandomNeg).unwrap();
        assert_eq!(p.a.chars().count(), 50);
    }
}
