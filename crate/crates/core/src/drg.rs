//! DRG severity regrouping and reimbursement impact of recovered diagnoses.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::icd::{IcdEntry, IcdIndex};
use crate::normalize::normalize_disease_name;
use crate::pipeline::{BatchReport, RelationJudge};
use crate::types::{validate_adrg, CcLevel, DrgAssignment, MedicalRecord, Money, Relation, Tier};

/// Minimum comparator probability for resolving a surface to an ICD title.
pub const RESOLVE_THRESHOLD: f64 = 0.8;

#[derive(Debug, Deserialize)]
struct GroupRow {
    adrg: String,
    tier: u8,
    avg_cost: String,
}

/// Average cost per (ADRG, tier).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DrgGroupTable {
    rows: BTreeMap<(String, Tier), Money>,
}

impl DrgGroupTable {
    pub fn from_rows<I: IntoIterator<Item = (String, Tier, Money)>>(rows: I) -> Result<Self> {
        let mut t = DrgGroupTable::default();
        for (adrg, tier, cost) in rows {
            validate_adrg(&adrg)?;
            if cost.minor() < 0 {
                return Err(Error::Invalid(format!("negative cost for {adrg}/{}", tier.code())));
            }
            if t.rows.insert((adrg.clone(), tier), cost).is_some() {
                return Err(Error::Invalid(format!("duplicate group row {adrg}/{}", tier.code())));
            }
        }
        Ok(t)
    }

    pub fn from_reader<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for (i, row) in rdr.deserialize::<GroupRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::parse(origin, line, e.to_string()))?;
            let tier = Tier::from_code(row.tier).map_err(|e| Error::parse(origin, line, e.to_string()))?;
            let cost: Money = row.avg_cost.parse().map_err(|e: Error| Error::parse(origin, line, e.to_string()))?;
            rows.push((row.adrg, tier, cost));
        }
        Self::from_rows(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_reader(std::fs::File::open(path)?, path)
    }

    pub fn builtin() -> Result<Self> {
        Self::from_reader(crate::data::DRG_GROUPS.as_bytes(), Path::new("<builtin drg_groups.csv>"))
    }

    pub fn get(&self, adrg: &str, tier: Tier) -> Option<Money> {
        self.rows.get(&(adrg.to_string(), tier)).copied()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn adrgs(&self) -> std::collections::BTreeSet<&str> {
        self.rows.keys().map(|(a, _)| a.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// ADRGs whose costs are not ordered MCC ≥ CC ≥ NoCC. Reported only;
    /// nothing relies on the ordering.
    pub fn monotonicity_violations(&self) -> Vec<String> {
        let mut by_adrg: BTreeMap<&str, Vec<(Tier, Money)>> = BTreeMap::new();
        for ((adrg, tier), cost) in &self.rows {
            by_adrg.entry(adrg.as_str()).or_default().push((*tier, *cost));
        }
        by_adrg
            .into_iter()
            .filter(|(_, rows)| {
                let mut rows = rows.clone();
                rows.sort_by_key(|(t, _)| std::cmp::Reverse(t.severity()));
                rows.windows(2).any(|w| w[0].1 < w[1].1)
            })
            .map(|(a, _)| a.to_string())
            .collect()
    }
}

/// Resolves a disease surface to an ICD entry: exact normalized title
/// first, then the comparator's best Similarity/Inclusion verdict at or
/// above [`RESOLVE_THRESHOLD`].
pub fn resolve_icd<'a>(disease: &str, icd: &'a IcdIndex, relation: Option<&dyn RelationJudge>) -> Option<&'a IcdEntry> {
    let name = normalize_disease_name(disease).ok()?;
    if let Some(e) = icd.by_title(&name) {
        return Some(e);
    }
    let judge = relation?;
    let mut best: Option<(&IcdEntry, f64)> = None;
    for e in icd.iter() {
        let (rel, p) = judge.compare(&name, &e.title);
        if matches!(rel, Relation::Similarity | Relation::Inclusion) && p >= RESOLVE_THRESHOLD && best.is_none_or(|(_, bp)| p > bp) {
            best = Some((e, p));
        }
    }
    best.map(|(e, _)| e)
}

pub fn cc_mcc_level(disease: &str, icd: &IcdIndex, relation: Option<&dyn RelationJudge>) -> CcLevel {
    resolve_icd(disease, icd, relation).map_or(CcLevel::None, |e| e.cc_level)
}

/// Raises the tier to the most severe of the original and the recovered
/// levels; the ADRG never changes.
pub fn regroup(original: &DrgAssignment, recovered: &[CcLevel], table: &DrgGroupTable) -> Result<DrgAssignment> {
    let tier = recovered.iter().fold(original.tier, |t, &l| t.most_severe(Tier::from_level(l)));
    if tier == original.tier {
        return Ok(original.clone());
    }
    let avg_cost = table
        .get(&original.adrg, tier)
        .ok_or_else(|| Error::MissingGroupRow { adrg: original.adrg.clone(), tier: tier.code() })?;
    Ok(DrgAssignment { adrg: original.adrg.clone(), tier, avg_cost })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub record_id: String,
    pub original: DrgAssignment,
    pub regrouped: DrgAssignment,
    pub delta: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    /// Principal-diagnosis CC exclusion is not modelled.
    pub cc_exclusion_applied: bool,
    pub cost_inversions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    pub skipped_without_drg: usize,
    pub total_original: Money,
    pub total_delta: Money,
    pub percent: f64,
    /// Detection precision used to discount the total, when supplied.
    pub precision: Option<f64>,
    pub precision_scaled_delta: Option<Money>,
    pub metadata: ReportMetadata,
}

/// Per-record and total cost deltas. `levels` maps record ids to the
/// CC/MCC levels of that record's recovered diseases.
pub fn cost_delta_report(
    records: &[MedicalRecord],
    levels: &BTreeMap<String, Vec<CcLevel>>,
    table: &DrgGroupTable,
    precision: Option<f64>,
) -> Result<CostReport> {
    let mut rows = Vec::new();
    let mut skipped = 0;
    let mut total_original = 0i64;
    let mut total_delta = 0i64;
    for r in records {
        let Some(original) = &r.drg else {
            skipped += 1;
            continue;
        };
        let recovered = levels.get(&r.record_id).map_or(&[][..], Vec::as_slice);
        let regrouped = regroup(original, recovered, table)?;
        let delta = regrouped.avg_cost.minor() - original.avg_cost.minor();
        total_original += original.avg_cost.minor();
        total_delta += delta;
        rows.push(CostRow { record_id: r.record_id.clone(), original: original.clone(), regrouped, delta: Money(delta) });
    }
    let percent = if total_original == 0 { 0.0 } else { total_delta as f64 * 100.0 / total_original as f64 };
    Ok(CostReport {
        rows,
        skipped_without_drg: skipped,
        total_original: Money(total_original),
        total_delta: Money(total_delta),
        percent,
        precision,
        precision_scaled_delta: precision.map(|p| Money((total_delta as f64 * p).round() as i64)),
        metadata: ReportMetadata { cc_exclusion_applied: false, cost_inversions: table.monotonicity_violations() },
    })
}

/// CC/MCC levels of every finding in a detection report, keyed by record.
pub fn levels_from_findings(report: &BatchReport, icd: &IcdIndex, relation: Option<&dyn RelationJudge>) -> BTreeMap<String, Vec<CcLevel>> {
    report
        .records
        .iter()
        .map(|r| (r.record_id.clone(), r.findings.iter().map(|f| cc_mcc_level(&f.disease, icd, relation)).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::LookupRelationJudge;

    fn table() -> DrgGroupTable {
        DrgGroupTable::builtin().unwrap()
    }

    fn gb2(tier: Tier, cost: i64) -> DrgAssignment {
        DrgAssignment { adrg: "GB2".into(), tier, avg_cost: Money::from_units(cost) }
    }

    #[test]
    fn regroup_rules() {
        let t = table();
        let up = regroup(&gb2(Tier::NoCc, 10_000), &[CcLevel::Mcc], &t).unwrap();
        assert_eq!(up, gb2(Tier::Mcc, 18_000));
        assert_eq!(regroup(&gb2(Tier::Mcc, 18_000), &[CcLevel::Cc], &t).unwrap(), gb2(Tier::Mcc, 18_000));
        assert_eq!(regroup(&gb2(Tier::Cc, 13_000), &[CcLevel::None, CcLevel::None], &t).unwrap(), gb2(Tier::Cc, 13_000));
        let orphan = DrgAssignment { adrg: "ZZ9".into(), tier: Tier::NoCc, avg_cost: Money(0) };
        assert!(matches!(regroup(&orphan, &[CcLevel::Cc], &t), Err(Error::MissingGroupRow { .. })));
    }

    #[test]
    fn exact_and_model_resolution() {
        let icd = crate::data::icd_table().unwrap();
        assert_eq!(cc_mcc_level("低钾血症", &icd, None), CcLevel::Cc);
        assert_eq!(cc_mcc_level("完全不存在的病", &icd, None), CcLevel::None);
        let mut j = LookupRelationJudge::default();
        j.insert("血钾低", "低钾血症", Relation::Similarity);
        assert_eq!(cc_mcc_level("血钾低", &icd, Some(&j)), CcLevel::Cc);
    }

    #[test]
    fn inverted_costs_are_reported() {
        let t = DrgGroupTable::from_rows([
            ("AB1".to_string(), Tier::Mcc, Money(100)),
            ("AB1".to_string(), Tier::NoCc, Money(200)),
            ("CD1".to_string(), Tier::Mcc, Money(300)),
        ])
        .unwrap();
        assert_eq!(t.monotonicity_violations(), vec!["AB1".to_string()]);
        assert!(table().monotonicity_violations().is_empty());
    }

    #[test]
    fn empty_findings_give_zero() {
        let rec = MedicalRecord {
            record_id: "r".into(),
            sections: vec![crate::types::Section { name: "s".into(), text: "t".into() }],
            discharge_diagnoses: vec![],
            drg: Some(gb2(Tier::NoCc, 10_000)),
        };
        let rep = cost_delta_report(&[rec], &BTreeMap::new(), &table(), Some(0.9)).unwrap();
        assert_eq!(rep.total_delta, Money(0));
        assert_eq!(rep.percent, 0.0);
        assert_eq!(rep.precision_scaled_delta, Some(Money(0)));
    }
}
