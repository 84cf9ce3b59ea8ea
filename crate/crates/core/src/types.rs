//! Domain types shared by every stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub text: String,
}

/// A full record: ordered sections plus the clinician's discharge list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicalRecord {
    pub record_id: String,
    pub sections: Vec<Section>,
    #[serde(default)]
    pub discharge_diagnoses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drg: Option<DrgAssignment>,
}

impl MedicalRecord {
    /// Checks the per-record invariants (non-empty id, non-empty sections).
    pub fn validate(&self) -> Result<()> {
        if self.record_id.trim().is_empty() {
            return Err(Error::InvalidRecord {
                record_id: self.record_id.clone(),
                reason: "record_id is empty".into(),
            });
        }
        if let Some(i) = self.sections.iter().position(|s| s.text.is_empty()) {
            return Err(Error::InvalidRecord {
                record_id: self.record_id.clone(),
                reason: format!("section {i} (`{}`) has empty text", self.sections[i].name),
            });
        }
        Ok(())
    }
}

/// Currency amount in minor units (1/100 of the unit).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(pub i64);

impl Money {
    pub fn from_units(units: i64) -> Self {
        Money(units * 100)
    }

    pub fn minor(self) -> i64 {
        self.0
    }

    pub fn as_units_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Money {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Invalid(format!("bad currency amount `{s}`"));
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if frac.len() > 2 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let units: i64 = int.parse().map_err(|_| bad())?;
        let cents: i64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i64>().map_err(|_| bad())? * 10,
            _ => frac.parse().map_err(|_| bad())?,
        };
        let v = units.checked_mul(100).and_then(|u| u.checked_add(cents)).ok_or_else(bad)?;
        Ok(Money(if neg { -v } else { v }))
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 % 100 == 0 {
            s.serialize_i64(self.0 / 100)
        } else {
            s.serialize_f64(self.as_units_f64())
        }
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        if !v.is_finite() {
            return Err(serde::de::Error::custom("currency amount must be finite"));
        }
        Ok(Money((v * 100.0).round() as i64))
    }
}

/// DRG severity tier, encoded as the final digit of the group code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tier {
    Mcc,
    Cc,
    NoCc,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Mcc, Tier::Cc, Tier::NoCc];

    pub fn code(self) -> u8 {
        match self {
            Tier::Mcc => 1,
            Tier::Cc => 3,
            Tier::NoCc => 5,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Tier::Mcc),
            3 => Ok(Tier::Cc),
            5 => Ok(Tier::NoCc),
            other => Err(Error::Invalid(format!("tier must be 1, 3 or 5, got {other}"))),
        }
    }

    /// Larger is more severe.
    pub fn severity(self) -> u8 {
        match self {
            Tier::Mcc => 2,
            Tier::Cc => 1,
            Tier::NoCc => 0,
        }
    }

    pub fn from_level(level: CcLevel) -> Self {
        match level {
            CcLevel::Mcc => Tier::Mcc,
            CcLevel::Cc => Tier::Cc,
            CcLevel::None => Tier::NoCc,
        }
    }

    pub fn most_severe(self, other: Tier) -> Tier {
        if other.severity() > self.severity() {
            other
        } else {
            self
        }
    }
}

impl Serialize for Tier {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for Tier {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let code = u8::deserialize(d)?;
        Tier::from_code(code).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrgAssignment {
    pub adrg: String,
    pub tier: Tier,
    pub avg_cost: Money,
}

impl DrgAssignment {
    pub fn validate(&self) -> Result<()> {
        validate_adrg(&self.adrg)?;
        if self.avg_cost.0 < 0 {
            return Err(Error::Invalid(format!("negative avg_cost for {}", self.adrg)));
        }
        Ok(())
    }
}

/// ADRG codes are two uppercase letters followed by a digit.
pub fn validate_adrg(adrg: &str) -> Result<()> {
    let b = adrg.as_bytes();
    if b.len() == 3 && b[0].is_ascii_uppercase() && b[1].is_ascii_uppercase() && b[2].is_ascii_digit() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("bad ADRG code `{adrg}`")))
    }
}

/// Complication severity attached to an ICD entry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CcLevel {
    #[default]
    None,
    Cc,
    Mcc,
}

impl FromStr for CcLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NONE" | "" => Ok(CcLevel::None),
            "CC" => Ok(CcLevel::Cc),
            "MCC" => Ok(CcLevel::Mcc),
            _ => Err(Error::Invalid(format!("bad cc_level `{s}`"))),
        }
    }
}

/// Relationship between a disease and its surrounding context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextLabel {
    NonCurrent,
    Confirmed,
    Unknown,
}

impl ContextLabel {
    pub const ALL: [ContextLabel; 3] = [ContextLabel::NonCurrent, ContextLabel::Confirmed, ContextLabel::Unknown];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ContextLabel::NonCurrent => "non_current",
            ContextLabel::Confirmed => "confirmed",
            ContextLabel::Unknown => "unknown",
        }
    }
}

impl FromStr for ContextLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "non_current" | "noncurrent" => Ok(ContextLabel::NonCurrent),
            "confirmed" => Ok(ContextLabel::Confirmed),
            "unknown" => Ok(ContextLabel::Unknown),
            _ => Err(Error::Invalid(format!("bad context label `{s}`"))),
        }
    }
}

impl fmt::Display for ContextLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Relationship between two disease names. `Inclusion` reads "a includes b".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Similarity,
    Inclusion,
    Secondary,
    Irrelevance,
    Other,
}

impl Relation {
    pub const ALL: [Relation; 5] = [
        Relation::Similarity,
        Relation::Inclusion,
        Relation::Secondary,
        Relation::Irrelevance,
        Relation::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Similarity => "similarity",
            Relation::Inclusion => "inclusion",
            Relation::Secondary => "secondary",
            Relation::Irrelevance => "irrelevance",
            Relation::Other => "other",
        }
    }

    /// Whether the relation is symmetric in its arguments.
    pub fn is_symmetric(self) -> bool {
        !matches!(self, Relation::Inclusion | Relation::Secondary)
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "similarity" | "similar" => Ok(Relation::Similarity),
            "inclusion" => Ok(Relation::Inclusion),
            "secondary" => Ok(Relation::Secondary),
            "irrelevance" | "irrelevant" => Ok(Relation::Irrelevance),
            "other" => Ok(Relation::Other),
            _ => Err(Error::Invalid(format!("bad relation `{s}`"))),
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn money_parses_decimal_strings() {
        assert_eq!("10000".parse::<Money>().unwrap(), Money(1_000_000));
        assert_eq!("12.5".parse::<Money>().unwrap(), Money(1250));
        assert_eq!("-0.07".parse::<Money>().unwrap(), Money(-7));
        assert!("1.234".parse::<Money>().is_err());
        assert!("abc".parse::<Money>().is_err());
        assert_eq!(Money(-1250).to_string(), "-12.50");
    }

    #[test]
    fn money_json_round_trip() {
        let m: Money = serde_json::from_str("18000").unwrap();
        assert_eq!(m, Money::from_units(18_000));
        assert_eq!(serde_json::to_string(&m).unwrap(), "18000");
        let m: Money = serde_json::from_str("99.99").unwrap();
        assert_eq!(m, Money(9999));
        assert_eq!(serde_json::from_str::<Money>(&serde_json::to_string(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn tier_codes_and_severity() {
        for t in Tier::ALL {
            assert_eq!(Tier::from_code(t.code()).unwrap(), t);
        }
        assert!(Tier::from_code(2).is_err());
        assert_eq!(Tier::NoCc.most_severe(Tier::Mcc), Tier::Mcc);
        assert_eq!(Tier::Mcc.most_severe(Tier::Cc), Tier::Mcc);
    }

    #[test]
    fn record_validation() {
        let mut r = MedicalRecord {
            record_id: "r1".into(),
            sections: vec![Section { name: "a".into(), text: "x".into() }],
            discharge_diagnoses: vec![],
            drg: None,
        };
        assert!(r.validate().is_ok());
        r.sections[0].text.clear();
        assert!(matches!(r.validate(), Err(Error::InvalidRecord { .. })));
        r.record_id = " ".into();
        assert!(r.validate().is_err());
    }
}
