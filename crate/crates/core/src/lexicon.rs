//! Line-oriented word lists.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalize::normalize_disease_name;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexiconKind {
    DiseaseNames,
    NegationWords,
    ChronicExclusion,
    EnumeratorPatterns,
}

/// A set of unique, normalized entries. Enumerator patterns are regular
/// expressions and are only trimmed, never normalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    kind: LexiconKind,
    entries: BTreeSet<String>,
}

impl Lexicon {
    pub fn new(kind: LexiconKind) -> Self {
        Lexicon { kind, entries: BTreeSet::new() }
    }

    pub fn from_entries<I, S>(kind: LexiconKind, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut lex = Lexicon::new(kind);
        for e in entries {
            lex.insert(e.as_ref())?;
        }
        Ok(lex)
    }

    /// Parses the text format: one entry per line, `#` comments and blank
    /// lines ignored.
    pub fn parse(kind: LexiconKind, text: &str) -> Result<Self> {
        let lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        Self::from_entries(kind, lines)
    }

    pub fn load(kind: LexiconKind, path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(kind, &std::fs::read_to_string(path)?)
    }

    pub fn insert(&mut self, raw: &str) -> Result<bool> {
        let entry = match self.kind {
            LexiconKind::EnumeratorPatterns => {
                let t = raw.trim();
                if t.is_empty() {
                    return Err(Error::EmptyName);
                }
                t.to_string()
            }
            _ => normalize_disease_name(raw)?,
        };
        Ok(self.entries.insert(entry))
    }

    pub fn kind(&self) -> LexiconKind {
        self.kind
    }

    pub fn contains(&self, entry: &str) -> bool {
        self.entries.contains(entry)
    }

    /// Entries in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments_and_dedup() {
        let lex = Lexicon::parse(LexiconKind::DiseaseNames, "# diseases\n肺炎\n\n 肺炎 \n高血压、\n").unwrap();
        assert_eq!(lex.iter().collect::<Vec<_>>(), vec!["肺炎", "高血压"]);
    }

    #[test]
    fn patterns_are_not_normalized() {
        let lex = Lexicon::parse(LexiconKind::EnumeratorPatterns, "[0-9]+[.、]\n").unwrap();
        assert!(lex.contains("[0-9]+[.、]"));
    }
}
