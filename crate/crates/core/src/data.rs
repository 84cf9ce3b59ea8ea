//! Built-in lexicons, templates and fixture tables. Every file can be
//! replaced by a user-supplied one with the same format.

use std::path::Path;

use crate::error::Result;
use crate::icd::IcdIndex;
use crate::lexicon::{Lexicon, LexiconKind};

pub const DISEASES: &str = include_str!("../data/diseases.txt");
pub const NEGATION_WORDS: &str = include_str!("../data/negation_words.txt");
pub const ENUMERATOR_PATTERNS: &str = include_str!("../data/enumerator_patterns.txt");
pub const CHRONIC_EXCLUSION: &str = include_str!("../data/chronic_exclusion.txt");
pub const ICD_TABLE: &str = include_str!("../data/icd.csv");
pub const PARAPHRASES: &str = include_str!("../data/paraphrases.tsv");
pub const CODED_DIAGNOSES: &str = include_str!("../data/coded_diagnoses.csv");
pub const DRG_GROUPS: &str = include_str!("../data/drg_groups.csv");
pub const TEMPLATES: &str = include_str!("../data/templates.txt");

pub fn disease_names() -> Result<Lexicon> {
    Lexicon::parse(LexiconKind::DiseaseNames, DISEASES)
}

pub fn negation_words() -> Result<Lexicon> {
    Lexicon::parse(LexiconKind::NegationWords, NEGATION_WORDS)
}

pub fn enumerator_patterns() -> Result<Lexicon> {
    Lexicon::parse(LexiconKind::EnumeratorPatterns, ENUMERATOR_PATTERNS)
}

pub fn chronic_exclusion() -> Result<Lexicon> {
    Lexicon::parse(LexiconKind::ChronicExclusion, CHRONIC_EXCLUSION)
}

pub fn icd_table() -> Result<IcdIndex> {
    IcdIndex::from_reader(ICD_TABLE.as_bytes(), Path::new("<builtin icd.csv>"))
}
