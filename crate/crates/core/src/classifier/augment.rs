//! Training-data augmentation: EDA-style swap/deletion and disease
//! replacement.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ContextSample, FeatureExtractor};
use crate::lexicon::Lexicon;
use crate::rng;

pub const REPLACE_VARIANTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdaConfig {
    /// Swaps per variant are `ceil(swap_rate · L)`.
    pub swap_rate: f64,
    pub delete_rate: f64,
    /// Per-unit probability of synonym replacement; only used when a
    /// synonym table is supplied.
    pub synonym_rate: f64,
}

impl Default for EdaConfig {
    fn default() -> Self {
        EdaConfig { swap_rate: 0.05, delete_rate: 0.1, synonym_rate: 0.1 }
    }
}

/// Word-to-synonyms table. Lines are `word<TAB>syn1<TAB>syn2...`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Synonyms {
    map: BTreeMap<String, Vec<String>>,
}

impl Synonyms {
    pub fn parse(text: &str) -> Self {
        let mut map = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t').map(str::trim).filter(|s| !s.is_empty());
            if let Some(word) = parts.next() {
                let syns: Vec<String> = parts.map(String::from).collect();
                if !syns.is_empty() {
                    map.insert(word.to_string(), syns);
                }
            }
        }
        Synonyms { map }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.map.get(word).map(Vec::as_slice)
    }

    fn words(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Unit {
    text: String,
    protected: bool,
}

/// Splits a context into atomic units: each non-overlapping disease
/// occurrence (protected), each negation-word run, each synonym-table word,
/// and otherwise single characters.
fn units(sample: &ContextSample, synonyms: Option<&Synonyms>) -> Vec<Unit> {
    let chars: Vec<char> = sample.context.chars().collect();
    let d: Vec<char> = sample.disease.chars().collect();
    let mut kind = vec![0u8; chars.len()];
    let mut group = vec![usize::MAX; chars.len()];
    let mut next_group = 0;
    let mut i = 0;
    while !d.is_empty() && i + d.len() <= chars.len() {
        if chars[i..i + d.len()] == d[..] {
            for k in i..i + d.len() {
                kind[k] = 2;
                group[k] = next_group;
            }
            next_group += 1;
            i += d.len();
        } else {
            i += 1;
        }
    }
    let mut i = 0;
    while i < chars.len() {
        if kind[i] == 0 && sample.neg_track.get(i) == Some(&1) {
            let mut j = i;
            while j < chars.len() && kind[j] == 0 && sample.neg_track[j] == 1 {
                kind[j] = 1;
                group[j] = next_group;
                j += 1;
            }
            next_group += 1;
            i = j;
        } else {
            i += 1;
        }
    }
    if let Some(syn) = synonyms {
        let mut words: Vec<Vec<char>> = syn.words().map(|w| w.chars().collect()).collect();
        words.sort_by_key(|w| std::cmp::Reverse(w.len()));
        let mut i = 0;
        while i < chars.len() {
            let hit = words.iter().find(|w| {
                i + w.len() <= chars.len() && chars[i..i + w.len()] == w[..] && kind[i..i + w.len()].iter().all(|&k| k == 0)
            });
            match hit {
                Some(w) => {
                    for k in i..i + w.len() {
                        kind[k] = 1;
                        group[k] = next_group;
                    }
                    next_group += 1;
                    i += w.len();
                }
                None => i += 1,
            }
        }
    }

    let mut out: Vec<Unit> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let mut j = i + 1;
        if group[i] != usize::MAX {
            while j < chars.len() && group[j] == group[i] {
                j += 1;
            }
        }
        out.push(Unit { text: chars[i..j].iter().collect(), protected: kind[i] == 2 });
        i = j;
    }
    out
}

fn apply_synonyms(units: &mut [Unit], synonyms: Option<&Synonyms>, rate: f64, r: &mut rng::Rng) {
    let Some(syn) = synonyms else { return };
    for u in units.iter_mut().filter(|u| !u.protected) {
        if let Some(options) = syn.get(&u.text) {
            if r.gen_bool(rate.clamp(0.0, 1.0)) {
                u.text = options.choose(r).expect("non-empty").clone();
            }
        }
    }
}

fn join(units: &[Unit]) -> String {
    units.iter().map(|u| u.text.as_str()).collect()
}

/// Two variants per sample: one by random unit swaps, one by random unit
/// deletion. Disease occurrences are never deleted or split and the label is
/// kept; tracks are recomputed from the new context.
pub fn augment_eda(
    sample: &ContextSample,
    extractor: &FeatureExtractor,
    config: &EdaConfig,
    synonyms: Option<&Synonyms>,
    seed: u64,
) -> Result<Vec<ContextSample>> {
    let synonyms = synonyms.filter(|s| !s.is_empty());
    let mut r = rng::derived(seed, 31);
    let base = units(sample, synonyms);
    let len = sample.context.chars().count();

    let mut swapped = base.clone();
    apply_synonyms(&mut swapped, synonyms, config.synonym_rate, &mut r);
    if swapped.len() >= 2 {
        let n_swaps = (config.swap_rate * len as f64).ceil() as usize;
        for _ in 0..n_swaps {
            let a = r.gen_range(0..swapped.len());
            let b = r.gen_range(0..swapped.len());
            swapped.swap(a, b);
        }
    }

    let mut deleted = base;
    apply_synonyms(&mut deleted, synonyms, config.synonym_rate, &mut r);
    let kept: Vec<Unit> = deleted
        .iter()
        .filter(|u| u.protected || !r.gen_bool(config.delete_rate.clamp(0.0, 1.0)))
        .cloned()
        .collect();
    let deleted = if kept.is_empty() { deleted } else { kept };

    [join(&swapped), join(&deleted)]
        .iter()
        .map(|ctx| extractor.assemble(&sample.disease, ctx, sample.label))
        .collect()
}

/// Three variants in which every occurrence of the disease is replaced by
/// another disease drawn from `pool` minus `exclusion`.
pub fn augment_disease_replace(
    sample: &ContextSample,
    pool: &Lexicon,
    exclusion: &Lexicon,
    extractor: &FeatureExtractor,
    seed: u64,
) -> Result<Vec<ContextSample>> {
    let candidates: Vec<&str> = pool.iter().filter(|d| !exclusion.contains(d) && *d != sample.disease).collect();
    if candidates.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut r = rng::derived(seed, 37);
    (0..REPLACE_VARIANTS)
        .map(|_| {
            let replacement = *candidates.choose(&mut r).expect("non-empty");
            let context = sample.context.replace(&sample.disease, replacement);
            let context = keep_first_occurrence(&context, replacement, extractor.max_context);
            extractor.assemble(replacement, &context, sample.label)
        })
        .collect()
}

/// Drops leading characters when truncation to `max` would cut off the first
/// occurrence of `needle`.
fn keep_first_occurrence(context: &str, needle: &str, max: usize) -> String {
    let Some(byte) = context.find(needle) else { return context.to_string() };
    let start = context[..byte].chars().count();
    let end = start + needle.chars().count();
    if end <= max {
        return context.to_string();
    }
    context.chars().skip(end - max).collect()
}

/// Draws one replacement disease; exposed for sampler checks.
pub fn sample_replacement<'a>(pool: &'a Lexicon, exclusion: &Lexicon, original: &str, r: &mut rng::Rng) -> Result<&'a str> {
    let candidates: Vec<&str> = pool.iter().filter(|d| !exclusion.contains(d) && *d != original).collect();
    candidates.choose(r).copied().ok_or(Error::EmptyPool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::LexiconKind;
    use crate::types::ContextLabel;

    fn extractor() -> FeatureExtractor {
        FeatureExtractor::with_defaults().unwrap()
    }

    fn sample(disease: &str, context: &str) -> ContextSample {
        extractor().assemble(disease, context, Some(ContextLabel::Confirmed)).unwrap()
    }

    #[test]
    fn eda_returns_two_label_safe_variants() {
        let s = sample("肺炎", "患者咳嗽三天，否认发热，胸片提示肺炎，考虑社区获得性肺炎。");
        for seed in 0..50 {
            let out = augment_eda(&s, &extractor(), &EdaConfig::default(), None, seed).unwrap();
            assert_eq!(out.len(), 2);
            for v in &out {
                assert_eq!(v.label, s.label);
                assert!(v.context.contains("肺炎"));
                assert_eq!(v.context.matches("肺炎").count(), 2);
                assert!(v.tracks_aligned());
            }
        }
    }

    #[test]
    fn eda_is_deterministic() {
        let s = sample("肺炎", "患者咳嗽三天，胸片提示肺炎。");
        let a = augment_eda(&s, &extractor(), &EdaConfig::default(), None, 9).unwrap();
        let b = augment_eda(&s, &extractor(), &EdaConfig::default(), None, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eda_on_bare_disease_is_identity() {
        let s = sample("肺炎", "肺炎");
        let out = augment_eda(&s, &extractor(), &EdaConfig::default(), None, 1).unwrap();
        assert_eq!(out, vec![s.clone(), s]);
    }

    #[test]
    fn synonym_hook_substitutes_when_supplied() {
        let syn = Synonyms::parse("咳嗽\t咳痰\n");
        let s = sample("肺炎", "咳嗽后肺炎");
        let cfg = EdaConfig { swap_rate: 0.0, delete_rate: 0.0, synonym_rate: 1.0 };
        let out = augment_eda(&s, &extractor(), &cfg, Some(&syn), 3).unwrap();
        assert_eq!(out[0].context, "咳痰后肺炎");
        assert_eq!(out[1].context, "咳痰后肺炎");
    }

    #[test]
    fn replace_hits_every_occurrence() {
        let s = sample("肺心病", "不能除外肺心病，确诊为肺心病。");
        let pool = Lexicon::from_entries(LexiconKind::DiseaseNames, ["高血压", "糖尿病", "肺心病"]).unwrap();
        let excl = Lexicon::from_entries(LexiconKind::ChronicExclusion, ["糖尿病"]).unwrap();
        let out = augment_disease_replace(&s, &pool, &excl, &extractor(), 4).unwrap();
        assert_eq!(out.len(), 3);
        for v in out {
            assert_eq!(v.disease, "高血压");
            assert_eq!(v.context, crate::normalize::fold_width("不能除外高血压，确诊为高血压。"));
            assert_eq!(v.pos_track.iter().filter(|&&b| b == 1).count(), 6);
            assert_eq!(v.label, Some(ContextLabel::Confirmed));
        }
    }

    #[test]
    fn pool_equal_to_exclusion_is_empty() {
        let s = sample("肺炎", "肺炎");
        let pool = Lexicon::from_entries(LexiconKind::DiseaseNames, ["糖尿病"]).unwrap();
        let excl = Lexicon::from_entries(LexiconKind::ChronicExclusion, ["糖尿病"]).unwrap();
        assert!(matches!(augment_disease_replace(&s, &pool, &excl, &extractor(), 0), Err(Error::EmptyPool)));
    }

    #[test]
    fn crop_keeps_first_occurrence() {
        let ctx = format!("{}肺炎", "甲".repeat(10));
        assert_eq!(keep_first_occurrence(&ctx, "肺炎", 5), "甲甲甲肺炎");
        assert_eq!(keep_first_occurrence("肺炎甲", "肺炎", 5), "肺炎甲");
    }
}
