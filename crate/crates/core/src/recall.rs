//! Stage 1: lexicon recall and per-disease context assembly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, LexiconKind};
use crate::matching::{select_longest, PatternSet};
use crate::normalize::{char_len, fold_width};
use crate::types::MedicalRecord;

pub const DEFAULT_MAX_CONTEXT: usize = 450;

const SENTENCE_END: [char; 4] = ['。', ';', '；', '\n'];

/// Character range `[start, end)` inside section `section`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub section: usize,
    pub start: usize,
    pub end: usize,
}

/// Every occurrence of one disease in a record, plus the context assembled
/// around those occurrences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiseaseMention {
    pub disease: String,
    pub spans: Vec<Span>,
    pub context: String,
    pub context_spans: Vec<(usize, usize)>,
}

/// Disease-lexicon matcher; immutable once built.
#[derive(Debug, Clone)]
pub struct DiseaseMatcher {
    set: PatternSet,
}

impl DiseaseMatcher {
    pub fn new(lexicon: &Lexicon) -> Result<Self> {
        if lexicon.kind() != LexiconKind::DiseaseNames {
            return Err(Error::Invalid(format!("expected a disease lexicon, got {:?}", lexicon.kind())));
        }
        if lexicon.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        Ok(DiseaseMatcher { set: PatternSet::new(lexicon.iter())? })
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    /// One mention per distinct disease, ordered by first occurrence. Context
    /// fields are left empty; see [`build_context_window`].
    pub fn find_mentions(&self, record: &MedicalRecord) -> Vec<DiseaseMention> {
        let mut by_pattern: BTreeMap<usize, Vec<Span>> = BTreeMap::new();
        for (si, section) in record.sections.iter().enumerate() {
            for h in select_longest(&self.set.find_all(&section.text)) {
                by_pattern.entry(h.pattern).or_default().push(Span { section: si, start: h.start, end: h.end });
            }
        }
        let mut mentions: Vec<DiseaseMention> = by_pattern
            .into_iter()
            .map(|(p, spans)| DiseaseMention {
                disease: self.set.pattern(p).to_string(),
                spans,
                context: String::new(),
                context_spans: Vec::new(),
            })
            .collect();
        mentions.sort_by_key(|m| m.spans[0]);
        mentions
    }

    /// Mentions with their context windows filled in.
    pub fn recall(&self, record: &MedicalRecord, max_context_len: usize) -> Result<Vec<DiseaseMention>> {
        self.find_mentions(record)
            .into_iter()
            .map(|m| build_context_window(record, m, max_context_len))
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Window {
    section: usize,
    start: usize,
    end: usize,
    spans: Vec<(usize, usize)>,
}

impl Window {
    fn len(&self) -> usize {
        self.end - self.start
    }
}

fn sentence_bounds(chars: &[char], start: usize, end: usize) -> (usize, usize) {
    let left = chars[..start].iter().rposition(|c| SENTENCE_END.contains(c)).map_or(0, |i| i + 1);
    let right = match chars[end..].iter().position(|c| SENTENCE_END.contains(c)) {
        Some(off) if chars[end + off] == '\n' => end + off,
        Some(off) => end + off + 1,
        None => chars.len(),
    };
    (left, right)
}

/// Shrinks `w` to at most `budget` characters, keeping as many whole spans
/// as possible and centring them in the kept range.
fn crop(w: &Window, budget: usize) -> Window {
    if w.len() <= budget {
        return w.clone();
    }
    let covered = |a: usize| w.spans.iter().filter(|&&(s, e)| s >= a && e <= a + budget).count();
    let mut best = (0usize, w.start);
    for &(s, _) in &w.spans {
        let a = s.min(w.end - budget).max(w.start);
        let n = covered(a);
        if n > best.0 {
            best = (n, a);
        }
    }
    let kept: Vec<(usize, usize)> =
        w.spans.iter().copied().filter(|&(s, e)| s >= best.1 && e <= best.1 + budget).collect();
    let start = match (kept.first(), kept.last()) {
        (Some(&(lo, _)), Some(&(_, hi))) => {
            let slack = budget - (hi - lo);
            lo.saturating_sub(slack / 2).min(w.end - budget).max(w.start)
        }
        _ => best.1,
    };
    Window {
        section: w.section,
        start,
        end: start + budget,
        spans: kept.into_iter().filter(|&(s, e)| s >= start && e <= start + budget).collect(),
    }
}

/// Fills `mention.context` with the sentence windows around its spans.
///
/// Windows are cut at `。`, `；` and newlines, merged when they cover the same
/// sentence, and selected by descending span count until `max_context_len`
/// characters are used; the kept windows are concatenated in document order.
/// The context is width-folded so that each context span slices to exactly
/// the disease surface.
pub fn build_context_window(
    record: &MedicalRecord,
    mut mention: DiseaseMention,
    max_context_len: usize,
) -> Result<DiseaseMention> {
    let surface_len = char_len(&mention.disease);
    if surface_len > max_context_len {
        return Err(Error::WindowOverflow { len: surface_len, max: max_context_len });
    }
    if mention.spans.is_empty() {
        return Err(Error::Invalid(format!("mention of `{}` has no spans", mention.disease)));
    }

    let mut folded: BTreeMap<usize, Vec<char>> = BTreeMap::new();
    let mut windows: Vec<Window> = Vec::new();
    for span in &mention.spans {
        let section = record
            .sections
            .get(span.section)
            .ok_or_else(|| Error::Invalid(format!("span refers to missing section {}", span.section)))?;
        let chars = folded.entry(span.section).or_insert_with(|| fold_width(&section.text).chars().collect());
        if span.end > chars.len() || span.start >= span.end {
            return Err(Error::Invalid(format!("span {span:?} out of range")));
        }
        let (start, end) = sentence_bounds(chars, span.start, span.end);
        match windows.iter_mut().find(|w| w.section == span.section && w.start < end && start < w.end) {
            Some(w) => {
                w.start = w.start.min(start);
                w.end = w.end.max(end);
                w.spans.push((span.start, span.end));
            }
            None => windows.push(Window { section: span.section, start, end, spans: vec![(span.start, span.end)] }),
        }
    }

    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(windows[i].spans.len()), windows[i].section, windows[i].start));
    let mut remaining = max_context_len;
    let mut chosen: Vec<Window> = Vec::new();
    for i in order {
        let w = &windows[i];
        if w.len() <= remaining {
            remaining -= w.len();
            chosen.push(w.clone());
        } else if remaining >= surface_len {
            let c = crop(w, remaining);
            if !c.spans.is_empty() {
                remaining -= c.len();
                chosen.push(c);
            }
        }
    }
    chosen.sort_by_key(|w| (w.section, w.start));

    let mut context = String::new();
    let mut context_spans = Vec::new();
    let mut offset = 0;
    for w in &chosen {
        let chars = &folded[&w.section];
        context.extend(&chars[w.start..w.end]);
        for &(s, e) in &w.spans {
            if chars[s..e].iter().copied().eq(mention.disease.chars()) {
                context_spans.push((offset + s - w.start, offset + e - w.start));
            }
        }
        offset += w.len();
    }
    mention.context = context;
    mention.context_spans = context_spans;
    Ok(mention)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalize::char_slice;
    use crate::types::Section;

    fn record(texts: &[&str]) -> MedicalRecord {
        MedicalRecord {
            record_id: "r".into(),
            sections: texts.iter().enumerate().map(|(i, t)| Section { name: format!("s{i}"), text: t.to_string() }).collect(),
            discharge_diagnoses: vec![],
            drg: None,
        }
    }

    fn matcher(words: &[&str]) -> DiseaseMatcher {
        DiseaseMatcher::new(&Lexicon::from_entries(LexiconKind::DiseaseNames, words).unwrap()).unwrap()
    }

    #[test]
    fn empty_lexicon_rejected() {
        let lex = Lexicon::new(LexiconKind::DiseaseNames);
        assert!(matches!(DiseaseMatcher::new(&lex), Err(Error::EmptyLexicon)));
    }

    #[test]
    fn longest_match_suppresses_substring() {
        let m = matcher(&["肺炎", "大叶性肺炎"]);
        let ms = m.find_mentions(&record(&["大叶性肺炎"]));
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].disease, "大叶性肺炎");
        assert_eq!(ms[0].spans, vec![Span { section: 0, start: 0, end: 5 }]);
    }

    #[test]
    fn repeated_disease_aggregates_spans() {
        let m = matcher(&["肺心病"]);
        let ms = m.find_mentions(&record(&["不能除外肺心病，现确诊为肺心病。"]));
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].spans.len(), 2);
    }

    #[test]
    fn spans_never_cross_sections() {
        let m = matcher(&["肺心病"]);
        let ms = m.find_mentions(&record(&["考虑肺", "心病"]));
        assert!(ms.is_empty());
    }

    #[test]
    fn single_span_window_is_enclosing_sentence() {
        let text = "患者咳嗽三天。查体未见异常，现确诊为肺炎，予以抗感染治疗。复查胸片好转。";
        let m = matcher(&["肺炎"]);
        let ms = m.recall(&record(&[text]), DEFAULT_MAX_CONTEXT).unwrap();
        assert_eq!(ms[0].context, fold_width("查体未见异常，现确诊为肺炎，予以抗感染治疗。"));
        let (s, e) = ms[0].context_spans[0];
        assert_eq!(char_slice(&ms[0].context, s, e), "肺炎");
    }

    #[test]
    fn distant_spans_both_kept_within_budget() {
        let filler = "一般情况可".repeat(400);
        let text = format!("考虑肺炎。{filler}。确诊为肺炎。");
        let m = matcher(&["肺炎"]);
        let ms = m.recall(&record(&[&text]), DEFAULT_MAX_CONTEXT).unwrap();
        assert_eq!(ms[0].context, "考虑肺炎。确诊为肺炎。");
        assert_eq!(ms[0].context_spans, vec![(2, 4), (8, 10)]);
    }

    #[test]
    fn long_sentence_is_cropped_around_span() {
        let text = format!("{}肺炎{}", "甲".repeat(600), "乙".repeat(600));
        let m = matcher(&["肺炎"]);
        let ms = m.recall(&record(&[&text]), 100).unwrap();
        assert_eq!(char_len(&ms[0].context), 100);
        let (s, e) = ms[0].context_spans[0];
        assert_eq!(char_slice(&ms[0].context, s, e), "肺炎");
        assert_eq!(s, 49);
    }

    #[test]
    fn oversized_surface_overflows() {
        let disease = "病".repeat(500);
        let m = matcher(&[disease.as_str()]);
        let ms = m.find_mentions(&record(&[&disease]));
        assert!(matches!(build_context_window(&record(&[&disease]), ms[0].clone(), 450), Err(Error::WindowOverflow { .. })));
    }

    #[test]
    fn windows_with_more_spans_take_priority() {
        // three sentences; the middle one holds two spans and must survive a tight budget
        let text = "甲肺炎甲甲甲甲甲甲。乙肺炎乙肺炎乙。丙丙丙丙丙丙丙肺炎。";
        let m = matcher(&["肺炎"]);
        let ms = m.recall(&record(&[text]), 9).unwrap();
        assert_eq!(ms[0].context, "乙肺炎乙肺炎乙。");
        assert_eq!(ms[0].context_spans.len(), 2);
    }

    #[test]
    fn empty_text_no_mentions() {
        let m = matcher(&["肺炎"]);
        let rec = MedicalRecord { record_id: "r".into(), sections: vec![], discharge_diagnoses: vec![], drg: None };
        assert!(m.find_mentions(&rec).is_empty());
    }
}
