//! Character-aligned feature tracks for the context classifier: disease
//! position, negation cue and enumerated-list membership.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, LexiconKind};
use crate::matching::PatternSet;
use crate::normalize::fold_width;
use crate::types::ContextLabel;

pub const DEFAULT_MAX_DISEASE: usize = 30;

const SENTENCE_END: [char; 4] = ['。', ';', '；', '\n'];

/// A disease with its context and three 0/1 tracks, each exactly as long as
/// the context in characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSample {
    pub disease: String,
    pub context: String,
    pub pos_track: Vec<u8>,
    pub neg_track: Vec<u8>,
    pub order_track: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ContextLabel>,
}

impl ContextSample {
    pub fn len(&self) -> usize {
        self.pos_track.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos_track.is_empty()
    }

    pub fn tracks_aligned(&self) -> bool {
        let n = self.context.chars().count();
        self.pos_track.len() == n && self.neg_track.len() == n && self.order_track.len() == n
    }
}

/// Training/eval input as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledContext {
    pub disease: String,
    pub context: String,
    pub label: ContextLabel,
}

/// What the order track marks for each enumerated item.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderTrackScope {
    EnumeratorOnly,
    #[default]
    WholeItem,
}

/// Marks every character of every occurrence of `disease` (overlapping
/// occurrences included).
pub fn mark_disease_positions(disease: &str, context: &str) -> Vec<u8> {
    let d: Vec<char> = fold_width(disease).chars().collect();
    let c: Vec<char> = fold_width(context).chars().collect();
    let mut bits = vec![0u8; c.len()];
    if d.is_empty() || d.len() > c.len() {
        return bits;
    }
    for i in 0..=c.len() - d.len() {
        if c[i..i + d.len()] == d[..] {
            bits[i..i + d.len()].iter_mut().for_each(|b| *b = 1);
        }
    }
    bits
}

/// Compiled negation word list. An empty list marks nothing.
#[derive(Debug, Clone)]
pub struct NegationMarker {
    set: Option<PatternSet>,
}

impl NegationMarker {
    pub fn new(lexicon: &Lexicon) -> Result<Self> {
        if lexicon.kind() != LexiconKind::NegationWords {
            return Err(Error::Invalid(format!("expected a negation lexicon, got {:?}", lexicon.kind())));
        }
        let set = if lexicon.is_empty() { None } else { Some(PatternSet::new(lexicon.iter())?) };
        Ok(NegationMarker { set })
    }

    pub fn mark(&self, context: &str) -> Vec<u8> {
        let n = context.chars().count();
        match &self.set {
            Some(set) => set.coverage(context, n),
            None => vec![0; n],
        }
    }
}

/// Union of the character ranges of every negation word occurrence.
pub fn mark_negation(context: &str, negation_lexicon: &Lexicon) -> Result<Vec<u8>> {
    Ok(NegationMarker::new(negation_lexicon)?.mark(context))
}

/// Compiled enumerator patterns (`1.`, `2、`, `①` ...).
#[derive(Debug, Clone)]
pub struct EnumeratorMarker {
    patterns: Vec<regex::Regex>,
}

impl EnumeratorMarker {
    pub fn new(lexicon: &Lexicon) -> Result<Self> {
        if lexicon.kind() != LexiconKind::EnumeratorPatterns {
            return Err(Error::Invalid(format!("expected enumerator patterns, got {:?}", lexicon.kind())));
        }
        let patterns = lexicon
            .iter()
            .map(|p| {
                regex::Regex::new(p).map_err(|e| Error::BadPattern { pattern: p.to_string(), message: e.to_string() })
            })
            .collect::<Result<_>>()?;
        Ok(EnumeratorMarker { patterns })
    }

    /// Enumerator tokens as character ranges, non-overlapping and sorted.
    /// A token directly followed or preceded by an ASCII digit is part of a
    /// number (`1.5`, `12:30`) and is ignored.
    pub fn tokens(&self, context: &str) -> Vec<(usize, usize)> {
        let folded = fold_width(context);
        let chars: Vec<char> = folded.chars().collect();
        let mut char_at = vec![0usize; folded.len() + 1];
        for (n, (b, _)) in folded.char_indices().enumerate() {
            char_at[b] = n;
        }
        char_at[folded.len()] = chars.len();

        let mut found: Vec<(usize, usize)> = Vec::new();
        for re in &self.patterns {
            for m in re.find_iter(&folded) {
                let (s, e) = (char_at[m.start()], char_at[m.end()]);
                if s == e {
                    continue;
                }
                let digit_after = chars.get(e).is_some_and(|c| c.is_ascii_digit());
                let digit_before = s > 0 && chars[s - 1].is_ascii_digit();
                if !digit_after && !digit_before {
                    found.push((s, e));
                }
            }
        }
        found.sort_by_key(|&(s, e)| (s, std::cmp::Reverse(e)));
        let mut tokens: Vec<(usize, usize)> = Vec::new();
        for t in found {
            if tokens.last().is_none_or(|last| t.0 >= last.1) {
                tokens.push(t);
            }
        }
        tokens
    }

    /// Marks enumerated items: the token alone, or the token through the
    /// character before the next token or sentence terminator.
    pub fn mark(&self, context: &str, scope: OrderTrackScope) -> Vec<u8> {
        let chars: Vec<char> = context.chars().collect();
        let mut bits = vec![0u8; chars.len()];
        let tokens = self.tokens(context);
        for (k, &(s, e)) in tokens.iter().enumerate() {
            let end = match scope {
                OrderTrackScope::EnumeratorOnly => e,
                OrderTrackScope::WholeItem => {
                    let next_token = tokens.get(k + 1).map_or(chars.len(), |t| t.0);
                    let stop = chars[e..].iter().position(|c| SENTENCE_END.contains(c)).map_or(chars.len(), |p| e + p);
                    next_token.min(stop)
                }
            };
            bits[s..end].iter_mut().for_each(|b| *b = 1);
        }
        bits
    }
}

pub fn mark_serial_numbers(context: &str, enumerator_patterns: &Lexicon, scope: OrderTrackScope) -> Result<Vec<u8>> {
    Ok(EnumeratorMarker::new(enumerator_patterns)?.mark(context, scope))
}

/// Everything needed to turn a (disease, context) pair into a sample.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub negation: NegationMarker,
    pub enumerators: EnumeratorMarker,
    pub scope: OrderTrackScope,
    pub max_context: usize,
    pub max_disease: usize,
}

impl FeatureExtractor {
    pub fn new(negation: &Lexicon, enumerators: &Lexicon) -> Result<Self> {
        Ok(FeatureExtractor {
            negation: NegationMarker::new(negation)?,
            enumerators: EnumeratorMarker::new(enumerators)?,
            scope: OrderTrackScope::default(),
            max_context: crate::recall::DEFAULT_MAX_CONTEXT,
            max_disease: DEFAULT_MAX_DISEASE,
        })
    }

    /// The built-in negation words and enumerator patterns.
    pub fn with_defaults() -> Result<Self> {
        Self::new(&crate::data::negation_words()?, &crate::data::enumerator_patterns()?)
    }

    pub fn with_scope(mut self, scope: OrderTrackScope) -> Self {
        self.scope = scope;
        self
    }

    /// Truncates to the configured maxima, then computes all three tracks.
    pub fn assemble(&self, disease: &str, context: &str, label: Option<ContextLabel>) -> Result<ContextSample> {
        let disease: String = fold_width(disease.trim()).chars().take(self.max_disease).collect();
        if disease.is_empty() {
            return Err(Error::EmptyName);
        }
        let context: String = fold_width(context).chars().take(self.max_context).collect();
        if context.is_empty() {
            return Err(Error::EmptyContext);
        }
        Ok(ContextSample {
            pos_track: mark_disease_positions(&disease, &context),
            neg_track: self.negation.mark(&context),
            order_track: self.enumerators.mark(&context, self.scope),
            disease,
            context,
            label,
        })
    }

    pub fn assemble_labeled(&self, s: &LabeledContext) -> Result<ContextSample> {
        self.assemble(&s.disease, &s.context, Some(s.label))
    }
}

/// Free-function form of [`FeatureExtractor::assemble`].
pub fn assemble_features(disease: &str, context: &str, extractor: &FeatureExtractor) -> Result<ContextSample> {
    extractor.assemble(disease, context, None)
}
