//! Multi-pattern search reporting character offsets.

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};

use crate::error::{Error, Result};
use crate::normalize::fold_width;

/// One occurrence of pattern `pattern` at character range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hit {
    pub pattern: usize,
    pub start: usize,
    pub end: usize,
}

impl Hit {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Hit) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Finds every (possibly overlapping) occurrence of a fixed set of patterns
/// in width-folded text, in a single automaton pass.
#[derive(Debug, Clone)]
pub struct PatternSet {
    patterns: Vec<String>,
    automaton: AhoCorasick,
}

impl PatternSet {
    pub fn new<I, S>(patterns: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let patterns: Vec<String> = patterns
            .into_iter()
            .map(|p| fold_width(p.as_ref()))
            .filter(|p| !p.is_empty())
            .collect();
        if patterns.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        let automaton = AhoCorasickBuilder::new()
            .match_kind(MatchKind::Standard)
            .build(&patterns)
            .map_err(|e| Error::Invalid(format!("cannot build matcher: {e}")))?;
        Ok(PatternSet { patterns, automaton })
    }

    pub fn pattern(&self, id: usize) -> &str {
        &self.patterns[id]
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// All occurrences in `text`, ordered by (start, end, pattern).
    pub fn find_all(&self, text: &str) -> Vec<Hit> {
        let folded = fold_width(text);
        let mut char_at = vec![0usize; folded.len() + 1];
        let mut n = 0;
        for (b, _) in folded.char_indices() {
            char_at[b] = n;
            n += 1;
        }
        char_at[folded.len()] = n;
        let mut hits: Vec<Hit> = self
            .automaton
            .find_overlapping_iter(&folded)
            .map(|m| Hit {
                pattern: m.pattern().as_usize(),
                start: char_at[m.start()],
                end: char_at[m.end()],
            })
            .collect();
        hits.sort_unstable_by_key(|h| (h.start, h.end, h.pattern));
        hits
    }

    /// Marks every character covered by any occurrence.
    pub fn coverage(&self, text: &str, len: usize) -> Vec<u8> {
        let mut bits = vec![0u8; len];
        for h in self.find_all(text) {
            bits[h.start..h.end.min(len)].iter_mut().for_each(|b| *b = 1);
        }
        bits
    }
}

/// Resolves overlapping hits: longer hits win, ties go to the leftmost one,
/// and any hit overlapping an already accepted hit is dropped. The result is
/// sorted by start offset.
pub fn select_longest(hits: &[Hit]) -> Vec<Hit> {
    let mut order: Vec<&Hit> = hits.iter().collect();
    order.sort_by_key(|h| (std::cmp::Reverse(h.len()), h.start, h.pattern));
    let mut accepted: Vec<Hit> = Vec::new();
    for h in order {
        // accepted stays sorted by start; only neighbours can overlap
        let pos = accepted.partition_point(|a| a.start < h.start);
        let clash = pos.checked_sub(1).is_some_and(|p| accepted[p].overlaps(h))
            || accepted.get(pos).is_some_and(|a| a.overlaps(h));
        if !clash {
            accepted.insert(pos, *h);
        }
    }
    accepted
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlapping_hits_in_char_offsets() {
        let set = PatternSet::new(["肺炎", "大叶性肺炎"]).unwrap();
        let hits = set.find_all("患大叶性肺炎");
        assert_eq!(hits, vec![Hit { pattern: 1, start: 1, end: 6 }, Hit { pattern: 0, start: 4, end: 6 }]);
        assert_eq!(select_longest(&hits), vec![Hit { pattern: 1, start: 1, end: 6 }]);
    }

    #[test]
    fn full_width_text_matches_half_width_pattern() {
        let set = PatternSet::new(["2型糖尿病"]).unwrap();
        let hits = set.find_all("有２型糖尿病");
        assert_eq!(hits[0].start, 1);
        assert_eq!(hits[0].end, 6);
    }

    #[test]
    fn empty_set_rejected() {
        assert!(matches!(PatternSet::new(Vec::<String>::new()), Err(Error::EmptyLexicon)));
    }

    #[test]
    fn equal_length_tie_goes_left() {
        let set = PatternSet::new(["ABC", "CDE"]).unwrap();
        let sel = select_longest(&set.find_all("ABCDE"));
        assert_eq!(sel, vec![Hit { pattern: 0, start: 0, end: 3 }]);
    }
}
