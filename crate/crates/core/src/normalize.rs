//! Width folding and disease-name normalization.

use crate::error::{Error, Result};

const LIST_PUNCT: [char; 4] = ['、', ',', ';', '；'];

/// Folds a full-width ASCII variant (and the ideographic space) to its
/// half-width form. Every other character is returned unchanged, so folding a
/// string never changes its length in characters.
pub fn fold_char(c: char) -> char {
    match c {
        '\u{FF01}'..='\u{FF5E}' => char::from_u32(c as u32 - 0xFEE0).unwrap_or(c),
        '\u{3000}' => ' ',
        _ => c,
    }
}

pub fn fold_width(text: &str) -> String {
    text.chars().map(fold_char).collect()
}

/// Canonical form used for lexicon keys and exact-match comparisons.
pub fn normalize_disease_name(raw: &str) -> Result<String> {
    let folded = fold_width(raw);
    let mut s = folded.as_str();
    loop {
        let next = s.trim().trim_end_matches(LIST_PUNCT);
        if next.len() == s.len() {
            break;
        }
        s = next;
    }
    if s.is_empty() {
        Err(Error::EmptyName)
    } else {
        Ok(s.to_string())
    }
}

/// Character count, the unit every span in this crate is measured in.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Slices `s` by character offsets.
pub fn char_slice(s: &str, start: usize, end: usize) -> String {
    s.chars().skip(start).take(end.saturating_sub(start)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trims_whitespace() {
        assert_eq!(normalize_disease_name("肺炎 ").unwrap(), "肺炎");
    }

    #[test]
    fn folds_full_width() {
        assert_eq!(normalize_disease_name("糖尿病（２型）").unwrap(), "糖尿病(2型)");
        assert_eq!(fold_width("ＡＢ　c"), "AB c");
    }

    #[test]
    fn strips_trailing_list_punctuation() {
        assert_eq!(normalize_disease_name("高血压、").unwrap(), "高血压");
        assert_eq!(normalize_disease_name("高血压， ；").unwrap(), "高血压");
        assert_eq!(normalize_disease_name("高,血压").unwrap(), "高,血压");
    }

    #[test]
    fn blank_is_an_error() {
        assert!(matches!(normalize_disease_name("  "), Err(Error::EmptyName)));
        assert!(matches!(normalize_disease_name("、；"), Err(Error::EmptyName)));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "[ 　,;、；a-zＡ-Ｚ０-９（）肺炎病 ]{0,12}") {
            if let Ok(once) = normalize_disease_name(&s) {
                prop_assert_eq!(normalize_disease_name(&once).unwrap(), once);
            }
        }

        #[test]
        fn folding_preserves_char_count(s in "\\PC{0,40}") {
            prop_assert_eq!(char_len(&fold_width(&s)), char_len(&s));
        }
    }
}
