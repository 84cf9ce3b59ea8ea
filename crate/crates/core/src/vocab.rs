//! Character vocabulary; id 0 is reserved for unseen characters.

use std::collections::BTreeMap;

use crate::normalize::fold_char;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CharVocab {
    ids: BTreeMap<char, u32>,
    chars: Vec<char>,
}

impl CharVocab {
    pub const UNK: u32 = 0;

    /// Builds a vocabulary from every (width-folded) character in `texts`,
    /// ids assigned in code-point order.
    pub fn build<'a, I>(texts: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut set = std::collections::BTreeSet::new();
        for t in texts {
            set.extend(t.chars().map(fold_char));
        }
        Self::from_chars(set)
    }

    /// Rebuilds a vocabulary from its id-ordered characters (id 1 first).
    pub fn from_chars<I: IntoIterator<Item = char>>(chars: I) -> Self {
        let mut v = CharVocab::default();
        for c in chars {
            if !v.ids.contains_key(&c) {
                v.chars.push(c);
                v.ids.insert(c, v.chars.len() as u32);
            }
        }
        v
    }

    /// Number of ids including the unknown id.
    pub fn size(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn id(&self, c: char) -> u32 {
        self.ids.get(&fold_char(c)).copied().unwrap_or(Self::UNK)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.chars().map(|c| self.id(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_stable_and_unknown_is_zero() {
        let v = CharVocab::build(["肺炎", "炎症"]);
        assert_eq!(v.size(), 4);
        assert_eq!(v.encode("肺X"), vec![v.id('肺'), 0]);
        assert_eq!(CharVocab::from_chars(v.chars().iter().copied()), v);
    }
}
