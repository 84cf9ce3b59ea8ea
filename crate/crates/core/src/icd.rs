//! Hierarchical ICD codes (3, 4 or 6 characters after the letter) and an
//! indexed table with code, title and parent/child lookup.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalize::normalize_disease_name;
use crate::types::CcLevel;

/// A validated code such as `S05`, `S05.3` or `S05.301`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct IcdCode(String);

impl IcdCode {
    pub fn parse(raw: &str) -> Result<Self> {
        let s = raw.trim();
        let b = s.as_bytes();
        let ok = match b.len() {
            3 | 5 | 7 => {
                b[0].is_ascii_uppercase()
                    && b[1..3].iter().all(u8::is_ascii_digit)
                    && (b.len() == 3 || (b[3] == b'.' && b[4..].iter().all(u8::is_ascii_digit)))
            }
            _ => false,
        };
        if ok {
            Ok(IcdCode(s.to_string()))
        } else {
            Err(Error::BadCode(raw.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Number of code digits counting the category: 3, 4 or 6.
    pub fn depth(&self) -> usize {
        match self.0.len() {
            3 => 3,
            5 => 4,
            _ => 6,
        }
    }

    /// The 3-character category, e.g. `S05` for `S05.301`.
    pub fn category(&self) -> &str {
        &self.0[..3]
    }

    /// Prefix of this code at a shallower depth.
    pub fn prefix(&self, depth: usize) -> Option<IcdCode> {
        let len = match depth {
            3 => 3,
            4 => 5,
            6 => 7,
            _ => return None,
        };
        (depth <= self.depth()).then(|| IcdCode(self.0[..len].to_string()))
    }

    /// Proper ancestors from nearest to farthest.
    pub fn ancestors(&self) -> Vec<IcdCode> {
        [4, 3]
            .into_iter()
            .filter(|&d| d < self.depth())
            .filter_map(|d| self.prefix(d))
            .collect()
    }

    pub fn is_ancestor_of(&self, other: &IcdCode) -> bool {
        self.depth() < other.depth() && other.0.starts_with(&self.0)
    }
}

impl fmt::Display for IcdCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for IcdCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IcdCode::parse(s)
    }
}

impl TryFrom<String> for IcdCode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        IcdCode::parse(&s)
    }
}

impl From<IcdCode> for String {
    fn from(c: IcdCode) -> String {
        c.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcdEntry {
    pub code: IcdCode,
    pub title: String,
    pub cc_level: CcLevel,
}

#[derive(Debug, Deserialize)]
struct IcdRow {
    code: String,
    title: String,
    cc_level: String,
}

/// Immutable ICD lookup table.
#[derive(Debug, Clone, Default)]
pub struct IcdIndex {
    entries: Vec<IcdEntry>,
    by_code: BTreeMap<IcdCode, usize>,
    by_title: HashMap<String, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

impl IcdIndex {
    pub fn from_entries(entries: Vec<IcdEntry>) -> Result<Self> {
        let mut by_code = BTreeMap::new();
        let mut by_title = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if by_code.insert(e.code.clone(), i).is_some() {
                return Err(Error::DuplicateCode(e.code.to_string()));
            }
            if let Ok(t) = normalize_disease_name(&e.title) {
                by_title.entry(t).or_insert(i);
            }
        }
        let parent: Vec<Option<usize>> = entries
            .iter()
            .map(|e| e.code.ancestors().iter().find_map(|a| by_code.get(a).copied()))
            .collect();
        let mut children = vec![Vec::new(); entries.len()];
        // code order keeps children lists deterministic
        for &i in by_code.values() {
            if let Some(p) = parent[i] {
                children[p].push(i);
            }
        }
        Ok(IcdIndex { entries, by_code, by_title, parent, children })
    }

    /// Loads a `code,title,cc_level` table with header.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_reader(std::fs::File::open(path)?, path)
    }

    pub fn from_reader<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for (i, row) in rdr.deserialize::<IcdRow>().enumerate() {
            let row = row.map_err(|e| Error::parse(origin, i + 2, e))?;
            let code = IcdCode::parse(&row.code)?;
            let cc_level = row.cc_level.parse().map_err(|e: Error| Error::parse(origin, i + 2, e))?;
            entries.push(IcdEntry { code, title: row.title, cc_level });
        }
        Self::from_entries(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in code order.
    pub fn iter(&self) -> impl Iterator<Item = &IcdEntry> {
        self.by_code.values().map(|&i| &self.entries[i])
    }

    pub fn get(&self, code: &IcdCode) -> Option<&IcdEntry> {
        self.by_code.get(code).map(|&i| &self.entries[i])
    }

    pub fn get_str(&self, code: &str) -> Option<&IcdEntry> {
        IcdCode::parse(code).ok().and_then(|c| self.get(&c))
    }

    /// Lookup by normalized title.
    pub fn by_title(&self, title: &str) -> Option<&IcdEntry> {
        let key = normalize_disease_name(title).ok()?;
        self.by_title.get(&key).map(|&i| &self.entries[i])
    }

    /// Nearest ancestor present in the table.
    pub fn parent_of(&self, code: &IcdCode) -> Option<&IcdEntry> {
        let i = *self.by_code.get(code)?;
        self.parent[i].map(|p| &self.entries[p])
    }

    pub fn children_of(&self, code: &IcdCode) -> Vec<&IcdEntry> {
        match self.by_code.get(code) {
            Some(&i) => self.children[i].iter().map(|&c| &self.entries[c]).collect(),
            None => Vec::new(),
        }
    }
}
